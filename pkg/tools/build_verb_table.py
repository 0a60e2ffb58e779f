"""Regenerate ``src/anion_forge/resources/verbs.tsv`` from the lemminflect lookup table.

Run once at development time; the package ships the generated TSV and does not
depend on lemminflect at runtime.

    pip download lemminflect --no-deps -d /tmp/dl
    python tools/build_verb_table.py /tmp/dl/lemminflect-0.2.3-py3-none-any.whl
"""
import csv
import gzip
import io
import re
import sys
import zipfile
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "anion_forge" / "resources" / "verbs.tsv"
MEMBER = "lemminflect/resources/infl_lu.csv.gz"

# copula and modals are handled by the tagger directly
SKIP = {"be", "can", "will", "may", "must", "shall", "ought"}
WORD = re.compile(r"[a-z]+")


def main(wheel):
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER)).decode("utf-8")
    rows = []
    for line in io.StringIO(raw):
        parts = line.rstrip("\n").split(",")
        if len(parts) != 6 or parts[1] != "verb":
            continue
        base, _, past, participle, gerund, third = parts
        if base in SKIP or not WORD.fullmatch(base):
            continue
        fields = [past, participle or past, gerund, third]
        if not all(all(WORD.fullmatch(f) for f in x.split("/")) for x in fields):
            continue
        rows.append([base] + fields)
    rows.sort()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["base", "past", "participle", "gerund", "third_person"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} verbs to {OUT}")


if __name__ == "__main__":
    main(sys.argv[1])
