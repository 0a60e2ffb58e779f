"""Exception hierarchy.

Everything raised on bad input derives from :class:`AnionForgeError`, which the
CLI maps to the data-error exit code.
"""


class AnionForgeError(Exception):
    """Base class for data errors."""


class KGFormatError(AnionForgeError, ValueError):
    """A knowledge-graph file row could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownRelationError(KGFormatError):
    pass


class UnresolvedSourceError(AnionForgeError, KeyError):
    """A derived event names a source head that is not in the graph."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NegationError(AnionForgeError):
    """Base class for rejections raised by the negation engine.

    ``reason`` is the stable identifier used in rejection reports.
    """

    reason = "NegationError"


class UnparsableEvent(NegationError):
    reason = "UnparsableEvent"


class CompoundEventRejected(NegationError):
    reason = "CompoundEventRejected"


class AlreadyNegated(NegationError):
    reason = "AlreadyNegated"


class CueIncompatible(NegationError):
    reason = "CueIncompatible"


class TrainingError(AnionForgeError):
    pass


class MissingLabelError(AnionForgeError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ProtocolError(AnionForgeError):
    """An external scorer or generator broke the line protocol."""


class ConfigMismatchError(AnionForgeError):
    pass
