"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and a ``context``
dict; the CLI serializes both and maps the class to an exit code.
"""


class DesingError(Exception):
    code = "DesingError"
    exit_code = 2

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self):
        return {"code": self.code, "message": self.message, "context": self.context}


class ValidationError(DesingError):
    """Invalid group or action description.

    ``violations`` lists every offending entry, each a dict with
    ``code`` (NonOrthogonal, NonSkew, BadWeights, MissingIdentity,
    BadShape, BadHaar) plus the index of the entry.
    """

    code = "ValidationError"
    exit_code = 1

    def __init__(self, violations):
        self.violations = list(violations)
        codes = sorted({v["code"] for v in self.violations})
        super().__init__("invalid input: " + ", ".join(codes), violations=self.violations)


class DimensionMismatch(DesingError):
    code = "DimensionMismatch"
    exit_code = 1


class RankAmbiguous(DesingError):
    code = "RankAmbiguous"


class ChartExit(DesingError):
    code = "ChartExit"


class CenterNotRecognized(DesingError):
    code = "CenterNotRecognized"


class CenterNotSaturated(DesingError):
    code = "CenterNotSaturated"


class TubeTooLarge(DesingError):
    code = "TubeTooLarge"


class StageLimitExceeded(DesingError):
    code = "StageLimitExceeded"
    exit_code = 3


class NotSPD(DesingError):
    code = "NotSPD"


class FrameDegenerate(DesingError):
    code = "FrameDegenerate"


class SubmersionPreconditionFailed(DesingError):
    code = "SubmersionPreconditionFailed"


class UnsupportedGroup(DesingError):
    code = "UnsupportedGroup"
    exit_code = 1


class UnsupportedStage(DesingError):
    code = "UnsupportedStage"
    exit_code = 1


class GraphDisconnected(DesingError):
    code = "GraphDisconnected"


class TooLargeForExact(DesingError):
    code = "TooLargeForExact"
    exit_code = 3


class UnknownReportKind(DesingError):
    code = "UnknownReportKind"
    exit_code = 1
