"""
Exception hierarchy shared by every package. The CLI converts these into exit codes
(see cli/app.py), so library code raises them and never calls sys.exit itself.
"""


class MPFlowError(Exception):
    """Base class for all errors raised by this project."""


class ShapeMismatchError(MPFlowError, ValueError):
    def __init__(self, op: str, left, right):
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{op}: shape mismatch {self.left} vs {self.right}")


class NonFiniteError(MPFlowError, ArithmeticError):
    pass


class TrainingDivergedError(NonFiniteError):
    def __init__(self, what: str, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"{what} diverged at iteration {iteration} (loss={loss})")


class TapeError(MPFlowError, RuntimeError):
    pass


class OperatorError(MPFlowError, ValueError):
    pass


class PhantomError(MPFlowError, ValueError):
    pass


class OracleError(MPFlowError, ValueError):
    pass


class ConfigError(MPFlowError, ValueError):
    pass


class MissingInputError(MPFlowError, FileNotFoundError):
    pass


class ArtifactExistsError(MPFlowError, FileExistsError):
    pass


class FormatError(MPFlowError, ValueError):
    pass


class VerificationError(MPFlowError, AssertionError):
    pass


class TimeRangeError(MPFlowError, ValueError):
    def __init__(self, op: str, t: float, allowed: str = "[0, 1]"):
        self.t = t
        super().__init__(f"{op}: t={t} outside {allowed}")


class EmbeddingNormError(MPFlowError, ValueError):
    pass


class MetricError(MPFlowError, ValueError):
    pass
