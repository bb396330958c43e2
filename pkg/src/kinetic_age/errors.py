"""Exception types shared across the package."""


class KineticAgeError(Exception):
    """Base class for all package-specific errors."""


class DatasetError(KineticAgeError):
    """Invalid, inconsistent, or unreadable dataset content."""


class DegeneratePoseError(KineticAgeError):
    """Pose geometry too degenerate to define a rotation alignment."""


class SingularityError(KineticAgeError):
    """Rank-deficient or zero-variance input to a statistical routine."""


class TrainingDivergedError(KineticAgeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) at epoch {epoch}")


class ConfigMismatchError(KineticAgeError):
    """Checkpoint or input configuration incompatible with the model."""
