"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An input tensor does not match the shape a contract requires."""


class ConfigError(ValueError):
    """A configuration value violates an invariant or an unknown key was given."""


class TrainingDivergedError(RuntimeError):
    """A training loop produced a non-finite loss."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
