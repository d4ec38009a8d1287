"""Exception types shared across the package.

The CLI maps these onto stable exit codes: ConfigurationError -> 2,
TrainingFault -> 3.
"""


class ConfigurationError(ValueError):
    """Invalid configuration: bad dimensions, unknown keys, malformed files."""


class SceneError(ConfigurationError):
    """A scene file is malformed or describes an infeasible world."""


class TrainingFault(RuntimeError):
    """A non-finite value surfaced during training (loss, gradient, target)."""

    def __init__(self, message: str, context: str = ""):
        self.context = context
        super().__init__(f"{context}: {message}" if context else message)
