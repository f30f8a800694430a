"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.message = message
        self.field = field


class StructuralError(ValueError):
    """Shapes or layer wiring do not line up."""


class TrainingDivergence(FloatingPointError):
    """A non-finite value showed up during optimisation."""

    def __init__(self, message, layer=None, epoch=None):
        super().__init__(message)
        self.layer = layer
        self.epoch = epoch


class DegenerateEncoderError(ValueError):
    """The encoder produced an all-zero batch, so power normalisation is undefined."""


class ConvergenceError(RuntimeError):
    """An iterative procedure stopped before reaching its tolerance.

    ``last`` carries the final iterate for inspection.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last
