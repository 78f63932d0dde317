"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument, configuration or trajectory span."""


class ConfigError(InputError):
    """Experiment configuration failed validation.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class IntegrationError(RuntimeError):
    """Step size underflow or step budget exhausted.

    Carries the last accepted state so callers can report how far the run got.
    """

    def __init__(self, message, t, y):
        self.t = t
        self.y = y
        super().__init__(f"{message} (last good t = {t:.17g})")


class ReconstructionError(ValueError):
    """Parameter-dependence interpolation failed."""
