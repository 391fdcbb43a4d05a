"""Exception hierarchy shared by every scarlet_kit module."""


class ScarletKitError(Exception):
    """Base class for all errors raised by the toolkit."""


class DimensionError(ScarletKitError, ValueError):
    """Tensor shapes do not line up."""


class StatisticsError(ScarletKitError, ValueError):
    """Batch statistics cannot be computed (e.g. batch of one in train mode)."""


class StateError(ScarletKitError, RuntimeError):
    """An operation was called in the wrong order (backward before forward)."""


class InputError(ScarletKitError, ValueError):
    """A caller supplied an out-of-range or malformed argument."""


class SpecError(ScarletKitError, ValueError):
    """A search space description is invalid."""


class ConfigError(ScarletKitError, ValueError):
    """An experiment, training or search configuration is invalid."""


class ParseError(ScarletKitError, ValueError):
    """An external file could not be parsed."""
