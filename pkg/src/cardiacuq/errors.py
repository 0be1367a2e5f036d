"""Exception types shared across the package."""


class MalformedHeaderError(ValueError):
    """A volume file exists but its header cannot be parsed."""


class LabelOutOfRangeError(ValueError):
    """A reference volume contains labels outside {0, 1, 2, 3}."""


class DegenerateIntensityError(ValueError):
    """A volume is constant (min == max) and cannot be intensity-scaled."""


class InsufficientGroupSizeError(ValueError):
    """A disease group has fewer members than the number of folds."""


class EmptyMaskError(ValueError):
    """An operation requiring a non-empty mask received an empty one."""


class EmptyReferenceError(ValueError):
    """The reference volume contains no foreground."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given inputs (e.g. EF with EDV = 0)."""


class OutOfBoundsRegionError(ValueError):
    """A flagged region lies entirely outside the volume."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""


class MissingDependencyError(RuntimeError):
    """A pipeline stage was requested before its prerequisites were produced."""


class DivergedError(RuntimeError):
    """Training produced a non-finite loss."""
