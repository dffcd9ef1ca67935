"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract, so new error conditions
should reuse one of the classes below rather than raising bare ValueError.
"""


class FlowcutError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(FlowcutError):
    """A file does not look like the format it claims to be (magic/version)."""


class CorruptionError(FlowcutError):
    """A file has the right format markers but inconsistent content."""


class ValidationError(FlowcutError):
    """A value violates a documented invariant (shapes, sums, finiteness)."""


class SchemaError(ValidationError):
    """A JSON document violates the dataset/prediction schema.

    Messages name the offending JSON path, e.g. ``annotations[3].video_id``.
    """


class DegenerateFeatureError(ValidationError):
    """A patch feature vector cannot be normalized (zero norm)."""


class ShapeError(ValidationError):
    """Two grids or rasters that must agree in shape do not."""


class ConfigError(FlowcutError):
    """An invalid or inconsistent parameter combination."""


class EmptyInputError(FlowcutError):
    """An input directory or file contains nothing to process."""


class NumericalError(FlowcutError):
    """An eigensolve or other numerical routine failed to produce a usable result."""


class SingularityError(NumericalError):
    """A degree/normalization term that must be strictly positive is zero."""
