"""Exception types shared across the package."""


class TextureSmithError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(TextureSmithError):
    """Tensor, layer, or field shapes are inconsistent with the operation."""


class FormatError(TextureSmithError):
    """A byte stream or file does not conform to its declared format."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedStreamError(FormatError):
    """Declared sizes exceed the stream length, or the stream ends early."""


class ChannelChainError(FormatError):
    """A conv layer's in_channels does not match the carried channel count."""


class ConfigError(TextureSmithError):
    """Pipeline configuration text or field values are invalid."""


class NumericalError(TextureSmithError):
    """A loss or gradient became non-finite."""


class PipelineError(TextureSmithError):
    """Wraps a stage failure with the name of the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
