"""Exception types shared across the package."""


class FormatError(ValueError):
    """A binary or text artifact does not conform to its file format."""


class ConfigError(ValueError):
    """A run configuration failed schema validation."""
