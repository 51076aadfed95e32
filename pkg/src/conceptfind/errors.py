"""Exception types shared across the pipeline."""


class ConceptFindError(Exception):
    """Base class for all library errors."""


class ConfigError(ConceptFindError):
    """Invalid configuration (bad value, unknown key, inconsistent dims)."""


class FormatError(ConceptFindError):
    """On-disk artifact is malformed, truncated, or version-mismatched."""


class DivergenceError(ConceptFindError):
    """Training produced a non-finite loss."""


class EmptySupportError(ConceptFindError):
    """An attribute has no positive training items."""


class DegenerateFeatureError(ConceptFindError):
    """A feature vector that must be normalized is identically zero."""


class MissingArtifactError(ConceptFindError):
    """A required upstream artifact file does not exist."""


class HashMismatchError(ConceptFindError):
    """Artifacts in a bundle were produced from different vocabularies/configs."""
