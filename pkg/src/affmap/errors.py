"""Exception hierarchy shared across the pipeline."""


class AffmapError(Exception):
    """Base class for all pipeline errors."""


# --- dataset ---

class ParseError(AffmapError):
    """Input document could not be parsed at all."""


class ValidationError(AffmapError):
    """Parsed document violates a manifest invariant."""


class UnknownRobot(AffmapError):
    """robot_id not present in the manifest."""


# --- providers ---

class ProviderError(AffmapError):
    """Base class for provider/transport failures."""


class AuthError(ProviderError):
    """Missing or rejected credential."""


class RateLimited(ProviderError):
    """Provider kept returning 429 after all retries."""


class TransportError(ProviderError):
    """Network-level failure (connection, 5xx, malformed transport)."""


class ProviderTimeout(ProviderError):
    """Request exceeded the configured deadline."""


class SchemaError(ProviderError):
    """Provider response is missing required fields."""


class EmptyText(ProviderError):
    """Embedding requested for empty/whitespace text."""


class DimensionMismatch(AffmapError):
    """Vectors of different dimensions compared."""


class ZeroVector(AffmapError):
    """Cosine similarity requested for an all-zero vector."""


# --- inference ---

class UnparseableResponse(AffmapError):
    """No JSON object could be extracted from a VLM response."""


# --- geometry ---

class PixelOutOfBounds(AffmapError):
    """Pixel coordinate outside the calibrated image."""


class TooFewRays(AffmapError):
    """Triangulation needs at least two rays."""


class DegenerateGeometry(AffmapError):
    """Rays are (near-)parallel; the landmark position is unobservable."""


# --- scenegraph ---

class IoError(AffmapError):
    """Graph file could not be read or written."""


class SchemaVersionError(AffmapError):
    """Graph file carries an unknown schema_version."""
