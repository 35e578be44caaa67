"""Exception types shared across the pipeline."""


class RavenError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(RavenError):
    """Bad configuration value or unusable config file."""


class ManifestError(RavenError):
    """Manifest failed to load (duplicate clip_id, bad field, etc.)."""


class TemplateError(RavenError):
    """Prompt template is missing a required placeholder."""


# --- provider gateway ---------------------------------------------------

class ProviderUnreachable(RavenError):
    """Transport-level failure talking to a provider, after retries."""


class RateLimited(RavenError):
    """Provider signaled throttling and retries were exhausted."""


class MalformedOutput(RavenError):
    """All attempts failed structured-output conformance."""

    def __init__(self, message, raw_text="", violations=None):
        super().__init__(message)
        self.raw_text = raw_text
        self.violations = list(violations or [])


class FixtureMiss(RavenError):
    """Stub provider has no fixture entry for a completion hash."""


class EmptyInput(RavenError):
    """Embedding request contained no usable text."""


# --- catalog / index ----------------------------------------------------

class CatalogEmpty(RavenError):
    """Canonicalization produced zero categories after repair."""


class IndexEmpty(RavenError):
    """Schema index has no entries."""


class DimensionMismatch(RavenError):
    """Vectors of unequal dimension passed to cosine."""


class ZeroVector(RavenError):
    """Zero-norm vector passed to cosine."""


# --- store --------------------------------------------------------------

class MissingStream(RavenError):
    """Requested stream file does not exist."""


class CorruptLine(RavenError):
    """A stream line failed to parse as JSON."""

    def __init__(self, stream, line_number, message=""):
        super().__init__(
            f"corrupt line {line_number} in stream '{stream}'"
            + (f": {message}" if message else "")
        )
        self.stream = stream
        self.line_number = line_number


class StoreLocked(RavenError):
    """A writer lock is held; index builds must wait."""


# --- eval ---------------------------------------------------------------

class UnknownClip(RavenError):
    """Case study requested for a clip with no extracted record."""
