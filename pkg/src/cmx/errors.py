"""Exception hierarchy for streams, snapshots, and configuration."""


class CmxError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CmxError, ValueError):
    """Invalid engine or run configuration."""


class CoderStateError(CmxError):
    """Arithmetic coder used out of protocol (e.g. flushed twice)."""


class StreamFormatError(CmxError):
    """Compressed stream violates the framing format."""


class BadMagicError(StreamFormatError):
    """Stream does not start with the expected magic bytes."""


class BadVersionError(StreamFormatError):
    """Stream format version is not supported."""


class ConfigMismatchError(StreamFormatError):
    """Stream was produced under a different engine configuration."""


class TruncatedStreamError(StreamFormatError):
    """Stream is too short to contain a complete frame."""


class CrcError(StreamFormatError):
    """Checksum failure: stream bytes are corrupt or cut off."""


class SnapshotFormatError(CmxError):
    """Serialized model snapshot violates the snapshot format."""


class SnapshotMagicError(SnapshotFormatError):
    """Snapshot does not start with the expected magic bytes."""


class SnapshotVersionError(SnapshotFormatError):
    """Snapshot format version is not supported."""


class SnapshotCrcError(SnapshotFormatError):
    """Snapshot checksum failure."""
