"""Exceptions raised by the tree and its nodes."""


class TreeError(Exception):
    pass


class ConfigError(TreeError, ValueError):
    pass


class DuplicateKeyError(TreeError, KeyError):
    pass


class KeyNotFoundError(TreeError, KeyError):
    pass


class NodeFullError(TreeError):
    """Raised when a leaf has no free slot; the caller must split first."""


class BadPointerError(TreeError, ValueError):
    """Value references must be nonzero and distinct within a leaf."""


class OutOfSpaceError(TreeError, MemoryError):
    pass


class CorruptionError(TreeError):
    pass
