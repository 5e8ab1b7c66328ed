"""Exception types shared across the library."""

from __future__ import annotations


class ShapeMismatchError(ValueError):
    """Two operands have incompatible shapes."""

    def __init__(self, what: str, a: tuple, b: tuple):
        super().__init__(f"{what}: shapes {tuple(a)} and {tuple(b)} do not match")
        self.shapes = (tuple(a), tuple(b))


class ArrayFileError(Exception):
    """Base class for array-file I/O failures."""


class MalformedHeaderError(ArrayFileError):
    """File magic, version, or header dict is not the supported format."""


class UnsupportedElementTypeError(ArrayFileError):
    """Header declares an element type outside the supported set."""


class TruncatedPayloadError(ArrayFileError):
    """Payload holds fewer bytes than the declared shape requires."""


class ManifestError(Exception):
    """Episode manifest is structurally invalid or references missing data."""
