"""Exception hierarchy.

``GeometryError`` covers numeric failures of the geometric routines (the CLI maps it
to exit status 3); configuration problems raise ``ConfigError`` (exit status 2).
"""
from .expr import DomainError


class GeometryError(ArithmeticError):
    pass


class DegenerateFrameError(GeometryError):
    pass


class NotBracketGeneratingError(GeometryError):
    pass


class SingularFrameError(GeometryError):
    pass


class NotLieGroupError(GeometryError):
    pass


class CharacteristicPointError(GeometryError):
    """The horizontal normal is undefined (D1 below the characteristic threshold)."""


class InvalidSurfaceError(GeometryError):
    pass


class NonHorizontalError(GeometryError):
    pass


class ConfigError(ValueError):
    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer}: {message}" if pointer else message)
        self.pointer = pointer


__all__ = [
    "GeometryError",
    "DegenerateFrameError",
    "NotBracketGeneratingError",
    "SingularFrameError",
    "NotLieGroupError",
    "CharacteristicPointError",
    "InvalidSurfaceError",
    "NonHorizontalError",
    "ConfigError",
    "DomainError",
]
