"""Exception types shared across the package."""


class ShapeError(ValueError):
    """A layer cannot accept the shape it is given."""

    def __init__(self, layer, message):
        self.layer = layer
        super().__init__(f"{layer}: {message}")


class ParseError(ValueError):
    """A persisted artifact is malformed."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")
