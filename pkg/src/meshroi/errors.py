"""Exception types raised by the annotation engine."""


class EngineError(Exception):
    """Base class for every engine-raised error."""

    #: short machine code used by the CLI and the boundary API
    @property
    def code(self) -> str:
        name = type(self).__name__
        out = []
        for i, ch in enumerate(name):
            if ch.isupper() and i > 0:
                out.append("_")
            out.append(ch.lower())
        return "".join(out)


class MalformedStatement(EngineError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class IndexOutOfRange(EngineError):
    pass


class EmptyMesh(EngineError):
    pass


class OutOfViewport(EngineError):
    pass


class DegenerateOutline(EngineError):
    pass


class EmptySeed(EngineError):
    pass


class EmptySelection(EngineError):
    pass


class MeshMismatch(EngineError):
    pass


class UnknownId(EngineError):
    pass


class InvalidFaces(EngineError):
    pass


class SchemaViolation(EngineError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.detail = message


class VersionUnsupported(EngineError):
    pass


class FingerprintMismatch(EngineError):
    pass


class TraceSchemaViolation(EngineError):
    def __init__(self, message: str, entry_index: int | None = None):
        if entry_index is not None:
            message = f"entry {entry_index}: {message}"
        super().__init__(message)
        self.entry_index = entry_index
