"""Exception types shared across the pipeline."""


class DlReproError(Exception):
    """Base class for every error raised by this package."""


class GrammarUnavailableError(DlReproError):
    def __init__(self, name: str):
        super().__init__(f"no grammar registered under {name!r}")
        self.grammar = name


class NoChunksError(DlReproError):
    """Index construction was handed an empty chunk list."""


class EmptyIndexError(DlReproError):
    """Retrieval was asked to rank against an index with no documents."""


class UnknownChunkError(DlReproError):
    def __init__(self, chunk_id: str):
        super().__init__(f"chunk {chunk_id!r} is not in the index")
        self.chunk_id = chunk_id


class DimMismatchError(DlReproError):
    def __init__(self, expected: int, got: int, chunk_id: str | None = None):
        where = f" for chunk {chunk_id!r}" if chunk_id else ""
        super().__init__(f"vector dimension {got} does not match index dimension {expected}{where}")
        self.expected = expected
        self.got = got
        self.chunk_id = chunk_id


class ProviderFailure(DlReproError):
    """A model provider call failed after exhausting retries."""

    def __init__(self, message: str, digest: str | None = None):
        super().__init__(message)
        self.digest = digest


class ReplayMissError(ProviderFailure):
    """Strict replay had no stored response for a request digest."""

    def __init__(self, digest: str, kind: str):
        super().__init__(f"no recorded {kind} response for digest {digest}", digest=digest)
        self.kind = kind


class ScorerFailureError(DlReproError):
    """Every cross-scorer call in a rerank batch failed."""


class NoCodeBlockError(DlReproError):
    """A generation response contained no fenced code block, even after re-prompting."""


class SandboxFailureError(DlReproError):
    """The trial sandbox could not be set up or torn down."""


class LockError(DlReproError):
    def __init__(self, path: str):
        super().__init__(
            f"output directory is locked by another run ({path}); use a distinct "
            "out-dir or remove the stale lock file if no run is active"
        )
        self.path = path
