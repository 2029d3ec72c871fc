"""Exception hierarchy."""


class DiffuRankError(Exception):
    """Base class for all engine errors."""


class ValidationError(DiffuRankError, ValueError):
    pass


class CapacityError(ValidationError):
    """More documents than identifier labels."""


class ProviderError(DiffuRankError):
    """Raised by mask-predictor backends.

    ``step`` and ``window`` are filled in as the error travels up through the
    sampler and the window scheduler.
    """

    step: int | None = None
    window: int | None = None

    def __str__(self) -> str:
        msg = str(self.args[0]) if len(self.args) == 1 else super().__str__()
        where = []
        if self.window is not None:
            where.append(f"window {self.window}")
        if self.step is not None:
            where.append(f"step {self.step}")
        return f"{msg} ({', '.join(where)})" if where else msg


class TransportError(ProviderError):
    pass


class MalformedResponseError(ProviderError):
    pass


class DimensionMismatchError(ProviderError):
    pass


class CacheMissError(ProviderError, KeyError):
    pass


class ParseError(DiffuRankError, ValueError):
    def __init__(self, path, line: int, message: str) -> None:
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class MissingDocumentsError(DiffuRankError, KeyError):
    def __init__(self, missing: list[str]) -> None:
        self.missing = missing
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        super().__init__(f"{len(missing)} referenced document(s) missing from corpus: {shown}")

    def __str__(self) -> str:
        return self.args[0]


class TrainingDivergedError(DiffuRankError, FloatingPointError):
    pass
