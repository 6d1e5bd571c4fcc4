"""Exceptions shared across pipeline stages."""


class TrainingFailure(RuntimeError):
    """A randomized training stage exhausted its attempts (the bottom value)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class HypothesisValidationError(ValueError):
    """Serialized hypothesis data violates an invariant; ``field`` names it."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
