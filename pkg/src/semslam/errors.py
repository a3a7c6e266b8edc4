class ContractError(ValueError):
    """An operation was called with arguments that violate its contract."""


class GenerationError(RuntimeError):
    """Scene or trajectory generation could not satisfy its constraints."""


class TrainingError(RuntimeError):
    """Non-finite values or divergence during training."""

    def __init__(self, message, step=None, diagnostics=None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}
