class DomainError(ValueError):
    """Argument outside the model's domain."""


class NonConvergence(RuntimeError):
    pass


class NoEquilibrium(NonConvergence):
    pass


class NotUnique(ValueError):
    """Cost minimiser is not unique (linear schedules)."""


class NoRoot(ValueError):
    pass


class DegenerateRoot(NoRoot):
    """The defining equation holds only at the lower end of the bracket."""

    def __init__(self, msg: str, root: float):
        super().__init__(msg)
        self.root = root


class SimulationBudgetExceeded(RuntimeError):
    def __init__(self, msg: str, run_index: int | None = None):
        super().__init__(msg if run_index is None else f"replication {run_index}: {msg}")
        self.run_index = run_index


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""
