"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class InfeasibleError(RuntimeError):
    """No allocation satisfies the constraints of a (sub)problem."""


class SolverError(RuntimeError):
    """The optimizer hit a numerical state it cannot continue from."""
