from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class OptimizationReport:
    """Trace of an iterative solver.

    ``trajectory`` holds the objective after every accepted update,
    starting with the value at the initial point. Nested solvers append
    their own reports to ``inner_reports`` in call order.
    """

    trajectory: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    inner_reports: list["OptimizationReport"] = field(default_factory=list)
    message: str = ""
    kkt_residual: float | None = None
    multiplier: float | None = None

    @property
    def final(self) -> float:
        return self.trajectory[-1]

    def is_monotone(self, rtol: float = 1e-12) -> bool:
        """True if no step decreases the objective by more than ``rtol`` (relative)."""
        t = self.trajectory
        return all(b >= a - rtol * max(abs(a), 1.0) for a, b in zip(t, t[1:]))
