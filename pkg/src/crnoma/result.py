"""Common solver result container."""

from __future__ import annotations

from dataclasses import dataclass, field

from .rates import Policy, RateReport

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iterations"
STATUS_INFEASIBLE = "infeasible"
STATUS_FRACTIONAL = "fractional"


@dataclass
class SolveResult:
    """A policy, its validated objective, and how the solver got there.

    ``objective`` is the true weighted system throughput of ``policy``
    (bits/s/Hz); solver-specific certificates live in ``extras``.
    """

    scheme: str
    status: str
    policy: Policy | None = None
    objective: float = float("-inf")
    report: RateReport | None = None
    trace: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.policy is not None and self.status in (
            STATUS_OPTIMAL, STATUS_MAX_ITER, STATUS_FRACTIONAL)
