"""Joint power and subcarrier allocation for cognitive-relaying multicarrier NOMA.

A secondary base station earns spectrum access by decode-and-forward relaying
for the primary network while serving its own users through power-domain NOMA.
The package provides a globally optimal solver (outer polyblock approximation
of a monotonic reformulation), a low-complexity successive convex
approximation solver, baselines, a brute-force oracle, and a Monte-Carlo
experiment harness.
"""

from .instance import (
    ChannelState,
    ProblemInstance,
    Topology,
    UserLayout,
    generate_instance,
    generate_layout,
    instance_from_text,
    instance_to_text,
    pathloss_gain,
    random_instance,
)
from .rates import (
    Assignment,
    Policy,
    PowerAllocation,
    RateReport,
    ValidationResult,
    direct_rate,
    evaluate_policy,
    noma_pu_rate,
    noma_su_rate,
    policy_from_text,
    policy_to_text,
    relay_hop_rate,
    sic_admissible_pairs,
    subcarrier_throughput,
    validate_policy,
)
from .result import SolveResult

__version__ = "0.1.0"
