"""Achievable rates, SIC admissibility, weighted throughput, and policy validation.

Rates are in bits/s/Hz per subcarrier; slot duration and subcarrier bandwidth
normalize out.  All rate helpers accept scalars or numpy arrays.

Two receiver modes exist throughout:

* ``sic``     - the secondary users cancel the co-scheduled primary signal
                before decoding (the proposed system); a primary user k may
                only be paired with secondary user j on subcarrier i when
                h_st_pu[k, i] <= g_st_su[j, i].
* ``no_sic``  - the secondary users treat the primary signal as noise
                (baseline scheme 1); the pairing restriction is dropped.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .instance import ChannelState, ProblemInstance

LN2 = float(np.log(2.0))

MODE_SIC = "sic"
MODE_NO_SIC = "no_sic"

# Default feasibility tolerances: additive on rates, relative on power budgets.
RATE_TOL = 1e-6
BUDGET_REL_TOL = 1e-9


def log2p1(x):
    """log2(1 + x) computed accurately near zero."""
    return np.log1p(x) / LN2


def direct_rate(q, f):
    """Full-slot rate of a primary user served directly: log2(1 + q f)."""
    return log2p1(np.multiply(q, f))


def relay_hop_rate(q_st, f_st):
    """Half-slot rate of the station-to-station hop: (1/2) log2(1 + q f)."""
    return 0.5 * log2p1(np.multiply(q_st, f_st))


def noma_pu_rate(p_pu, p_su, h):
    """Half-slot rate of a relayed PU under the co-scheduled SU's interference."""
    return 0.5 * log2p1(p_pu * h / (p_su * h + 1.0))


def noma_su_rate(p_su, g):
    """Half-slot SU rate after successful interference cancellation."""
    return 0.5 * log2p1(np.multiply(p_su, g))


def no_sic_su_rate(p_su, p_pu, g):
    """Half-slot SU rate when the primary signal is treated as noise."""
    return 0.5 * log2p1(p_su * g / (p_pu * g + 1.0))


def su_decode_pu_rate(p_pu, p_su, g):
    """Rate at which the SU can decode the PU message (the SIC prerequisite)."""
    return 0.5 * log2p1(p_pu * g / (p_su * g + 1.0))


def admissible_mask(channels: ChannelState, mode: str = MODE_SIC) -> np.ndarray:
    """Boolean (K, J, NF) mask of pairable (k, j) per subcarrier.

    In SIC mode pair (k, j) is admissible on subcarrier i iff
    h_st_pu[k, i] <= g_st_su[j, i]; without SIC every pair is admissible.
    """
    k, nf = channels.h_st_pu.shape
    j = channels.num_su
    if mode == MODE_NO_SIC:
        return np.ones((k, j, nf), dtype=bool)
    return channels.h_st_pu[:, None, :] <= channels.g_st_su[None, :, :]


def sic_admissible_pairs(channels: ChannelState) -> set[tuple[int, int, int]]:
    """Set of (i, j, k) triples for which SIC decoding at SU j succeeds."""
    mask = admissible_mask(channels)
    ks, js, iis = np.nonzero(mask)
    return {(int(i), int(j), int(k)) for k, j, i in zip(ks, js, iis)}


# ---------------------------------------------------------------------------
# Policies


@dataclass
class Assignment:
    """Binary subcarrier indicators.

    c_direct[k, i] = 1 schedules PU k directly on subcarrier i, c_relay[i] = 1
    dedicates subcarrier i to the station-to-station hop, s_pair[k, j, i] = 1
    multiplexes PU k and SU j on subcarrier i in the secondary network.
    """

    c_direct: np.ndarray  # (K, NF) {0,1}
    c_relay: np.ndarray   # (NF,)   {0,1}
    s_pair: np.ndarray    # (K, J, NF) {0,1}

    @staticmethod
    def zeros(k: int, j: int, nf: int) -> "Assignment":
        return Assignment(
            c_direct=np.zeros((k, nf), dtype=int),
            c_relay=np.zeros(nf, dtype=int),
            s_pair=np.zeros((k, j, nf), dtype=int),
        )


@dataclass
class PowerAllocation:
    """Nonnegative transmit powers in watts.

    Raw powers on slots whose indicator is zero are inert: rates and budgets
    only ever see the products with the assignment indicators.
    """

    q_direct: np.ndarray  # (K, NF) primary station, direct links
    q_relay: np.ndarray   # (NF,)   primary station, relay hop
    p_pu: np.ndarray      # (K, NF) secondary station, PU signals
    p_su: np.ndarray      # (J, NF) secondary station, SU signals

    @staticmethod
    def zeros(k: int, j: int, nf: int) -> "PowerAllocation":
        return PowerAllocation(
            q_direct=np.zeros((k, nf)),
            q_relay=np.zeros(nf),
            p_pu=np.zeros((k, nf)),
            p_su=np.zeros((j, nf)),
        )


@dataclass
class Policy:
    assignment: Assignment
    powers: PowerAllocation

    @staticmethod
    def zeros(k: int, j: int, nf: int) -> "Policy":
        return Policy(Assignment.zeros(k, j, nf), PowerAllocation.zeros(k, j, nf))


@dataclass
class RateReport:
    pu_rate: np.ndarray            # (K,)
    su_rate: np.ndarray            # (J,)
    per_subcarrier_u: np.ndarray   # (NF,) weighted throughput per subcarrier
    weighted_total: float
    qos_met: np.ndarray            # (K,) bool
    relay_constraint_met: bool
    pu_rate_per_subcarrier: np.ndarray = field(default=None, repr=False)  # (K, NF)
    su_rate_per_subcarrier: np.ndarray = field(default=None, repr=False)  # (J, NF)


@dataclass
class Violation:
    constraint: str
    index: tuple
    margin: float  # positive amount by which the constraint is exceeded

    def __str__(self) -> str:
        return f"{self.constraint}{list(self.index)}: exceeded by {self.margin:.3e}"


@dataclass
class ValidationResult:
    feasible: bool
    violations: list
    report: RateReport


def _structure_violations(a: Assignment) -> list:
    out = []
    for name, arr in (("C5", a.s_pair), ("C6", a.c_direct), ("C6", a.c_relay)):
        bad = (arr != 0) & (arr != 1)
        for idx in zip(*np.nonzero(bad)):
            out.append(Violation(name + " binary", idx, float(abs(arr[idx]))))
    c7 = a.c_direct + a.s_pair.sum(axis=1)
    for idx in zip(*np.nonzero(c7 > 1)):
        out.append(Violation("C7", idx, float(c7[idx] - 1)))
    c8 = a.c_relay + a.c_direct.sum(axis=0)
    for idx in zip(*np.nonzero(c8 > 1)):
        out.append(Violation("C8", idx, float(c8[idx] - 1)))
    # At most one multiplexed pair per subcarrier in the secondary network.
    pairs = a.s_pair.sum(axis=(0, 1))
    for idx in zip(*np.nonzero(pairs > 1)):
        out.append(Violation("single pair", idx, float(pairs[idx] - 1)))
    return out


def _pair_rates(policy: Policy, channels: ChannelState, mode: str):
    """Per-entry (K, J, NF) PU and SU rates of the active pairs (zero elsewhere)."""
    s = policy.assignment.s_pair
    h = channels.h_st_pu[:, None, :]
    g = channels.g_st_su[None, :, :]
    p_pu = policy.powers.p_pu[:, None, :]
    p_su = policy.powers.p_su[None, :, :]
    r_pu = s * noma_pu_rate(p_pu, p_su, h)
    if mode == MODE_SIC:
        r_su = s * (noma_su_rate(p_su, g) * np.ones_like(r_pu))
    else:
        r_su = s * no_sic_su_rate(p_su, p_pu, g)
    return r_pu, r_su


def subcarrier_throughput(policy: Policy, channels: ChannelState,
                          weight_pu: float, weight_su: float, i: int,
                          mode: str = MODE_SIC) -> float:
    """Weighted throughput on subcarrier i for a structurally valid assignment."""
    bad = _structure_violations(policy.assignment)
    if bad:
        raise ValueError(f"assignment violates C5-C8: {bad[0]}")
    adm = admissible_mask(channels, mode)
    r_pu, r_su = _pair_rates(policy, channels, mode)
    pair_part = np.sum((weight_pu * r_pu + weight_su * r_su)[..., i] * adm[..., i])
    direct = policy.assignment.c_direct[:, i] * direct_rate(
        policy.powers.q_direct[:, i], channels.f_direct[:, i])
    return float(pair_part + weight_pu * np.sum(direct))


def evaluate_policy(policy: Policy, inst: ProblemInstance,
                    mode: str = MODE_SIC) -> RateReport:
    """Rates and the weighted objective of a policy, without feasibility checks.

    Pair contributions follow the objective's pairing rule: active pairs that
    are not admissible in the given mode contribute nothing.
    """
    adm = admissible_mask(inst.channels, mode)
    r_pu_pair, r_su_pair = _pair_rates(policy, inst.channels, mode)
    r_pu_pair = r_pu_pair * adm
    r_su_pair = r_su_pair * adm
    direct = policy.assignment.c_direct * direct_rate(
        policy.powers.q_direct, inst.channels.f_direct)

    pu_rate_i = direct + r_pu_pair.sum(axis=1)          # (K, NF)
    su_rate_i = r_su_pair.sum(axis=0)                   # (J, NF)
    u_i = (inst.weight_pu * (r_pu_pair.sum(axis=(0, 1)) + direct.sum(axis=0))
           + inst.weight_su * r_su_pair.sum(axis=(0, 1)))

    pu_rate = pu_rate_i.sum(axis=1)
    c_st = relay_hop_rate(policy.powers.q_relay, inst.channels.f_relay_hop)
    relay_ok = bool(np.all(
        r_pu_pair.max(axis=(0, 1), initial=0.0)
        <= policy.assignment.c_relay * c_st + RATE_TOL))
    return RateReport(
        pu_rate=pu_rate,
        su_rate=su_rate_i.sum(axis=1),
        per_subcarrier_u=u_i,
        weighted_total=float(u_i.sum()),
        qos_met=pu_rate >= inst.r_req - RATE_TOL,
        relay_constraint_met=relay_ok,
        pu_rate_per_subcarrier=pu_rate_i,
        su_rate_per_subcarrier=su_rate_i,
    )


def validate_policy(policy: Policy, inst: ProblemInstance,
                    tol: float = RATE_TOL, mode: str = MODE_SIC) -> ValidationResult:
    """Check C1-C8, QoS, budgets, and SIC admissibility of every active pair.

    Rate constraints use the additive tolerance ``tol``; power budgets use a
    relative tolerance of 1e-9.  Returns the full list of violations with
    margins; the rate report is computed either way.
    """
    a, p = policy.assignment, policy.powers
    violations = _structure_violations(a)

    if np.any(p.q_direct < 0) or np.any(p.q_relay < 0) \
            or np.any(p.p_pu < 0) or np.any(p.p_su < 0):
        violations.append(Violation("C9 nonnegative power", (), 0.0))

    adm = admissible_mask(inst.channels, mode)
    active = np.asarray(a.s_pair, dtype=bool)
    for idx in zip(*np.nonzero(active & ~adm)):
        violations.append(Violation("SIC admissibility", idx, 0.0))

    st_used = float(np.sum(a.s_pair * (p.p_pu[:, None, :] + p.p_su[None, :, :])))
    if st_used > inst.p_max_st * (1.0 + BUDGET_REL_TOL):
        violations.append(Violation("C3 budget", (), st_used - inst.p_max_st))
    pt_used = float(np.sum(a.c_relay * p.q_relay) + np.sum(a.c_direct * p.q_direct))
    if pt_used > inst.p_max_pt * (1.0 + BUDGET_REL_TOL):
        violations.append(Violation("C4 budget", (), pt_used - inst.p_max_pt))

    # C1 binds only where a pair is active; with s = 0 it holds trivially.
    c_st = a.c_relay * relay_hop_rate(p.q_relay, inst.channels.f_relay_hop)
    r_pu_pair, _ = _pair_rates(policy, inst.channels, mode)
    excess = r_pu_pair - c_st[None, None, :]
    for idx in zip(*np.nonzero(active & (excess > tol))):
        violations.append(Violation("C1 relay rate", idx, float(excess[idx])))

    report = evaluate_policy(policy, inst, mode)
    for k in range(inst.num_pu):
        deficit = inst.r_req[k] - report.pu_rate[k]
        if deficit > tol:
            violations.append(Violation("C2 QoS", (k,), float(deficit)))

    return ValidationResult(not violations, violations, report)


# ---------------------------------------------------------------------------
# Per-subcarrier allocation structures.  A subcarrier can host one primary
# action (a direct PU or the relay hop, C8) and at most one multiplexed pair,
# where a pair sharing its PU with a direct transmission is excluded (C7).
# Pairs without the relay hop serve only the SU (C1 forces the paired PU's
# power to zero); a lone relay hop carries no rate and is never enumerated.


@dataclass(frozen=True)
class SubcarrierMode:
    direct: int | None = None            # PU index served directly
    pair: tuple[int, int] | None = None  # (k, j) multiplexed pair
    relay: bool = False                  # station-to-station hop active

    def __str__(self) -> str:
        parts = []
        if self.direct is not None:
            parts.append(f"direct[{self.direct}]")
        if self.relay:
            parts.append("relay")
        if self.pair is not None:
            parts.append(f"pair{self.pair}")
        return "+".join(parts) if parts else "idle"


def enumerate_subcarrier_modes(num_pu: int, adm_pairs: list[tuple[int, int]],
                               include_combos: bool = True) -> list[SubcarrierMode]:
    """All structurally distinct single-subcarrier allocations.

    ``adm_pairs`` lists the admissible (k, j) pairs of the subcarrier.  With
    ``include_combos`` a direct PU m can share the subcarrier with an
    SU-serving pair (k, j), m != k, which the constraint set permits.
    """
    modes = [SubcarrierMode()]
    modes += [SubcarrierMode(direct=k) for k in range(num_pu)]
    for kj in adm_pairs:
        modes.append(SubcarrierMode(pair=kj))
        modes.append(SubcarrierMode(pair=kj, relay=True))
    if include_combos:
        for kj in adm_pairs:
            for m in range(num_pu):
                if m != kj[0]:
                    modes.append(SubcarrierMode(direct=m, pair=kj))
    return modes


def assignment_from_modes(modes: list[SubcarrierMode], k: int, j: int) -> Assignment:
    a = Assignment.zeros(k, j, len(modes))
    for i, m in enumerate(modes):
        if m.direct is not None:
            a.c_direct[m.direct, i] = 1
        if m.relay:
            a.c_relay[i] = 1
        if m.pair is not None:
            a.s_pair[m.pair[0], m.pair[1], i] = 1
    return a


# ---------------------------------------------------------------------------
# Policy serialization, mirroring the instance text format.

_FMT = "%.17g"


def policy_to_text(policy: Policy) -> str:
    k, nf = policy.assignment.c_direct.shape
    j = policy.assignment.s_pair.shape[1]
    out = io.StringIO()
    out.write("crnoma-policy-v1\n")
    out.write(f"{k} {j} {nf}\n")
    for arr in (policy.assignment.c_direct, policy.assignment.c_relay,
                policy.assignment.s_pair):
        out.write(" ".join(str(int(v)) for v in np.ravel(arr)) + "\n")
    for arr in (policy.powers.q_direct, policy.powers.q_relay,
                policy.powers.p_pu, policy.powers.p_su):
        out.write(" ".join(_FMT % v for v in np.ravel(arr)) + "\n")
    return out.getvalue()


def policy_from_text(text: str) -> Policy:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    if not lines or lines[0].strip() != "crnoma-policy-v1":
        raise ValueError("not a crnoma policy file")
    k, j, nf = (int(v) for v in lines[1].split())

    def arr(line: str, shape: tuple[int, ...], dtype) -> np.ndarray:
        vals = np.array(line.split(), dtype=dtype)
        if vals.size != int(np.prod(shape)):
            raise ValueError("array length does not match header dims")
        return vals.reshape(shape)

    assignment = Assignment(
        c_direct=arr(lines[2], (k, nf), int),
        c_relay=arr(lines[3], (nf,), int),
        s_pair=arr(lines[4], (k, j, nf), int),
    )
    powers = PowerAllocation(
        q_direct=arr(lines[5], (k, nf), float),
        q_relay=arr(lines[6], (nf,), float),
        p_pu=arr(lines[7], (k, nf), float),
        p_su=arr(lines[8], (j, nf), float),
    )
    return Policy(assignment, powers)
