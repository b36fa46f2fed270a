"""Baseline schemes and an exhaustive brute-force oracle for tiny instances.

Baseline 1 removes interference cancellation at the secondary users (their
rate treats the paired PU's signal as noise) and drops the pairing
restriction.  Baseline 2 keeps the proposed receivers but randomizes the
per-subcarrier allocation structure and only optimizes powers.  The brute
force oracle enumerates every allocation structure and grid-searches the
powers; it exists purely as desk-scale ground truth and shares no code with
the solvers being checked beyond the elementary rate formulas.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .instance import ProblemInstance
from .rates import (MODE_NO_SIC, MODE_SIC, Policy, SubcarrierMode,
                    admissible_mask, assignment_from_modes,
                    enumerate_subcarrier_modes, validate_policy)
from .result import STATUS_INFEASIBLE, STATUS_OPTIMAL, SolveResult
from .sca import ScaOptions, algorithm1_solve, frozen_power_solve

LN2 = float(np.log(2.0))


def baseline1_solve(inst: ProblemInstance,
                    options: ScaOptions | None = None,
                    seed: int = 0) -> SolveResult:
    """Conventional relaying without SIC at the secondary users.

    Same optimizer, two changes: the SU rate counts the paired PU's signal
    as noise, and any PU may share a subcarrier with any SU.
    """
    return algorithm1_solve(inst, options, seed=seed, mode=MODE_NO_SIC,
                            scheme="baseline1")


def baseline2_solve(inst: ProblemInstance, seed: int = 0,
                    redraw_limit: int = 20,
                    pairing_only: bool = False) -> SolveResult:
    """Random per-subcarrier allocation structure, optimized powers.

    Each subcarrier draws uniformly among idle, each direct PU, and each
    admissible relayed pair; with ``pairing_only`` the draw is restricted to
    the admissible pairs (plus idle when none exist).  QoS-infeasible draws
    are redrawn up to ``redraw_limit`` times.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(2,)))
    k, j, nf = inst.dims
    adm = admissible_mask(inst.channels, MODE_SIC)
    per_sub: list[list[SubcarrierMode]] = []
    for i in range(nf):
        pairs = [(kk, jj) for kk in range(k) for jj in range(j) if adm[kk, jj, i]]
        if pairing_only:
            opts = ([SubcarrierMode(pair=p, relay=True) for p in pairs]
                    or [SubcarrierMode()])
        else:
            opts = [SubcarrierMode()]
            opts += [SubcarrierMode(direct=kk) for kk in range(k)]
            opts += [SubcarrierMode(pair=p, relay=True) for p in pairs]
        per_sub.append(opts)

    for draw in range(max(1, redraw_limit)):
        modes = [opts[int(rng.integers(len(opts)))] for opts in per_sub]
        assignment = assignment_from_modes(modes, k, j)
        powers, value, status = frozen_power_solve(inst, assignment, MODE_SIC)
        if status != STATUS_OPTIMAL:
            continue
        policy = Policy(assignment, powers)
        check = validate_policy(policy, inst)
        if check.feasible:
            return SolveResult(scheme="baseline2", status=STATUS_OPTIMAL,
                               policy=policy,
                               objective=check.report.weighted_total,
                               report=check.report,
                               extras={"draws": draw + 1})
    return SolveResult(scheme="baseline2", status=STATUS_INFEASIBLE,
                       extras={"reason": "no QoS-feasible draw"})


# ---------------------------------------------------------------------------
# Brute-force oracle


@dataclass
class OracleOptions:
    levels: int = 16             # grid levels per active power variable
    refinements: int = 2         # local grid shrink rounds (factor 5 each)
    max_nf: int = 2
    max_pu: int = 2
    max_su: int = 2
    chunk: int = 250_000


class _GridSearch:
    """Vectorized power grid evaluation for one allocation structure.

    Per subcarrier the variables are: the direct user's power, the relay hop
    power, the paired SU's power, and, for relayed pairs, the paired PU's
    power expressed as a fraction of the largest relay-decodable value, so
    the relay inequality holds with equality at fraction one and the grid
    sweeps its boundary exactly.
    """

    def __init__(self, inst: ProblemInstance, modes: list[SubcarrierMode],
                 options: OracleOptions):
        self.inst = inst
        self.modes = modes
        self.options = options

    def var_names(self) -> list[tuple]:
        names = []
        for i, m in enumerate(self.modes):
            if m.direct is not None:
                names.append(("q", m.direct, i))
            if m.relay:
                names.append(("qst", i))
            if m.pair is not None:
                names.append(("psu", m.pair[1], i))
                if m.relay:
                    names.append(("frac", i))
        return names

    def grid_for(self, name: tuple, center: float | None, span: float) -> np.ndarray:
        levels = self.options.levels
        if name[0] == "frac":
            hi = 1.0
        elif name[0] == "psu":
            hi = self.inst.p_max_st
        else:
            hi = self.inst.p_max_pt
        if center is None:
            if name[0] == "frac":
                return np.linspace(0.0, 1.0, levels)
            # geometric spacing resolves the log-scale sweet spots; zero and
            # the full budget are always on the grid
            return np.concatenate([[0.0], np.geomspace(hi * 1e-12, hi, levels - 1)])
        lo2 = max(0.0, center - span * hi)
        hi2 = min(hi, center + span * hi)
        return np.linspace(lo2, hi2, levels)

    def evaluate(self, vals: dict) -> tuple[np.ndarray, np.ndarray]:
        """Objective and feasibility over a batch of grid points."""
        inst, ch = self.inst, self.inst.channels
        w, mu = inst.weight_pu, inst.weight_su
        n = next(iter(vals.values())).size if vals else 1
        obj = np.zeros(n)
        pt_used = np.zeros(n)
        st_used = np.zeros(n)
        pu_rate = np.zeros((inst.num_pu, n))
        for i, m in enumerate(self.modes):
            if m.direct is not None:
                q = vals[("q", m.direct, i)]
                r = np.log1p(q * ch.f_direct[m.direct, i]) / LN2
                obj += w * r
                pu_rate[m.direct] += r
                pt_used += q
            if m.pair is not None:
                kk, jj = m.pair
                g = ch.g_st_su[jj, i]
                h = ch.h_st_pu[kk, i]
                psu = vals[("psu", jj, i)]
                st_used += psu
                obj += mu * 0.5 * np.log1p(psu * g) / LN2
                if m.relay:
                    qst = vals[("qst", i)]
                    pt_used += qst
                    cap_sinr = qst * ch.f_relay_hop[i]
                    frac = vals[("frac", i)]
                    r_pu = 0.5 * np.log1p(frac * cap_sinr) / LN2
                    if h > 0:
                        ppu = frac * cap_sinr * (psu * h + 1.0) / h
                    else:
                        ppu = np.zeros_like(frac)
                        r_pu = np.zeros_like(frac)
                    st_used += ppu
                    obj += w * r_pu
                    pu_rate[kk] += r_pu
            elif m.relay:
                pt_used += vals[("qst", i)]
        feasible = (pt_used <= inst.p_max_pt * (1 + 1e-12)) \
            & (st_used <= inst.p_max_st * (1 + 1e-12))
        for kk in range(inst.num_pu):
            if inst.r_req[kk] > 0:
                feasible &= pu_rate[kk] >= inst.r_req[kk] - 1e-9
        return obj, feasible

    def search(self, centers: dict | None, span: float):
        """Best feasible grid point; returns (value, point, local resolution)."""
        names = self.var_names()
        if not names:
            obj, feas = self.evaluate({})
            val = float(obj[0]) if feas[0] else -np.inf
            return val, {}, 0.0
        grids = [self.grid_for(nm, None if centers is None else centers.get(nm),
                               span) for nm in names]
        shape = tuple(len(g) for g in grids)
        total = int(np.prod(shape))
        best = -np.inf
        best_point = None
        chunk = self.options.chunk
        for lo in range(0, total, chunk):
            hi = min(lo + chunk, total)
            flat = np.arange(lo, hi)
            vals = {}
            rem = flat
            for nm, g, size in zip(reversed(names), reversed(grids),
                                   reversed(shape)):
                vals[nm] = g[rem % size]
                rem = rem // size
            obj, feas = self.evaluate(vals)
            if np.any(feas):
                obj = np.where(feas, obj, -np.inf)
                idx = int(np.argmax(obj))
                if obj[idx] > best:
                    best = float(obj[idx])
                    best_point = {nm: float(vals[nm][idx]) for nm in names}
        if best_point is None:
            return -np.inf, None, 0.0
        res = 0.0
        for nm, g in zip(names, grids):
            gi = int(np.argmin(np.abs(g - best_point[nm])))
            for other in (gi - 1, gi + 1):
                if 0 <= other < len(g):
                    vals = {n2: np.array([best_point[n2]]) for n2 in names}
                    vals[nm] = np.array([g[other]])
                    obj, feas = self.evaluate(vals)
                    if feas[0]:
                        res = max(res, abs(best - float(obj[0])))
        return best, best_point, res

    def to_policy(self, point: dict) -> Policy:
        inst, ch = self.inst, self.inst.channels
        k, j, nf = inst.dims
        assignment = assignment_from_modes(self.modes, k, j)
        powers = Policy.zeros(k, j, nf).powers
        for i, m in enumerate(self.modes):
            if m.direct is not None:
                powers.q_direct[m.direct, i] = point[("q", m.direct, i)]
            if m.relay:
                powers.q_relay[i] = point[("qst", i)]
            if m.pair is not None:
                kk, jj = m.pair
                psu = point[("psu", jj, i)]
                powers.p_su[jj, i] = psu
                if m.relay and ch.h_st_pu[kk, i] > 0:
                    cap_sinr = point[("qst", i)] * ch.f_relay_hop[i]
                    h = ch.h_st_pu[kk, i]
                    powers.p_pu[kk, i] = (point[("frac", i)] * cap_sinr
                                          * (psu * h + 1.0) / h)
        return Policy(assignment, powers)


def brute_force(inst: ProblemInstance, options: OracleOptions | None = None):
    """Exhaustive structure enumeration plus power grid search.

    ``extras['resolution']`` is the largest objective change across the
    incumbent's immediate grid neighbors after refinement (a local
    resolution certificate); ``extras['lipschitz_bound']`` is the global
    rate-slope bound, which is vacuously large at realistic channel gains.
    """
    options = options or OracleOptions()
    k, j, nf = inst.dims
    if nf > options.max_nf or k > options.max_pu or j > options.max_su:
        raise ValueError("instance exceeds the oracle's size caps")
    ch = inst.channels
    adm = admissible_mask(inst.channels, MODE_SIC)

    per_sub_modes = []
    for i in range(nf):
        pairs = [(kk, jj) for kk in range(k) for jj in range(j) if adm[kk, jj, i]]
        per_sub_modes.append(enumerate_subcarrier_modes(k, pairs))

    best_val = -np.inf
    best_search: _GridSearch | None = None
    best_point: dict | None = None
    resolution = 0.0
    for combo in itertools.product(*per_sub_modes):
        search = _GridSearch(inst, list(combo), options)
        val, point, res = search.search(None, 1.0)
        if val > best_val:
            best_val, best_search, best_point, resolution = val, search, point, res

    if best_search is None:
        return SolveResult(scheme="oracle", status=STATUS_INFEASIBLE,
                           extras={"reason": "no feasible grid point"})

    span = 1.0
    for _ in range(options.refinements):
        span /= 5.0
        val, point, res = best_search.search(best_point, span)
        if val > best_val:
            best_val, best_point, resolution = val, point, res

    policy = best_search.to_policy(best_point)
    check = validate_policy(policy, inst)
    w, mu = inst.weight_pu, inst.weight_su
    slopes = [w * float(ch.f_direct.max(initial=0.0)),
              0.5 * w * float(ch.h_st_pu.max(initial=0.0)),
              0.5 * mu * float(ch.g_st_su.max(initial=0.0))]
    return SolveResult(
        scheme="oracle", status=STATUS_OPTIMAL, policy=policy,
        objective=check.report.weighted_total, report=check.report,
        extras={
            "resolution": resolution,
            "lipschitz_bound": max(slopes) / LN2,
            "feasible": check.feasible,
            "violations": [str(v) for v in check.violations],
        })
