"""Globally optimal solver: monotonic reformulation plus outer polyblock approximation.

The joint allocation problem is lifted to auxiliary SINR-style coordinates

    u  ~ 1 + paired-PU SINR,   v ~ 1 + SU SINR,   xi ~ 1 + direct-PU SINR,

one coordinate per admissible pair / direct link, each living in
[1, 1 + budget * gain].  The objective sum( w/2 log2 u + mu/2 log2 v
+ w log2 xi ) is increasing, the resource side G (can the coordinates be
supported by nonnegative tilde powers within both budgets, with all
cross-interference terms charged?) is a normal set, and the QoS side H is
conormal, so an outer polyblock approximation over the box converges to the
global optimum.

Membership in G at a fixed point is a linear feasibility question in the
tilde powers.  Because every requirement row has the form
t_i >= (affine in the other powers with nonnegative coefficients), the
least power vector solving the system is the fixed point of an affine
monotone map and is found by one linear solve; the default membership test
uses that, the simplex oracle from convex_core is kept as a cross-checkable
alternative (``method="lp"``).

The relay inequality is folded into G analytically: a nonnegative slack
linking the two halves of the original relay constraint exists iff
u <= 1 + qt_st * F_ST, which becomes one more linear row of the membership
system and removes the slack coordinates from the search space entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convex_core import LinearFeasibilityProblem, lp_feasible
from .instance import ProblemInstance
from .rates import (MODE_SIC, Assignment, Policy, PowerAllocation,
                    admissible_mask, validate_policy)
from .result import (STATUS_INFEASIBLE, STATUS_MAX_ITER, STATUS_OPTIMAL,
                     SolveResult)

DEFAULT_EPSILON = 1e-2        # absolute optimality gap, bits/s/Hz
DEFAULT_BISECTION_TOL = 1e-4
DEFAULT_MAX_VERTICES = 20000
COORD_EPS = 1e-12             # coordinates this close to 1 count as inactive
LOG2E = 1.0 / math.log(2.0)


@dataclass
class PolyblockOptions:
    epsilon: float = DEFAULT_EPSILON
    bisection_tol: float = DEFAULT_BISECTION_TOL
    max_vertices: int = DEFAULT_MAX_VERTICES
    record_trace: bool = True


class AuxGeometry:
    """Coordinate bookkeeping for the auxiliary monotonic problem."""

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        k, j, nf = inst.dims
        ch = inst.channels
        adm = admissible_mask(ch, MODE_SIC)
        self.pairs = [(i, kk, jj) for i in range(nf)
                      for kk in range(k) for jj in range(j) if adm[kk, jj, i]]
        self.pairs_by_sub = {i: [] for i in range(nf)}
        for t, (i, kk, jj) in enumerate(self.pairs):
            self.pairs_by_sub[i].append(t)

        # Coordinate existence: degenerate links collapse their box edge to 1
        # and the coordinate is dropped from the search space.
        self.u_of_pair = np.full(len(self.pairs), -1, dtype=int)
        self.v_of_pair = np.full(len(self.pairs), -1, dtype=int)
        self.xi_of = np.full((k, nf), -1, dtype=int)
        labels = []
        bounds = []
        weights = []
        for t, (i, kk, jj) in enumerate(self.pairs):
            # the relay hop and both budgets cap the reachable paired-PU SINR
            u_max = 1.0 + min(inst.p_max_st * ch.h_st_pu[kk, i],
                              inst.p_max_pt * ch.f_relay_hop[i])
            if u_max > 1.0 + COORD_EPS:
                self.u_of_pair[t] = len(labels)
                labels.append(("u", i, kk, jj, t))
                bounds.append(u_max)
                weights.append(0.5 * inst.weight_pu)
        for t, (i, kk, jj) in enumerate(self.pairs):
            v_max = 1.0 + inst.p_max_st * ch.g_st_su[jj, i]
            if v_max > 1.0 + COORD_EPS:
                self.v_of_pair[t] = len(labels)
                labels.append(("v", i, kk, jj, t))
                bounds.append(v_max)
                weights.append(0.5 * inst.weight_su)
        for kk in range(k):
            for i in range(nf):
                xi_max = 1.0 + inst.p_max_pt * ch.f_direct[kk, i]
                if xi_max > 1.0 + COORD_EPS:
                    self.xi_of[kk, i] = len(labels)
                    labels.append(("xi", i, kk, -1, -1))
                    bounds.append(xi_max)
                    weights.append(inst.weight_pu)
        self.labels = labels
        self.ub = np.array(bounds) if bounds else np.zeros(0)
        self.wvec = np.array(weights) if weights else np.zeros(0)
        self.dim = len(labels)

        # per-PU QoS weights: rate_k(z) = qos_mat[k] . log2(z)
        self.qos_mat = np.zeros((k, self.dim))
        for t, (i, kk, jj) in enumerate(self.pairs):
            c = self.u_of_pair[t]
            if c >= 0:
                self.qos_mat[kk, c] = 0.5
        for kk in range(k):
            for i in range(nf):
                c = self.xi_of[kk, i]
                if c >= 0:
                    self.qos_mat[kk, c] = 1.0

        self._build_power_index()
        self._build_structure_options()

    def _build_structure_options(self) -> None:
        """Weighted coordinate masks of every per-subcarrier allocation option.

        Any feasible policy activates, per subcarrier, one of: a direct PU, a
        pair (with or without the relay hop), or a direct plus an SU-only
        pair of another PU.  Each option's value at a point is a fixed
        weighted sum of log2-coordinates, so the best-option sum over
        subcarriers upper-bounds the value of every policy dominated by the
        point; it is the polyblock's vertex bound.
        """
        inst = self.inst
        w, mu = inst.weight_pu, inst.weight_su
        rows: list[np.ndarray] = []          # idle enters via the zero floor
        seg: list[int] = []
        for i in range(inst.num_subcarriers):
            def add(row):
                rows.append(row)
                seg.append(i)

            directs = []
            for kk in range(inst.num_pu):
                xc = self.xi_of[kk, i]
                if xc >= 0:
                    row = np.zeros(self.dim)
                    row[xc] = w
                    directs.append((kk, row))
                    add(row)
            for t in self.pairs_by_sub[i]:
                uc, vc = self.u_of_pair[t], self.v_of_pair[t]
                pair_k = self.pairs[t][1]
                v_row = np.zeros(self.dim)
                if vc >= 0:
                    v_row[vc] = 0.5 * mu
                    add(v_row.copy())
                if uc >= 0:
                    row = v_row.copy()
                    row[uc] = 0.5 * w
                    add(row)
                if vc >= 0:
                    for kk, drow in directs:
                        if kk != pair_k:
                            add(drow + v_row)
        self.option_mat = (np.array(rows) if rows else np.zeros((0, self.dim)))
        self.option_seg = np.array(seg, dtype=int)
        self._seg_cols = [np.nonzero(self.option_seg == i)[0]
                          for i in range(inst.num_subcarriers)]

    def structure_bound_batch(self, zs: np.ndarray) -> np.ndarray:
        """Best-structure bound of each row of ``zs``."""
        if self.option_mat.shape[0] == 0:
            return np.zeros(zs.shape[0])
        vals = np.log2(zs) @ self.option_mat.T        # (n, n_options)
        out = np.zeros(zs.shape[0])
        for cols in self._seg_cols:
            if cols.size:
                out += np.maximum(vals[:, cols].max(axis=1), 0.0)
        return out

    def structure_bound(self, z: np.ndarray) -> float:
        return float(self.structure_bound_batch(z[None, :])[0])

    def _build_power_index(self) -> None:
        """Tilde power variables of the membership system."""
        k, j, nf = self.inst.dims
        n = 0
        self.p_ptpu = np.full(len(self.pairs), -1, dtype=int)
        self.p_ptsu = np.full(len(self.pairs), -1, dtype=int)
        for t in range(len(self.pairs)):
            if self.u_of_pair[t] >= 0:
                self.p_ptpu[t] = n
                n += 1
            if self.v_of_pair[t] >= 0:
                self.p_ptsu[t] = n
                n += 1
        self.p_qt = np.full((k, nf), -1, dtype=int)
        for kk in range(k):
            for i in range(nf):
                if self.xi_of[kk, i] >= 0:
                    self.p_qt[kk, i] = n
                    n += 1
        self.p_qtst = np.full(nf, -1, dtype=int)
        for i in range(nf):
            if any(self.u_of_pair[t] >= 0 for t in self.pairs_by_sub[i]):
                self.p_qtst[i] = n
                n += 1
        self.n_power = n
        # ST budget collects pair powers, PT budget the direct and hop powers.
        self.st_mask = np.zeros(n, dtype=bool)
        self.pt_mask = np.zeros(n, dtype=bool)
        for t in range(len(self.pairs)):
            for arr in (self.p_ptpu, self.p_ptsu):
                if arr[t] >= 0:
                    self.st_mask[arr[t]] = True
        for idx in self.p_qt.ravel():
            if idx >= 0:
                self.pt_mask[idx] = True
        for idx in self.p_qtst:
            if idx >= 0:
                self.pt_mask[idx] = True
        # cross-pair interference mask per subcarrier: (m, n) interferes with
        # (k, j) iff m != k and n != j
        self.cross = {}
        for i, ts in self.pairs_by_sub.items():
            m = len(ts)
            mask = np.zeros((m, m), dtype=bool)
            for a, ta in enumerate(ts):
                ka, ja = self.pairs[ta][1], self.pairs[ta][2]
                for b, tb in enumerate(ts):
                    kb, jb = self.pairs[tb][1], self.pairs[tb][2]
                    mask[a, b] = (kb != ka) and (jb != ja)
            self.cross[i] = mask

    # -- objective and QoS side ----------------------------------------------

    def objective(self, z: np.ndarray) -> float:
        return float(self.wvec @ np.log2(z))

    def objective_batch(self, zs: np.ndarray) -> np.ndarray:
        return np.log2(zs) @ self.wvec

    def in_h(self, z: np.ndarray, slack: float = 1e-9) -> bool:
        rates = self.qos_mat @ np.log2(z)
        return bool(np.all(rates >= self.inst.r_req - slack))

    def in_h_batch(self, zs: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        rates = np.log2(zs) @ self.qos_mat.T
        return np.all(rates >= self.inst.r_req[None, :] - slack, axis=1)

    # -- membership in the resource side G ------------------------------------

    def _interference_system(self, z: np.ndarray):
        """Affine monotone map t >= A t + d encoding M1-M3 and the relay rows."""
        inst, ch = self.inst, self.inst.channels
        n = self.n_power
        a = np.zeros((n, n))
        d = np.zeros(n)
        for i, ts in self.pairs_by_sub.items():
            if not ts and not np.any(self.p_qt[:, i] >= 0):
                continue
            qtst_var = self.p_qtst[i]
            relay_need = 0.0
            for a_loc, t in enumerate(ts):
                _, kk, jj = self.pairs[t]
                h = ch.h_st_pu[kk, i]
                g = ch.g_st_su[jj, i]
                cross_vars = []
                for b_loc, t2 in enumerate(ts):
                    if self.cross[i][a_loc, b_loc]:
                        for arr in (self.p_ptpu, self.p_ptsu):
                            if arr[t2] >= 0:
                                cross_vars.append(arr[t2])
                uc = self.u_of_pair[t]
                if uc >= 0 and z[uc] > 1.0 + COORD_EPS:
                    um1 = z[uc] - 1.0
                    row = self.p_ptpu[t]
                    if self.p_ptsu[t] >= 0:
                        a[row, self.p_ptsu[t]] += um1
                    if self.p_qt[kk, i] >= 0:
                        a[row, self.p_qt[kk, i]] += um1
                    for cvar in cross_vars:
                        a[row, cvar] += um1
                    d[row] += um1 / h
                    relay_need = max(relay_need, um1 / ch.f_relay_hop[i])
                vc = self.v_of_pair[t]
                if vc >= 0 and z[vc] > 1.0 + COORD_EPS:
                    vm1 = z[vc] - 1.0
                    row = self.p_ptsu[t]
                    if self.p_qt[kk, i] >= 0:
                        a[row, self.p_qt[kk, i]] += vm1
                    for cvar in cross_vars:
                        a[row, cvar] += vm1
                    d[row] += vm1 / g
            if qtst_var >= 0:
                d[qtst_var] = relay_need
            for kk in range(self.inst.num_pu):
                xc = self.xi_of[kk, i]
                if xc < 0 or z[xc] <= 1.0 + COORD_EPS:
                    continue
                xm1 = z[xc] - 1.0
                row = self.p_qt[kk, i]
                if qtst_var >= 0:
                    a[row, qtst_var] += xm1
                for m in range(self.inst.num_pu):
                    if m != kk and self.p_qt[m, i] >= 0:
                        a[row, self.p_qt[m, i]] += xm1
                d[row] += xm1 / ch.f_direct[kk, i]
        return a, d

    def min_powers(self, z: np.ndarray):
        """Least nonnegative tilde power vector supporting the point, or None.

        The requirement system t >= A t + d has A >= 0 and d >= 0, so its
        least solution (when the spectral radius of A is below one) is the
        unique solution of (I - A) t = d; otherwise no finite power vector
        supports the requested coordinates.
        """
        a, d = self._interference_system(z)
        if not d.any():
            return np.zeros(self.n_power)
        try:
            t = np.linalg.solve(np.eye(self.n_power) - a, d)
        except np.linalg.LinAlgError:
            return None
        if np.any(t < -1e-9) or not np.all(np.isfinite(t)):
            return None
        resid = a @ t + d - t
        if resid.max(initial=0.0) > 1e-7 * max(1.0, float(t.max(initial=0.0))):
            return None
        return np.maximum(t, 0.0)

    def in_g(self, z: np.ndarray, method: str = "fixed_point"):
        """Membership of the resource set; returns (bool, least witness or None)."""
        inst = self.inst
        if method == "lp":
            return self._in_g_lp(z)
        # quick rejection: even ignoring interference, each coordinate needs
        # (coord - 1)/gain watts, and those lower bounds already obey budgets
        a, d = self._interference_system(z)
        if (d[self.pt_mask].sum() > inst.p_max_pt * (1 + 1e-9)
                or d[self.st_mask].sum() > inst.p_max_st * (1 + 1e-9)):
            return False, None
        if not d.any():
            return True, np.zeros(self.n_power)
        try:
            t = np.linalg.solve(np.eye(self.n_power) - a, d)
        except np.linalg.LinAlgError:
            return False, None
        if np.any(t < -1e-9) or not np.all(np.isfinite(t)):
            return False, None
        resid = a @ t + d - t
        if resid.max(initial=0.0) > 1e-7 * max(1.0, float(t.max(initial=0.0))):
            return False, None
        t = np.maximum(t, 0.0)
        ok = (t[self.pt_mask].sum() <= inst.p_max_pt * (1 + 1e-9)
              and t[self.st_mask].sum() <= inst.p_max_st * (1 + 1e-9))
        return (ok, t if ok else None)

    def _in_g_lp(self, z: np.ndarray):
        """Simplex-oracle route: the same rows handed to lp_feasible."""
        a, d = self._interference_system(z)
        rows = np.eye(self.n_power) * -1.0 + a    # A t - t <= -d
        rhs = -d
        budget_pt = np.where(self.pt_mask, 1.0, 0.0)
        budget_st = np.where(self.st_mask, 1.0, 0.0)
        a_full = np.vstack([rows, budget_pt, budget_st])
        b_full = np.concatenate([rhs, [self.inst.p_max_pt, self.inst.p_max_st]])
        return lp_feasible(LinearFeasibilityProblem(a=a_full, b=b_full))

    # -- conversions -----------------------------------------------------------

    def point_from_policy(self, policy: Policy) -> np.ndarray:
        """Embed a structurally clean feasible policy as an auxiliary point."""
        inst, ch = self.inst, self.inst.channels
        z = np.ones(self.dim)
        a, p = policy.assignment, policy.powers
        for t, (i, kk, jj) in enumerate(self.pairs):
            if not a.s_pair[kk, jj, i]:
                continue
            uc, vc = self.u_of_pair[t], self.v_of_pair[t]
            if uc >= 0 and a.c_relay[i]:
                sinr = (p.p_pu[kk, i] * ch.h_st_pu[kk, i]
                        / (p.p_su[jj, i] * ch.h_st_pu[kk, i] + 1.0))
                # the relay hop caps the decodable SINR
                cap = p.q_relay[i] * ch.f_relay_hop[i]
                z[uc] = min(1.0 + sinr, 1.0 + cap, self.ub[uc])
            if vc >= 0:
                z[vc] = min(1.0 + p.p_su[jj, i] * ch.g_st_su[jj, i], self.ub[vc])
        for kk in range(inst.num_pu):
            for i in range(inst.num_subcarriers):
                if a.c_direct[kk, i]:
                    xc = self.xi_of[kk, i]
                    if xc >= 0:
                        z[xc] = min(1.0 + p.q_direct[kk, i] * ch.f_direct[kk, i],
                                    self.ub[xc])
        return z

    def policy_from_point(self, z: np.ndarray):
        """Recover the policy of a structurally clean point via the least witness.

        Active coordinates are read off the point itself (a coordinate above
        1 + threshold is active); powers come from the least power vector, so
        inactive slots carry exactly zero.
        """
        t = self.min_powers(z)
        if t is None:
            raise ValueError("point is not supported by any finite power vector")
        inst = self.inst
        k, j, nf = inst.dims
        policy = Policy.zeros(k, j, nf)
        a, p = policy.assignment, policy.powers
        active_tol = 1e-9
        for tt, (i, kk, jj) in enumerate(self.pairs):
            uc, vc = self.u_of_pair[tt], self.v_of_pair[tt]
            u_act = uc >= 0 and z[uc] > 1.0 + active_tol
            v_act = vc >= 0 and z[vc] > 1.0 + active_tol
            if not (u_act or v_act):
                continue
            if a.s_pair[:, :, i].sum() > 0:
                raise ValueError("point is not clean: two pairs on one subcarrier")
            a.s_pair[kk, jj, i] = 1
            if v_act:
                p.p_su[jj, i] = t[self.p_ptsu[tt]]
            if u_act:
                p.p_pu[kk, i] = t[self.p_ptpu[tt]]
                a.c_relay[i] = 1
                p.q_relay[i] = t[self.p_qtst[i]]
        for kk in range(k):
            for i in range(nf):
                xc = self.xi_of[kk, i]
                if xc >= 0 and z[xc] > 1.0 + active_tol:
                    a.c_direct[kk, i] = 1
                    p.q_direct[kk, i] = t[self.p_qt[kk, i]]
        return policy

    # -- structural cleaning ----------------------------------------------------

    def clean_point(self, z: np.ndarray) -> np.ndarray:
        """Keep, per subcarrier, the single best allocation structure.

        Chooses among: idle, one direct PU, one pair (with or without the
        relay hop), or one direct PU plus an SU-only pair of another PU, by
        the objective contribution at the current coordinates; all other
        coordinates drop to 1.  The result stays in G (normality).
        """
        logz = np.log2(np.maximum(z, 1.0))
        out = np.ones_like(z)
        inst = self.inst
        w, mu = inst.weight_pu, inst.weight_su
        for i in range(inst.num_subcarriers):
            options = [(0.0, None, None, False)]  # value, direct, pair_t, relay
            for kk in range(inst.num_pu):
                xc = self.xi_of[kk, i]
                if xc >= 0 and logz[xc] > 0:
                    options.append((w * logz[xc], kk, None, False))
            for t in self.pairs_by_sub[i]:
                uc, vc = self.u_of_pair[t], self.v_of_pair[t]
                v_val = mu * 0.5 * logz[vc] if vc >= 0 else 0.0
                u_val = w * 0.5 * logz[uc] if uc >= 0 else 0.0
                if v_val > 0:
                    options.append((v_val, None, t, False))
                if u_val > 0:
                    options.append((u_val + v_val, None, t, True))
                if v_val > 0:
                    pk = self.pairs[t][1]
                    for m in range(inst.num_pu):
                        xc = self.xi_of[m, i]
                        if m != pk and xc >= 0 and logz[xc] > 0:
                            options.append((w * logz[xc] + v_val, m, t, False))
            value, direct, pair_t, relay = max(options, key=lambda o: o[0])
            if direct is not None:
                out[self.xi_of[direct, i]] = z[self.xi_of[direct, i]]
            if pair_t is not None:
                vc = self.v_of_pair[pair_t]
                if vc >= 0:
                    out[vc] = z[vc]
                uc = self.u_of_pair[pair_t]
                if relay and uc >= 0:
                    out[uc] = z[uc]
        return out

    def repair_qos(self, z: np.ndarray, reference: np.ndarray):
        """Lift a clean point back into H by boosting deficient PUs' coordinates.

        Coordinates serving a deficient PU are raised (within their boxes and
        the reference point's values) until the requirement is met; returns
        None when no G-feasible lift exists along this simple path.
        """
        inst = self.inst
        out = z.copy()
        for kk in range(inst.num_pu):
            need = inst.r_req[kk]
            if need <= 0:
                continue
            have = float(self.qos_mat[kk] @ np.log2(out))
            if have >= need - 1e-12:
                continue
            coords = np.nonzero(self.qos_mat[kk])[0]
            # prefer raising coordinates that are already active in the
            # reference (pre-cleaning) point, largest headroom first
            order = sorted(coords, key=lambda c: -(min(reference[c], self.ub[c])
                                                   / max(out[c], 1.0)))
            for cap_fn in (lambda c: min(self.ub[c], max(reference[c], out[c])),
                           lambda c: self.ub[c]):
                for c in order:
                    deficit = need - float(self.qos_mat[kk] @ np.log2(out))
                    if deficit <= 1e-12:
                        break
                    room = math.log2(cap_fn(c)) - math.log2(out[c])
                    if room <= 0:
                        continue
                    boost = min(room, deficit / self.qos_mat[kk, c])
                    out[c] = out[c] * 2.0 ** boost
                if float(self.qos_mat[kk] @ np.log2(out)) >= need - 1e-9:
                    break
            if float(self.qos_mat[kk] @ np.log2(out)) < need - 1e-9:
                return None
        ok, _ = self.in_g(out)
        return out if ok else None


def project_onto_g(geom: AuxGeometry, vertex: np.ndarray,
                   tol: float = DEFAULT_BISECTION_TOL) -> np.ndarray:
    """Largest point of G on the segment from the all-ones corner to ``vertex``.

    Monotone bisection on the ray parameter; the all-ones corner is always
    in G (zero powers), so the bracket is valid from the start.
    """
    ok, _ = geom.in_g(vertex)
    if ok:
        return vertex.copy()
    lo, hi = 0.0, 1.0
    steps = max(1, math.ceil(math.log2(1.0 / tol)))
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        point = 1.0 + mid * (vertex - 1.0)
        ok, _ = geom.in_g(point)
        if ok:
            lo = mid
        else:
            hi = mid
    return 1.0 + lo * (vertex - 1.0)


def polyblock_solve(inst: ProblemInstance,
                    options: PolyblockOptions | None = None,
                    warm_policy: Policy | None = None) -> SolveResult:
    """Outer polyblock approximation of the lifted monotonic problem.

    Maintains a vertex set whose boxes cover the not-yet-excluded feasible
    set.  Each round the best-bound vertex is projected onto the boundary of
    G along its corner ray; a structurally cleaned (and, when needed,
    QoS-repaired) copy of the projection becomes the incumbent candidate,
    and the vertex is replaced by its children, pruned by the QoS side, by
    bound, and by dominance.  Terminates when the cover's best bound is
    within ``epsilon`` of the incumbent.
    """
    options = options or PolyblockOptions()
    geom = AuxGeometry(inst)
    scheme = "optimal"
    trace: list = []

    if geom.dim == 0:
        # all channels degenerate: the zero policy is the whole space
        policy = Policy.zeros(*inst.dims)
        check = validate_policy(policy, inst)
        status = STATUS_OPTIMAL if check.feasible else STATUS_INFEASIBLE
        return SolveResult(scheme=scheme, status=status, policy=policy,
                           objective=check.report.weighted_total,
                           report=check.report,
                           extras={"gap": 0.0, "cbv": 0.0, "iterations": 0})

    corner = geom.ub.copy()
    if not geom.in_h(corner):
        return SolveResult(scheme=scheme, status=STATUS_INFEASIBLE,
                           extras={"reason": "QoS unreachable even at the box corner"})

    cbv = -np.inf
    best_point = None
    if warm_policy is not None:
        z_warm = geom.point_from_policy(warm_policy)
        z_warm = geom.clean_point(z_warm)
        ok, _ = geom.in_g(z_warm)
        if ok and geom.in_h(z_warm):
            cbv = geom.objective(z_warm)
            best_point = z_warm

    vertices = corner[None, :].copy()
    bounds = geom.structure_bound_batch(vertices)
    iteration = 0
    shell_loss = 0.0
    status = STATUS_OPTIMAL

    def consider_candidate(pi: np.ndarray):
        nonlocal cbv, best_point
        z_clean = geom.clean_point(pi)
        if not geom.in_h(z_clean):
            repaired = geom.repair_qos(z_clean, pi)
            if repaired is None:
                return
            z_clean = repaired
        val = geom.objective(z_clean)
        if val > cbv:
            cbv = val
            best_point = z_clean

    while True:
        if vertices.shape[0] == 0:
            gap = 0.0
            break
        top = int(np.argmax(bounds))
        bound = float(bounds[top])
        gap = bound - cbv
        if gap <= options.epsilon:
            break
        if iteration >= options.max_vertices:
            status = STATUS_MAX_ITER
            break
        iteration += 1
        z = vertices[top]
        vertices = np.delete(vertices, top, axis=0)
        bounds = np.delete(bounds, top)

        pi = project_onto_g(geom, z, options.bisection_tol)
        consider_candidate(pi)

        lowered = z - pi
        if np.all(lowered <= COORD_EPS):
            # the vertex itself lies in G; excise a thin shell so the cover
            # still shrinks, and account for the sliver in the gap report
            pi = 1.0 + (1.0 - options.bisection_tol) * (z - 1.0)
            shell_loss = max(shell_loss,
                             float(geom.objective(z) - geom.objective(pi)))
            lowered = z - pi
        active = np.nonzero(lowered > COORD_EPS)[0]
        if active.size == 0:
            continue
        children = np.repeat(z[None, :], active.size, axis=0)
        children[np.arange(active.size), active] = pi[active]
        keep = geom.in_h_batch(children)
        children = children[keep]
        if children.shape[0]:
            child_bounds = np.minimum(geom.structure_bound_batch(children), bound)
            keep = child_bounds > cbv + 1e-12
            children, child_bounds = children[keep], child_bounds[keep]
        else:
            child_bounds = np.zeros(0)
        if children.shape[0] and vertices.shape[0] and vertices.shape[0] < 1500:
            # drop children whose box is already covered by another vertex
            dominated = np.zeros(children.shape[0], dtype=bool)
            for idx in range(children.shape[0]):
                dominated[idx] = bool(np.any(
                    np.all(vertices >= children[idx] - 1e-15, axis=1)))
            children, child_bounds = children[~dominated], child_bounds[~dominated]
        if children.shape[0]:
            vertices = np.vstack([vertices, children])
            bounds = np.concatenate([bounds, child_bounds])
        keep = bounds > cbv + 1e-12
        vertices, bounds = vertices[keep], bounds[keep]
        if options.record_trace and (iteration % 25 == 0 or iteration < 5):
            trace.append((iteration, cbv,
                          float(bounds.max(initial=cbv)), int(vertices.shape[0])))

    gap = max(gap, 0.0) + shell_loss
    if best_point is None:
        return SolveResult(scheme=scheme, status=STATUS_INFEASIBLE, trace=trace,
                           extras={"reason": "no feasible point found",
                                   "iterations": iteration})
    policy = geom.policy_from_point(best_point)
    check = validate_policy(policy, inst)
    trace.append((iteration, cbv, cbv + gap, int(vertices.shape[0])))
    extras = {
        "gap": gap, "cbv": cbv, "bound": cbv + gap,
        "epsilon": options.epsilon, "iterations": iteration,
        "feasible": check.feasible,
        "violations": [str(v) for v in check.violations],
        "shell_loss": shell_loss,
    }
    return SolveResult(scheme=scheme, status=status, policy=policy,
                       objective=check.report.weighted_total,
                       report=check.report, trace=trace, extras=extras)
