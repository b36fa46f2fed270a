"""Low-complexity solver: big-M decomposition, binary relaxation, penalty, SCA.

The binary products s*p and c*q are decoupled through auxiliary "tilde"
power variables tied to the raw powers and the (relaxed) indicators by
budget-scaled linear rows.  The integrality of the indicators is enforced by
a concave penalty rho * sum b(1-b), and the remaining difference-of-concave
structure is handled by successive convex approximation: at each iterate the
subtracted concave parts are replaced by their tangents, which majorizes the
minimized objective and conservatively restricts the constraints, so the
penalized objective descends monotonically.

The same machinery with frozen integral indicators is a fixed-assignment
power optimizer, used for post-rounding polish and by the baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import convex_core as cc
from .instance import ProblemInstance
from .rates import (LN2, MODE_SIC, Assignment, Policy, PowerAllocation,
                    admissible_mask, assignment_from_modes, direct_rate,
                    enumerate_subcarrier_modes, log2p1, noma_pu_rate,
                    noma_su_rate, no_sic_su_rate, relay_hop_rate,
                    validate_policy)
from .result import (STATUS_FRACTIONAL, STATUS_INFEASIBLE, STATUS_MAX_ITER,
                     STATUS_OPTIMAL, SolveResult)


def default_penalty(inst: ProblemInstance) -> float:
    """Penalty weight 10 log2(1 + P_max / sigma^2) from the operating point."""
    return 10.0 * log2p1(inst.p_max_st / inst.noise_w)


@dataclass
class ScaOptions:
    rho: float | None = None          # None: default_penalty(instance)
    delta_obj: float = 1e-5           # relative objective change at convergence
    theta_bin: float = 1e-3           # integrality tolerance on indicators
    max_outer: int = 100
    rho_escalations: int = 3
    restarts: int = 1
    # inner solves are accurate to ~tau_kkt bits; the MM guard keeps descent
    # exact, and the final policy is re-polished, so this can stay loose
    tau_kkt: float = 3e-6
    tau_feas: float = cc.FEAS_TOL
    polish: bool = True


@dataclass
class DcParts:
    """Values and gradients of the d.c. pieces at one point (test surface)."""

    a_value: float                 # concave kept log sum of the objective
    a_grad: np.ndarray
    b_value: float                 # subtracted concave log sum
    b_grad: np.ndarray
    h_value: float                 # linear indicator sum
    h_grad: np.ndarray
    m_value: float                 # convex indicator square sum
    m_grad: np.ndarray
    c1_pos: np.ndarray             # per relay-pair row: concave left part value
    c1_pos_grad: np.ndarray
    c1_neg: np.ndarray             # per row: subtracted concave part value
    c2_pos: np.ndarray             # per PU: concave left part of the QoS row
    c2_pos_grad: np.ndarray
    c2_neg: np.ndarray


class ScaModel:
    """Variable layout, constraint rows, and log-term tables for one instance."""

    def __init__(self, inst: ProblemInstance, mode: str = MODE_SIC):
        self.inst = inst
        self.mode = mode
        k, j, nf = inst.dims
        self.k, self.j, self.nf = k, j, nf
        adm = admissible_mask(inst.channels, mode)
        self.adm = adm
        self.triples = [(i, kk, jj) for i in range(nf)
                        for kk in range(k) for jj in range(j) if adm[kk, jj, i]]
        self.n_tr = len(self.triples)
        self._build_layout()
        self._build_terms()
        self._build_affine_rows()
        self._build_row_templates()

    # -- variable layout ----------------------------------------------------

    def _build_layout(self) -> None:
        k, j, nf = self.k, self.j, self.nf
        n = 0

        def block(shape):
            nonlocal n
            size = int(np.prod(shape))
            out = np.arange(n, n + size).reshape(shape)
            n += size
            return out

        self.i_cst = block((nf,))
        self.i_c = block((k, nf))
        self.i_s = block((self.n_tr,))
        self.i_qst = block((nf,))
        self.i_qtst = block((nf,))
        self.i_q = block((k, nf))
        self.i_qt = block((k, nf))
        self.i_ppu = np.full((k, nf), -1, dtype=int)
        self.i_psu = np.full((j, nf), -1, dtype=int)
        for (i, kk, jj) in self.triples:
            if self.i_ppu[kk, i] < 0:
                self.i_ppu[kk, i] = n
                n += 1
            if self.i_psu[jj, i] < 0:
                self.i_psu[jj, i] = n
                n += 1
        self.i_ptpu = block((self.n_tr,))
        self.i_ptsu = block((self.n_tr,))
        self.n = n

        inst = self.inst
        lo = np.zeros(n)
        hi = np.empty(n)
        hi[self.i_cst] = 1.0
        hi[self.i_c] = 1.0
        hi[self.i_s] = 1.0
        for ids in (self.i_qst, self.i_qtst, self.i_q, self.i_qt):
            hi[ids] = inst.p_max_pt
        for ids in (self.i_ptpu, self.i_ptsu):
            hi[ids] = inst.p_max_st
        mask = self.i_ppu >= 0
        hi[self.i_ppu[mask]] = inst.p_max_st
        mask = self.i_psu >= 0
        hi[self.i_psu[mask]] = inst.p_max_st
        # A dead relay hop cannot carry any paired PU power.
        for t, (i, kk, jj) in enumerate(self.triples):
            if inst.channels.f_relay_hop[i] <= 0.0:
                hi[self.i_ptpu[t]] = 0.0
        self.lo, self.hi = lo, hi
        self.binary_idx = np.concatenate(
            [self.i_cst.ravel(), self.i_c.ravel(), self.i_s.ravel()])

    # -- log-term table -----------------------------------------------------

    def _add_term(self, pairs):
        row = np.zeros(self.n)
        for idx, coef in pairs:
            row[idx] += coef
        self._term_rows.append(row)
        return len(self._term_rows) - 1

    def _build_terms(self) -> None:
        inst, ch = self.inst, self.inst.channels
        self._term_rows: list[np.ndarray] = []
        w, mu = inst.weight_pu, inst.weight_su
        self.t_sum = np.empty(self.n_tr, dtype=int)
        self.t_su_h = np.empty(self.n_tr, dtype=int)
        self.t_su_g = np.empty(self.n_tr, dtype=int)
        self.t_pu_g = np.full(self.n_tr, -1, dtype=int)
        for t, (i, kk, jj) in enumerate(self.triples):
            h = ch.h_st_pu[kk, i]
            g = ch.g_st_su[jj, i]
            self.t_sum[t] = self._add_term(
                [(self.i_ptpu[t], h), (self.i_ptsu[t], h)])
            self.t_su_h[t] = self._add_term([(self.i_ptsu[t], h)])
            if self.mode == MODE_SIC:
                self.t_su_g[t] = self._add_term([(self.i_ptsu[t], g)])
            else:
                self.t_su_g[t] = self._add_term(
                    [(self.i_ptpu[t], g), (self.i_ptsu[t], g)])
                self.t_pu_g[t] = self._add_term([(self.i_ptpu[t], g)])
        self.t_dir = np.empty((self.k, self.nf), dtype=int)
        for kk in range(self.k):
            for i in range(self.nf):
                self.t_dir[kk, i] = self._add_term(
                    [(self.i_qt[kk, i], ch.f_direct[kk, i])])
        self.t_relay = np.empty(self.nf, dtype=int)
        for i in range(self.nf):
            self.t_relay[i] = self._add_term(
                [(self.i_qtst[i], ch.f_relay_hop[i])])
        self.log_l = np.array(self._term_rows)
        self.log_e = np.ones(len(self._term_rows))
        del self._term_rows

        n_terms = self.log_l.shape[0]
        # A-part (kept concave) and B-part (linearized concave) term weights,
        # in bits: weight * log2(arg).
        self.alpha_a = np.zeros(n_terms)
        self.alpha_b = np.zeros(n_terms)
        self.alpha_a[self.t_sum] += 0.5 * w
        self.alpha_a[self.t_su_g] += 0.5 * mu
        self.alpha_b[self.t_su_h] += 0.5 * w
        if self.mode != MODE_SIC:
            self.alpha_b[self.t_pu_g] += 0.5 * mu
        self.alpha_a[self.t_dir.ravel()] += w

    # -- static affine rows -------------------------------------------------

    def _row(self, entries, rhs):
        row = np.zeros(self.n)
        for idx, coef in entries:
            row[idx] += coef
        self._aff_rows.append(row)
        self._aff_rhs.append(rhs)

    def _build_affine_rows(self) -> None:
        inst = self.inst
        p_pt, p_st = inst.p_max_pt, inst.p_max_st
        self._aff_rows: list[np.ndarray] = []
        self._aff_rhs: list[float] = []
        by_sub: dict[int, list[int]] = {i: [] for i in range(self.nf)}
        by_sub_k: dict[tuple[int, int], list[int]] = {}
        for t, (i, kk, jj) in enumerate(self.triples):
            by_sub[i].append(t)
            by_sub_k.setdefault((i, kk), []).append(t)

        for i in range(self.nf):
            # C8: the primary station serves one receiver per subcarrier.
            self._row([(self.i_cst[i], 1.0)]
                      + [(self.i_c[kk, i], 1.0) for kk in range(self.k)], 1.0)
            # One multiplexed pair per subcarrier in the secondary network.
            if by_sub[i]:
                self._row([(self.i_s[t], 1.0) for t in by_sub[i]], 1.0)
        for (i, kk), ts in by_sub_k.items():
            # C7: a PU is either direct or paired on a subcarrier, not both.
            self._row([(self.i_c[kk, i], 1.0)] + [(self.i_s[t], 1.0) for t in ts], 1.0)
        # C3 / C4 power budgets in tilde form.
        self._row([(v, 1.0) for v in self.i_ptpu] + [(v, 1.0) for v in self.i_ptsu],
                  p_st)
        self._row([(v, 1.0) for v in self.i_qtst]
                  + [(v, 1.0) for v in self.i_qt.ravel()], p_pt)
        # Big-M ties between tilde powers, raw powers, and indicators.
        for kk in range(self.k):
            for i in range(self.nf):
                qt, q, c = self.i_qt[kk, i], self.i_q[kk, i], self.i_c[kk, i]
                self._row([(qt, 1.0), (c, -p_pt)], 0.0)            # C10
                self._row([(q, 1.0), (qt, -1.0), (c, p_pt)], p_pt)  # C14
                self._row([(qt, 1.0), (q, -1.0)], 0.0)             # C15
        for i in range(self.nf):
            qtst, qst, cst = self.i_qtst[i], self.i_qst[i], self.i_cst[i]
            self._row([(qtst, 1.0), (cst, -p_pt)], 0.0)            # C11
            self._row([(qst, 1.0), (qtst, -1.0), (cst, p_pt)], p_pt)  # C16
            self._row([(qtst, 1.0), (qst, -1.0)], 0.0)             # C17
        for t, (i, kk, jj) in enumerate(self.triples):
            s, ptpu, ptsu = self.i_s[t], self.i_ptpu[t], self.i_ptsu[t]
            ppu, psu = self.i_ppu[kk, i], self.i_psu[jj, i]
            self._row([(ptpu, 1.0), (s, -p_st)], 0.0)              # C12
            self._row([(ptsu, 1.0), (s, -p_st)], 0.0)              # C13
            self._row([(ppu, 1.0), (ptpu, -1.0), (s, p_st)], p_st)  # C18
            self._row([(ptpu, 1.0), (ppu, -1.0)], 0.0)             # C19
            self._row([(psu, 1.0), (ptsu, -1.0), (s, p_st)], p_st)  # C20
            self._row([(ptsu, 1.0), (psu, -1.0)], 0.0)             # C21
        self.a_ub = np.array(self._aff_rows)
        self.b_ub = np.array(self._aff_rhs)
        del self._aff_rows, self._aff_rhs

    # -- log-constraint templates (C~1 relay rows, C~2 QoS rows) -------------

    def _build_row_templates(self) -> None:
        n_terms = self.log_l.shape[0]
        # C~1 per pair with a live relay hop: kept concave side D has weights
        # 1/2 on t_su_h[t] and t_relay[i]; the concave left side B (weight 1/2
        # on t_sum[t]) is linearized per iterate.
        self.c1_rows = [t for t, (i, kk, jj) in enumerate(self.triples)
                        if self.inst.channels.f_relay_hop[i] > 0.0
                        and self.inst.channels.h_st_pu[kk, i] > 0.0]
        self.c1_b = np.zeros((len(self.c1_rows), n_terms))
        for r, t in enumerate(self.c1_rows):
            i = self.triples[t][0]
            self.c1_b[r, self.t_su_h[t]] += 0.5
            self.c1_b[r, self.t_relay[i]] += 0.5
        # C~2 per PU with a positive rate requirement: kept side T has weights
        # 1 on t_dir[k, :] and 1/2 on t_sum of k's pairs; the left side R
        # (r_req + 1/2 on t_su_h of k's pairs) is linearized.
        self.c2_rows = [kk for kk in range(self.k) if self.inst.r_req[kk] > 0.0]
        self.c2_b = np.zeros((len(self.c2_rows), n_terms))
        for r, kk in enumerate(self.c2_rows):
            self.c2_b[r, self.t_dir[kk, :]] += 1.0
            for t, (i, k2, jj) in enumerate(self.triples):
                if k2 == kk:
                    self.c2_b[r, self.t_sum[t]] += 0.5
        self.c1_alpha = np.zeros((len(self.c1_rows), n_terms))
        for r, t in enumerate(self.c1_rows):
            self.c1_alpha[r, self.t_sum[t]] = 0.5
        self.c2_alpha = np.zeros((len(self.c2_rows), n_terms))
        for r, kk in enumerate(self.c2_rows):
            for t, (i, k2, jj) in enumerate(self.triples):
                if k2 == kk:
                    self.c2_alpha[r, self.t_su_h[t]] = 0.5

    # -- values -------------------------------------------------------------

    def _args(self, x: np.ndarray) -> np.ndarray:
        return self.log_l @ x + self.log_e

    def value_a(self, x: np.ndarray) -> float:
        return float(self.alpha_a @ np.log(self._args(x))) / LN2

    def value_b(self, x: np.ndarray) -> float:
        return float(self.alpha_b @ np.log(self._args(x))) / LN2

    def u_bar(self, x: np.ndarray) -> float:
        """Weighted throughput of the relaxed point (bits/s/Hz)."""
        return self.value_a(x) - self.value_b(x)

    def value_h(self, x: np.ndarray) -> float:
        return float(np.sum(x[self.binary_idx]))

    def value_m(self, x: np.ndarray) -> float:
        return float(np.sum(x[self.binary_idx] ** 2))

    def penalized_objective(self, x: np.ndarray, rho: float) -> float:
        """The minimized objective: -U_bar + rho * (H - M)."""
        return -self.u_bar(x) + rho * (self.value_h(x) - self.value_m(x))

    def max_fractionality(self, x: np.ndarray) -> float:
        b = x[self.binary_idx]
        return float(np.abs(b - np.round(b)).max(initial=0.0))

    def _weighted_grad(self, alpha: np.ndarray, x: np.ndarray) -> np.ndarray:
        args = self._args(x)
        return (self.log_l.T @ (alpha / args)) / LN2

    def dc_parts(self, x: np.ndarray) -> DcParts:
        args = self._args(x)
        log_args = np.log(args) / LN2
        h_grad = np.zeros(self.n)
        h_grad[self.binary_idx] = 1.0
        m_grad = np.zeros(self.n)
        m_grad[self.binary_idx] = 2.0 * x[self.binary_idx]
        c1_pos = (self.c1_alpha @ log_args)
        c2_pos = self.inst.r_req[self.c2_rows] + self.c2_alpha @ log_args
        return DcParts(
            a_value=self.value_a(x), a_grad=self._weighted_grad(self.alpha_a, x),
            b_value=self.value_b(x), b_grad=self._weighted_grad(self.alpha_b, x),
            h_value=self.value_h(x), h_grad=h_grad,
            m_value=self.value_m(x), m_grad=m_grad,
            c1_pos=c1_pos,
            c1_pos_grad=(self.c1_alpha / args[None, :]) @ self.log_l / LN2,
            c1_neg=self.c1_b @ log_args,
            c2_pos=c2_pos,
            c2_pos_grad=(self.c2_alpha / args[None, :]) @ self.log_l / LN2,
            c2_neg=self.c2_b @ log_args,
        )

    # -- per-iterate convex restriction --------------------------------------

    def linearize_at(self, x_r: np.ndarray, rho: float) -> cc.SmoothConvexProgram:
        """The convex inner subproblem: tangents replace every concave piece
        that appears with the wrong sign (B-part and M in the objective, the
        concave left sides of the relay and QoS rows)."""
        parts = self.dc_parts(x_r)
        prog = cc.SmoothConvexProgram.empty(self.n)
        prog.log_l, prog.log_e = self.log_l, self.log_e
        prog.obj_w = self.alpha_a / LN2
        # minimize  B-bar - A + rho (H - M-bar);  tangents are affine in x.
        prog.c = (parts.b_grad + rho * parts.h_grad - rho * parts.m_grad)
        prog.a_ub, prog.b_ub = self.a_ub, self.b_ub
        row_c = []
        row_d = []
        row_b = []
        for r in range(len(self.c1_rows)):
            row_c.append(parts.c1_pos_grad[r])
            row_d.append(parts.c1_pos[r] - parts.c1_pos_grad[r] @ x_r)
            row_b.append(self.c1_b[r] / LN2)
        for r in range(len(self.c2_rows)):
            row_c.append(parts.c2_pos_grad[r])
            row_d.append(parts.c2_pos[r] - parts.c2_pos_grad[r] @ x_r)
            row_b.append(self.c2_b[r] / LN2)
        if row_c:
            prog.row_c = np.array(row_c)
            prog.row_d = np.array(row_d)
            prog.row_b = np.array(row_b)
        else:
            prog.row_b = np.zeros((0, self.log_l.shape[0]))
        prog.lo, prog.hi = self.lo, self.hi
        return prog

    # -- conversions ----------------------------------------------------------

    def unpack(self, x: np.ndarray) -> dict:
        k, j, nf = self.k, self.j, self.nf
        ppu = np.zeros((k, nf))
        mask = self.i_ppu >= 0
        ppu[mask] = x[self.i_ppu[mask]]
        psu = np.zeros((j, nf))
        mask = self.i_psu >= 0
        psu[mask] = x[self.i_psu[mask]]
        s = np.zeros((k, j, nf))
        for t, (i, kk, jj) in enumerate(self.triples):
            s[kk, jj, i] = x[self.i_s[t]]
        return {
            "c_st": x[self.i_cst], "c": x[self.i_c], "s": s,
            "q_st": x[self.i_qst], "qt_st": x[self.i_qtst],
            "q": x[self.i_q], "qt": x[self.i_qt],
            "p_pu": ppu, "p_su": psu,
            "pt_pu": x[self.i_ptpu], "pt_su": x[self.i_ptsu],
        }

    def policy_from_rounded(self, x: np.ndarray,
                            relay_up: np.ndarray | None = None) -> Policy:
        """Snap indicators to {0,1} and read transmit powers off the tilde
        variables of the active slots (raw powers of inactive slots are inert).

        A pair's PU power is dropped on subcarriers whose relay hop rounds
        off, keeping the relay inequality valid.  ``relay_up`` forces the hop
        on the given subcarriers instead (evicting direct users there).
        """
        v = self.unpack(x)
        a = Assignment.zeros(self.k, self.j, self.nf)
        p = PowerAllocation.zeros(self.k, self.j, self.nf)
        a.c_relay[:] = (v["c_st"] > 0.5).astype(int)
        if relay_up is not None:
            a.c_relay[relay_up] = 1
        a.c_direct[:] = (v["c"] > 0.5).astype(int) * (1 - a.c_relay[None, :])
        p.q_relay[:] = np.where(a.c_relay > 0, np.maximum(v["qt_st"], 0.0), 0.0)
        p.q_direct[:] = np.where(a.c_direct > 0, v["qt"], 0.0)
        for t, (i, kk, jj) in enumerate(self.triples):
            if x[self.i_s[t]] > 0.5:
                a.s_pair[kk, jj, i] = 1
                if a.c_relay[i]:
                    p.p_pu[kk, i] = x[self.i_ptpu[t]]
                p.p_su[jj, i] = x[self.i_ptsu[t]]
        return Policy(a, p)

    def relay_up_candidates(self, x: np.ndarray) -> np.ndarray:
        """Subcarriers where a rounded-off relay hop strands paired PU power."""
        v = self.unpack(x)
        out = []
        for i in range(self.nf):
            if v["c_st"][i] > 0.5:
                continue
            stranded = any(
                x[self.i_s[t]] > 0.5 and x[self.i_ptpu[t]] > 1e-9 * self.inst.p_max_st
                for t in range(self.n_tr) if self.triples[t][0] == i)
            if stranded:
                out.append(i)
        return np.array(out, dtype=int)

    def pack_policy(self, policy: Policy) -> np.ndarray:
        """Embed an integral policy as a relaxed-variable vector."""
        x = np.zeros(self.n)
        a, p = policy.assignment, policy.powers
        x[self.i_cst] = a.c_relay
        x[self.i_c] = a.c_direct
        x[self.i_qst] = p.q_relay * a.c_relay
        x[self.i_qtst] = p.q_relay * a.c_relay
        x[self.i_q] = p.q_direct * a.c_direct
        x[self.i_qt] = p.q_direct * a.c_direct
        for t, (i, kk, jj) in enumerate(self.triples):
            if a.s_pair[kk, jj, i]:
                x[self.i_s[t]] = 1.0
                x[self.i_ptpu[t]] = min(p.p_pu[kk, i], self.hi[self.i_ptpu[t]])
                x[self.i_ptsu[t]] = p.p_su[jj, i]
                x[self.i_ppu[kk, i]] = x[self.i_ptpu[t]]
                x[self.i_psu[jj, i]] = p.p_su[jj, i]
        return x


def sca_iteration(model: ScaModel, x_r: np.ndarray, rho: float,
                  options: ScaOptions | None = None, t0: float = 1.0,
                  inner_seed: np.ndarray | None = None):
    """One majorize-minimize step.  Returns (x_next, NlpSolution).

    The iterate is kept whenever the inner solve fails to improve the
    penalized objective, so descent holds by construction.  ``inner_seed``
    (typically the previous inner optimum, which is strictly interior)
    warm-starts the barrier.
    """
    options = options or ScaOptions()
    prog = model.linearize_at(x_r, rho)
    start = inner_seed if inner_seed is not None else x_r
    sol = cc.solve_convex(prog, start=start, tau_kkt=options.tau_kkt,
                          tau_feas=options.tau_feas, t0=t0)
    if sol.status == cc.STATUS_INFEASIBLE:
        raise RuntimeError("inner restriction infeasible at a feasible iterate")
    if (model.penalized_objective(sol.x, rho)
            <= model.penalized_objective(x_r, rho)):
        return sol.x, sol
    return x_r, sol


# ---------------------------------------------------------------------------
# Greedy initial point


def _mode_value_and_rates(inst: ProblemInstance, mode_str: str, i: int,
                          m, u_pt: float, u_st: float):
    """Rough value of one subcarrier mode at uniform budget shares.

    Returns (weighted value, per-PU rate dict).  Relayed-pair PU power is
    capped so the relay inequality holds at the assumed hop power.
    """
    ch = inst.channels
    w, mu = inst.weight_pu, inst.weight_su
    value = 0.0
    pu_rates: dict[int, float] = {}
    if m.direct is not None:
        r = float(direct_rate(u_pt, ch.f_direct[m.direct, i]))
        value += w * r
        pu_rates[m.direct] = pu_rates.get(m.direct, 0.0) + r
    if m.pair is not None:
        kk, jj = m.pair
        h, g = ch.h_st_pu[kk, i], ch.g_st_su[jj, i]
        if m.relay:
            p_half = u_st / 2.0
            cap = float(relay_hop_rate(u_pt, ch.f_relay_hop[i]))
            r_pu = min(float(noma_pu_rate(p_half, p_half, h)), cap)
            p_su = p_half
            p_pu_assumed = p_half
        else:
            r_pu = 0.0
            p_su = u_st
            p_pu_assumed = 0.0
        if mode_str == MODE_SIC:
            r_su = float(noma_su_rate(p_su, g))
        else:
            r_su = float(no_sic_su_rate(p_su, p_pu_assumed, g))
        value += w * r_pu + mu * r_su
        if r_pu > 0:
            pu_rates[kk] = pu_rates.get(kk, 0.0) + r_pu
    return value, pu_rates


def _greedy_assignment(inst: ProblemInstance, mode: str,
                       rng: np.random.Generator | None) -> Assignment:
    """Per-subcarrier pick of the best allocation structure at uniform budget
    shares, then a reassignment pass that hands subcarriers to QoS-deficient
    PUs at the smallest value loss."""
    k, j, nf = inst.dims
    adm = admissible_mask(inst.channels, mode)
    u_pt, u_st = inst.p_max_pt / nf, inst.p_max_st / nf

    scored: list[list] = []
    for i in range(nf):
        pairs = [(kk, jj) for kk in range(k) for jj in range(j) if adm[kk, jj, i]]
        opts = []
        for m in enumerate_subcarrier_modes(k, pairs):
            value, pu_rates = _mode_value_and_rates(inst, mode, i, m, u_pt, u_st)
            opts.append((value, m, pu_rates))
        opts.sort(key=lambda o: -o[0])
        scored.append(opts)

    choices = []
    for i in range(nf):
        pick = 0
        if rng is not None and len(scored[i]) > 1:
            pick = int(rng.integers(min(3, len(scored[i]))))
        choices.append(scored[i][pick])

    # QoS repair: swap in, per deficient PU, the serving mode that costs the
    # least objective value until the crude rate estimate meets the target
    for kk in range(k):
        for _ in range(nf):
            total = sum(c[2].get(kk, 0.0) for c in choices)
            if total >= inst.r_req[kk]:
                break
            cands = []
            for i in range(nf):
                if choices[i][2].get(kk, 0.0) > 0:
                    continue
                serving = [o for o in scored[i] if o[2].get(kk, 0.0) > 0]
                if not serving:
                    continue
                best = max(serving,
                           key=lambda o: (o[2][kk], o[0] - choices[i][0]))
                loss = choices[i][0] - best[0]
                cands.append((best[2][kk] - loss, i, best))
            if not cands:
                break
            _, i_star, best = max(cands, key=lambda c: c[0])
            choices[i_star] = best

    modes = [c[1] for c in choices]
    return assignment_from_modes(modes, k, j)


def initialize(inst: ProblemInstance, seed: int = 0, mode: str = MODE_SIC,
               restart: int = 0):
    """Feasible starting policy: greedy assignment plus a fixed-assignment
    power solve.  Returns (policy, status)."""
    rng = np.random.default_rng(seed + restart) if restart else None
    assignment = _greedy_assignment(inst, mode, rng)
    powers, value, status = frozen_power_solve(inst, assignment, mode)
    if status != STATUS_OPTIMAL and np.any(inst.r_req > 0):
        # last resort: dedicate everything to the QoS users, round-robin
        k, j, nf = inst.dims
        a2 = Assignment.zeros(k, j, nf)
        order = np.argsort(-inst.r_req)
        for i in range(nf):
            a2.c_direct[order[i % k], i] = 1
        powers2, value2, status2 = frozen_power_solve(inst, a2, mode)
        if status2 == STATUS_OPTIMAL:
            return Policy(a2, powers2), STATUS_OPTIMAL
    if status != STATUS_OPTIMAL:
        return None, STATUS_INFEASIBLE
    return Policy(assignment, powers), STATUS_OPTIMAL


# ---------------------------------------------------------------------------
# Fixed-assignment power optimization (shared with rounding and baselines)


class _FrozenModel:
    """d.c. power program for one integral assignment."""

    def __init__(self, inst: ProblemInstance, assignment: Assignment, mode: str):
        self.inst = inst
        self.mode = mode
        self.assignment = assignment
        ch = inst.channels
        k, j, nf = inst.dims
        w, mu = inst.weight_pu, inst.weight_su
        self.directs = [(kk, i) for kk in range(k) for i in range(nf)
                        if assignment.c_direct[kk, i]]
        self.relays = [i for i in range(nf) if assignment.c_relay[i]]
        self.pairs = [(i, kk, jj) for i in range(nf) for kk in range(k)
                      for jj in range(j) if assignment.s_pair[kk, jj, i]]
        n = 0
        self.v_q = {}
        for d in self.directs:
            self.v_q[d] = n
            n += 1
        self.v_qst = {}
        for i in self.relays:
            self.v_qst[i] = n
            n += 1
        self.v_ppu = {}
        self.v_psu = {}
        for t in self.pairs:
            i = t[0]
            # C1 pins the paired PU power to zero without a live relay hop
            if assignment.c_relay[i] and ch.f_relay_hop[i] > 0:
                self.v_ppu[t] = n
                n += 1
            self.v_psu[t] = n
            n += 1
        self.n = n

        rows = []
        self.term_alpha_a = []
        self.term_alpha_b = []

        def term(pairs_):
            row = np.zeros(n)
            for idx, coef in pairs_:
                row[idx] += coef
            rows.append(row)
            self.term_alpha_a.append(0.0)
            self.term_alpha_b.append(0.0)
            return len(rows) - 1

        self.t_dir = {}
        for (kk, i) in self.directs:
            t_id = term([(self.v_q[(kk, i)], ch.f_direct[kk, i])])
            self.term_alpha_a[t_id] = w
            self.t_dir[(kk, i)] = t_id
        self.t_relay = {}
        for i in self.relays:
            self.t_relay[i] = term([(self.v_qst[i], ch.f_relay_hop[i])])
        self.t_sum = {}
        self.t_su_h = {}
        for t in self.pairs:
            i, kk, jj = t
            h, g = ch.h_st_pu[kk, i], ch.g_st_su[jj, i]
            entries = [(self.v_psu[t], h)]
            if t in self.v_ppu:
                entries.append((self.v_ppu[t], h))
            t_id = term(entries)
            self.term_alpha_a[t_id] = 0.5 * w
            self.t_sum[t] = t_id
            t_id = term([(self.v_psu[t], h)])
            self.term_alpha_b[t_id] = 0.5 * w
            self.t_su_h[t] = t_id
            if mode == MODE_SIC:
                t_id = term([(self.v_psu[t], g)])
                self.term_alpha_a[t_id] = 0.5 * mu
            else:
                entries = [(self.v_psu[t], g)]
                if t in self.v_ppu:
                    entries.append((self.v_ppu[t], g))
                t_id = term(entries)
                self.term_alpha_a[t_id] = 0.5 * mu
                if t in self.v_ppu:
                    t_id = term([(self.v_ppu[t], g)])
                    self.term_alpha_b[t_id] = 0.5 * mu
        self.log_l = np.array(rows) if rows else np.zeros((0, n))
        self.log_e = np.ones(len(rows))
        self.alpha_a = np.array(self.term_alpha_a)
        self.alpha_b = np.array(self.term_alpha_b)

        # affine: budgets
        aff = []
        rhs = []
        if self.pairs:
            row = np.zeros(n)
            for t in self.pairs:
                row[self.v_psu[t]] += 1.0
                if t in self.v_ppu:
                    row[self.v_ppu[t]] += 1.0
            aff.append(row)
            rhs.append(inst.p_max_st)
        if self.directs or self.relays:
            row = np.zeros(n)
            for d in self.directs:
                row[self.v_q[d]] += 1.0
            for i in self.relays:
                row[self.v_qst[i]] += 1.0
            aff.append(row)
            rhs.append(inst.p_max_pt)
        self.a_ub = np.array(aff) if aff else np.zeros((0, n))
        self.b_ub = np.array(rhs)

        n_terms = self.log_l.shape[0]
        self.c1_list = [t for t in self.pairs if t in self.v_ppu]
        self.c1_alpha = np.zeros((len(self.c1_list), n_terms))
        self.c1_b = np.zeros((len(self.c1_list), n_terms))
        for r, t in enumerate(self.c1_list):
            self.c1_alpha[r, self.t_sum[t]] = 0.5
            self.c1_b[r, self.t_su_h[t]] = 0.5
            self.c1_b[r, self.t_relay[t[0]]] = 0.5
        self.c2_list = [kk for kk in range(k) if inst.r_req[kk] > 0]
        self.c2_alpha = np.zeros((len(self.c2_list), n_terms))
        self.c2_b = np.zeros((len(self.c2_list), n_terms))
        for r, kk in enumerate(self.c2_list):
            for (k2, i) in self.directs:
                if k2 == kk:
                    self.c2_b[r, self.t_dir[(k2, i)]] = 1.0
            for t in self.pairs:
                if t[1] == kk and t in self.v_ppu:
                    self.c2_b[r, self.t_sum[t]] += 0.5
                    self.c2_alpha[r, self.t_su_h[t]] += 0.5
        self.lo = np.zeros(n)
        self.hi = np.empty(n)
        for d in self.directs:
            self.hi[self.v_q[d]] = inst.p_max_pt
        for i in self.relays:
            self.hi[self.v_qst[i]] = inst.p_max_pt
        for t in self.pairs:
            self.hi[self.v_psu[t]] = inst.p_max_st
            if t in self.v_ppu:
                self.hi[self.v_ppu[t]] = inst.p_max_st

    def objective(self, x: np.ndarray) -> float:
        if self.log_l.shape[0] == 0:
            return 0.0
        args = self.log_l @ x + self.log_e
        return float((self.alpha_b - self.alpha_a) @ np.log(args)) / LN2

    def subproblem(self, x_r: np.ndarray) -> cc.SmoothConvexProgram:
        prog = cc.SmoothConvexProgram.empty(self.n)
        prog.log_l, prog.log_e = self.log_l, self.log_e
        prog.obj_w = self.alpha_a / LN2
        args = self.log_l @ x_r + self.log_e
        prog.c = (self.log_l.T @ (self.alpha_b / args)) / LN2
        prog.a_ub, prog.b_ub = self.a_ub, self.b_ub
        row_c, row_d, row_b = [], [], []
        for r, t in enumerate(self.c1_list):
            grad = (self.log_l.T @ (self.c1_alpha[r] / args)) / LN2
            val = float(self.c1_alpha[r] @ np.log(args)) / LN2
            row_c.append(grad)
            row_d.append(val - grad @ x_r)
            row_b.append(self.c1_b[r] / LN2)
        for r, kk in enumerate(self.c2_list):
            grad = (self.log_l.T @ (self.c2_alpha[r] / args)) / LN2
            val = self.inst.r_req[kk] + float(self.c2_alpha[r] @ np.log(args)) / LN2
            row_c.append(grad)
            row_d.append(val - grad @ x_r)
            row_b.append(self.c2_b[r] / LN2)
        if row_c:
            prog.row_c = np.array(row_c)
            prog.row_d = np.array(row_d)
            prog.row_b = np.array(row_b)
        else:
            prog.row_b = np.zeros((0, self.log_l.shape[0]))
        prog.lo, prog.hi = self.lo, self.hi
        return prog

    def to_powers(self, x: np.ndarray) -> PowerAllocation:
        k, j, nf = self.inst.dims
        p = PowerAllocation.zeros(k, j, nf)
        for (kk, i), v in self.v_q.items():
            p.q_direct[kk, i] = x[v]
        for i, v in self.v_qst.items():
            p.q_relay[i] = x[v]
        for t, v in self.v_psu.items():
            p.p_su[t[2], t[0]] = x[v]
        for t, v in self.v_ppu.items():
            p.p_pu[t[1], t[0]] = x[v]
        return p


def frozen_power_solve(inst: ProblemInstance, assignment: Assignment,
                       mode: str = MODE_SIC,
                       start: PowerAllocation | None = None,
                       max_rounds: int = 40):
    """Optimize all powers for a fixed assignment by the same SCA restriction.

    Returns (PowerAllocation, weighted objective, status).
    """
    for kk in range(inst.num_pu):
        if inst.r_req[kk] > 0:
            serves = (np.any(assignment.c_direct[kk] > 0)
                      or np.any(assignment.s_pair[kk] *
                                assignment.c_relay[None, :] > 0))
            if not serves:
                return None, -np.inf, STATUS_INFEASIBLE
    model = _FrozenModel(inst, assignment, mode)
    if model.n == 0:
        if np.any(inst.r_req > 0):
            return None, -np.inf, STATUS_INFEASIBLE
        return (PowerAllocation.zeros(*inst.dims), 0.0, STATUS_OPTIMAL)
    x = np.full(model.n, 1e-3)
    if start is not None:
        for (kk, i), v in model.v_q.items():
            x[v] = max(start.q_direct[kk, i], 1e-9)
        for i, v in model.v_qst.items():
            x[v] = max(start.q_relay[i], 1e-9)
        for t, v in model.v_psu.items():
            x[v] = max(start.p_su[t[2], t[0]], 1e-9)
        for t, v in model.v_ppu.items():
            x[v] = max(start.p_pu[t[1], t[0]], 1e-9)
    prev = model.objective(x)
    t0 = 1.0
    status = STATUS_OPTIMAL
    for _ in range(max_rounds):
        sol = cc.solve_convex(model.subproblem(x), start=x, t0=t0)
        if sol.status == cc.STATUS_INFEASIBLE:
            return None, -np.inf, STATUS_INFEASIBLE
        t0 = max(1.0, sol.barrier_t / 125.0)
        if model.objective(sol.x) <= prev:
            x = sol.x
        cur = model.objective(x)
        if abs(prev - cur) <= 1e-7 * max(1.0, abs(prev)):
            prev = cur
            break
        prev = cur
    powers = model.to_powers(x)
    return powers, -prev, status


# ---------------------------------------------------------------------------
# Algorithm 1: the full iterative solver


def algorithm1_solve(inst: ProblemInstance, options: ScaOptions | None = None,
                     start: np.ndarray | None = None,
                     seed: int = 0, mode: str = MODE_SIC,
                     scheme: str = "sca") -> SolveResult:
    """Penalty + successive convex approximation solve of the joint problem.

    Converges when the relative change of the penalized objective stays below
    ``delta_obj`` on two consecutive iterations; escalates the penalty weight
    (x4, up to ``rho_escalations`` times) if indicators are still fractional.
    """
    options = options or ScaOptions()
    best: SolveResult | None = None

    def better(a: SolveResult, b: SolveResult | None) -> bool:
        if b is None:
            return True
        a_ok = a.ok and a.extras.get("feasible", False)
        b_ok = b.ok and b.extras.get("feasible", False)
        if a_ok != b_ok:
            return a_ok
        return a.objective > b.objective

    for restart in range(max(1, options.restarts)):
        res = _solve_once(inst, options, start, seed, mode, restart, scheme)
        if better(res, best):
            best = res
        if best.ok and options.restarts == 1:
            break
    return best


def _solve_once(inst, options, start, seed, mode, restart, scheme) -> SolveResult:
    model = ScaModel(inst, mode)
    rho = options.rho if options.rho is not None else default_penalty(inst)
    if start is None:
        policy0, status = initialize(inst, seed, mode, restart)
        if status != STATUS_OPTIMAL:
            return SolveResult(scheme=scheme, status=STATUS_INFEASIBLE,
                               extras={"reason": "no feasible initial point"})
        x = model.pack_policy(policy0)
    else:
        x = np.asarray(start, dtype=float).copy()

    trace = []
    t0 = 1.0
    inner_seed = None
    escalations = 0
    flat_count = 0
    prev = model.penalized_objective(x, rho)
    iteration = 0
    while iteration < options.max_outer:
        iteration += 1
        x_new, sol = sca_iteration(model, x, rho, options, t0=t0,
                                   inner_seed=inner_seed)
        t0 = float(np.clip(sol.barrier_t / 400.0, 1.0, 2e3))
        inner_seed = sol.x
        cur = model.penalized_objective(x_new, rho)
        frac = model.max_fractionality(x_new)
        trace.append((iteration, cur, model.u_bar(x_new), frac,
                      sol.newton_steps, rho))
        rel_change = abs(prev - cur) / max(1.0, abs(prev))
        x = x_new
        prev = cur
        if rel_change <= options.delta_obj:
            flat_count += 1
        else:
            flat_count = 0
        if flat_count >= 2:
            if frac <= options.theta_bin:
                break
            if escalations >= options.rho_escalations:
                break
            rho *= 4.0
            escalations += 1
            flat_count = 0
            # the surrogate changes shape: restart the barrier warm start
            t0, inner_seed = 1.0, None
            prev = model.penalized_objective(x, rho)
    status = STATUS_OPTIMAL if iteration < options.max_outer else STATUS_MAX_ITER

    frac = model.max_fractionality(x)
    u_relaxed = model.u_bar(x)
    if frac > options.theta_bin:
        status = STATUS_FRACTIONAL

    snapped = model.policy_from_rounded(x)
    snap_check = validate_policy(snapped, inst, mode=mode)
    u_snapped = snap_check.report.weighted_total

    # Candidate assignments: the plain rounding, plus a variant that turns
    # the relay hop on where the relaxation kept paired PU power behind a
    # vanishing hop indicator.  Powers are re-solved for each candidate.
    candidates = [snapped]
    relay_up = model.relay_up_candidates(x)
    if relay_up.size:
        candidates.append(model.policy_from_rounded(x, relay_up=relay_up))
    best_policy, best_check, best_val = None, None, -np.inf
    if snap_check.feasible:
        best_policy, best_check, best_val = snapped, snap_check, u_snapped
    if options.polish or best_policy is None:
        for cand in candidates:
            powers, value, pstat = frozen_power_solve(
                inst, cand.assignment, mode, start=cand.powers)
            if pstat != STATUS_OPTIMAL:
                continue
            polished = Policy(cand.assignment, powers)
            check = validate_policy(polished, inst, mode=mode)
            if check.feasible and check.report.weighted_total > best_val:
                best_policy, best_check = polished, check
                best_val = check.report.weighted_total

    if best_policy is None:
        return SolveResult(scheme=scheme, status=STATUS_FRACTIONAL, policy=snapped,
                           objective=u_snapped, report=snap_check.report,
                           trace=trace,
                           extras={"rho": rho, "escalations": escalations,
                                   "max_fractionality": frac,
                                   "u_relaxed": u_relaxed,
                                   "u_snapped": u_snapped,
                                   "rounding_delta": abs(u_relaxed - u_snapped),
                                   "feasible": False,
                                   "violations": [str(v) for v in
                                                  snap_check.violations]})
    extras = {
        "rho": rho, "escalations": escalations,
        "max_fractionality": frac,
        "u_relaxed": u_relaxed, "u_snapped": u_snapped,
        "rounding_delta": abs(u_relaxed - u_snapped),
        "feasible": True,
        "violations": [],
    }
    return SolveResult(scheme=scheme, status=status, policy=best_policy,
                       objective=best_val, report=best_check.report,
                       trace=trace, extras=extras)
