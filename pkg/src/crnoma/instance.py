"""Seeded problem instances: geometry, path loss, Rayleigh fading, normalized gains.

A problem instance collects everything one fading realization of the network
needs: the normalized channel gains of all four link families, the power
budgets of the two base stations, the per-user rate requirements, and the
objective weights.  All randomness is driven by explicit 64-bit seeds so that
experiments are reproducible realization by realization.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0

# Watt value of a dBm figure.
def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class Topology:
    """Static network geometry and radio parameters.

    Distances are in meters, bandwidths in Hz, antenna gains in dBi.
    ``distance_pt_st`` is the separation L between the primary and the
    secondary base station; users are dropped uniformly in distance and
    angle around their serving station.
    """

    num_pu: int = 2
    num_su: int = 2
    num_subcarriers: int = 8
    distance_pt_st: float = 255.0
    d_ref: float = 10.0
    d_pt_max: float = 500.0
    d_st_max: float = 150.0
    pathloss_exponent: float = 3.6
    gain_pt_dbi: float = 10.0
    gain_st_dbi: float = 5.0
    carrier_hz: float = 2.0e9
    subcarrier_bw_hz: float = 78.0e3
    noise_dbm: float = -110.0

    def __post_init__(self) -> None:
        if not (self.d_ref < self.d_st_max <= self.d_pt_max):
            raise ValueError("require d_ref < d_st_max <= d_pt_max")
        if min(self.d_ref, self.d_pt_max, self.d_st_max, self.distance_pt_st) <= 0:
            raise ValueError("distances must be positive")
        if min(self.carrier_hz, self.subcarrier_bw_hz) <= 0:
            raise ValueError("frequencies must be positive")
        if min(self.num_pu, self.num_su + 1, self.num_subcarriers) < 1:
            raise ValueError("need num_pu >= 1, num_su >= 0, num_subcarriers >= 1")
        if self.pathloss_exponent < 2.0:
            raise ValueError("pathloss exponent must be >= 2")

    @property
    def noise_w(self) -> float:
        """Per-subcarrier noise power at every receiver, in watts."""
        return dbm_to_watt(self.noise_dbm)

    @property
    def normalized_distance(self) -> float:
        return (self.distance_pt_st - self.d_ref) / (self.d_pt_max - self.d_ref)

    def with_normalized_distance(self, nd: float) -> "Topology":
        """Topology with L set so that (L - d_ref)/(d_pt_max - d_ref) = nd."""
        if not 0.0 <= nd <= 1.0:
            raise ValueError("normalized distance must lie in [0, 1]")
        length = self.d_ref + nd * (self.d_pt_max - self.d_ref)
        return replace(self, distance_pt_st=length)


@dataclass
class UserLayout:
    """Sampled user positions, reduced to the distances the gains need."""

    pu_distance: np.ndarray      # (K,) from the primary station
    pu_distance_st: np.ndarray   # (K,) from the secondary station
    su_distance: np.ndarray      # (J,) from the secondary station


@dataclass
class ChannelState:
    """Normalized channel gains (|coefficient|^2 / noise power, unit 1/W)."""

    f_direct: np.ndarray     # (K, NF) primary station -> PU k
    f_relay_hop: np.ndarray  # (NF,)   primary station -> secondary station
    h_st_pu: np.ndarray      # (K, NF) secondary station -> PU k
    g_st_su: np.ndarray      # (J, NF) secondary station -> SU j

    def __post_init__(self) -> None:
        arrays = (self.f_direct, self.f_relay_hop, self.h_st_pu, self.g_st_su)
        for a in arrays:
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("channel gains must be finite and nonnegative")
        k, nf = self.f_direct.shape
        if self.f_relay_hop.shape != (nf,) or self.h_st_pu.shape != (k, nf):
            raise ValueError("channel array shapes are inconsistent")
        if self.g_st_su.ndim != 2 or self.g_st_su.shape[1] != nf:
            raise ValueError("channel array shapes are inconsistent")

    @property
    def num_pu(self) -> int:
        return self.f_direct.shape[0]

    @property
    def num_su(self) -> int:
        return self.g_st_su.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.f_direct.shape[1]


@dataclass
class ProblemInstance:
    """One fading realization plus budgets, QoS targets, and weights."""

    channels: ChannelState
    p_max_pt: float = dbm_to_watt(40.0)
    p_max_st: float = dbm_to_watt(40.0)
    r_req: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weight_pu: float = 2.0
    weight_su: float = 1.0
    noise_w: float = dbm_to_watt(-110.0)

    def __post_init__(self) -> None:
        if self.p_max_pt <= 0 or self.p_max_st <= 0:
            raise ValueError("power budgets must be positive")
        self.r_req = np.asarray(self.r_req, dtype=float)
        if self.r_req.size == 0:
            self.r_req = np.zeros(self.channels.num_pu)
        if self.r_req.shape != (self.channels.num_pu,) or np.any(self.r_req < 0):
            raise ValueError("r_req must be (K,) nonnegative")
        if self.weight_pu < 0 or self.weight_su < 0:
            raise ValueError("weights must be nonnegative")

    @property
    def num_pu(self) -> int:
        return self.channels.num_pu

    @property
    def num_su(self) -> int:
        return self.channels.num_su

    @property
    def num_subcarriers(self) -> int:
        return self.channels.num_subcarriers

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.num_pu, self.num_su, self.num_subcarriers)


def pathloss_gain(distance: float, topology: Topology, antenna_gain_dbi: float) -> float:
    """Linear power gain at ``distance``: free-space anchor at d_ref, exponent beyond.

    Gamma(d) = 10^(gain/10) * K0 * (d / d_ref)^(-alpha) with
    K0 = (c / (4 pi f d_ref))^2.
    """
    if distance < topology.d_ref - 1e-9:
        raise ValueError(f"distance {distance} m is inside the reference radius")
    k0 = (SPEED_OF_LIGHT / (4.0 * np.pi * topology.carrier_hz * topology.d_ref)) ** 2
    ratio = max(distance, topology.d_ref) / topology.d_ref
    return 10.0 ** (antenna_gain_dbi / 10.0) * k0 * ratio ** (-topology.pathloss_exponent)


def _rng(seed: int, stream: int) -> np.random.Generator:
    # Distinct fixed spawn keys keep the layout and fading streams independent
    # even when the caller passes the same master seed to both.
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def generate_layout(topology: Topology, seed: int) -> UserLayout:
    """Drop users uniformly in distance and angle around their serving station.

    PU distances from the primary station are uniform on [d_ref, d_pt_max],
    SU distances from the secondary station on [d_ref, d_st_max].  The PU to
    secondary-station distance follows from the planar positions, with the
    two stations ``distance_pt_st`` apart, and is floored at d_ref.
    """
    rng = _rng(seed, 0)
    k, j = topology.num_pu, topology.num_su
    pu_r = rng.uniform(topology.d_ref, topology.d_pt_max, size=k)
    pu_phi = rng.uniform(0.0, 2.0 * np.pi, size=k)
    su_r = rng.uniform(topology.d_ref, topology.d_st_max, size=j)
    # Secondary station sits at (L, 0); primary station at the origin.
    x = pu_r * np.cos(pu_phi) - topology.distance_pt_st
    y = pu_r * np.sin(pu_phi)
    pu_r_st = np.maximum(np.hypot(x, y), topology.d_ref)
    return UserLayout(pu_distance=pu_r, pu_distance_st=pu_r_st, su_distance=su_r)


def generate_instance(
    topology: Topology,
    layout: UserLayout,
    seed: int,
    *,
    p_max_pt: float | None = None,
    p_max_st: float | None = None,
    r_req: float | np.ndarray = 1.0,
    weight_pu: float = 2.0,
    weight_su: float = 1.0,
) -> ProblemInstance:
    """Draw i.i.d. unit-mean-power Rayleigh fading and build normalized gains.

    Each squared small-scale amplitude is exponential with mean one, so the
    distance-dependent gain carries the full average link budget.  Normalized
    gains divide by the per-subcarrier noise power.
    """
    rng = _rng(seed, 1)
    k, j, nf = topology.num_pu, topology.num_su, topology.num_subcarriers
    sigma2 = topology.noise_w

    def link(gamma: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        fading = rng.exponential(scale=1.0, size=shape)
        return gamma * fading / sigma2

    gamma_f = np.array([pathloss_gain(d, topology, topology.gain_pt_dbi)
                        for d in layout.pu_distance])
    gamma_h = np.array([pathloss_gain(d, topology, topology.gain_st_dbi)
                        for d in layout.pu_distance_st])
    gamma_g = np.array([pathloss_gain(d, topology, topology.gain_st_dbi)
                        for d in layout.su_distance])
    # Both station antennas face each other on the relay hop.
    gamma_fst = pathloss_gain(topology.distance_pt_st, topology,
                              topology.gain_pt_dbi + topology.gain_st_dbi)

    channels = ChannelState(
        f_direct=link(gamma_f[:, None], (k, nf)),
        f_relay_hop=link(np.full(nf, gamma_fst), (nf,)),
        h_st_pu=link(gamma_h[:, None], (k, nf)),
        g_st_su=link(gamma_g[:, None], (j, nf)) if j else np.zeros((0, nf)),
    )
    req = np.full(k, float(r_req)) if np.isscalar(r_req) else np.asarray(r_req, float)
    return ProblemInstance(
        channels=channels,
        p_max_pt=dbm_to_watt(40.0) if p_max_pt is None else p_max_pt,
        p_max_st=dbm_to_watt(40.0) if p_max_st is None else p_max_st,
        r_req=req,
        weight_pu=weight_pu,
        weight_su=weight_su,
        noise_w=sigma2,
    )


def random_instance(topology: Topology, seed: int, **overrides) -> ProblemInstance:
    """Layout and fading from one master seed (separate derived streams)."""
    layout = generate_layout(topology, seed)
    return generate_instance(topology, layout, seed, **overrides)


# ---------------------------------------------------------------------------
# Flat text serialization.  One header line with dims and scalars, then one
# line per array in row-major order with >= 17 significant digits so that
# round-trips are bit-comparable at parse precision.

_FMT = "%.17g"


def _array_line(a: np.ndarray) -> str:
    return " ".join(_FMT % v for v in np.asarray(a, dtype=float).ravel())


def instance_to_text(inst: ProblemInstance) -> str:
    k, j, nf = inst.dims
    out = io.StringIO()
    out.write("crnoma-instance-v1\n")
    header = [str(k), str(j), str(nf)] + [
        _FMT % v for v in (inst.p_max_pt, inst.p_max_st,
                           inst.weight_pu, inst.weight_su, inst.noise_w)
    ]
    out.write(" ".join(header) + "\n")
    out.write(_array_line(inst.r_req) + "\n")
    out.write(_array_line(inst.channels.f_direct) + "\n")
    out.write(_array_line(inst.channels.f_relay_hop) + "\n")
    out.write(_array_line(inst.channels.h_st_pu) + "\n")
    out.write(_array_line(inst.channels.g_st_su) + "\n")
    return out.getvalue()


def instance_from_text(text: str) -> ProblemInstance:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    if not lines or lines[0].strip() != "crnoma-instance-v1":
        raise ValueError("not a crnoma instance file")
    if len(lines) < 7:
        raise ValueError("truncated instance file")
    head = lines[1].split()
    k, j, nf = int(head[0]), int(head[1]), int(head[2])
    p_pt, p_st, w, mu, sigma2 = (float(v) for v in head[3:8])

    def arr(line: str, shape: tuple[int, ...]) -> np.ndarray:
        vals = np.array(line.split(), dtype=float)
        if vals.size != int(np.prod(shape)):
            raise ValueError("array length does not match header dims")
        return vals.reshape(shape)

    channels = ChannelState(
        f_direct=arr(lines[3], (k, nf)),
        f_relay_hop=arr(lines[4], (nf,)),
        h_st_pu=arr(lines[5], (k, nf)),
        g_st_su=arr(lines[6], (j, nf)),
    )
    return ProblemInstance(
        channels=channels, p_max_pt=p_pt, p_max_st=p_st,
        r_req=arr(lines[2], (k,)), weight_pu=w, weight_su=mu, noise_w=sigma2,
    )
