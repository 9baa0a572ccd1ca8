"""Closed-form step-time model for TreePM runs on one or more sites.

All functions are pure: they take immutable specs and return floats or
frozen dataclasses, so they can be evaluated from any number of threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .constants import MachineConstants, NetworkConstants

THETA_FIT_RANGE = (0.2, 0.75)
TREE_OVERHEAD = 1.2

BYTES_PER_PARTICLE = 60.0
BYTES_PER_TREE_NODE = 52.0
TREE_NODES_PER_PARTICLE = 0.75
BYTES_PER_MESH_CELL = 4.5


class ThetaRangeWarning(UserWarning):
    """The interaction-count fit is used outside its validated range of opening angles."""


def theta_in_fit_range(theta: float) -> bool:
    lo, hi = THETA_FIT_RANGE
    return lo <= theta <= hi


@dataclass(frozen=True)
class RunSpec:
    """Problem description shared by the model and the simulator.

    ``r_samp`` is the sampling *ratio* (``1/2500``, not ``2500``).
    ``pm_site`` selects which roster entry performs the serial PM solve.
    """

    n_particles: float
    n_mesh: float
    theta: float
    p_total: int
    sites: tuple[MachineConstants, ...]
    network: NetworkConstants
    r_samp: float = 1e-4
    migration_bytes: float = 0.0
    pm_site: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if self.n_particles < 1 or self.n_mesh < 1:
            raise ValueError("n_particles and n_mesh must be >= 1")
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not self.sites:
            raise ValueError("at least one site is required")
        if self.p_total < 1:
            raise ValueError("p_total must be >= 1")
        if self.p_total % len(self.sites):
            raise ValueError(f"p_total={self.p_total} is not divisible by s={len(self.sites)}")
        if not 0 < self.r_samp <= 1:
            raise ValueError(f"r_samp must lie in (0, 1], got {self.r_samp}")
        if self.migration_bytes < 0:
            raise ValueError("migration_bytes must be >= 0")
        if not 0 <= self.pm_site < len(self.sites):
            raise ValueError("pm_site out of range")

    @property
    def s(self) -> int:
        return len(self.sites)

    @property
    def theta_warning(self) -> bool:
        return not theta_in_fit_range(self.theta)

    def with_sites(self, s: int, p_total: int) -> RunSpec:
        """Same problem on ``s`` sites with ``p_total`` processes.

        A one-site roster is replicated; a longer roster is truncated.
        """
        if len(self.sites) == 1:
            sites = self.sites * s
        elif len(self.sites) >= s:
            sites = self.sites[:s]
        else:
            raise ValueError(f"roster has {len(self.sites)} sites, cannot build an s={s} run")
        pm_site = self.pm_site if self.pm_site < s else 0
        return replace(self, sites=sites, p_total=p_total, pm_site=pm_site)


@dataclass(frozen=True)
class PredictionBreakdown:
    n_particles: float
    n_mesh: float
    p_total: int
    s: int
    theta: float
    n_int: float
    t_tree: float
    t_pm: float
    t_l: float
    t_b: float
    w_l: float
    w_b: float
    theta_warning: bool = field(default=False, compare=False)

    @property
    def t_comm(self) -> float:
        return self.t_l + self.t_b

    @property
    def w_comm(self) -> float:
        return self.w_l + self.w_b

    @property
    def t_exec(self) -> float:
        return self.t_tree + self.t_pm + self.t_l + self.t_b + self.w_l + self.w_b


def n_interactions(n_particles: float, n_mesh: float, theta: float) -> float:
    """Fitted number of tree interactions per step for cosmological data.

    Emits :class:`ThetaRangeWarning` (once per call site) outside 0.2 <= theta <= 0.75.
    """
    if n_particles < 1 or n_mesh < 1:
        raise ValueError("n_particles and n_mesh must be >= 1")
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not theta_in_fit_range(theta):
        warnings.warn(
            f"theta={theta} lies outside the fitted range {THETA_FIT_RANGE}",
            ThetaRangeWarning,
            stacklevel=2,
        )
    N = float(n_particles)
    M = float(n_mesh)
    return 460.0 * N**1.0667 * theta**-1.35 * N ** (1.0 / 12.0) / (M ** (1.0 / 12.0) * math.sqrt(2.0))


def mean_tau_tree(sites: Sequence[MachineConstants]) -> float:
    # Arithmetic mean: this is the rule that reproduces the tabulated
    # multi-site predictions.
    return sum(m.tau_tree for m in sites) / len(sites)


def tree_time(spec: RunSpec) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThetaRangeWarning)
        n_int = n_interactions(spec.n_particles, spec.n_mesh, spec.theta)
    return TREE_OVERHEAD * mean_tau_tree(spec.sites) * n_int / spec.p_total


def pm_time(spec: RunSpec) -> float:
    site = spec.sites[spec.pm_site]
    M = float(spec.n_mesh)
    return site.tau_fft * M * math.log2(M) + site.tau_mesh * spec.n_particles / spec.p_total


def local_comm_time(spec: RunSpec) -> tuple[float, float]:
    """Intra-site latency and bandwidth terms ``(t_l, t_b)``."""
    net = spec.network
    p = spec.p_total
    q = p if spec.s == 1 else p / spec.s
    t_l = net.lambda_lan * (18.0 * math.log2(q) + 2.0 * q)
    N23 = float(spec.n_particles) ** (2.0 / 3.0)
    volume = (
        4.0 * spec.n_mesh
        + (144.0 / spec.theta + 72.0) * N23 * p ** (-2.0 / 3.0)
        + 12.0 * spec.n_particles * spec.r_samp
    )
    return t_l, volume / net.sigma_lan


def wan_volume(spec: RunSpec) -> float:
    """Bytes moved over the wide-area network per step."""
    s = spec.s
    if s < 2:
        return 0.0
    N23 = float(spec.n_particles) ** (2.0 / 3.0)
    return (
        4.0 * s * spec.n_mesh
        + (48.0 / spec.theta + 24.0) * N23
        + 4.0 * spec.n_particles * spec.r_samp
        + spec.migration_bytes
    )


def wan_exchange_count(s: int) -> int:
    """Blocking wide-area exchanges per step: five ring gathers plus four
    exchanges with each of the two neighbours."""
    if s < 1:
        raise ValueError("s must be >= 1")
    return 0 if s == 1 else 5 * (s - 1) + 8


def wan_comm_time(spec: RunSpec) -> tuple[float, float]:
    """Wide-area latency and bandwidth terms ``(w_l, w_b)``; zero for one site."""
    s = spec.s
    if s < 2:
        return 0.0, 0.0
    net = spec.network
    w_l = net.lambda_wan * wan_exchange_count(s)
    w_b = wan_volume(spec) / net.effective_sigma_wan(s)
    return w_l, w_b


def predict_step(spec: RunSpec) -> PredictionBreakdown:
    if spec.theta_warning:
        warnings.warn(
            f"theta={spec.theta} lies outside the fitted range {THETA_FIT_RANGE}",
            ThetaRangeWarning,
            stacklevel=2,
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThetaRangeWarning)
        n_int = n_interactions(spec.n_particles, spec.n_mesh, spec.theta)
    t_l, t_b = local_comm_time(spec)
    w_l, w_b = wan_comm_time(spec)
    return PredictionBreakdown(
        n_particles=spec.n_particles,
        n_mesh=spec.n_mesh,
        p_total=spec.p_total,
        s=spec.s,
        theta=spec.theta,
        n_int=n_int,
        t_tree=tree_time(spec),
        t_pm=pm_time(spec),
        t_l=t_l,
        t_b=t_b,
        w_l=w_l,
        w_b=w_b,
        theta_warning=spec.theta_warning,
    )


def _t_exec(spec: RunSpec) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThetaRangeWarning)
        return predict_step(spec).t_exec


def speedup(spec_per_site: RunSpec, s: int) -> float:
    """``t_exec(1, p) / t_exec(s, s*p)`` where ``p`` is ``spec_per_site.p_total``."""
    if s < 1:
        raise ValueError("s must be >= 1")
    if s == 1:
        return 1.0
    p = spec_per_site.p_total
    single = spec_per_site.with_sites(1, p)
    multi = spec_per_site.with_sites(s, s * p)
    return _t_exec(single) / _t_exec(multi)


def efficiency(spec_total: RunSpec, s: int) -> float:
    """``t_exec(1, p) / t_exec(s, p)`` at a fixed total process count."""
    if s < 1:
        raise ValueError("s must be >= 1")
    if s == 1:
        return 1.0
    p = spec_total.p_total
    return _t_exec(spec_total.with_sites(1, p)) / _t_exec(spec_total.with_sites(s, p))


def bandwidth_sweep(spec_total: RunSpec, s: int, sigma_list: Iterable[float]) -> list[tuple[float, float]]:
    """Efficiency ``E(s)`` for each wide-area bandwidth in ``sigma_list``."""
    sigmas = list(sigma_list)
    if not sigmas:
        raise ValueError("sigma_list is empty")
    curve = []
    for sigma in sigmas:
        if not sigma > 0:
            raise ValueError(f"bandwidth must be positive, got {sigma}")
        spec = replace(spec_total, network=spec_total.network.with_wan(sigma_wan=sigma))
        curve.append((float(sigma), efficiency(spec, s)))
    return curve


def bandwidth_threshold(spec_total: RunSpec, s: int, target: float, lo: float = 1e6, hi: float = 1e12) -> float:
    """Smallest wide-area bandwidth at which ``E(s) >= target`` (bisection in log space).

    Raises ValueError when the target is unreachable even as bandwidth grows without bound.
    """

    def eff(sigma: float) -> float:
        return efficiency(replace(spec_total, network=spec_total.network.with_wan(sigma_wan=sigma)), s)

    if eff(hi) < target:
        raise ValueError(f"E({s}) never reaches {target} below sigma={hi:g}")
    if eff(lo) >= target:
        return lo
    a, b = math.log(lo), math.log(hi)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if eff(math.exp(mid)) >= target:
            b = mid
        else:
            a = mid
        if b - a < 1e-12:
            break
    return math.exp(b)


# ---------------------------------------------------------------- stellar models

STELLAR_KINDS = ("tree-shared", "tree-block", "direct-block")


@dataclass(frozen=True)
class StellarModelSpec:
    """Stellar-dynamics run for the wide-area projections.

    ``base_step_time`` is the compute time of one shared-timestep force pass
    and has to be supplied from an external interaction-count model.
    """

    kind: str
    base_step_time: float
    n_particles: float
    block_size_override: float | None = None

    def __post_init__(self):
        if self.kind not in STELLAR_KINDS:
            raise ValueError(f"kind must be one of {STELLAR_KINDS}, got {self.kind!r}")
        if self.base_step_time < 0:
            raise ValueError("base_step_time must be >= 0")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")


def average_block_size(n_particles: float) -> float:
    return 0.2 * float(n_particles) ** 0.81


@dataclass(frozen=True)
class StellarWanCost:
    w_l_tree: float
    w_b_tree: float
    steps_per_shared: float

    @property
    def overhead(self) -> float:
        """Wide-area time accumulated per shared-timestep-equivalent."""
        return self.steps_per_shared * (self.w_l_tree + self.w_b_tree)


def stellar_wan_model(
    spec: StellarModelSpec,
    s: int,
    net: NetworkConstants,
    theta: float = 0.5,
    r_samp: float = 1e-4,
) -> StellarWanCost:
    if s < 1:
        raise ValueError("s must be >= 1")
    N = float(spec.n_particles)
    w_l = net.lambda_wan * (4 * (s - 1) + 4)
    w_b = ((96.0 / theta + 48.0) * N ** (2.0 / 3.0) + 4.0 * N * r_samp) / net.sigma_wan
    if spec.kind == "tree-shared":
        steps = 1.0
    else:
        n_b = spec.block_size_override if spec.block_size_override is not None else average_block_size(N)
        steps = N / n_b
    return StellarWanCost(w_l, w_b, steps)


def stellar_step_time(spec: StellarModelSpec, s: int, net: NetworkConstants, theta: float = 0.5, r_samp: float = 1e-4) -> float:
    """Compute time of one shared-step-equivalent plus its wide-area overhead."""
    if s == 1:
        return spec.base_step_time
    return spec.base_step_time + stellar_wan_model(spec, s, net, theta, r_samp).overhead


# ---------------------------------------------------------------- memory


def memory_estimate(n_particles: float, n_mesh: float) -> tuple[float, float]:
    """Bytes needed for tree integration and for the PM mesh."""
    if n_particles < 0 or n_mesh < 0:
        raise ValueError("counts must be >= 0")
    per_particle = BYTES_PER_PARTICLE + TREE_NODES_PER_PARTICLE * BYTES_PER_TREE_NODE
    return per_particle * n_particles, BYTES_PER_MESH_CELL * n_mesh
