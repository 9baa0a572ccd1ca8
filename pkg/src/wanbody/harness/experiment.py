"""Multi-site TreePM runs driven in-process over the ring protocol.

Each site runs in its own thread with its own channels.  Under the
simulated backend every site also owns a virtual clock: communication
advances it through the channel model and computation advances it by the
machine constants of that site (``tau_tree`` per interaction, ``tau_fft``
and ``tau_mesh`` for the mesh part), so a run is fully deterministic.
Under the tcp backend the same pipeline is timed with the wall clock.

Per step every site

1. assigns its particles to the mesh and ring-reduces the density together
   with the previous force time, the next step-size candidate and its count,
2. gathers samples and computes the new slab boundaries,
3. refreshes the multisection of its slab into process domains,
4. exchanges local essential trees built for the current neighbour slabs,
5. computes tree plus mesh forces, kicks and drifts,
6. migrates particles into the new slabs and gathers the new counts.

The kick in step ``k`` spans ``(dt_{k-1} + dt_k) / 2``, which makes the
sequence identical to kick-drift-kick leapfrog; a closing force pass after
the last step supplies the final half kick.
"""

from __future__ import annotations

import math
import os
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from ..decomposition import (
    build_local_essential_tree,
    decode_let,
    encode_let,
    multisection_decompose,
    sample_particles,
    select_migrants,
    slab_index,
    uniform_slabs,
    update_site_boundaries,
    with_stats,
)
from ..nbody import Mesh, ParticleSet, build_tree, make_groups, pm_interpolate, pm_solve, tree_force, write_snapshot
from ..nbody.ics import uniform_lattice, uniform_random
from ..nbody.pm import pm_assign_density
from ..perfmodel.model import RunSpec
from ..ring import (
    ExchangeStats,
    build_ring,
    close_ring,
    exchange_let,
    migrate_particles,
    ring_gather_counts,
    ring_gather_samples,
    ring_reduce_mesh,
)
from ..transport.base import WallClock
from ..transport.config import ChannelConfig
from ..transport.simulated import VirtualClock

IC_KINDS = ("lattice", "random")
PHASE_NAMES = ("mesh", "samples", "let", "migration")


class ExperimentError(RuntimeError):
    """A run aborted; carries the step, phase and site where it happened."""

    def __init__(self, step: int, phase: str, site: int, cause: BaseException):
        super().__init__(f"step {step}, phase {phase!r}, site {site}: {cause}")
        self.step = step
        self.phase = phase
        self.site = site
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs.

    ``spec.n_particles`` must be a perfect cube for lattice initial
    conditions and ``spec.n_mesh`` must be a perfect cube.  ``dt`` fixes
    the step; with ``dt_max`` set instead the step adapts to the largest
    acceleration, lagged by one step because the candidate travels with the
    next mesh reduction.
    """

    spec: RunSpec
    backend: str = "simulated"
    steps: int = 10
    theta_schedule: dict | None = field(default=None, hash=False)
    snapshot_every: int = 0
    snapshot_dir: str | None = None
    seed: int = 0
    ic: str = "lattice"
    ic_noise: float = 0.1
    box: float = 1.0
    softening: float = 1e-3
    dt: float | None = 1e-3
    dt_max: float | None = None
    eta: float = 0.1
    ncrit: int = 64
    n_leaf: int = 10
    cutoff_cells: float = 3.0
    margin_cells: float = 1.0
    move_limit: float | None = None
    balance: bool = True
    deconvolve: bool = True
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    initial: ParticleSet | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.backend not in ("simulated", "tcp"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.ic not in IC_KINDS:
            raise ValueError(f"ic must be one of {IC_KINDS}")
        if (self.dt is None) == (self.dt_max is None):
            raise ValueError("set exactly one of dt and dt_max")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        side = self.mesh_side
        if side**3 != int(self.spec.n_mesh):
            raise ValueError(f"n_mesh={self.spec.n_mesh} is not a perfect cube")
        s = self.spec.s
        if s > 1 and self.box / s < self.r_cut + self.margin:
            raise ValueError(
                f"slabs of width {self.box / s:g} are narrower than cutoff plus margin "
                f"({self.r_cut + self.margin:g}); use a finer mesh or fewer sites"
            )

    @property
    def n_particles(self) -> int:
        return int(self.spec.n_particles)

    @property
    def mesh_side(self) -> int:
        return int(round(self.spec.n_mesh ** (1.0 / 3.0)))

    @property
    def r_cut(self) -> float:
        return self.cutoff_cells * self.box / self.mesh_side

    @property
    def margin(self) -> float:
        return self.margin_cells * self.box / self.mesh_side

    @property
    def clock_kind(self) -> str:
        return "virtual" if self.backend == "simulated" else "wall"

    def theta_at(self, step: int) -> float:
        theta = self.spec.theta
        for k in sorted(self.theta_schedule or {}):
            if step >= k:
                theta = self.theta_schedule[k]
        return theta

    def link_config(self) -> ChannelConfig:
        """Channel settings of every ring link.

        The simulated links carry the wide-area round trip and the
        bandwidth share of one link under the network's topology.
        """
        if self.backend == "tcp":
            return self.channel.with_(backend="tcp")
        net = self.spec.network
        return self.channel.with_(
            backend="simulated", latency=net.lambda_wan, bandwidth=net.effective_sigma_wan(self.spec.s)
        )


@dataclass
class StepRecord:
    """Timings of one step as seen by the slowest site.

    ``comm`` holds communication seconds per phase.  ``t_calc`` and
    ``counts`` list every site.  ``total`` is the clock advance over the
    step and is at least the sum of the parts.
    """

    step: int
    clock: str
    comm: dict
    tree_seconds: float
    pm_seconds: float
    total_seconds: float
    interactions: int
    t_calc: tuple
    counts: tuple
    dt: float
    theta: float
    wan_exchanges: int
    let_exchanges: int
    migration_exchanges: int
    latency: float
    bandwidth: float
    phase_bytes: dict
    gathered: dict
    let_bytes: int
    migrated: int
    slabs: tuple
    domain_counts: tuple = ()

    @property
    def comm_seconds(self) -> float:
        return sum(self.comm.values())


@dataclass
class ExperimentResult:
    records: list[StepRecord]
    final: ParticleSet
    time: float
    final_sync: StepRecord | None = None
    site_records: list[list[StepRecord]] = field(default_factory=list)
    history: list = field(default_factory=list)  # (step, [SiteSlab per site])


def initial_conditions(config: ExperimentConfig) -> ParticleSet:
    if config.initial is not None:
        return config.initial.copy()
    n = config.n_particles
    if config.ic == "lattice":
        side = int(round(n ** (1.0 / 3.0)))
        if side**3 != n:
            raise ValueError(f"lattice initial conditions need a cube number of particles, got {n}")
        return uniform_lattice(side, config.box, noise=config.ic_noise, seed=config.seed)
    return uniform_random(n, config.box, seed=config.seed)


# ------------------------------------------------------------------ site driver


class _Site:
    def __init__(self, config: ExperimentConfig, ep, clock, particles: ParticleSet, slabs):
        self.cfg = config
        self.ep = ep
        self.clock = clock
        self.i = ep.index
        self.site = config.spec.sites[self.i]
        self.local = particles
        self.slabs = list(slabs)
        self.mesh = Mesh(config.mesh_side, config.box)
        self.step = 0
        self.phase = "setup"
        self.records: list[StepRecord] = []
        self.final_sync: StepRecord | None = None
        self.history = []
        self.t_calc_prev = 0.0
        self.n_calc_prev = 0.0
        self.dt_candidate = config.dt if config.dt is not None else config.dt_max
        self.dt_prev = 0.0
        self.sim_time = 0.0

    @contextmanager
    def _phase(self, name):
        self.phase = name
        yield

    # compute time: virtual clocks are advanced by the machine model
    def _charge(self, seconds):
        if isinstance(self.clock, VirtualClock):
            self.clock.advance(seconds)

    def _timed(self, fn, model_seconds):
        t0 = time.perf_counter()
        out = fn()
        wall = time.perf_counter() - t0
        if isinstance(self.clock, VirtualClock):
            self._charge(model_seconds(out))
            return out, model_seconds(out)
        return out, wall

    def _mesh_phase(self):
        pm_assign_density(self.local, self.mesh)
        # one float per cell on the wire, also on a single site
        local_density = self.mesh.density.astype(np.float32).astype(np.float64)
        aux = [self.t_calc_prev, self.n_calc_prev, self.dt_candidate, float(len(self.local))]
        total, aux_all = ring_reduce_mesh(self.ep, local_density, aux)
        self.mesh.density = total
        return aux_all

    def _solve_pm(self):
        M = self.mesh.size
        cost = self.site.tau_fft * M * math.log2(M) + self.site.tau_mesh * len(self.local)

        def solve():
            pm_solve(self.mesh, r_split=self.cfg.r_cut, deconvolve=self.cfg.deconvolve)
            return pm_interpolate(self.mesh, self.local)

        return self._timed(solve, lambda _: cost)

    def _exchange_trees(self, theta):
        cfg = self.cfg
        s = self.ep.s
        own = build_tree(self.local, cfg.n_leaf) if len(self.local) else None
        if s == 1:
            return own, []
        left_slab = self.slabs[(self.i - 1) % s]
        right_slab = self.slabs[(self.i + 1) % s]
        right_export = encode_let(build_local_essential_tree(own, right_slab, theta, cfg.r_cut, cfg.margin))
        left_export = b"" if s == 2 else encode_let(build_local_essential_tree(own, left_slab, theta, cfg.r_cut, cfg.margin))
        from_left, from_right = exchange_let(self.ep, left_export, right_export)
        remote = [decode_let(b) for b in (from_left, from_right) if b]
        return own, remote

    def _force(self, own, remote, theta):
        cfg = self.cfg
        trees = [t for t in [own, *remote] if t is not None and t.n_nodes]
        groups = make_groups(own, cfg.ncrit) if own is not None else []

        def walk():
            return tree_force(trees, self.local, theta, cfg.softening, cfg.ncrit, cfg.r_cut, groups=groups)

        res, seconds = self._timed(walk, lambda r: r.interactions * self.site.tau_tree)
        return res, seconds

    def _dt_policy(self, acc):
        if self.cfg.dt is not None:
            return self.cfg.dt
        if not len(acc):
            return self.cfg.dt_max
        amax = float(np.sqrt(np.max(np.einsum("ij,ij->i", acc, acc))))
        if amax == 0.0:
            return self.cfg.dt_max
        return min(self.cfg.dt_max, self.cfg.eta * math.sqrt(self.cfg.softening / amax))

    def _forces(self, theta):
        """Mesh reduce, PM solve, LET exchange and the force walk."""
        with self._phase("mesh"):
            aux_all = self._mesh_phase()
            pm_acc, pm_seconds = self._solve_pm()
        return aux_all, pm_acc, pm_seconds

    def run_step(self, k):
        cfg, ep = self.cfg, self.ep
        s = ep.s
        theta = cfg.theta_at(k)
        start = self.clock.now()
        ep.stats.reset()

        aux_all, pm_acc, pm_seconds = self._forces(theta)
        loads, load_counts = aux_all[:, 0], aux_all[:, 1]
        dt = float(np.min(aux_all[:, 2]))

        with self._phase("samples"):
            samples = ring_gather_samples(ep, sample_particles(self.local, cfg.spec.r_samp))
        with self._phase("boundary"):
            new_slabs = self.slabs
            if cfg.balance and s > 1 and np.all(loads > 0):
                move = cfg.move_limit if cfg.move_limit is not None else cfg.box / 20.0
                upd = update_site_boundaries(
                    samples, loads, self.slabs, move, cfg.box, cfg.r_cut + cfg.margin, load_counts=load_counts
                )
                new_slabs = upd.slabs
        with self._phase("multisection"):
            p_local = cfg.spec.p_total // s
            domains = multisection_decompose(self.local, self.slabs[self.i], p_local, cfg.box) if len(self.local) else []
        with self._phase("let"):
            own, remote = self._exchange_trees(theta)
        with self._phase("force"):
            res, tree_seconds = self._force(own, remote, theta)
            acc = res.acc + pm_acc
        with self._phase("integrate"):
            kick = 0.5 * (self.dt_prev + dt)
            self.local.vel += kick * acc
            self.local.pos += dt * self.local.vel
            self.local.wrap()
            self.dt_prev = dt
            self.dt_candidate = self._dt_policy(acc)
            self.t_calc_prev = tree_seconds
            self.n_calc_prev = float(len(self.local))
        with self._phase("migration"):
            split = select_migrants(self.local, new_slabs[self.i], new_slabs)
            arrived = migrate_particles(ep, split.to_left, split.to_right)
            self.local = ParticleSet.concat([split.stay, arrived], cfg.box, True)
            counts = ring_gather_counts(ep, len(self.local))
        self.slabs = [with_stats(sl, counts[j], sl.t_calc) for j, sl in enumerate(new_slabs)]
        self.history.append((k, with_stats(self.slabs[self.i], counts[self.i], tree_seconds)))

        st = ep.stats
        total = self.clock.now() - start
        if not isinstance(self.clock, VirtualClock):
            total = max(total, tree_seconds + pm_seconds + st.seconds)
        self.records.append(
            StepRecord(
                step=k,
                clock=cfg.clock_kind,
                comm={p: st.phases[p].seconds for p in PHASE_NAMES},
                tree_seconds=tree_seconds,
                pm_seconds=pm_seconds,
                total_seconds=total,
                interactions=int(res.interactions),
                t_calc=(),
                counts=tuple(int(c) for c in counts),
                dt=dt,
                theta=theta,
                wan_exchanges=st.wan_exchanges,
                let_exchanges=st.let_exchanges,
                migration_exchanges=st.migration_exchanges,
                latency=st.latency,
                bandwidth=st.bandwidth,
                phase_bytes={p: st.phases[p].bytes_sent + st.phases[p].bytes_received for p in PHASE_NAMES},
                gathered=dict(st.gathered),
                let_bytes=st.let_bytes,
                migrated=len(split.to_left) + len(split.to_right),
                slabs=tuple((sl.lo, sl.hi) for sl in new_slabs),
                domain_counts=tuple(d.count for d in domains),
            )
        )
        if cfg.snapshot_every and cfg.snapshot_dir and (k + 1) % cfg.snapshot_every == 0:
            write_snapshot(os.path.join(cfg.snapshot_dir, f"step{k + 1:05d}_site{self.i}.snbk"), self.local, self.sim_time)

    def close(self):
        """Closing force pass and final half kick."""
        theta = self.cfg.theta_at(self.cfg.steps)
        start = self.clock.now()
        self.ep.stats.reset()
        _, pm_acc, pm_seconds = self._forces(theta)
        with self._phase("let"):
            own, remote = self._exchange_trees(theta)
        with self._phase("force"):
            res, tree_seconds = self._force(own, remote, theta)
        self.local.vel += 0.5 * self.dt_prev * (res.acc + pm_acc)
        st = self.ep.stats
        self.final_sync = StepRecord(
            step=self.cfg.steps,
            clock=self.cfg.clock_kind,
            comm={p: st.phases[p].seconds for p in PHASE_NAMES},
            tree_seconds=tree_seconds,
            pm_seconds=pm_seconds,
            total_seconds=self.clock.now() - start,
            interactions=int(res.interactions),
            t_calc=(),
            counts=(len(self.local),),
            dt=0.5 * self.dt_prev,
            theta=theta,
            wan_exchanges=st.wan_exchanges,
            let_exchanges=st.let_exchanges,
            migration_exchanges=st.migration_exchanges,
            latency=st.latency,
            bandwidth=st.bandwidth,
            phase_bytes={p: st.phases[p].bytes_sent + st.phases[p].bytes_received for p in PHASE_NAMES},
            gathered=dict(st.gathered),
            let_bytes=st.let_bytes,
            migrated=0,
            slabs=tuple((sl.lo, sl.hi) for sl in self.slabs),
        )

    def run(self):
        for k in range(self.cfg.steps):
            self.step = k
            self.run_step(k)
            self.sim_time += self.dt_prev
        self.step = self.cfg.steps
        self.close()


def _combine(site_records: list[list[StepRecord]]) -> list[StepRecord]:
    """Per step, the record of the site with the largest total, with every
    site's force time attached."""
    out = []
    for per_step in zip(*site_records):
        t_calc = tuple(r.tree_seconds for r in per_step)
        worst = max(per_step, key=lambda r: r.total_seconds)
        out.append(replace(worst, t_calc=t_calc))
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run ``config.steps`` steps on ``config.spec.s`` sites.

    Raises :class:`ExperimentError` naming the step, phase and site of the
    first failure; the other sites are released by closing the ring.
    """
    s = config.spec.s
    ics = initial_conditions(config)
    if ics.box != config.box:
        raise ValueError("initial conditions use a different box size")
    slabs = uniform_slabs(s, config.box)
    owner = slab_index(ics.pos[:, 0], slabs)
    if config.backend == "simulated":
        clocks = [VirtualClock() for _ in range(s)]
    else:
        clocks = [None] * s
    eps = build_ring(s, config.link_config(), clocks if config.backend == "simulated" else None)
    if config.backend != "simulated":
        clocks = [ep.clock if ep.clock is not None else WallClock() for ep in eps]
    if config.snapshot_every and config.snapshot_dir:
        os.makedirs(config.snapshot_dir, exist_ok=True)
    sites = [
        _Site(config, eps[i], clocks[i], ics.subset(np.flatnonzero(owner == i)), slabs) for i in range(s)
    ]
    errors: list[tuple[float, ExperimentError]] = []
    lock = threading.Lock()

    def drive(site: _Site):
        try:
            site.run()
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            with lock:
                errors.append((time.monotonic(), ExperimentError(site.step, site.phase, site.i, exc)))
            close_ring([site.ep])

    try:
        if s == 1:
            drive(sites[0])
        else:
            threads = [threading.Thread(target=drive, args=(st,), name=f"site{st.i}") for st in sites]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
    finally:
        close_ring(eps)
    if errors:
        errors.sort(key=lambda e: e[0])
        raise errors[0][1] from errors[0][1].cause

    final = ParticleSet.concat([st.local for st in sites], config.box, True).sorted_by_id()
    records = _combine([st.records for st in sites])
    syncs = [st.final_sync for st in sites]
    rows = sorted((row for st in sites for row in st.history), key=lambda r: (r[0], r[1].site))
    history = [(k, [sl for j, sl in rows if j == k]) for k in range(config.steps)]
    if config.snapshot_dir:
        write_snapshot(os.path.join(config.snapshot_dir, "final.snbk"), final, sites[0].sim_time)
    return ExperimentResult(
        records=records,
        final=final,
        time=sites[0].sim_time,
        final_sync=max(syncs, key=lambda r: r.total_seconds),
        site_records=[st.records for st in sites],
        history=history,
    )
