"""Quick oracle suites behind ``wanbody validate``."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

SUITES = ("model", "engine", "protocol", "transport")


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    ok: bool
    detail: str


def _model():
    from ..perfmodel import memory_estimate, predict_step, wan_exchange_count
    from ..perfmodel.tables import single_site_rows

    out = []
    worst = 0.0
    for row in single_site_rows():
        b = predict_step(row.spec())
        worst = max(worst, abs(b.t_tree / row.t_tree - 1), abs(b.t_exec / row.t_exec - 1))
    out.append(Check("model", "single-site t_tree/t_exec within 1.5%", worst <= 0.015, f"worst {worst:.4f}"))
    counts = [wan_exchange_count(s) for s in range(1, 6)]
    out.append(Check("model", "exchange count 0, 5s+3", counts == [0, 13, 18, 23, 28], str(counts)))
    mem = memory_estimate(2048**3, 256**3)[0]
    out.append(Check("model", "memory 2048^3 ~ 850 GB", abs(mem / 850e9 - 1) <= 0.01, f"{mem / 1e9:.1f} GB"))
    return out


def _engine():
    from ..nbody import Mesh, build_tree, direct_force_oracle, plummer, pm_solve, tree_force, uniform_lattice
    from ..nbody.force import ForceParams, TreePMForce

    out = []
    ps = plummer(512, seed=3)
    ref = direct_force_oracle(ps, 1e-3)
    acc = tree_force(build_tree(ps), ps, 0.0, 1e-3).acc
    err = float(np.max(np.abs(acc - ref)) / np.max(np.abs(ref)))
    out.append(Check("engine", "theta=0 tree equals direct sum", err < 1e-12, f"{err:.2e}"))

    n, amp = 16, 0.3
    mesh = Mesh(n, 1.0)
    x = (np.arange(n) + 0.5) / n
    k = 2 * np.pi
    mesh.density = (mesh.cell**3) * (1 + amp * np.cos(k * x))[:, None, None] * np.ones((n, n, n))
    pm_solve(mesh)
    expect = (-4 * np.pi * amp * np.cos(k * x) / k**2)[:, None, None]
    err = float(np.max(np.abs(mesh.potential - expect)) / np.max(np.abs(expect)))
    out.append(Check("engine", "single-mode PM matches the Green's function", err < 1e-6, f"{err:.2e}"))

    lat = uniform_lattice(8)
    force = TreePMForce(ForceParams(theta=0.5, softening=0.0), 8)
    a = force(lat).acc
    scale = lat.mass[0] / (1.0 / 8) ** 2
    null = float(np.max(np.abs(a)) / scale)
    out.append(Check("engine", "lattice null force", null < 1e-6, f"{null:.2e}"))
    return out


def _protocol():
    from ..ring import build_ring, close_ring, exchange_let, migrate_particles, plan_step_exchanges
    from ..ring import ring_gather_counts, ring_gather_samples, ring_reduce_mesh
    from ..decomposition import SampleSet
    from ..nbody import ParticleSet
    from ..transport import ChannelConfig

    out = []
    for s in (2, 3, 4):
        eps = build_ring(s, ChannelConfig(latency=0.01, bandwidth=1e8))
        sums = [None] * s

        def drive(ep):
            d = np.full((4, 4, 4), float(ep.index + 1))
            sums[ep.index], _ = ring_reduce_mesh(ep, d, [0.0])
            ring_gather_samples(ep, SampleSet(np.zeros(1), 0.1))
            exchange_let(ep, b"x", b"y")
            e = ParticleSet.empty()
            migrate_particles(ep, e, e.copy())
            ring_gather_counts(ep, 0)

        ts = [threading.Thread(target=drive, args=(ep,)) for ep in eps]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        close_ring(eps)
        counts = [ep.stats.wan_exchanges for ep in eps]
        want = s * (s + 1) / 2
        out.append(
            Check(
                "protocol",
                f"s={s} ring sum and exchange count",
                all(np.all(x == want) for x in sums) and all(c == plan_step_exchanges(s) for c in counts),
                f"exchanges {eps[0].stats.wan_exchanges}",
            )
        )
    return out


def _transport():
    from ..transport import ChannelConfig, netbench, netbench_responder, sim_pair, tcp_pair

    out = []
    for backend in ("simulated", "tcp"):
        ok = True
        for streams in (1, 16):
            cfg = ChannelConfig(backend=backend, streams=streams, send_chunk=8192, recv_chunk=8192)
            a, b = sim_pair(cfg) if backend == "simulated" else tcp_pair(cfg)
            for size in (0, 1, 8192, 1 << 20):
                data = np.random.default_rng(size).integers(0, 256, size, dtype=np.uint8).tobytes()
                t = threading.Thread(target=lambda: b.send_message(b.recv_message()))
                t.start()
                a.send_message(data)
                ok &= a.recv_message() == data
                t.join()
            a.close()
            b.close()
        out.append(Check("transport", f"{backend} bit-exact echo", ok, "sizes 0..1 MiB, 1 and 16 streams"))
    cfg = ChannelConfig(latency=0.27, bandwidth=5e7)
    a, b = sim_pair(cfg)
    sizes = [1 << 20]
    t = threading.Thread(target=netbench_responder, args=(b, sizes))
    t.start()
    res = netbench(a, sizes)
    t.join()
    ok = math.isclose(res.rtt, 0.27, rel_tol=1e-6) and math.isclose(res.rows[0][2], 5e7, rel_tol=1e-6)
    out.append(Check("transport", "simulated netbench recovers latency and bandwidth", ok, f"rtt {res.rtt:g}, bw {res.rows[0][2]:g}"))
    return out


_RUNNERS = {"model": _model, "engine": _engine, "protocol": _protocol, "transport": _transport}


def run_validation(suites=SUITES) -> list[Check]:
    checks = []
    for name in suites:
        if name not in _RUNNERS:
            raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
        try:
            checks.extend(_RUNNERS[name]())
        except Exception as exc:  # noqa: BLE001 - a crashing suite is a failed suite
            checks.append(Check(name, "suite raised", False, f"{type(exc).__name__}: {exc}"))
    return checks
