import hashlib
import io
import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wanbody.decomposition import SampleSet
from wanbody.nbody import ParticleSet, uniform_random
from wanbody.ring import (
    PHASES,
    ExchangeStats,
    ProtocolError,
    SiteEndpoint,
    build_ring,
    chunked_exchange,
    close_ring,
    exchange_let,
    migrate_particles,
    plan_step_exchanges,
    ring_gather_counts,
    ring_gather_samples,
    ring_reduce_mesh,
    write_stats_csv,
)
from wanbody.transport import ChannelConfig, sim_pair, tcp_pair

SIM = ChannelConfig(latency=0.01, bandwidth=1e8, timeout=10.0)
TCP = ChannelConfig(backend="tcp", streams=2, timeout=10.0)


def run_sites(eps, fn):
    """Run ``fn(ep)`` on every endpoint concurrently; results in site order."""
    with ThreadPoolExecutor(len(eps)) as pool:
        return [f.result() for f in [pool.submit(fn, ep) for ep in eps]]


@pytest.fixture(params=["simulated", "tcp"])
def ring_of(request):
    made = []

    def make(s):
        eps = build_ring(s, SIM if request.param == "simulated" else TCP)
        made.append(eps)
        return eps

    yield make
    for eps in made:
        close_ring(eps)


class TestTopology:
    def test_single_site(self):
        (ep,) = build_ring(1, SIM)
        assert ep.left is None and ep.right is None

    def test_endpoint_validation(self):
        with pytest.raises(ValueError):
            SiteEndpoint(3, 3)
        with pytest.raises(ValueError):
            SiteEndpoint(0, 2)

    def test_two_sites_two_links(self):
        a, b = build_ring(2, SIM)
        assert a.right is not a.left and a.right.peer is b.left.port and b.right.peer is a.left.port
        close_ring([a, b])

    @pytest.mark.parametrize("s,n", [(1, 0), (2, 13), (3, 18), (4, 23)])
    def test_plan(self, s, n):
        assert plan_step_exchanges(s) == n


class TestMeshReduce:
    def test_single_identity(self):
        (ep,) = build_ring(1, SIM)
        rho = np.random.default_rng(0).random((4, 4, 4))
        total, aux = ring_reduce_mesh(ep, rho, [1.0, 2.0])
        assert total is rho and aux.shape == (1, 2)

    def test_constant(self, ring_of):
        eps = ring_of(3)
        out = run_sites(eps, lambda ep: ring_reduce_mesh(ep, np.full((4, 4, 4), ep.index + 1.0), [ep.index, 10.0 * ep.index]))
        for total, aux in out:
            assert np.all(total == 6.0)
            assert np.array_equal(aux, [[0, 0], [1, 10], [2, 20]])

    def test_serial_sum_bitwise(self, ring_of):
        eps = ring_of(4)
        grids = [np.random.default_rng(k).random((8, 8, 8)).astype(np.float32) for k in range(4)]
        ref = np.zeros((8, 8, 8))
        for g in grids:
            ref += g.astype(np.float64)
        out = run_sites(eps, lambda ep: ring_reduce_mesh(ep, grids[ep.index], [0.0])[0])
        for total in out:
            assert np.array_equal(total, ref)

    def test_shape_mismatch(self):
        eps = build_ring(2, SIM)
        errors = []

        def go(ep):
            try:
                ring_reduce_mesh(ep, np.zeros((4, 4, 4) if ep.index == 0 else (2, 2, 2)), [0.0])
            except ProtocolError as exc:
                errors.append(exc.phase)

        run_sites(eps, go)
        assert errors == ["mesh", "mesh"]
        close_ring(eps)

    def test_hops_recorded(self):
        eps = build_ring(5, SIM)
        run_sites(eps, lambda ep: ring_reduce_mesh(ep, np.zeros((2, 2, 2)), [0.0]))
        for ep in eps:
            assert ep.stats.phases["mesh"].exchanges == 2 * 4
            assert ep.stats.gathered["mesh_density"] == 5 * 4 * 8
        close_ring(eps)


class TestSampleGather:
    def test_single(self):
        (ep,) = build_ring(1, SIM)
        assert np.array_equal(ring_gather_samples(ep, SampleSet(np.array([0.25, 0.5]), 0.1)).x, [0.25, 0.5])

    def test_order_and_identity(self, ring_of):
        eps = ring_of(3)
        data = [np.array([0.1, 0.2]), np.array([]), np.array([0.5, 0.6, 0.7, 0.8, 0.9])]
        out = run_sites(eps, lambda ep: ring_gather_samples(ep, SampleSet(data[ep.index], 0.5)))
        expect = np.concatenate(data).astype(np.float32).astype(np.float64)
        for g in out:
            assert len(g) == 7 and np.array_equal(g.x, expect)
        assert len({g.x.tobytes() for g in out}) == 1

    def test_counts(self, ring_of):
        eps = ring_of(3)
        out = run_sites(eps, lambda ep: ring_gather_counts(ep, 10 * ep.index + 1))
        for c in out:
            assert list(c) == [1, 11, 21]


class TestNeighbourExchanges:
    @pytest.mark.parametrize("s,expect", [(2, 1), (3, 2), (4, 2)])
    def test_let_count(self, s, expect):
        eps = build_ring(s, SIM)
        out = run_sites(eps, lambda ep: exchange_let(ep, b"L%d" % ep.index, b"R%d" % ep.index))
        for ep, (from_left, from_right) in zip(eps, out):
            assert ep.stats.let_exchanges == expect
            assert ep.stats.phases["let"].exchanges == 4
            assert from_right == (b"" if s == 2 else b"L%d" % ((ep.index + 1) % s))
            assert from_left == b"R%d" % ((ep.index - 1) % s)
        close_ring(eps)

    def test_empty_exports(self, ring_of):
        eps = ring_of(3)
        out = run_sites(eps, lambda ep: exchange_let(ep, b"", b""))
        assert out == [(b"", b"")] * 3

    def test_no_migrants(self, ring_of):
        eps = ring_of(3)
        out = run_sites(eps, lambda ep: migrate_particles(ep, ParticleSet.empty(), ParticleSet.empty()))
        assert all(len(p) == 0 for p in out)

    def test_one_crossing(self):
        eps = build_ring(3, SIM)
        mover = uniform_random(5, seed=1).subset([2])

        def go(ep):
            right = mover if ep.index == 0 else ParticleSet.empty()
            return migrate_particles(ep, ParticleSet.empty(), right)

        out = run_sites(eps, go)
        assert [len(p) for p in out] == [0, 1, 0]
        assert out[1].ids[0] == 2 and np.array_equal(out[1].pos, mover.pos)
        close_ring(eps)

    def test_multiset_conserved(self, ring_of):
        s = 3
        eps = ring_of(s)
        p = uniform_random(10_000, seed=4)
        rng = np.random.default_rng(5)
        home = rng.integers(0, s, len(p))
        dest = rng.integers(-1, 2, len(p))

        def go(ep):
            mine = home == ep.index
            stay = p.subset(np.flatnonzero(mine & (dest == 0)))
            left = p.subset(np.flatnonzero(mine & (dest == -1)))
            right = p.subset(np.flatnonzero(mine & (dest == 1)))
            return ParticleSet.concat([stay, migrate_particles(ep, left, right)])

        out = run_sites(eps, go)
        ids = np.concatenate([q.ids for q in out])
        assert np.array_equal(np.sort(ids), np.arange(len(p)))
        for k, q in enumerate(out):
            expect = np.flatnonzero((home + dest) % s == k)
            assert np.array_equal(np.sort(q.ids), expect)
        assert all(ep.stats.migration_exchanges == 2 for ep in eps)

    def test_full_step_count(self, ring_of):
        for s in (2, 3, 4):
            eps = ring_of(s)

            def step(ep):
                ring_reduce_mesh(ep, np.zeros((2, 2, 2)), [0.0, 0.0, 0.0, 0.0])
                ring_gather_samples(ep, SampleSet(np.array([0.5]), 0.1))
                exchange_let(ep, b"x", b"y")
                migrate_particles(ep, ParticleSet.empty(), ParticleSet.empty())
                ring_gather_counts(ep, 1)
                return ep.stats.wan_exchanges

            assert run_sites(eps, step) == [plan_step_exchanges(s)] * s

    def test_lan_accounting(self):
        eps = build_ring(3, SIM, wan=False)
        run_sites(eps, lambda ep: exchange_let(ep, b"", b""))
        assert all(ep.stats.wan_exchanges == 0 and ep.stats.lan_exchanges == 4 for ep in eps)
        close_ring(eps)

    def test_peer_closed(self):
        eps = build_ring(3, ChannelConfig(timeout=2.0))
        eps[1].left.close()
        eps[1].right.close()
        with pytest.raises(ProtocolError) as info:
            exchange_let(eps[0], b"a", b"b")
        assert info.value.phase == "let"
        close_ring(eps)


class TestChunked:
    def _pair(self, backend):
        return sim_pair(SIM) if backend == "simulated" else tcp_pair(TCP)

    @pytest.mark.parametrize("backend", ["simulated", "tcp"])
    def test_ten_pieces(self, backend):
        a, b = self._pair(backend)
        pa, pb = os.urandom(10 * 2**20), os.urandom(3 * 2**20 + 7)
        with ThreadPoolExecutor(2) as pool:
            fa = pool.submit(chunked_exchange, a, pa, 2**20)
            fb = pool.submit(chunked_exchange, b, pb, 2**20)
            (ga, ra), (gb, rb) = fa.result(), fb.result()
        assert hashlib.sha256(ga).digest() == hashlib.sha256(pb).digest()
        assert hashlib.sha256(gb).digest() == hashlib.sha256(pa).digest()
        assert ra == rb == 10
        a.close(), b.close()

    @pytest.mark.parametrize("na,nb,rounds", [(100, 50, 1), (0, 0, 1), (1000, 0, 10)])
    def test_round_counts(self, na, nb, rounds):
        a, b = sim_pair(SIM)
        with ThreadPoolExecutor(2) as pool:
            fa = pool.submit(chunked_exchange, a, bytes(na), 100)
            fb = pool.submit(chunked_exchange, b, bytes(nb), 100)
            assert fa.result() == (bytes(nb), rounds)
            assert fb.result() == (bytes(na), rounds)

    def test_bad_cap(self):
        a, _ = sim_pair(SIM)
        with pytest.raises(ValueError):
            chunked_exchange(a, b"x", 0)

    def test_reassembly_mismatch(self):
        # the peer announces 10 bytes but only ever sends 4
        import struct

        a, b = sim_pair(SIM)

        def liar():
            b.exchange(struct.pack("<QQ", 10, 0) + b"abcd")

        t = threading.Thread(target=liar)
        t.start()
        with pytest.raises(ProtocolError, match="chunked"):
            chunked_exchange(a, b"", 100)
        t.join()


class TestStats:
    def test_reset(self):
        st_ = ExchangeStats()
        st_.gather("x", 5)
        st_.wan_exchanges = 3
        st_.reset()
        assert st_.wan_exchanges == 0 and st_.gathered == {} and set(st_.phases) == set(PHASES)

    def test_csv(self):
        eps = build_ring(2, SIM)
        run_sites(eps, lambda ep: exchange_let(ep, b"abc", b"defg"))
        fh = io.StringIO()
        write_stats_csv(fh, [(0, eps[0].stats)])
        lines = fh.getvalue().splitlines()
        assert lines[0] == "step,phase,bytes,seconds" and len(lines) == 1 + len(PHASES)
        let = next(line for line in lines if ",let," in line).split(",")
        assert int(let[2]) == 16 + 16 + 4 + 4 + 0
        close_ring(eps)


@given(st.integers(2, 6), st.integers(0, 1000))
@settings(max_examples=15, deadline=None)
def test_allgather_identical_everywhere(s, seed):
    eps = build_ring(s, SIM)
    rng = np.random.default_rng(seed)
    data = [rng.random(int(rng.integers(0, 20))) for _ in range(s)]
    out = run_sites(eps, lambda ep: ring_gather_samples(ep, SampleSet(data[ep.index], 0.1)).x.tobytes())
    close_ring(eps)
    assert len(set(out)) == 1
    assert out[0] == np.concatenate(data).astype(np.float32).astype(np.float64).tobytes()
