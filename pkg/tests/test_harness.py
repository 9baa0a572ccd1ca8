import io
import os
from dataclasses import replace

import numpy as np
import pytest
from conftest import das3_spec
from hypothesis import given, settings
from hypothesis import strategies as st

from wanbody.decomposition import SiteSlab, build_local_essential_tree, encode_let
from wanbody.harness import (
    ExperimentConfig,
    ExperimentError,
    StepRecord,
    average_window,
    compare_with_model,
    initial_conditions,
    run_experiment,
    write_comparison_csv,
    write_records_csv,
)
from wanbody.harness import experiment as experiment_mod
from wanbody.harness.cli import main
from wanbody.harness.config import experiment_from, load_config, parse_schedule, run_spec_from
from wanbody.nbody import build_tree, read_snapshot, uniform_random
from wanbody.ring import ProtocolError, plan_step_exchanges


def small(s, steps=10, n_side=16, m_side=16, theta=0.5, **kw):
    spec = das3_spec(s=s, n_side=n_side, m_side=m_side, theta=theta, p=s, r_samp=1 / 16)
    return ExperimentConfig(spec, steps=steps, **kw)


@pytest.fixture(scope="module")
def run3():
    return run_experiment(small(3))


class TestConfigValidation:
    def test_steps(self):
        with pytest.raises(ValueError):
            small(1, steps=0)

    def test_dt_choice(self):
        with pytest.raises(ValueError):
            small(1, dt=None)
        with pytest.raises(ValueError):
            small(1, dt_max=0.01)

    def test_mesh_cube(self):
        with pytest.raises(ValueError):
            ExperimentConfig(replace(das3_spec(s=1, p=1), n_mesh=1001.0))

    def test_slab_too_narrow(self):
        with pytest.raises(ValueError, match="narrower"):
            small(5, m_side=8)

    def test_theta_schedule(self):
        cfg = small(1, theta_schedule={0: 0.7, 5: 0.3})
        assert [cfg.theta_at(k) for k in (0, 4, 5, 9)] == [0.7, 0.7, 0.3, 0.3]

    def test_link_config(self):
        link = small(3).link_config()
        assert link.latency == 3e-3 and link.bandwidth == pytest.approx(5e7 / 2)

    def test_initial_conditions(self):
        p = initial_conditions(small(1))
        assert len(p) == 4096 and np.array_equal(p.ids, np.arange(4096))
        with pytest.raises(ValueError, match="cube"):
            initial_conditions(ExperimentConfig(replace(das3_spec(s=1, n_side=16, m_side=16, p=1), n_particles=4000.0)))


class TestRuns:
    def test_single_site_no_wan(self):
        res = run_experiment(small(1))
        assert len(res.records) == 10
        assert all(r.wan_exchanges == 0 and r.clock == "virtual" for r in res.records)

    def test_three_sites(self, run3):
        assert [r.wan_exchanges for r in run3.records] == [18] * 10
        assert all(r.let_exchanges == 2 and r.migration_exchanges == 2 for r in run3.records)

    def test_conservation(self, run3):
        assert np.array_equal(run3.final.ids, np.arange(4096))
        for r in run3.records:
            assert sum(r.counts) == 4096

    def test_total_covers_parts(self, run3):
        for r in run3.records:
            assert r.total_seconds >= r.tree_seconds + r.pm_seconds + r.comm_seconds - 1e-12
            assert len(r.t_calc) == 3 and max(r.t_calc) > 0

    def test_history(self, run3):
        assert len(run3.history) == 10
        for step, slabs in run3.history:
            assert [sl.site for sl in slabs] == [0, 1, 2]
            assert slabs[0].lo == 0.0 and slabs[-1].hi == 1.0

    def test_deterministic(self):
        a = run_experiment(small(2, steps=3))
        b = run_experiment(small(2, steps=3))
        assert np.array_equal(a.final.pos, b.final.pos)
        assert [r.total_seconds for r in a.records] == [r.total_seconds for r in b.records]

    @pytest.mark.slow
    def test_two_sites_match_one(self):
        ics = uniform_random(4096, seed=7)
        kw = dict(initial=ics, theta_schedule={0: 0.0}, m_side=32)
        one = run_experiment(small(1, **kw)).final
        two = run_experiment(small(2, **kw)).final
        assert np.array_equal(one.ids, two.ids)
        assert np.max(np.abs(one.pos - two.pos)) <= 1e-10 * np.abs(one.pos).max()

    def test_tcp_backend(self):
        res = run_experiment(small(2, steps=2, backend="tcp"))
        assert res.records[0].clock == "wall" and res.records[0].wan_exchanges == plan_step_exchanges(2)

    def test_snapshots(self, tmp_path):
        run_experiment(small(2, steps=2, snapshot_every=1, snapshot_dir=str(tmp_path)))
        names = sorted(os.listdir(tmp_path))
        assert "final.snbk" in names and "step00001_site1.snbk" in names
        p, _ = read_snapshot(tmp_path / "final.snbk")
        assert len(p) == 4096

    def test_error_context(self, monkeypatch):
        real = experiment_mod.exchange_let

        def flaky(ep, left, right):
            if ep.index == 1:
                raise ProtocolError("let", "injected failure")
            return real(ep, left, right)

        monkeypatch.setattr(experiment_mod, "exchange_let", flaky)
        with pytest.raises(ExperimentError) as info:
            run_experiment(small(3, steps=2))
        err = info.value
        assert err.phase == "let" and err.step == 0 and err.site == 1
        assert "injected" in str(err)


class TestModelComparison:
    def test_identities(self, run3):
        rows = {r.term: r for r in compare_with_model(run3.records, small(3).spec)}
        for term in ("wan_exchanges", "w_l", "mesh_bytes", "sample_bytes", "w_b(measured bytes)"):
            assert rows[term].ok, rows[term]
        assert rows["w_l"].measured == pytest.approx(3e-3 * 18, rel=1e-12)
        assert rows["mesh_bytes"].measured == 4 * 3 * 16**3

    def test_single_site(self):
        res = run_experiment(small(1, steps=2))
        rows = compare_with_model(res.records, small(1).spec)
        assert all(r.ok for r in rows)

    def test_csv(self, run3):
        fh = io.StringIO()
        write_comparison_csv(fh, compare_with_model(run3.records, small(3).spec))
        assert fh.getvalue().startswith("term,measured,predicted,ratio,ok\n")
        fh = io.StringIO()
        write_records_csv(fh, run3.records)
        assert len(fh.getvalue().splitlines()) == 11

    def test_empty(self):
        with pytest.raises(ValueError):
            compare_with_model([], small(1).spec)


def record(step, value):
    return StepRecord(
        step=step, clock="virtual", comm={"mesh": value, "let": 2 * value}, tree_seconds=value, pm_seconds=1.0,
        total_seconds=4 * value, interactions=10, t_calc=(value, 2.0), counts=(5, 5), dt=0.01, theta=0.5,
        wan_exchanges=13, let_exchanges=1, migration_exchanges=1, latency=0.1, bandwidth=value,
        phase_bytes={"mesh": 8}, gathered={}, let_bytes=4, migrated=0, slabs=(),
    )


class TestAverageWindow:
    def test_identical(self):
        avg = average_window([record(k, 3.0) for k in range(10)], 10)
        assert avg.mean["tree_seconds"] == 3.0 and all(v == 0.0 for v in avg.std.values())
        assert avg.mean["comm.let"] == 6.0 and avg.mean["comm_seconds"] == 9.0

    def test_ramp_midpoint(self):
        recs = [record(k, float(k)) for k in range(20)]
        avg = average_window(recs, 10)
        assert avg.mean["tree_seconds"] == pytest.approx(14.5)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
    @settings(max_examples=100)
    def test_two_pass(self, xs):
        avg = average_window([record(k, x) for k, x in enumerate(xs)], len(xs))
        x = np.array(xs)
        mean = sum(xs) / len(xs)
        var = sum((v - mean) ** 2 for v in xs) / len(xs)
        assert avg.mean["tree_seconds"] == pytest.approx(mean, abs=1e-12 * max(1.0, np.abs(x).max()))
        assert avg.std["tree_seconds"] == pytest.approx(np.sqrt(var), abs=1e-12 * max(1.0, np.abs(x).max()))

    def test_bad_window(self):
        with pytest.raises(ValueError):
            average_window([record(0, 1.0)], 2)


def test_let_volume_drops_with_theta():
    p = uniform_random(32768, seed=3)
    src = p.subset(np.flatnonzero(p.pos[:, 0] < 0.5))
    tree = build_tree(src)
    requester = SiteSlab(1, 0.5, 1.0)
    vol = {th: len(encode_let(build_local_essential_tree(tree, requester, th, 3 / 16))) for th in (0.3, 0.5)}
    assert vol[0.3] > vol[0.5]


CONFIG = """
[run]
preset = das3
sites = VU, fast
n_particles = 4096
n_mesh = 4096
theta = 0.4
steps = 2
theta_schedule = 0:0.4, 1:0.6

[network]
lambda_wan = 0.01

[site fast]
tau_tree = 1e-9
tau_fft = 1e-9
tau_mesh = 1e-7

[transport]
streams = 4
"""


class TestConfigFile:
    def test_parse(self):
        cp = load_config(text=CONFIG)
        spec = run_spec_from(cp)
        assert spec.s == 2 and spec.p_total == 2 and spec.theta == 0.4
        assert spec.sites[1].name == "fast" and spec.network.lambda_wan == 0.01
        cfg = experiment_from(cp)
        assert cfg.steps == 2 and cfg.theta_at(1) == 0.6 and cfg.channel.streams == 4

    def test_schedule(self):
        assert parse_schedule("0:0.5, 5:0.3") == {0: 0.5, 5: 0.3}
        assert parse_schedule("") is None

    def test_unknown_site(self):
        with pytest.raises(ValueError):
            run_spec_from(load_config(text="[run]\nsites = nowhere\n"))


class TestCli:
    def test_predict(self, tmp_path):
        out = tmp_path / "p.csv"
        assert main(["predict", "--n-particles", "16777216", "--n-mesh", "2097152", "--theta", "0.3", "--p-total", "60", "-o", str(out)]) == 0
        assert out.read_text().count("\n") == 2

    def test_sweep(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--vary", "s", "--values", "1,2,4", "--p-total", "60", "-o", str(out)]) == 0
        assert out.read_text().count("\n") == 4

    def test_simulate_with_overrides(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text(CONFIG)
        out, cmp_ = tmp_path / "r.csv", tmp_path / "c.csv"
        assert main(["simulate", "-c", str(cfg), "--steps", "1", "-o", str(out), "--compare", str(cmp_)]) == 0
        assert out.read_text().count("\n") == 2 and "w_l" in cmp_.read_text()

    def test_validate(self):
        assert main(["validate", "--suite", "model"]) == 0

    def test_netbench(self, tmp_path):
        out = tmp_path / "n.csv"
        assert main(["netbench", "--latency", "0.27", "--bandwidth", "1e8", "--sizes", "1024", "-o", str(out)]) == 0
        assert out.read_text().startswith("size,seconds,bytes_per_second")

    def test_errors_exit_2(self, tmp_path, capsys):
        assert main(["predict", "-c", str(tmp_path / "missing.ini")]) == 2
        assert main(["simulate", "--sites", "VU,UvA", "--n-mesh", "1001", "--steps", "1"]) == 2
        assert "error" in capsys.readouterr().err
