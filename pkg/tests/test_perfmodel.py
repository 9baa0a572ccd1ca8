import csv
import io
import math
import warnings
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import das3_spec, global_spec
from wanbody.perfmodel import (
    DAS3_NETWORK,
    GBBP_NETWORK,
    GBBP_SITES,
    GLOBAL_GRID_NETWORK,
    MachineConstants,
    NetworkConstants,
    RunSpec,
    StellarModelSpec,
    ThetaRangeWarning,
    average_block_size,
    bandwidth_sweep,
    bandwidth_threshold,
    efficiency,
    local_comm_time,
    memory_estimate,
    n_interactions,
    pm_time,
    predict_step,
    speedup,
    stellar_step_time,
    stellar_wan_model,
    tree_time,
    wan_comm_time,
    wan_exchange_count,
)
from wanbody.perfmodel.report import COLUMNS, prediction_row, write_predictions
from wanbody.perfmodel.tables import ALL_ROWS, multi_site_rows, single_site_rows


def n_int_oracle(N, M, theta):
    # independent evaluation of the fit in log space
    return math.exp(
        math.log(460)
        + 1.0667 * math.log(N)
        - 1.35 * math.log(theta)
        + (math.log(N) - math.log(M)) / 12
        - 0.5 * math.log(2)
    )


class TestConstants:
    def test_positive_taus(self):
        with pytest.raises(ValueError):
            MachineConstants(0.0, 1e-9, 1e-6)
        with pytest.raises(ValueError):
            MachineConstants(1e-9, -1.0, 1e-6)

    def test_network_positive(self):
        with pytest.raises(ValueError):
            NetworkConstants(0.0, 1.0, 1.0, 1.0)

    def test_star_division(self):
        assert DAS3_NETWORK.effective_sigma_wan(1) == DAS3_NETWORK.sigma_wan
        assert DAS3_NETWORK.effective_sigma_wan(3) == DAS3_NETWORK.sigma_wan / 2
        assert GBBP_NETWORK.effective_sigma_wan(4) == GBBP_NETWORK.sigma_wan


class TestRunSpec:
    def test_divisibility(self):
        with pytest.raises(ValueError):
            das3_spec(s=3, p=64)

    def test_theta_positive(self):
        with pytest.raises(ValueError):
            das3_spec(theta=0.0)

    def test_theta_warning_is_soft(self):
        spec = das3_spec(theta=0.1)
        assert spec.theta_warning
        with pytest.warns(ThetaRangeWarning):
            b = predict_step(spec)
        assert b.theta_warning and b.t_exec > 0

    def test_with_sites_replicates(self):
        spec = global_spec()
        assert spec.with_sites(4, 512).s == 4


class TestInteractions:
    @pytest.mark.parametrize(
        "N,M,theta,approx",
        [(256**3, 128**3, 0.3, 1.00e11), (256**3, 128**3, 0.5, 5.02e10), (512**3, 128**3, 0.3, 1.09e12)],
    )
    def test_examples(self, N, M, theta, approx):
        assert n_interactions(N, M, theta) == pytest.approx(n_int_oracle(N, M, theta), rel=1e-12)
        assert n_interactions(N, M, theta) == pytest.approx(approx, rel=0.01)

    @given(
        st.floats(1e3, 1e12),
        st.floats(1e3, 1e10),
        st.floats(0.2, 0.75),
    )
    def test_matches_log_oracle(self, N, M, theta):
        assert n_interactions(N, M, theta) == pytest.approx(n_int_oracle(N, M, theta), rel=1e-10)


class TestTerms:
    def test_tree_time_reference(self):
        assert tree_time(das3_spec()) == pytest.approx(11.79, rel=0.015)
        spec = RunSpec(1024**3, 256**3, 0.3, 240, (GBBP_SITES["A"],), GBBP_NETWORK, 1e-4)
        assert tree_time(spec) == pytest.approx(271.0, rel=0.015)
        ha = RunSpec(256**3, 128**3, 0.3, 60, (GBBP_SITES["H"], GBBP_SITES["A"]), GBBP_NETWORK, 1 / 2500)
        assert tree_time(ha) == pytest.approx(9.29, rel=0.015)

    def test_tree_time_arithmetic_mean(self):
        ha = RunSpec(256**3, 128**3, 0.3, 60, (GBBP_SITES["H"], GBBP_SITES["A"]), GBBP_NETWORK, 1 / 2500)
        tau = 0.5 * (3.9e-9 + 5.4e-9)
        assert tree_time(ha) == pytest.approx(1.2 * tau * n_int_oracle(256**3, 128**3, 0.3) / 60, rel=1e-12)

    def test_pm_time_examples(self):
        spec = das3_spec(n_side=512, m_side=256, p=120)
        assert pm_time(spec) == pytest.approx(5.0e-9 * 256**3 * 24 + 2.4e-6 * 512**3 / 120, rel=1e-12)
        assert pm_time(spec) == pytest.approx(4.70, abs=0.01)
        a = RunSpec(256**3, 128**3, 0.3, 60, (GBBP_SITES["A"],), GBBP_NETWORK, 1 / 2500)
        assert pm_time(a) == pytest.approx(0.39, abs=0.01)

    def test_pm_time_limit(self):
        spec = das3_spec(p=10**9)
        assert pm_time(spec) == pytest.approx(5.0e-9 * 128**3 * 21, rel=1e-3)

    def test_local_comm_reference(self):
        assert sum(local_comm_time(das3_spec())) == pytest.approx(0.13, abs=0.005)
        a = RunSpec(256**3, 128**3, 0.3, 60, (GBBP_SITES["A"],), GBBP_NETWORK, 1 / 2500)
        assert sum(local_comm_time(a)) == pytest.approx(0.04, abs=0.005)
        # 0.117 against the tabulated 0.11; inside the 0.02 s comm tolerance
        assert sum(local_comm_time(das3_spec(s=5))) == pytest.approx(0.11, abs=0.01)

    def test_local_comm_formula(self):
        spec = das3_spec(s=2)
        q = 30
        t_l = 1e-4 * (18 * math.log2(q) + 2 * q)
        vol = 4 * 128**3 + (144 / 0.3 + 72) * (256**3) ** (2 / 3) * 60 ** (-2 / 3) + 12 * 256**3 / 2500
        assert local_comm_time(spec) == pytest.approx((t_l, vol / 1e8), rel=1e-12)

    def test_wan_single_site_zero(self):
        assert wan_comm_time(das3_spec()) == (0.0, 0.0)

    def test_wan_formula(self):
        spec = das3_spec(s=3, migration_bytes=1e6)
        vol = 4 * 3 * 128**3 + (48 / 0.3 + 24) * (256**3) ** (2 / 3) + 4 * 256**3 / 2500 + 1e6
        assert wan_comm_time(spec) == pytest.approx((3e-3 * 18, vol / (5e7 / 2)), rel=1e-12)

    def test_exchange_count(self):
        assert [wan_exchange_count(s) for s in (1, 2, 3, 4, 5)] == [0, 13, 18, 23, 28]
        with pytest.raises(ValueError):
            wan_exchange_count(0)

    @pytest.mark.parametrize("s,expect", [(2, 0.73), (3, 1.63)])
    def test_das3_total_comm(self, s, expect):
        b = predict_step(das3_spec(s=s))
        assert b.t_comm + b.w_comm == pytest.approx(expect, rel=0.10)


class TestPredict:
    @pytest.mark.parametrize(
        "spec,t_exec",
        [
            (das3_spec(), 12.81),
            (das3_spec(theta=0.5), 6.93),
            (RunSpec(512**3, 128**3, 0.3, 120, (GBBP_SITES["A"],), GBBP_NETWORK, 1e-4), 59.91),
        ],
    )
    def test_reference_rows(self, spec, t_exec):
        assert predict_step(spec).t_exec == pytest.approx(t_exec, rel=0.015)

    @given(
        st.integers(1, 5),
        st.floats(0.2, 0.75),
        st.sampled_from([60, 120, 240]),
        st.floats(0, 1e9),
    )
    def test_reconstruction_identity(self, s, theta, p, mig):
        b = predict_step(das3_spec(s=s, theta=theta, p=p, migration_bytes=mig))
        parts = b.t_tree + b.t_pm + b.t_l + b.t_b + b.w_l + b.w_b
        assert b.t_exec == pytest.approx(parts, rel=1e-12)

    @given(st.floats(1.01, 10.0), st.sampled_from(["lambda_lan", "lambda_wan", "sigma_lan", "sigma_wan"]))
    def test_monotone_in_network(self, factor, attr):
        spec = das3_spec(s=3)
        bigger = replace(spec, network=replace(spec.network, **{attr: getattr(spec.network, attr) * factor}))
        t0, t1 = predict_step(spec).t_exec, predict_step(bigger).t_exec
        if attr.startswith("lambda"):
            assert t1 > t0
        else:
            assert t1 < t0

    @given(st.floats(0.2, 0.7))
    def test_monotone_in_interactions(self, theta):
        # smaller theta means more interactions
        assert predict_step(das3_spec(theta=theta)).t_exec > predict_step(das3_spec(theta=theta + 0.05)).t_exec


class TestTables:
    @pytest.mark.parametrize("row", single_site_rows(), ids=lambda r: f"{r.table}-{r.n_side}-{r.sites}")
    def test_single_site_tree_exec(self, row):
        b = predict_step(row.spec())
        assert b.t_tree == pytest.approx(row.t_tree, rel=0.015)
        assert b.t_exec == pytest.approx(row.t_exec, rel=0.015)

    @pytest.mark.parametrize("row", multi_site_rows(), ids=lambda r: f"{r.table}-{r.n_side}-{r.sites}")
    def test_multi_site_tree(self, row):
        # one 1024^3 GBBP row lands 2.5% off; see the acceptance report
        b = predict_step(row.spec())
        assert b.t_tree == pytest.approx(row.t_tree, rel=0.03)

    def test_fixture_sizes(self):
        assert len(ALL_ROWS) > 20
        assert all(r.s >= 1 for r in ALL_ROWS)


class TestScaling:
    def test_identities(self):
        spec = global_spec(p=128)
        assert speedup(spec, 1) == 1.0
        assert efficiency(spec, 1) == 1.0

    def test_speedup_sixteen(self):
        assert 12 <= speedup(global_spec(p=128), 16) <= 14

    @given(st.floats(0.1, 10.0), st.sampled_from([2, 4, 8]))
    @settings(max_examples=30)
    def test_scale_free(self, c, s):
        spec = global_spec(p=256)
        site = spec.sites[0]
        net = spec.network
        scaled = replace(
            spec,
            sites=(MachineConstants(site.tau_tree * c, site.tau_fft * c, site.tau_mesh * c),),
            network=NetworkConstants(net.lambda_lan * c, net.lambda_wan * c, net.sigma_lan / c, net.sigma_wan / c),
        )
        assert efficiency(scaled, s) == pytest.approx(efficiency(spec, s), rel=1e-9)
        assert speedup(scaled, s) == pytest.approx(speedup(spec, s), rel=1e-9)

    def test_sweep_monotone_and_limit(self):
        spec = global_spec()
        sig = [1e6 * 2**k for k in range(30)]
        curve = bandwidth_sweep(spec, 8, sig)
        es = [e for _, e in curve]
        assert all(b >= a for a, b in zip(es, es[1:]))
        huge = bandwidth_sweep(spec, 8, [1e30])[0][1]
        # lambda-only ceiling: drop the bandwidth term entirely
        single = predict_step(spec.with_sites(1, spec.p_total)).t_exec
        multi = predict_step(spec.with_sites(8, spec.p_total))
        assert huge == pytest.approx(single / (multi.t_exec - multi.w_b), rel=1e-9)

    def test_sweep_errors(self):
        with pytest.raises(ValueError):
            bandwidth_sweep(global_spec(), 8, [])
        with pytest.raises(ValueError):
            bandwidth_sweep(global_spec(), 8, [0.0])

    def test_threshold(self):
        spec = global_spec(m_side=1024)
        sigma = bandwidth_threshold(spec, 8, 0.8)
        assert efficiency(replace(spec, network=spec.network.with_wan(sigma_wan=sigma)), 8) >= 0.8 - 1e-9
        assert efficiency(replace(spec, network=spec.network.with_wan(sigma_wan=sigma * 0.99)), 8) < 0.8


class TestStellar:
    def test_latency(self):
        net = replace(GLOBAL_GRID_NETWORK, lambda_wan=0.3)
        cost = stellar_wan_model(StellarModelSpec("tree-shared", 1.0, 1e6), 4, net)
        assert cost.w_l_tree == pytest.approx(4.8)
        assert cost.steps_per_shared == 1.0

    def test_bandwidth(self):
        N = 2048**3
        cost = stellar_wan_model(StellarModelSpec("tree-shared", 1.0, N), 4, GLOBAL_GRID_NETWORK)
        expect = ((96 / 0.5 + 48) * N ** (2 / 3) + 4 * N * 1e-4) / 4e8
        assert cost.w_b_tree == pytest.approx(expect, rel=1e-12)
        assert cost.w_b_tree == pytest.approx(2.52, rel=0.01)

    def test_block_size(self):
        assert average_block_size(2048**3) == pytest.approx(2.23e7, rel=0.01)
        blk = stellar_wan_model(StellarModelSpec("tree-block", 1.0, 2048**3), 4, GLOBAL_GRID_NETWORK)
        assert blk.steps_per_shared == pytest.approx(2048**3 / average_block_size(2048**3))
        over = stellar_wan_model(StellarModelSpec("direct-block", 1.0, 1e6, block_size_override=100), 2, GLOBAL_GRID_NETWORK)
        assert over.steps_per_shared == 1e4

    def test_step_time(self):
        spec = StellarModelSpec("tree-shared", 2.0, 1e6)
        assert stellar_step_time(spec, 1, GLOBAL_GRID_NETWORK) == 2.0
        assert stellar_step_time(spec, 2, GLOBAL_GRID_NETWORK) > 2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            StellarModelSpec("tree", 1.0, 10)
        with pytest.raises(ValueError):
            StellarModelSpec("tree-shared", -1.0, 10)


class TestMemory:
    def test_examples(self):
        assert memory_estimate(2048**3, 0)[0] == pytest.approx(850e9, rel=0.01)
        assert memory_estimate(8192**3, 0)[0] == pytest.approx(54.4e12, rel=0.02)
        assert memory_estimate(0, 0) == (0.0, 0.0)
        assert memory_estimate(10, 8)[1] == 36.0


class TestReport:
    def test_columns_and_rows(self):
        text = write_predictions([prediction_row(das3_spec(s=2)), prediction_row(global_spec(), s=8, sigma_wan=1e9)])
        rows = list(csv.DictReader(io.StringIO(text)))
        assert tuple(rows[0]) == COLUMNS
        assert rows[1]["s"] == "8"

    def test_row_consistency(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            row = prediction_row(das3_spec(s=2))
        assert row["t_exec"] == pytest.approx(predict_step(das3_spec(s=2)).t_exec)
