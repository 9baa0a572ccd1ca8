"""Comparison of measured step structure with the step-time model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

from ..decomposition.let import model_let_bytes
from ..perfmodel.model import RunSpec, predict_step, wan_exchange_count
from .experiment import PHASE_NAMES, StepRecord


@dataclass(frozen=True)
class ModelComparison:
    term: str
    measured: float
    predicted: float
    tolerance: float  # absolute; inf for informational rows

    @property
    def ok(self) -> bool:
        return abs(self.measured - self.predicted) <= self.tolerance

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted if self.predicted else math.nan


def _per_step(records, getter):
    return float(np.mean([getter(r) for r in records]))


def compare_with_model(records: list[StepRecord], spec: RunSpec) -> list[ModelComparison]:
    """Measured against predicted per-step terms.

    Exchange counts and the latency term are exact identities of the
    accounting; gathered mesh bytes must equal ``4 s M``; gathered sample
    bytes must equal ``4 N r_samp`` up to one record per site because each
    site rounds its sample count up.  The bandwidth term is checked in
    closed form: the model's volume formula with the measured LET and
    migration bytes substituted must equal the measured volume divided by
    the link bandwidth.  Timing rows are informational.
    """
    if not records:
        raise ValueError("no records")
    s = spec.s
    net = spec.network
    pred = predict_step(spec)
    sigma = net.effective_sigma_wan(s)
    exch = _per_step(records, lambda r: r.wan_exchanges)
    rows = [
        ModelComparison("wan_exchanges", exch, float(wan_exchange_count(s)), 0.0),
        ModelComparison("w_l", _per_step(records, lambda r: r.latency), pred.w_l, 1e-12 * max(pred.w_l, 1.0)),
    ]
    if s == 1:
        rows.append(ModelComparison("w_b", _per_step(records, lambda r: r.bandwidth), 0.0, 0.0))
        return rows

    mesh = _per_step(records, lambda r: r.gathered.get("mesh_density", 0))
    samples = _per_step(records, lambda r: r.gathered.get("samples", 0))
    let_bytes = _per_step(records, lambda r: r.let_bytes)
    mig = _per_step(records, lambda r: r.phase_bytes["migration"] / 2)
    rows += [
        ModelComparison("mesh_bytes", mesh, 4.0 * s * spec.n_mesh, 0.0),
        ModelComparison("sample_bytes", samples, 4.0 * spec.n_particles * spec.r_samp, 4.0 * s),
        ModelComparison("let_bytes", let_bytes, model_let_bytes(spec.n_particles, spec.theta), math.inf),
        ModelComparison("migration_bytes", mig, spec.migration_bytes, math.inf),
    ]
    volume = mesh + let_bytes + samples + mig
    measured_wb = volume / sigma
    model_volume = (
        4.0 * s * spec.n_mesh
        + let_bytes
        + 4.0 * spec.n_particles * spec.r_samp
        + mig
    )
    rows += [
        ModelComparison("w_b(measured bytes)", measured_wb, model_volume / sigma, 4.0 * s / sigma),
        ModelComparison("w_b", measured_wb, pred.w_b, math.inf),
        ModelComparison("comm_seconds", _per_step(records, lambda r: r.comm_seconds), pred.w_l + pred.w_b, math.inf),
        ModelComparison("link_bandwidth_seconds", _per_step(records, lambda r: r.bandwidth), pred.w_b, math.inf),
    ]
    return rows


def write_comparison_csv(fh, rows: list[ModelComparison]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["term", "measured", "predicted", "ratio", "ok"])
    for r in rows:
        w.writerow([r.term, repr(r.measured), repr(r.predicted), f"{r.ratio:.6g}", int(r.ok)])


# ------------------------------------------------------------------ averaging


def _flatten(rec: StepRecord) -> dict[str, float]:
    out = {}
    for f in fields(rec):
        v = getattr(rec, f.name)
        if isinstance(v, bool) or f.name in ("step", "clock", "slabs", "domain_counts"):
            continue
        if isinstance(v, (int, float)):
            out[f.name] = float(v)
        elif isinstance(v, dict):
            for k, x in v.items():
                out[f"{f.name}.{k}"] = float(x)
        elif isinstance(v, tuple):
            for k, x in enumerate(v):
                out[f"{f.name}.{k}"] = float(x)
    out["comm_seconds"] = rec.comm_seconds
    return out


@dataclass(frozen=True)
class WindowAverage:
    """Mean and population standard deviation of every numeric field."""

    n: int
    mean: dict
    std: dict


def average_window(records: list[StepRecord], window: int) -> WindowAverage:
    """Average the last ``window`` records (two-pass variance)."""
    if not 1 <= window <= len(records):
        raise ValueError(f"window must lie in [1, {len(records)}], got {window}")
    flat = [_flatten(r) for r in records[-window:]]
    keys = [k for k in flat[0] if all(k in f for f in flat)]
    mean, std = {}, {}
    for k in keys:
        # shifted by the first sample so a constant window has exactly zero spread
        x = np.array([f[k] for f in flat])
        d = x - x[0]
        m = d.sum() / window
        mean[k] = float(x[0] + m)
        std[k] = float(np.sqrt(((d - m) ** 2).sum() / window))
    return WindowAverage(window, mean, std)


RECORD_COLUMNS = (
    "step",
    "clock",
    "total_seconds",
    "tree_seconds",
    "pm_seconds",
    *(f"comm_{p}" for p in PHASE_NAMES),
    "interactions",
    "wan_exchanges",
    "latency",
    "bandwidth",
    "dt",
    "theta",
    "counts",
    "t_calc",
)


def write_records_csv(fh, records: list[StepRecord]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow(
            [
                r.step,
                r.clock,
                repr(r.total_seconds),
                repr(r.tree_seconds),
                repr(r.pm_seconds),
                *(repr(r.comm[p]) for p in PHASE_NAMES),
                r.interactions,
                r.wan_exchanges,
                repr(r.latency),
                repr(r.bandwidth),
                repr(r.dt),
                r.theta,
                " ".join(map(str, r.counts)),
                " ".join(f"{x:.6g}" for x in r.t_calc),
            ]
        )
