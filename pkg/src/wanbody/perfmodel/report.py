"""CSV emission of model predictions, one row per (spec, s, sigma)."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import replace
from typing import Iterable, TextIO

from .model import RunSpec, ThetaRangeWarning, efficiency, predict_step

COLUMNS = ("N", "M", "p", "s", "theta", "t_tree", "t_pm", "t_l", "t_b", "w_l", "w_b", "t_exec", "S", "E")


def prediction_row(spec: RunSpec, s: int | None = None, sigma_wan: float | None = None) -> dict:
    """Breakdown of ``spec`` evaluated on ``s`` sites at a fixed total process count.

    ``S`` uses ``p_total / s`` processes per site for the scaled run, so it is
    only meaningful when ``p_total`` is divisible by ``s``.
    """
    if sigma_wan is not None:
        spec = replace(spec, network=spec.network.with_wan(sigma_wan=sigma_wan))
    s = spec.s if s is None else s
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThetaRangeWarning)
        target = spec.with_sites(s, spec.p_total) if s != spec.s else spec
        b = predict_step(target)
        # S(s) = t(1, p/s) / t(s, p): the single-site reference uses p/s processes
        S = predict_step(spec.with_sites(1, spec.p_total // s)).t_exec / b.t_exec if s > 1 else 1.0
        E = efficiency(spec, s)
    return {
        "N": b.n_particles,
        "M": b.n_mesh,
        "p": b.p_total,
        "s": b.s,
        "theta": b.theta,
        "t_tree": b.t_tree,
        "t_pm": b.t_pm,
        "t_l": b.t_l,
        "t_b": b.t_b,
        "w_l": b.w_l,
        "w_b": b.w_b,
        "t_exec": b.t_exec,
        "S": S,
        "E": E,
    }


def write_predictions(rows: Iterable[dict], fh: TextIO | None = None) -> str | None:
    """Write rows in the fixed column order; returns the text when ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    writer = csv.DictWriter(out, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{row[k]:.6g}" if isinstance(row[k], float) else row[k]) for k in COLUMNS})
    return out.getvalue() if fh is None else None
