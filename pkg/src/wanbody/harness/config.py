"""Line-based ``key = value`` configuration with ``[section]`` headers.

Sections
--------
``[run]``
    ``preset`` (das3, gbbp, global-grid), ``sites`` (comma separated names
    from the preset or from ``[site NAME]`` sections), ``n_particles``,
    ``n_mesh``, ``theta``, ``p_total``, ``r_samp``, ``migration_bytes``,
    ``pm_site``, and the simulation keys ``steps``, ``backend``, ``dt``,
    ``dt_max``, ``softening``, ``seed``, ``ic``, ``snapshot_every``,
    ``snapshot_dir``, ``move_limit``, ``theta_schedule`` (``step:theta``
    pairs).
``[network]``
    ``lambda_lan``, ``lambda_wan``, ``sigma_lan``, ``sigma_wan``,
    ``star_topology``; unset keys come from the preset.
``[site NAME]``
    ``tau_tree``, ``tau_fft``, ``tau_mesh``.
``[transport]``
    ``streams``, ``send_chunk``, ``recv_chunk``, ``pacing_rate``,
    ``buffer_size``, ``timeout``, or ``profile`` naming a tuning profile.

Command-line values override file values key by key.
"""

from __future__ import annotations

import configparser
from dataclasses import replace

from ..perfmodel.constants import PRESETS, MachineConstants, NetworkConstants
from ..perfmodel.model import RunSpec
from ..transport.config import ChannelConfig, profile
from .experiment import ExperimentConfig

RUN_DEFAULTS = {
    "preset": "das3",
    "n_particles": "4096",
    "n_mesh": "4096",
    "theta": "0.5",
    "r_samp": "0.0625",
    "migration_bytes": "0",
    "pm_site": "0",
    "steps": "10",
    "backend": "simulated",
    "softening": "0.01",
    "seed": "0",
    "ic": "lattice",
    "snapshot_every": "0",
}

_INT_KEYS = {"steps", "seed", "snapshot_every", "p_total", "pm_site", "streams", "send_chunk", "recv_chunk", "buffer_size"}


def load_config(path=None, text: str | None = None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    if text is not None:
        cp.read_string(text)
    if not cp.has_section("run"):
        cp.add_section("run")
    return cp


def apply_overrides(cp: configparser.ConfigParser, section: str, values: dict) -> None:
    """Set non-None ``values`` in ``section``, creating it when needed."""
    for k, v in values.items():
        if v is None:
            continue
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, k, str(v))


def _run(cp, key, default=None):
    return cp.get("run", key, fallback=RUN_DEFAULTS.get(key, default))


def _float(cp, section, key, default=None):
    raw = cp.get(section, key, fallback=None)
    return default if raw is None else float(raw)


def network_from(cp) -> NetworkConstants:
    preset = PRESETS[_run(cp, "preset")]
    net = preset.network
    if not cp.has_section("network"):
        return net
    changes = {}
    for key in ("lambda_lan", "lambda_wan", "sigma_lan", "sigma_wan"):
        v = _float(cp, "network", key)
        if v is not None:
            changes[key] = v
    if cp.has_option("network", "star_topology"):
        changes["star_topology"] = cp.getboolean("network", "star_topology")
    return replace(net, **changes)


def sites_from(cp) -> tuple[MachineConstants, ...]:
    preset = PRESETS[_run(cp, "preset")]
    names = [n.strip() for n in _run(cp, "sites", ",".join(preset.order[:1])).split(",") if n.strip()]
    custom = {}
    for sec in cp.sections():
        if sec.startswith("site "):
            name = sec[5:].strip()
            custom[name] = MachineConstants(
                float(cp.get(sec, "tau_tree")), float(cp.get(sec, "tau_fft")), float(cp.get(sec, "tau_mesh")), name
            )
    out = []
    for n in names:
        if n in custom:
            out.append(custom[n])
        elif n in preset.sites:
            out.append(preset.sites[n])
        else:
            raise ValueError(f"unknown site {n!r}; preset {preset.name} has {sorted(preset.sites)}")
    return tuple(out)


def run_spec_from(cp) -> RunSpec:
    sites = sites_from(cp)
    return RunSpec(
        n_particles=float(_run(cp, "n_particles")),
        n_mesh=float(_run(cp, "n_mesh")),
        theta=float(_run(cp, "theta")),
        p_total=int(float(_run(cp, "p_total", len(sites)))),
        sites=sites,
        network=network_from(cp),
        r_samp=float(_run(cp, "r_samp")),
        migration_bytes=float(_run(cp, "migration_bytes")),
        pm_site=int(_run(cp, "pm_site")),
    )


def channel_from(cp, backend: str) -> ChannelConfig:
    sec = "transport"
    if cp.has_option(sec, "profile"):
        base = profile(cp.get(sec, "profile"))
    else:
        base = ChannelConfig(backend="tcp" if backend == "tcp" else "simulated")
    changes = {}
    if cp.has_section(sec):
        for key, raw in cp.items(sec):
            if key == "profile":
                continue
            if key in _INT_KEYS:
                changes[key] = int(float(raw))
            elif key == "pacing_rate":
                changes[key] = None if raw.lower() in ("none", "") else float(raw)
            else:
                changes[key] = float(raw)
    changes["backend"] = "tcp" if backend == "tcp" else "simulated"
    return base.with_(**changes)


def parse_schedule(raw: str | None) -> dict | None:
    """``"0:0.5, 5:0.3"`` → ``{0: 0.5, 5: 0.3}``."""
    if not raw:
        return None
    out = {}
    for item in raw.split(","):
        step, theta = item.split(":")
        out[int(step)] = float(theta)
    return out


def experiment_from(cp) -> ExperimentConfig:
    backend = _run(cp, "backend")
    dt_raw = _run(cp, "dt")
    dt_max_raw = _run(cp, "dt_max")
    if dt_raw is None and dt_max_raw is None:
        dt_raw = "0.001"
    kwargs = dict(
        spec=run_spec_from(cp),
        backend=backend,
        steps=int(_run(cp, "steps")),
        theta_schedule=parse_schedule(_run(cp, "theta_schedule")),
        snapshot_every=int(_run(cp, "snapshot_every")),
        snapshot_dir=_run(cp, "snapshot_dir"),
        seed=int(_run(cp, "seed")),
        ic=_run(cp, "ic"),
        softening=float(_run(cp, "softening")),
        dt=None if dt_raw is None else float(dt_raw),
        dt_max=None if dt_max_raw is None else float(dt_max_raw),
        channel=channel_from(cp, backend),
    )
    for key in ("ic_noise", "box", "eta", "cutoff_cells", "margin_cells", "move_limit"):
        raw = _run(cp, key)
        if raw is not None:
            kwargs[key] = float(raw)
    for key in ("ncrit", "n_leaf"):
        raw = _run(cp, key)
        if raw is not None:
            kwargs[key] = int(raw)
    return ExperimentConfig(**kwargs)
