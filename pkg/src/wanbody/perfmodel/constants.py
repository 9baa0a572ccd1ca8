"""Machine and network constants used by the step-time model.

The preset values are the per-site and per-network calibrations measured on
the DAS-3 grid, the four GBBP supercomputers and the hypothetical global grid
used for scalability projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class MachineConstants:
    """Per-site compute timings.

    Attributes
    ----------
    tau_tree : float
        Seconds per tree interaction.
    tau_fft : float
        Seconds per FFT operation.
    tau_mesh : float
        Seconds per particle for mesh assignment and interpolation.
    name : str
        Free-form label.
    """

    tau_tree: float
    tau_fft: float
    tau_mesh: float
    name: str = ""

    def __post_init__(self):
        for attr in ("tau_tree", "tau_fft", "tau_mesh"):
            value = getattr(self, attr)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{attr} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class NetworkConstants:
    """Round-trip times (seconds) and bandwidths (bytes/second) of the local
    and wide-area networks.

    With ``star_topology`` set the wide-area links share one uplink, so the
    bandwidth available to a run over ``s >= 2`` sites is ``sigma_wan / (s - 1)``.
    """

    lambda_lan: float
    lambda_wan: float
    sigma_lan: float
    sigma_wan: float
    star_topology: bool = False

    def __post_init__(self):
        for attr in ("lambda_lan", "lambda_wan", "sigma_lan", "sigma_wan"):
            value = getattr(self, attr)
            if not value > 0:
                raise ValueError(f"{attr} must be positive, got {value!r}")

    def effective_sigma_wan(self, s: int) -> float:
        if self.star_topology and s >= 2:
            return self.sigma_wan / (s - 1)
        return self.sigma_wan

    def with_wan(self, *, lambda_wan: float | None = None, sigma_wan: float | None = None) -> NetworkConstants:
        changes = {}
        if lambda_wan is not None:
            changes["lambda_wan"] = lambda_wan
        if sigma_wan is not None:
            changes["sigma_wan"] = sigma_wan
        return replace(self, **changes)


# DAS-3 sites in their fixed run ordering.
DAS3_SITES = {
    "VU": MachineConstants(5.9e-9, 5.0e-9, 2.4e-6, "VU"),
    "UvA": MachineConstants(6.4e-9, 5.0e-9, 2.4e-6, "UvA"),
    "LIACS": MachineConstants(5.4e-9, 5.7e-9, 2.4e-6, "LIACS"),
    "TU": MachineConstants(5.9e-9, 5.0e-9, 1.9e-6, "TU"),
    "MM": MachineConstants(5.9e-9, 5.0e-9, 2.4e-6, "MM"),
}
DAS3_ORDER = ("VU", "UvA", "LIACS", "TU", "MM")

# GBBP supercomputers keyed by the single-letter codes used in run labels:
# H = Espoo, E = Edinburgh, A = Amsterdam, T = Tokyo.
GBBP_SITES = {
    "A": MachineConstants(5.4e-9, 5.1e-9, 5.8e-7, "Huygens"),
    "H": MachineConstants(3.9e-9, 3.4e-9, 7.8e-7, "Louhi"),
    "E": MachineConstants(4.0e-9, 3.4e-9, 7.8e-7, "HECToR"),
    "T": MachineConstants(4.3e-9, 3.4e-9, 7.8e-7, "CFCA"),
}

DAS3_NETWORK = NetworkConstants(
    lambda_lan=1.0e-4, lambda_wan=3.0e-3, sigma_lan=1.0e8, sigma_wan=5.0e7, star_topology=True
)
GBBP_NETWORK = NetworkConstants(lambda_lan=8.0e-5, lambda_wan=2.7e-1, sigma_lan=5.4e8, sigma_wan=5.0e7)

GLOBAL_GRID_SITE = MachineConstants(5.0e-9, 3.5e-9, 7.5e-7, "global-grid")
GLOBAL_GRID_NETWORK = NetworkConstants(lambda_lan=8.0e-5, lambda_wan=3.0e-1, sigma_lan=2.3e9, sigma_wan=4.0e8)


@dataclass(frozen=True)
class Preset:
    name: str
    sites: dict[str, MachineConstants] = field(repr=False)
    order: tuple[str, ...]
    network: NetworkConstants


PRESETS = {
    "das3": Preset("das3", DAS3_SITES, DAS3_ORDER, DAS3_NETWORK),
    "gbbp": Preset("gbbp", GBBP_SITES, ("A", "H", "E", "T"), GBBP_NETWORK),
    "global-grid": Preset("global-grid", {"G": GLOBAL_GRID_SITE}, ("G",), GLOBAL_GRID_NETWORK),
}


def gbbp_roster(label: str) -> tuple[MachineConstants, ...]:
    """Sites for a GBBP run label such as ``"HEA"``; a trailing ``*`` is ignored."""
    return tuple(GBBP_SITES[c] for c in label.rstrip("*"))
