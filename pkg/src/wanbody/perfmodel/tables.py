"""Model columns of the reference DAS-3 and GBBP run tables.

Each row stores the tabulated *model* predictions (not the measured
columns): local-only communication, local plus wide-area communication,
tree time and total step time, all in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

from .constants import DAS3_NETWORK, DAS3_ORDER, DAS3_SITES, GBBP_NETWORK, gbbp_roster
from .model import RunSpec


@dataclass(frozen=True)
class TableRow:
    table: str
    grid: str  # "das3" or "gbbp"
    n_side: int
    m_side: int
    p_total: int
    sites: str  # site count for DAS-3, run label for GBBP
    theta: float
    comm_local: float
    comm_total: float
    t_tree: float
    t_exec: float

    @property
    def s(self) -> int:
        return int(self.sites) if self.grid == "das3" else len(self.sites.rstrip("*"))

    @property
    def legacy(self) -> bool:
        """The 2048^3 row was produced by an older code version with other settings."""
        return self.n_side == 2048

    @property
    def r_samp(self) -> float:
        return 1.0 / 2500 if self.n_side == 256 else 1.0 / 10000

    def spec(self, migration_bytes: float = 0.0) -> RunSpec:
        if self.grid == "das3":
            roster = tuple(DAS3_SITES[k] for k in DAS3_ORDER[: self.s])
            network, pm_site = DAS3_NETWORK, 0
        else:
            label = self.sites.rstrip("*")
            roster = gbbp_roster(label)
            network = GBBP_NETWORK
            # serial PM ran in Amsterdam whenever it took part
            pm_site = label.index("A") if "A" in label else 0
        return RunSpec(
            n_particles=self.n_side**3,
            n_mesh=self.m_side**3,
            theta=self.theta,
            p_total=self.p_total,
            sites=roster,
            network=network,
            r_samp=self.r_samp,
            migration_bytes=migration_bytes,
            pm_site=pm_site,
        )


def _rows(table, grid, theta, text):
    out = []
    for line in text.strip().splitlines():
        n, m, p, s, cl, ct, tt, te = line.split()
        out.append(TableRow(table, grid, int(n), int(m), int(p), s, theta, float(cl), float(ct), float(tt), float(te)))
    return out


DAS3_THETA03 = _rows("das3-theta0.3", "das3", 0.3, """
256 128 60 1 0.13 0.13 11.79 12.81
256 128 60 2 0.12 0.73 12.29 13.91
256 128 60 3 0.12 1.63 11.79 14.35
256 128 60 4 0.11 2.85 11.79 15.53
256 128 60 5 0.11 4.40 11.79 17.09
512 128 120 1 0.18 0.18 64.44 67.52
512 128 120 2 0.16 2.84 67.17 72.92
512 128 120 3 0.16 5.82 64.44 73.19
512 128 120 4 0.15 9.11 64.44 76.35
512 128 120 5 0.15 12.73 64.44 79.99
512 256 120 1 0.74 0.74 54.19 59.62
512 256 120 2 0.72 5.64 56.48 66.83
512 256 120 3 0.72 13.10 54.19 72.26
512 256 120 4 0.71 23.11 54.19 82.14
512 256 120 5 0.71 35.69 54.19 94.74
""")

DAS3_THETA05 = _rows("das3-theta0.5", "das3", 0.5, """
256 128 60 1 0.12 0.12 5.92 6.93
256 128 60 2 0.11 0.64 6.17 7.70
256 128 60 3 0.11 1.46 5.92 8.30
256 128 60 4 0.11 2.61 5.92 9.41
256 128 60 5 0.10 4.07 5.92 10.88
512 128 120 1 0.16 0.16 32.33 35.40
512 128 120 2 0.14 2.50 33.70 39.11
512 128 120 3 0.14 5.16 32.33 40.43
512 128 120 4 0.13 8.13 32.33 43.26
512 128 120 5 0.13 11.43 32.33 46.58
512 256 120 1 0.72 0.72 27.19 32.60
512 256 120 2 0.70 5.30 28.34 38.34
512 256 120 3 0.70 12.44 27.19 44.61
512 256 120 4 0.69 22.13 27.19 54.16
512 256 120 5 0.69 34.39 27.19 66.44
""")

GBBP_THETA03 = _rows("gbbp-theta0.3", "gbbp", 0.3, """
256 128 60 A 0.04 0.03 10.79 11.22
256 128 60 HA 0.03 1.06 9.29 10.74
256 128 60 EA 0.03 1.06 9.39 10.84
256 128 60 AT 0.03 4.23 9.69 14.31
256 128 60 HEA* 0.03 1.66 8.86 10.91
512 128 120 A 0.06 0.06 58.98 59.91
512 128 120 HA 0.04 3.14 50.79 54.91
512 128 120 HEA 0.04 4.19 48.42 53.64
512 128 120 HEA* 0.04 4.19 48.42 53.64
512 128 120 HEAT* 0.04 9.42 48.06 58.52
512 256 120 A 0.16 0.16 49.60 52.46
512 256 120 HA 0.15 5.48 42.71 51.01
512 256 120 EA 0.15 5.48 43.17 51.47
512 256 120 AT 0.15 8.66 44.54 56.02
512 256 120 HEA 0.14 7.66 40.72 51.22
1024 256 240 E 0.20 0.20 200.7 205.8
1024 256 240 A 0.20 0.20 271.0 275.8
1024 256 240 HA 0.18 23.88 233.4 262.3
1024 256 240 HEA 0.17 26.05 217.1 248.4
""")

GBBP_THETA05 = _rows("gbbp-theta0.5", "gbbp", 0.5, """
256 128 60 A 0.04 0.04 5.42 5.84
256 128 60 HA 0.03 0.98 4.66 6.03
256 128 60 EA 0.03 0.98 4.71 6.08
256 128 60 AT 0.03 4.15 4.86 9.40
256 128 60 HEA* 0.03 1.58 4.45 6.41
512 128 120 A 0.05 0.05 29.59 30.52
512 128 120 HA 0.04 2.82 25.48 29.29
512 128 120 HEA 0.04 3.87 24.30 29.19
512 128 120 HEA* 0.04 3.87 24.30 29.19
512 128 120 HEAT* 0.03 9.09 24.11 34.25
512 256 120 A 0.16 0.16 24.89 27.74
512 256 120 HA 0.14 5.16 21.43 29.40
512 256 120 EA 0.14 5.16 21.66 29.63
512 256 120 AT 0.14 8.33 22.35 33.50
512 256 120 HEA 0.14 7.33 20.43 30.61
1024 256 240 HA 0.17 22.59 117.1 144.8
2048 256 750 AT 0.26 17.59 443.2 470.3
""")

ALL_ROWS = DAS3_THETA03 + DAS3_THETA05 + GBBP_THETA03 + GBBP_THETA05


def single_site_rows():
    return [r for r in ALL_ROWS if r.s == 1]


def multi_site_rows(include_legacy: bool = False):
    return [r for r in ALL_ROWS if r.s > 1 and (include_legacy or not r.legacy)]
