"""Short/long-range force split used by the TreePM scheme.

The mass of each particle is shared between a point mass and a compact
``S2`` shape of diameter ``r_cut`` (a linear density ramp).  The tree
handles the difference between the two, which vanishes identically at
``r >= r_cut``; the mesh handles the smooth remainder through the form
factor of the shape.
"""

from __future__ import annotations

import numpy as np


def short_range_taper(r, r_cut: float):
    """Fraction of the Newtonian pair force carried by the short-range part.

    Equals 1 at ``r = 0``, falls smoothly and is exactly 0 for ``r >= r_cut``.
    """
    R = 2.0 * np.asarray(r, dtype=float) / r_cut
    out = np.zeros_like(R)
    inner = R <= 1.0
    outer = (R > 1.0) & (R < 2.0)
    x = R[inner]
    out[inner] = 1.0 - (224 * x**3 - 224 * x**5 + 70 * x**6 + 48 * x**7 - 21 * x**8) / 140.0
    x = R[outer]
    out[outer] = 1.0 - (12 - 224 * x**2 + 896 * x**3 - 840 * x**4 + 224 * x**5 + 70 * x**6 - 48 * x**7 + 7 * x**8) / 140.0
    return out


def shape_form_factor(k, r_cut: float):
    """Fourier transform of the unit-mass S2 shape of diameter ``r_cut``."""
    x = 0.5 * np.asarray(k, dtype=float) * r_cut
    out = np.ones_like(x)
    big = x > 0.1
    xb = x[big]
    out[big] = 12.0 / xb**4 * (2.0 - 2.0 * np.cos(xb) - xb * np.sin(xb))
    # series near the origin avoids catastrophic cancellation
    xs = x[~big]
    out[~big] = 1.0 - xs**2 / 15.0 + xs**4 / 560.0 - xs**6 / 37800.0
    return out
