"""Power-kernel helpers for fractional-derivative weights.

The weakly singular kernel of the Caputo derivative is built from the
power family omega_beta(t) = t^(beta-1) / Gamma(beta).  Everything here
is vectorised over t and safe for the negative beta values that show up
in higher derivatives of the kernel.
"""

from __future__ import annotations

import numpy as np
from scipy.special import rgamma


def omega(beta: float, t):
    """Evaluate t^(beta-1) / Gamma(beta) for t > 0 (any real beta).

    rgamma handles beta <= 0 (including the poles, where the value is 0).
    """
    t = np.asarray(t, dtype=float)
    return t ** (beta - 1.0) * rgamma(beta)


def omega_diff(beta: float, lo, gap):
    """Stable omega_beta(lo + gap) - omega_beta(lo) for lo > 0, gap > 0, beta > 0.

    The naive difference cancels catastrophically when gap << lo; expm1/log1p
    keeps full relative accuracy for every gap size.
    """
    lo = np.asarray(lo, dtype=float)
    gap = np.asarray(gap, dtype=float)
    return lo ** (beta - 1.0) * np.expm1((beta - 1.0) * np.log1p(gap / lo)) * rgamma(beta)
