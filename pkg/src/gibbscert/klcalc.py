"""Binary KL divergence, its upper inversion by bisection, and the Pinsker gap.

These three functions are the numeric kernel shared by every certificate:
a bound of the form kl(q || p) <= tau is converted into an upper bound on
the unknown p by inverting the divergence in its second argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .validation import check_nonnegative, check_positive_int

# Probes this close to {0, 1} are clamped before taking logs so that the
# bisection never evaluates an infinite divergence.
_P_CLIP = 1e-12

# Once the bracket is narrower than the configured tolerance, bisection keeps
# refining until kl(q, result) is within this slack of tau (interior case).
_KL_SLACK = 5e-7


@dataclass(frozen=True)
class KlInversionConfig:
    """Stopping rule for the bisection: bracket width and iteration cap."""

    tolerance: float = 1e-9
    max_iterations: int = 1000

    def __post_init__(self) -> None:
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance!r}")
        check_positive_int("max_iterations", self.max_iterations)


DEFAULT_INVERSION = KlInversionConfig()


def kl(q, p):
    """kl(q || p) = q ln(q/p) + (1-q) ln((1-q)/(1-p)) with 0 ln 0 = 0.

    Accepts scalars or broadcastable arrays.  q must lie in [0, 1] and p in
    the open interval (0, 1).
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(q < 0.0) or np.any(q > 1.0) or not np.all(np.isfinite(q)):
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError(f"p must lie in the open interval (0, 1), got {p!r}")
    p = np.clip(p, _P_CLIP, 1.0 - _P_CLIP)
    out = xlogy(q, q / p) + xlogy(1.0 - q, (1.0 - q) / (1.0 - p))
    return float(out) if out.ndim == 0 else out


def kl_inv_upper(q: float, tau: float, cfg: KlInversionConfig = DEFAULT_INVERSION) -> float:
    """Largest p in (0, 1) with kl(q || p) <= tau, found by bisection.

    The returned value is the feasible (lower) end of the final bracket, so
    kl(q, result) <= tau always holds.  The result is nondecreasing in both
    arguments, is at least q, and approaches 1 when tau exceeds the supremum
    of kl(q || p) over p.
    """
    q = float(q)
    tau = float(tau)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    check_nonnegative("tau", tau)
    if q >= 1.0:
        # kl(1 || p) = -ln p falls below any tau >= 0 as p -> 1.
        return 1.0
    if tau == 0.0:
        # {p : kl(q || p) <= 0} is exactly {q}.
        return q

    lo, hi = q, 1.0
    kl_lo = 0.0
    for _ in range(cfg.max_iterations):
        mid = 0.5 * (lo + hi)
        kl_mid = kl(q, mid)
        if kl_mid <= tau:
            lo, kl_lo = mid, kl_mid
        else:
            hi = mid
        if hi - lo < cfg.tolerance and (
            lo >= 1.0 - cfg.tolerance or tau - kl_lo <= _KL_SLACK
        ):
            break
    return lo


def pinsker_gap(tau: float) -> float:
    """sqrt(tau / 2): the additive risk gap implied by Pinsker's inequality.

    Since kl(q || p) >= 2 (q - p)^2, any p with kl(q || p) <= tau satisfies
    p <= q + sqrt(tau / 2), so this dominates the kl inversion.
    """
    return float(np.sqrt(check_nonnegative("tau", tau) / 2.0))
