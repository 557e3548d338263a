"""The power nonlinearity |u|^alpha u and its weighted-norm estimate quotients.

For non-integer alpha the map u -> |u|^alpha u loses smoothness exactly where
u vanishes, so every quotient below requires a quantitative non-vanishing
bound eta * inf <x>^n |u| >= 1.  On such data the nonlinearity is controlled
in the weighted space by

    |N(u)|  <= C (1 + eta |u|)^{2J} |u|^{alpha+1}
    |N(u1) - N(u2)|
            <= C (1 + eta(|u1|+|u2|))^{2J+1} (|u1|+|u2|)^alpha |u1 - u2|

(norms in the weighted space).  The constants are non-constructive, so the
toolkit records the left/right quotients on declared sample families and
treats their maxima as empirical surrogates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Field
from .spaces import SpaceParams, weighted_infimum, weighted_norm


class LowerBoundError(ValueError):
    """Raised when the non-vanishing condition eta * inf <x>^n |u| >= 1 fails."""


def power_nonlinearity(u: Field, alpha: float, taper: bool = False) -> Field:
    """Pointwise |u(x)|^alpha u(x); 0^alpha * 0 = 0 for alpha > 0.

    ``taper`` applies a raised-cosine roll-off on the top third of
    frequencies.  It is meant for use inside time-stepping loops only; norm
    and estimate evaluations must see the unfiltered nonlinearity.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    vals = np.abs(u.values) ** alpha * u.values
    if taper:
        vals = np.fft.ifftn(
            np.fft.fftn(vals, norm="ortho") * _taper_mask(u.grid), norm="ortho"
        )
    return Field(u.grid, vals)


def _taper_mask(grid) -> np.ndarray:
    """Raised-cosine filter: 1 below 2/3 Nyquist, rolling to 0 at Nyquist."""
    kny = grid.nyquist
    k0 = (2.0 / 3.0) * kny
    mask = np.ones(grid.shape)
    for kd in grid.wavenumber_arrays():
        a = np.abs(kd)
        ramp = 0.5 * (1.0 + np.cos(np.pi * np.clip((a - k0) / (kny - k0), 0.0, 1.0)))
        mask = mask * np.where(a <= k0, 1.0, ramp)
    return mask


@dataclass(frozen=True)
class NonlinearReport:
    """Estimate quotients for one field (or one pair) at a given eta."""

    eta: float
    alpha: float
    ratio_single: float | None = None
    ratio_pair: float | None = None
    norm_u1: float | None = None
    norm_u2: float | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "alpha": self.alpha,
            "ratio_single": self.ratio_single,
            "ratio_pair": self.ratio_pair,
            "norm_u1": self.norm_u1,
            "norm_u2": self.norm_u2,
            "seed": self.seed,
        }


def _require_lower_bound(u: Field, P: SpaceParams, eta: float, label: str = "u") -> None:
    winf = weighted_infimum(u, P.n)
    if not eta * winf >= 1.0 - 1e-12:
        raise LowerBoundError(
            f"lower-bound condition eta * inf <x>^n |{label}| >= 1 violated: "
            f"eta = {eta}, inf = {winf}, product = {eta * winf}"
        )


def nonlinear_estimate_ratio(
    u: Field, P: SpaceParams, eta: float, seed: int | None = None
) -> NonlinearReport:
    """Quotient of |N(u)| against (1 + eta |u|)^{2J} |u|^{alpha+1}."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    _require_lower_bound(u, P, eta)
    nu = weighted_norm(u, P).total
    nn = weighted_norm(power_nonlinearity(u, P.alpha), P).total
    denom = (1.0 + eta * nu) ** (2 * P.J) * nu ** (P.alpha + 1.0)
    return NonlinearReport(
        eta=eta,
        alpha=P.alpha,
        ratio_single=float(nn / denom),
        norm_u1=nu,
        seed=seed,
    )


def nonlinear_lipschitz_ratio(
    u1: Field, u2: Field, P: SpaceParams, eta: float, seed: int | None = None
) -> NonlinearReport:
    """Quotient of |N(u1) - N(u2)| against the pair bound; 0 when u1 == u2."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    _require_lower_bound(u1, P, eta, "u1")
    _require_lower_bound(u2, P, eta, "u2")
    n1 = weighted_norm(u1, P).total
    n2 = weighted_norm(u2, P).total
    if np.array_equal(u1.values, u2.values):
        return NonlinearReport(
            eta=eta, alpha=P.alpha, ratio_pair=0.0, norm_u1=n1, norm_u2=n2, seed=seed
        )
    diff = Field(u1.grid, u1.values - u2.values)
    ndiff = weighted_norm(diff, P).total
    nnum = weighted_norm(
        Field(
            u1.grid,
            power_nonlinearity(u1, P.alpha).values
            - power_nonlinearity(u2, P.alpha).values,
        ),
        P,
    ).total
    tot = n1 + n2
    denom = (1.0 + eta * tot) ** (2 * P.J + 1) * tot ** P.alpha * ndiff
    return NonlinearReport(
        eta=eta,
        alpha=P.alpha,
        ratio_pair=float(nnum / denom),
        norm_u1=n1,
        norm_u2=n2,
        seed=seed,
    )
