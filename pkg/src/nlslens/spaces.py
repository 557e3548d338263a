"""Weighted solution space: parameter selection, bracket weights, and norms.

The working space mixes weighted sup-norm control of low-order derivatives
with weighted L2 control of high-order derivatives:

    |u| = sum_{j=0}^{2m} max_{|beta|=j} ||<x>^n D^beta u||_inf
        + sum_{p=0}^{s+1} sum_{q=0}^{n} sum_{|beta|=p+q+2m+1} ||<x>^{n-q} D^beta u||_2

with <x> = (1+|x|^2)^{1/2}.  The integer triple (s, m, n) must satisfy

    s > N/2,   n > max(N/2 + 1, N/(2 alpha)),   2m >= s + n + 1,

and the top derivative order is J = 2m + 2 + s + n.  These choices make the
space stable under both the free Schroedinger flow and the power
nonlinearity |u|^alpha u on non-vanishing data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .grids import (
    Field,
    GridSpec,
    boundary_window,
    flat_region_mask,
    l2_norm,
    spectral_tail_fraction,
    _derivative_multiplier,
)

TAIL_WARN_THRESHOLD = 1e-6
DEFAULT_MARGIN = 0.25


@dataclass(frozen=True)
class SpaceParams:
    """Integer parameters of the weighted space.

    s: Sobolev embedding order (needs s > N/2 so H^s sits inside L-infinity).
    m: Taylor depth; sup-norm control extends to derivative order 2m.
    n: bracket-weight power <x>^n.
    J: top derivative order, J = 2m + 2 + s + n.
    """

    N: int
    alpha: float
    s: int
    m: int
    n: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.s > self.N / 2.0:
            raise ValueError(f"need s > N/2, got s={self.s}, N={self.N}")
        bound = max(self.N / 2.0 + 1.0, self.N / (2.0 * self.alpha))
        if not self.n > bound:
            raise ValueError(f"need n > max(N/2+1, N/(2*alpha)) = {bound}, got n={self.n}")
        if not 2 * self.m >= self.s + self.n + 1:
            raise ValueError("need 2m >= s + n + 1")

    @property
    def J(self) -> int:
        return 2 * self.m + 2 + self.s + self.n


def select_params(N: int, alpha: float) -> SpaceParams:
    """Smallest admissible integers (s, n, m), all inequalities strict where stated.

    s is the least integer exceeding N/2, n the least integer exceeding
    max(N/2 + 1, N/(2 alpha)), and m the least integer with 2m >= s + n + 1.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    s = math.floor(N / 2.0) + 1
    bound = max(N / 2.0 + 1.0, N / (2.0 * alpha))
    n = math.floor(bound) + 1
    m = math.ceil((s + n + 1) / 2.0)
    return SpaceParams(N=int(N), alpha=float(alpha), s=s, m=m, n=n)


def bracket_weight(grid: GridSpec, p: float) -> Field:
    """The weight <x>^p = (1 + |x|^2)^{p/2} sampled on the grid."""
    return Field(grid, (1.0 + grid.radius_squared()) ** (p / 2.0))


def multi_indices(dimension: int, order: int):
    """All multi-indices beta in N^dimension with |beta| = order."""
    if dimension == 1:
        yield (order,)
        return
    for head in range(order, -1, -1):
        for tail in multi_indices(dimension - 1, order - head):
            yield (head,) + tail


@dataclass(frozen=True)
class WeightedNormBreakdown:
    """Term-by-term account of the weighted mixed norm.

    linf_terms[j] is the max over |beta| = j of ||<x>^n D^beta u||_inf;
    l2_terms holds (p, q, value) with value the sum over |beta| = p+q+2m+1 of
    ||<x>^{n-q} D^beta u||_2.  ``tail_fraction`` is the high-frequency energy
    share of the windowed field; ``resolved`` is False when it exceeds the
    warning threshold (the derivative terms are then under-resolved).
    """

    linf_terms: tuple
    l2_terms: tuple
    total: float
    tail_fraction: float
    resolved: bool
    margin_fraction: float

    def to_dict(self) -> dict:
        return {
            "linf_terms": list(self.linf_terms),
            "l2_terms": [[p, q, v] for (p, q, v) in self.l2_terms],
            "total": self.total,
            "tail_fraction": self.tail_fraction,
            "resolved": self.resolved,
        }


def weighted_norm(
    u: Field, P: SpaceParams, margin_fraction: float = DEFAULT_MARGIN
) -> WeightedNormBreakdown:
    """Evaluate the weighted mixed norm with its full term breakdown.

    Derivatives are spectral.  Because admissible data decay only
    algebraically, the field is multiplied by a flat-top C^infinity boundary
    window before differentiation and derivative terms are evaluated on the
    window's flat region; this removes periodization-seam artifacts that
    otherwise dominate high-order derivatives.  The j = 0 sup-norm term needs
    no derivative and is taken over the whole box from the raw samples.
    """
    grid = u.grid
    if grid.dimension != P.N:
        raise ValueError("grid dimension does not match space parameters")
    w = boundary_window(grid, margin_fraction)
    mask = flat_region_mask(grid, margin_fraction)
    windowed = Field(grid, u.values * w)
    tail = spectral_tail_fraction(windowed)
    coef = np.fft.fftn(windowed.values, norm="ortho")
    hscale = grid.spacing ** (grid.dimension / 2.0)

    bracket_n = (1.0 + grid.radius_squared()) ** (P.n / 2.0)

    def derivative(beta) -> np.ndarray:
        if all(b == 0 for b in beta):
            return windowed.values
        return np.fft.ifftn(coef * _derivative_multiplier(grid, beta), norm="ortho")

    cache: dict = {}

    def cached_derivative(beta) -> np.ndarray:
        if beta not in cache:
            cache[beta] = derivative(beta)
        return cache[beta]

    linf_terms = []
    for j in range(2 * P.m + 1):
        if j == 0:
            linf_terms.append(float(np.max(bracket_n * np.abs(u.values))))
            continue
        best = 0.0
        for beta in multi_indices(grid.dimension, j):
            db = cached_derivative(beta)
            best = max(best, float(np.max(bracket_n[mask] * np.abs(db[mask]))))
        linf_terms.append(best)

    l2_terms = []
    for p in range(P.s + 2):
        for q in range(P.n + 1):
            order = p + q + 2 * P.m + 1
            weight = (1.0 + grid.radius_squared()) ** ((P.n - q) / 2.0)
            acc = 0.0
            for beta in multi_indices(grid.dimension, order):
                db = cached_derivative(beta)
                acc += float(hscale * np.linalg.norm((weight * db)[mask]))
            l2_terms.append((p, q, acc))

    total = float(sum(linf_terms) + sum(v for (_, _, v) in l2_terms))
    return WeightedNormBreakdown(
        linf_terms=tuple(linf_terms),
        l2_terms=tuple(l2_terms),
        total=total,
        tail_fraction=tail,
        resolved=bool(tail <= TAIL_WARN_THRESHOLD),
        margin_fraction=margin_fraction,
    )


def gradient_components(u: Field) -> list:
    """First partial derivatives along each axis (spectral)."""
    coef = np.fft.fftn(u.values, norm="ortho")
    out = []
    for kd in u.grid.wavenumber_arrays():
        out.append(np.fft.ifftn(coef * (1j * kd), norm="ortho"))
    return out


def sigma_norm(u: Field) -> float:
    """||u||_2 + ||grad u||_2 + || |x| u ||_2 (the H^1-and-variance norm)."""
    grid = u.grid
    hscale = grid.spacing ** (grid.dimension / 2.0)
    grad2 = 0.0
    for comp in gradient_components(u):
        grad2 += float(np.sum(np.abs(comp) ** 2))
    grad = hscale * math.sqrt(grad2)
    rad = np.sqrt(grid.radius_squared())
    return float(l2_norm(u) + grad + hscale * np.linalg.norm(rad * u.values))


def sobolev_norm(u: Field, s: float) -> float:
    """H^s norm via the <k>^s Fourier multiplier; equals the L2 norm at s = 0."""
    grid = u.grid
    coef = np.fft.fftn(u.values, norm="ortho")
    mult = (1.0 + grid.wavenumber_squared()) ** (s / 2.0)
    return float(grid.spacing ** (grid.dimension / 2.0) * np.linalg.norm(mult * coef))


def weighted_infimum(u: Field, n: int) -> float:
    """min over grid points of <x>^n |u(x)| (non-vanishing diagnostic)."""
    bracket_n = (1.0 + u.grid.radius_squared()) ** (n / 2.0)
    return float(np.min(bracket_n * np.abs(u.values)))


@dataclass(frozen=True)
class InfimumDiagnostics:
    """Weighted infimum plus a box-truncation indicator.

    ``boundary_max`` is the largest weighted value on the outermost grid
    shell; when it is close to ``value`` the infimum is attained at the box
    edge and says nothing about the behaviour beyond the truncation.
    """

    value: float
    boundary_max: float


def infimum_diagnostics(u: Field, n: int) -> InfimumDiagnostics:
    grid = u.grid
    bracket_n = (1.0 + grid.radius_squared()) ** (n / 2.0)
    weighted = bracket_n * np.abs(u.values)
    edge = grid.half_width - grid.spacing
    shell = np.zeros(grid.shape, dtype=bool)
    for xd in grid.coordinate_arrays():
        shell = shell | (np.abs(xd) >= edge)
    return InfimumDiagnostics(
        value=float(np.min(weighted)),
        boundary_max=float(np.max(weighted[shell])),
    )
