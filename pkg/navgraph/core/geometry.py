"""Relative volumes of spherical caps and of pairwise cap intersections.

All volumes are relative to the full sphere S^d, where ``d`` is the sphere
dimension and points live in R^(d+1). A cap of height ``gamma`` around ``x``
is ``{y : <x, y> >= gamma}``; its radius is ``gamma_hat = sqrt(1 - gamma^2)``.

Both volumes reduce to one-dimensional integrals by projecting the sphere
onto the plane spanned by the cap centers. A region ``U`` of the unit disk
whose angular measure at radius ``r`` is ``g(r)`` has relative preimage volume

    (d - 1) / (4 pi) * integral (1 - r^2)^((d - 3) / 2) g(r) d(r^2)

and substituting ``r^2 = 1 - rho_hat^2 t`` moves the integral to ``t in [0, 1]``
with an algebraic weight ``t^((d - 3) / 2)``, which ``scipy.integrate.quad``
integrates with its ``alg`` weight. The circle (d = 1) has no interior and is
handled in closed form.

Monte Carlo oracles sample only the two leading coordinates of a uniform
point, which is all either membership test needs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate

from navgraph import config

logger = logging.getLogger(__name__)


class VolumeMethod(Enum):
    """How a volume estimate was produced."""

    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"


class IntersectionCase(Enum):
    """Geometric configuration of two caps, see ``classify_intersection``."""

    CONTAINED_BETA = "contained_beta"
    CONTAINED_ALPHA = "contained_alpha"
    LENS = "lens"
    DISJOINT = "disjoint"
    NESTED = "nested"


@dataclass(frozen=True)
class CapSpec:
    """A spherical cap of height ``gamma`` on S^d.

    Attributes:
        gamma: Cap height in [0, 1].
        d: Sphere dimension (ambient dimension d + 1), at least 1.
    """

    gamma: float
    d: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"Cap height must be in [0, 1], got {self.gamma}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"Sphere dimension must be an integer >= 1, got {self.d}")

    @property
    def radius_hat(self) -> float:
        """Euclidean radius of the cap base, sqrt(1 - gamma^2)."""
        return math.sqrt(max(0.0, 1.0 - self.gamma * self.gamma))


@dataclass(frozen=True)
class IntersectionSpec:
    """Two caps of heights ``alpha`` and ``beta`` whose centers are ``theta`` apart.

    Attributes:
        alpha: Height of the first cap, in [0, 1].
        beta: Height of the second cap, in [0, 1].
        theta: Angle between the cap centers, strictly inside (0, pi).
        d: Sphere dimension, at least 1.
    """

    alpha: float
    beta: float
    theta: float
    d: int

    def __post_init__(self) -> None:
        for name, value in (("alpha", self.alpha), ("beta", self.beta)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not 0.0 < self.theta < math.pi:
            raise ValueError(f"theta must be in (0, pi), got {self.theta}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"Sphere dimension must be an integer >= 1, got {self.d}")

    def swapped(self) -> "IntersectionSpec":
        """Same intersection with the two caps exchanged."""
        return IntersectionSpec(alpha=self.beta, beta=self.alpha, theta=self.theta, d=self.d)


@dataclass(frozen=True)
class VolumeEstimate:
    """A relative volume with its provenance.

    Attributes:
        value: Relative volume in [0, 1].
        method: Quadrature or Monte Carlo.
        stderr: Standard error; 0 for quadrature.
    """

    value: float
    method: VolumeMethod
    stderr: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"Relative volume must be in [0, 1], got {self.value}")
        if self.stderr < 0.0:
            raise ValueError(f"Standard error must be >= 0, got {self.stderr}")


@dataclass(frozen=True)
class CapBounds:
    """Envelope c1 d^(-1/2) gamma_hat^d <= C(gamma) <= c2 d^(-1/2) gamma_hat^d min(sqrt d, 1/gamma)."""

    lower: float
    upper: float
    value: float
    c1: float = field(default=config.CAP_BOUND_LOWER)
    c2: float = field(default=config.CAP_BOUND_UPPER)

    @property
    def holds(self) -> bool:
        return self.lower <= self.value <= self.upper


# ============================================================================
# Quadrature helpers
# ============================================================================

def _clamp_unit(x: float) -> float:
    return min(1.0, max(-1.0, x))


def _half_arc(height: float, r: float) -> float:
    """Half-width of the arc of a cap chord at projected radius ``r``."""
    if r <= 0.0:
        return 0.0 if height > 0.0 else math.pi / 2.0
    return math.acos(_clamp_unit(height / r))


def _projected_measure(angular: Callable[[float], float], r0: float, d: int) -> float:
    """Relative volume of a projected region living at radii [r0, 1].

    Args:
        angular: Angular measure g(r) of the region at radius r.
        r0: Smallest radius the region reaches, in [0, 1].
        d: Sphere dimension, at least 2.

    Returns:
        (d - 1) / (4 pi) * integral_{r0}^{1} (1 - r^2)^((d - 3) / 2) g(r) d(r^2).
    """
    r0 = min(1.0, max(0.0, r0))
    rho_hat_sq = 1.0 - r0 * r0
    if rho_hat_sq <= 0.0:
        return 0.0
    rho_hat = math.sqrt(rho_hat_sq)

    def integrand(t: float) -> float:
        return angular(math.sqrt(max(0.0, 1.0 - rho_hat_sq * t)))

    value, abserr = integrate.quad(
        integrand,
        0.0,
        1.0,
        weight="alg",
        wvar=((d - 3) / 2.0, 0.0),
        epsabs=config.QUADRATURE_EPSABS,
        epsrel=config.QUADRATURE_EPSREL,
        limit=config.QUADRATURE_LIMIT,
    )
    if abserr > 1e-8:
        logger.debug("quadrature error estimate %.2e for r0=%.6f d=%d", abserr, r0, d)
    return (d - 1) * rho_hat ** (d - 1) / (4.0 * math.pi) * value


def _overlap_arc(alpha: float, beta: float, theta: float, r: float) -> float:
    """Angular measure at radius ``r`` of the projection of both caps."""
    if r < alpha or r < beta:
        return 0.0
    a = _half_arc(alpha, r)
    b = _half_arc(beta, r)
    return max(0.0, min(a, theta + b) - max(-a, theta - b))


def _clip_volume(value: float) -> float:
    return min(1.0, max(0.0, value))


# ============================================================================
# Caps
# ============================================================================

def _cap_value(gamma: float, d: int) -> float:
    if gamma == 0.0:
        return 0.5
    if gamma >= 1.0:
        return 0.0
    if d == 1:
        return math.acos(gamma) / math.pi
    return _projected_measure(lambda r: 2.0 * _half_arc(gamma, r), gamma, d)


def cap_volume(spec: CapSpec) -> VolumeEstimate:
    """Relative volume of a spherical cap by deterministic quadrature.

    Args:
        spec: Cap height and sphere dimension.

    Returns:
        Quadrature estimate with zero standard error; in [0, 0.5].

    Examples:
        >>> cap_volume(CapSpec(gamma=0.0, d=7)).value
        0.5
        >>> round(cap_volume(CapSpec(gamma=0.5, d=2)).value, 12)
        0.25
    """
    value = _cap_value(spec.gamma, spec.d)
    return VolumeEstimate(value=_clip_volume(value), method=VolumeMethod.QUADRATURE)


def cap_volume_from_angle(radius: float, d: int) -> float:
    """Relative volume of the cap of geodesic radius ``radius`` in [0, pi]."""
    if not 0.0 <= radius <= math.pi:
        raise ValueError(f"Cap radius must be in [0, pi], got {radius}")
    gamma = math.cos(radius)
    if gamma >= 0.0:
        return _cap_value(min(1.0, gamma), d)
    return 1.0 - _cap_value(min(1.0, -gamma), d)


def cap_bounds(spec: CapSpec) -> CapBounds:
    """Evaluate the cap-volume envelope with the module constants.

    The upper envelope is unbounded at gamma = 0 only through 1/gamma, so the
    min with sqrt(d) keeps it finite.
    """
    d, gamma = spec.d, spec.gamma
    scale = spec.radius_hat ** d / math.sqrt(d)
    cap = math.sqrt(d) if gamma == 0.0 else min(math.sqrt(d), 1.0 / gamma)
    return CapBounds(
        lower=config.CAP_BOUND_LOWER * scale,
        upper=config.CAP_BOUND_UPPER * scale * cap,
        value=cap_volume(spec).value,
    )


# ============================================================================
# Intersections
# ============================================================================

def gamma_param(spec: IntersectionSpec) -> float:
    """Distance from the origin to the crossing of the two projected chords.

    Evaluates sqrt(alpha^2 + beta^2 - 2 alpha beta cos theta) / sin theta in
    the cancellation-free form sqrt((alpha - beta)^2 + 4 alpha beta sin^2(theta/2)).

    Examples:
        >>> gamma_param(IntersectionSpec(0.6, 0.8, math.pi / 2, 3))
        1.0
    """
    alpha, beta, theta = spec.alpha, spec.beta, spec.theta
    half = math.sin(theta / 2.0)
    numerator = (alpha - beta) ** 2 + 4.0 * alpha * beta * half * half
    return math.sqrt(numerator) / math.sin(theta)


def classify_intersection(spec: IntersectionSpec) -> IntersectionCase:
    """Decide which of the five cap configurations ``spec`` is in.

    Equalities go to the contained cases.

    Examples:
        >>> classify_intersection(IntersectionSpec(0.3, 0.8, math.pi / 3, 4))
        <IntersectionCase.CONTAINED_BETA: 'contained_beta'>
    """
    alpha, beta = spec.alpha, spec.beta
    cos_theta = math.cos(spec.theta)
    beta_inside = alpha <= beta * cos_theta
    alpha_inside = beta <= alpha * cos_theta
    if gamma_param(spec) <= 1.0:
        if beta_inside:
            return IntersectionCase.CONTAINED_BETA
        if alpha_inside:
            return IntersectionCase.CONTAINED_ALPHA
        return IntersectionCase.LENS
    if not beta_inside and not alpha_inside:
        return IntersectionCase.DISJOINT
    return IntersectionCase.NESTED


def _contained_value(outer: float, inner: float, theta: float, d: int) -> float:
    """W when the cap of height ``inner`` has its projected foot inside the other cap.

    Computed as C(inner) minus the part of the inner cap sticking out of the
    outer one.
    """
    def outside(r: float) -> float:
        b = _half_arc(inner, r)
        if r < outer:
            return 2.0 * b
        a = _half_arc(outer, r)
        return min(2.0 * b, max(0.0, theta + b - a))

    return _cap_value(inner, d) - _projected_measure(outside, inner, d)


def _intersection_value(alpha: float, beta: float, theta: float, d: int,
                        case: IntersectionCase, crossing: float) -> float:
    if case is IntersectionCase.DISJOINT:
        return 0.0
    if d == 1:
        return _overlap_arc(alpha, beta, theta, 1.0) / (2.0 * math.pi)
    if case is IntersectionCase.NESTED:
        return _cap_value(max(alpha, beta), d)
    if case is IntersectionCase.CONTAINED_BETA:
        return _contained_value(alpha, beta, theta, d)
    if case is IntersectionCase.CONTAINED_ALPHA:
        return _contained_value(beta, alpha, theta, d)

    def lens(r: float) -> float:
        a = _half_arc(alpha, r)
        b = _half_arc(beta, r)
        return max(0.0, min(a + b - theta, 2.0 * a, 2.0 * b))

    return _projected_measure(lens, crossing, d)


def intersection_volume(spec: IntersectionSpec) -> VolumeEstimate:
    """Relative volume W(alpha, beta, theta) of the intersection of two caps.

    The arguments are normalized so that ``alpha <= beta`` before any
    arithmetic, which makes the result exactly symmetric in the two heights.

    Args:
        spec: The two caps and their angular separation.

    Returns:
        Quadrature estimate with zero standard error.
    """
    if spec.alpha > spec.beta:
        spec = spec.swapped()
    case = classify_intersection(spec)
    value = _intersection_value(spec.alpha, spec.beta, spec.theta, spec.d, case, gamma_param(spec))
    return VolumeEstimate(value=_clip_volume(value), method=VolumeMethod.QUADRATURE)


# ============================================================================
# Monte Carlo oracles
# ============================================================================

def _leading_coordinates(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """First two coordinates of ``count`` uniform points on S^d, shape (count, 2)."""
    if d == 1:
        phi = rng.uniform(0.0, 2.0 * math.pi, size=count)
        return np.column_stack((np.cos(phi), np.sin(phi)))
    head = rng.standard_normal(size=(count, 2))
    tail = rng.chisquare(d - 1, size=count)
    norm = np.sqrt(np.einsum("ij,ij->i", head, head) + tail)
    return head / norm[:, None]


def _monte_carlo(hit: Callable[[np.ndarray], np.ndarray], d: int, samples: int,
                 seed: int) -> VolumeEstimate:
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = samples
    while remaining > 0:
        count = min(remaining, config.MONTE_CARLO_CHUNK)
        hits += int(np.count_nonzero(hit(_leading_coordinates(rng, count, d))))
        remaining -= count
    p = hits / samples
    return VolumeEstimate(
        value=p,
        method=VolumeMethod.MONTE_CARLO,
        stderr=math.sqrt(p * (1.0 - p) / samples),
    )


def cap_volume_mc(spec: CapSpec, samples: int, seed: int) -> VolumeEstimate:
    """Monte Carlo estimate of ``cap_volume``, deterministic given ``seed``."""
    if spec.gamma >= 1.0:
        if samples < 1:
            raise ValueError(f"samples must be >= 1, got {samples}")
        return VolumeEstimate(value=0.0, method=VolumeMethod.MONTE_CARLO, stderr=0.0)
    return _monte_carlo(lambda xy: xy[:, 0] >= spec.gamma, spec.d, samples, seed)


def intersection_volume_mc(spec: IntersectionSpec, samples: int, seed: int) -> VolumeEstimate:
    """Monte Carlo estimate of ``intersection_volume``.

    Cap centers are e1 and (cos theta, sin theta, 0, ...).
    """
    cos_t, sin_t = math.cos(spec.theta), math.sin(spec.theta)

    def hit(xy: np.ndarray) -> np.ndarray:
        return (xy[:, 0] >= spec.alpha) & (xy[:, 0] * cos_t + xy[:, 1] * sin_t >= spec.beta)

    return _monte_carlo(hit, spec.d, samples, seed)


# ============================================================================
# Tabulation
# ============================================================================

def tabulate_caps(dims: Iterable[int], gammas: Sequence[float], method: VolumeMethod,
                  samples: int = 1_000_000, seed: int = 0) -> pd.DataFrame:
    """Cap volumes on a (d, gamma) grid.

    Returns:
        DataFrame with columns d, gamma, method, value, stderr.
    """
    rows: List[dict] = []
    for d in dims:
        for gamma in gammas:
            spec = CapSpec(gamma=float(gamma), d=int(d))
            est = cap_volume(spec) if method is VolumeMethod.QUADRATURE else cap_volume_mc(spec, samples, seed)
            rows.append({"d": spec.d, "gamma": spec.gamma, "method": est.method.value,
                         "value": est.value, "stderr": est.stderr})
    return pd.DataFrame(rows, columns=["d", "gamma", "method", "value", "stderr"])


def tabulate_intersections(specs: Iterable[IntersectionSpec], method: VolumeMethod,
                           samples: int = 1_000_000, seed: int = 0) -> pd.DataFrame:
    """Intersection volumes for explicit specs.

    Returns:
        DataFrame with columns d, alpha, beta, theta, case, method, value, stderr.
    """
    rows: List[dict] = []
    for spec in specs:
        if method is VolumeMethod.QUADRATURE:
            est = intersection_volume(spec)
        else:
            est = intersection_volume_mc(spec, samples, seed)
        rows.append({"d": spec.d, "alpha": spec.alpha, "beta": spec.beta, "theta": spec.theta,
                     "case": classify_intersection(spec).value, "method": est.method.value,
                     "value": est.value, "stderr": est.stderr})
    return pd.DataFrame(rows, columns=["d", "alpha", "beta", "theta", "case", "method",
                                       "value", "stderr"])


def expected_degree(n: int, radius: float, d: int, gamma: Optional[float] = None) -> float:
    """Expected threshold-graph degree f = (n - 1) C(alpha_M).

    Args:
        n: Dataset size.
        radius: Connection angle; ignored when ``gamma`` is given.
        d: Sphere dimension.
        gamma: Cap height alpha_M, if known directly.
    """
    if gamma is not None:
        return (n - 1) * cap_volume(CapSpec(gamma=gamma, d=d)).value
    return (n - 1) * cap_volume_from_angle(radius, d)
