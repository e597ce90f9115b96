"""Ball Green's functions and exit-law masses for sphere walks.

Plain walk-on-spheres needs the harmonic Green's function of a ball to
weight interior source samples. Delta tracking additionally needs the
screened (Yukawa) ball kernels: the probability that a step reaches the
sphere surface before a volume event, and the normalized radial law of the
volume-event location. All closed forms here are validated in the test
suite against radial quadrature and a finite-difference boundary value
solve, not against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BallKernelQuery",
    "SingularQueryError",
    "greens_ball",
    "greens_ball_mass",
    "ball_volume",
    "screened_surface_mass",
    "ScreenedVolumeSampler",
    "screened_kernels_ball_3d",
    "radial_event_cdf",
    "invert_radial_event_cdf",
]

INV_TWO_PI = 1.0 / (2.0 * math.pi)
INV_FOUR_PI = 1.0 / (4.0 * math.pi)

# beyond this, sinh overflows double range; the surface mass is ~1e-215
# anyway, so larger screening values clamp
_Q_CLAMP = 500.0

# below this the hyperbolic forms lose digits to cancellation and the
# harmonic limit is exact to machine precision
_Q_HARMONIC = 1.0e-4


class SingularQueryError(ValueError):
    """Green's function evaluated on its singularity."""


@dataclass(frozen=True)
class BallKernelQuery:
    """Evaluation point of a ball kernel: dimension, radius, center offset."""

    d: int
    r: float
    rho: float
    sigma_bar: float = 0.0

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.r <= 0.0:
            raise ValueError("ball radius must be positive")
        if not 0.0 <= self.rho <= self.r:
            raise ValueError("rho must lie in [0, r]")
        if self.sigma_bar < 0.0:
            raise ValueError("sigma_bar must be nonnegative")


def greens_ball(q: BallKernelQuery) -> float:
    """Harmonic Green's function of a ball, evaluated from the center.

    Vanishes on the sphere and blows up at the center; callers drawing
    volume samples must redraw points that land on the singularity.
    """
    if q.sigma_bar != 0.0:
        raise ValueError("greens_ball is the harmonic kernel; sigma_bar must be 0")
    if q.rho == 0.0:
        raise SingularQueryError("singular query: rho = 0")
    if q.d == 2:
        return INV_TWO_PI * math.log(q.r / q.rho)
    return INV_FOUR_PI * (1.0 / q.rho - 1.0 / q.r)


def greens_ball_mass(d: int, r: float) -> float:
    """Integral of the centered Green's function over the ball: r^2 / (2d)."""
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    if r <= 0.0:
        raise ValueError("ball radius must be positive")
    return r * r / (2.0 * d)


def ball_volume(d: int, r: float) -> float:
    if d == 2:
        return math.pi * r * r
    if d == 3:
        return 4.0 * math.pi * r**3 / 3.0
    raise ValueError("dimension must be 2 or 3")


def screened_surface_mass(r: float, sigma_bar: float) -> float:
    """Probability that a screened step exits through the sphere surface.

    Equals q / sinh(q) with q = sqrt(sigma_bar) * r: the center value of
    the solution of Laplacian u = sigma_bar u with unit boundary data.
    """
    if r <= 0.0:
        raise ValueError("ball radius must be positive")
    if sigma_bar < 0.0:
        raise ValueError("sigma_bar must be nonnegative")
    q = min(math.sqrt(sigma_bar) * r, _Q_CLAMP)
    if q < 1.0e-6:
        return 1.0 - q * q / 6.0
    return q / math.sinh(q)


@dataclass(frozen=True)
class ScreenedVolumeSampler:
    """Law of the volume-event location inside a screened ball step.

    The event position is drawn with density proportional to
    sigma_bar * G(center, .) where G is the screened ball Green's function:
    an isotropic direction and a radius fraction t = rho / r from
    ``radial_cdf``. ``mass`` is the integral of G itself, so
    sigma_bar * mass is the total event probability, complementing the
    surface mass to one.
    """

    r: float
    sigma_bar: float

    @property
    def q(self) -> float:
        return min(math.sqrt(self.sigma_bar) * self.r, _Q_CLAMP)

    @property
    def mass(self) -> float:
        """Integral of the screened Green's function over the ball."""
        if self.sigma_bar == 0.0:
            return greens_ball_mass(3, self.r)
        return (1.0 - screened_surface_mass(self.r, self.sigma_bar)) / self.sigma_bar

    def green(self, rho):
        """Screened Green's function value at center offset rho."""
        rho = np.asarray(rho, dtype=np.float64)
        if np.any(rho <= 0.0) or np.any(rho > self.r):
            raise SingularQueryError("singular query: rho outside (0, r]")
        q = self.q
        if q < _Q_HARMONIC:
            return INV_FOUR_PI * (1.0 / rho - 1.0 / self.r)
        k = q / self.r
        return (
            INV_FOUR_PI * np.sinh(k * (self.r - rho)) / (rho * math.sinh(q))
        )

    def radial_cdf(self, t):
        """CDF of the radius fraction t in [0, 1] of a volume event."""
        return radial_event_cdf(self.q, t)

    def sample_radius_fraction(self, u):
        """Invert the radial CDF by fixed 64-step bisection (deterministic)."""
        return invert_radial_event_cdf(self.q, u)


def radial_event_cdf(q, t):
    """Volume-event radius-fraction CDF, vectorized over q and t.

    q = sqrt(sigma_bar) * r. Below the harmonic threshold the exact cubic
    limit replaces the hyperbolic form, which loses digits to cancellation.
    """
    q = np.minimum(np.asarray(q, dtype=np.float64), _Q_CLAMP)
    t = np.asarray(t, dtype=np.float64)
    q, t = np.broadcast_arrays(q, t)
    harmonic = t * t * (3.0 - 2.0 * t)
    qs = np.where(q < _Q_HARMONIC, 1.0, q)  # keep the unused branch finite
    screened = (
        np.sinh(qs) - qs * t * np.cosh(qs * (1.0 - t)) - np.sinh(qs * (1.0 - t))
    ) / (np.sinh(qs) - qs)
    return np.where(q < _Q_HARMONIC, harmonic, screened)


def invert_radial_event_cdf(q, u):
    """Inverse of ``radial_event_cdf`` in t by fixed 64-step bisection."""
    u = np.asarray(u, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    q, u = np.broadcast_arrays(q, u)
    lo = np.zeros(u.shape)
    hi = np.ones(u.shape)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = radial_event_cdf(q, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def screened_kernels_ball_3d(
    r: float, sigma_bar: float
) -> tuple[float, ScreenedVolumeSampler]:
    """Surface exit probability and volume-event law for a screened step.

    The two masses satisfy surface + sigma_bar * volume = 1, which is the
    statement that u = 1 solves the screened equation with unit boundary
    data and source sigma_bar.
    """
    if r <= 0.0:
        raise ValueError("ball radius must be positive")
    if sigma_bar < 0.0:
        raise ValueError("sigma_bar must be nonnegative")
    return screened_surface_mass(r, sigma_bar), ScreenedVolumeSampler(r, sigma_bar)
