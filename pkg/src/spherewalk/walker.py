"""Trajectory estimators: walk-on-spheres and screened delta tracking.

``walk_poisson`` samples u(xi) for Laplacian u = f with u = g on the
boundary: jump recursively to uniform points on maximal inscribed spheres,
collect one Green's-weighted source sample per step, and read g off at the
boundary. ``walk_screened_delta`` samples the variable-coefficient screened
problem div(alpha grad u) - sigma u = -f after the ground-state transform
U = sqrt(alpha) u, walking under a constant screening majorant sigma_bar
and thinning volume events against the true coefficient.

Every trajectory is a pure function of (rng_seed, instance key, point id,
trajectory id): identical inputs replay bit-identical results, and batching
or worker count cannot change any value. Walks on analytic domains with
closed-form problem terms run in compiled kernels; everything else takes a
vectorized generic path with the same stream layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import BallDomain, ExteriorQueryError, PolarDomain
from .greens import invert_radial_event_cdf
from .rng import philox4x64, to_uniform

__all__ = [
    "WalkConfig",
    "TrajectoryResult",
    "TrajectoryStream",
    "Problem",
    "ScreenedProblem",
    "MajorantViolationError",
    "TERM_BOUNDARY",
    "TERM_MAX_STEPS",
    "walk_poisson",
    "walk_poisson_antithetic",
    "walk_screened_delta",
    "walk_poisson_values",
    "walk_screened_values",
]

TERM_BOUNDARY = "boundary"
TERM_MAX_STEPS = "max_steps"

TWO_PI = 2.0 * np.pi


class MajorantViolationError(RuntimeError):
    """The true screening coefficient exceeded the majorant mid-walk."""


@dataclass(frozen=True)
class WalkConfig:
    """Knobs shared by every walker.

    eps_shell=None resolves to 1e-3 times the domain's bounding radius.
    sigma_bar is only read by delta tracking and must dominate the
    transformed screening coefficient everywhere.
    """

    eps_shell: float | None = None
    max_steps: int = 1000
    antithetic: bool = False
    sigma_bar: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.eps_shell is not None and self.eps_shell <= 0.0:
            raise ValueError("eps_shell must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    def resolve_eps(self, domain) -> float:
        if self.eps_shell is not None:
            return self.eps_shell
        return 1.0e-3 * domain.bounding_radius()


@dataclass(frozen=True)
class TrajectoryResult:
    value: float
    steps_taken: int
    terminated_by: str


@dataclass(frozen=True)
class TrajectoryStream:
    """Which substream of the seed a trajectory draws from.

    sign=-1 flips every direction vector, producing the antithetic mirror
    of the sign=+1 walk on the same stream.
    """

    point_id: int = 0
    traj_id: int = 0
    sign: float = 1.0


@dataclass(frozen=True)
class Problem:
    """A Poisson problem: domain, boundary data g, optional source f.

    ``boundary`` and ``source`` map (n, d) arrays to (n,) values. The
    optional ``*_spec`` fields are (kind, params) codes that let walks run
    in the compiled kernels; problems without them take the generic path.
    """

    domain: object
    boundary: object
    source: object = None
    instance_key: int = 0
    boundary_spec: tuple | None = None
    source_spec: tuple | None = None


@dataclass(frozen=True)
class ScreenedProblem:
    """Transformed screened problem for delta tracking.

    All callables act on (n, 3) arrays: sigma_prime is the transformed
    screening coefficient, boundary_prime / source_prime the transformed
    data, sqrt_alpha the start-point rescaling (None means identically 1).
    ``const_coeffs = (sigma_prime, f_prime or None, g_prime)`` marks a
    constant-coefficient problem eligible for the compiled kernel.
    """

    domain: object
    sigma_prime: object
    boundary_prime: object
    source_prime: object = None
    sqrt_alpha: object = None
    instance_key: int = 0
    const_coeffs: tuple | None = None


def _streams_as_arrays(point_ids, traj_ids, signs, n):
    pid = np.ascontiguousarray(np.asarray(point_ids, dtype=np.uint64))
    tid = np.ascontiguousarray(np.asarray(traj_ids, dtype=np.uint64))
    sgn = np.ascontiguousarray(np.asarray(signs, dtype=np.float64))
    if not (pid.shape == tid.shape == sgn.shape == (n,)):
        raise ValueError("stream arrays must match the number of start points")
    return pid, tid, sgn


# ---------------------------------------------------------------------------
# plain walk dispatch
# ---------------------------------------------------------------------------

_KERNEL_2D_SRC = (_kernels.SRC_CONST, _kernels.SRC_RBF2)
_KERNEL_2D_BND = (_kernels.BND_CONST, _kernels.BND_FOURIER5, _kernels.BND_LINEAR)
_KERNEL_3D_SRC = (_kernels.SRC_CONST,)
_KERNEL_3D_BND = (_kernels.BND_CONST, _kernels.BND_LINEAR)

_DUMMY = np.zeros(1)


def _specs_for_kernel(inst):
    """(source_spec, boundary_spec) if the instance is kernel-codeable."""
    bspec = getattr(inst, "boundary_spec", None)
    if bspec is None:
        return None
    if getattr(inst, "source", None) is None:
        sspec = (_kernels.SRC_NONE, ())
    else:
        sspec = getattr(inst, "source_spec", None)
        if sspec is None:
            return None
    return sspec, bspec


def _params(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return _DUMMY
    return np.ascontiguousarray(arr)


def walk_poisson_values(inst, points, point_ids, traj_ids, signs, cfg):
    """Values, step counts, and boundary-hit flags for a batch of walks.

    One row per trajectory: points[i] walked under stream
    (point_ids[i], traj_ids[i], signs[i]).
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    pid, tid, sgn = _streams_as_arrays(point_ids, traj_ids, signs, n)
    dom = inst.domain
    eps = cfg.resolve_eps(dom)
    seed = np.uint64(cfg.rng_seed)
    ikey = np.uint64(getattr(inst, "instance_key", 0))
    specs = _specs_for_kernel(inst)

    if specs is not None:
        (skind, sp), (bkind, bp) = specs
        src_ok_2d = skind == _kernels.SRC_NONE or skind in _KERNEL_2D_SRC
        bnd_ok_2d = bkind in _KERNEL_2D_BND
        if isinstance(dom, PolarDomain) and src_ok_2d and bnd_ok_2d:
            dp = _params([dom.r0, dom.c1, dom.c2])
            return _kernels.walk_plain_2d(
                _kernels.DOM_POLAR, dp, dom._bx, dom._by, dom._stride,
                skind, _params(sp), bkind, _params(bp),
                pts[:, 0].copy(), pts[:, 1].copy(),
                pid, tid, sgn, seed, ikey, eps, cfg.max_steps,
            )
        if isinstance(dom, BallDomain) and dom.dim == 2 and src_ok_2d and bnd_ok_2d:
            dp = _params([dom.center[0], dom.center[1], dom.radius])
            return _kernels.walk_plain_2d(
                _kernels.DOM_DISK, dp, _DUMMY, _DUMMY, 1,
                skind, _params(sp), bkind, _params(bp),
                pts[:, 0].copy(), pts[:, 1].copy(),
                pid, tid, sgn, seed, ikey, eps, cfg.max_steps,
            )
        src_ok_3d = skind == _kernels.SRC_NONE or skind in _KERNEL_3D_SRC
        if (
            isinstance(dom, BallDomain)
            and dom.dim == 3
            and src_ok_3d
            and bkind in _KERNEL_3D_BND
        ):
            dp = _params([*dom.center, dom.radius])
            return _kernels.walk_plain_ball3(
                dp, skind, _params(sp), bkind, _params(bp),
                pts[:, 0].copy(), pts[:, 1].copy(), pts[:, 2].copy(),
                pid, tid, sgn, seed, ikey, eps, cfg.max_steps,
            )
    return _poisson_generic(inst, pts, pid, tid, sgn, cfg, eps, seed, ikey)


def _redraw_zeros(u, draw, pid, tid, key0, key1):
    """Replace exact zeros by redraws at increasing tag values."""
    bad = u == 0.0
    tag = 1
    while np.any(bad):
        w0 = philox4x64(draw, pid[bad], tid[bad], tag, key0, key1)[0]
        u = u.copy()
        u[bad] = to_uniform(w0)
        bad = u == 0.0
        tag += 1
    return u


def _sphere_dirs_2d(u):
    theta = TWO_PI * u
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _sphere_dirs_3d(u_z, u_phi):
    z = 2.0 * u_z - 1.0
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = TWO_PI * u_phi
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def _poisson_generic(inst, pts, pid, tid, sgn, cfg, eps, seed, ikey):
    """Vectorized walk for arbitrary domains and Python problem terms."""
    dom = inst.domain
    dim = dom.dim
    boundary = inst.boundary
    source = getattr(inst, "source", None)
    n = pts.shape[0]
    x = pts.copy()
    acc = np.zeros(n)
    values = np.empty(n)
    steps_out = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.uint8)
    alive = np.arange(n)
    inv_two_pi = 1.0 / TWO_PI
    inv_four_pi = 1.0 / (4.0 * np.pi)
    step = 0
    while alive.size:
        d, q = dom.boundary_query(x[alive])
        shell = d < eps
        done = shell if step < cfg.max_steps else np.ones_like(shell)
        if np.any(done):
            idx = alive[done]
            values[idx] = acc[idx] + boundary(q[done])
            steps_out[idx] = step
            hits[idx] = shell[done]
            alive = alive[~done]
            if alive.size == 0:
                break
            d = d[~done]
        lane_p = pid[alive]
        lane_t = tid[alive]
        lane_s = sgn[alive]
        w0, w1, w2, w3 = philox4x64(2 * step, lane_p, lane_t, 0, seed, ikey)
        if dim == 2:
            dirs = _sphere_dirs_2d(to_uniform(w0))
            if source is not None:
                u_rad = _redraw_zeros(to_uniform(w2), 2 * step, lane_p, lane_t, seed, ikey)
                rad = d * np.sqrt(u_rad)
                vol_dirs = _sphere_dirs_2d(to_uniform(w1))
                gamma = x[alive] + lane_s[:, None] * rad[:, None] * vol_dirs
                green = inv_two_pi * np.log(d / rad)
                acc[alive] -= np.pi * d * d * np.asarray(source(gamma)) * green
        else:
            dirs = _sphere_dirs_3d(to_uniform(w0), to_uniform(w1))
            if source is not None:
                wb0 = philox4x64(2 * step + 1, lane_p, lane_t, 0, seed, ikey)[0]
                u_rad = _redraw_zeros(
                    to_uniform(wb0), 2 * step + 1, lane_p, lane_t, seed, ikey
                )
                rad = d * np.cbrt(u_rad)
                vol_dirs = _sphere_dirs_3d(to_uniform(w2), to_uniform(w3))
                gamma = x[alive] + lane_s[:, None] * rad[:, None] * vol_dirs
                green = inv_four_pi * (1.0 / rad - 1.0 / d)
                vol = (4.0 / 3.0) * np.pi * d**3
                acc[alive] -= vol * np.asarray(source(gamma)) * green
        x[alive] += lane_s[:, None] * d[:, None] * dirs
        step += 1
    return values, steps_out, hits


# ---------------------------------------------------------------------------
# screened delta-tracking dispatch
# ---------------------------------------------------------------------------


def walk_screened_values(inst, points, point_ids, traj_ids, signs, cfg):
    """Batch interface of the delta-tracking walker (one row per walk)."""
    if cfg.sigma_bar is None or cfg.sigma_bar <= 0.0:
        raise ValueError("delta tracking requires a positive cfg.sigma_bar")
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    pid, tid, sgn = _streams_as_arrays(point_ids, traj_ids, signs, n)
    dom = inst.domain
    eps = cfg.resolve_eps(dom)
    seed = np.uint64(cfg.rng_seed)
    ikey = np.uint64(getattr(inst, "instance_key", 0))

    const = getattr(inst, "const_coeffs", None)
    if const is not None and isinstance(dom, BallDomain) and dom.dim == 3:
        sprime, fprime, gprime = const
        if sprime > cfg.sigma_bar:
            raise MajorantViolationError(
                f"majorant violated: sigma'={sprime} > sigma_bar={cfg.sigma_bar}"
            )
        dp = _params([*dom.center, dom.radius])
        values, steps, hits = _kernels.walk_screened_ball3(
            dp, float(cfg.sigma_bar), float(sprime),
            0 if fprime is None else 1,
            0.0 if fprime is None else float(fprime), float(gprime),
            pts[:, 0].copy(), pts[:, 1].copy(), pts[:, 2].copy(),
            pid, tid, sgn, seed, ikey, eps, cfg.max_steps,
        )
    else:
        values, steps, hits = _screened_generic(
            inst, pts, pid, tid, sgn, cfg, eps, seed, ikey
        )
    sqrt_alpha = getattr(inst, "sqrt_alpha", None)
    if sqrt_alpha is not None:
        values = values / np.asarray(sqrt_alpha(pts))
    return values, steps, hits


def _screened_generic(inst, pts, pid, tid, sgn, cfg, eps, seed, ikey):
    """Vectorized delta tracking for Python-callable coefficients (3D)."""
    dom = inst.domain
    sigma_bar = cfg.sigma_bar
    sqrt_sig = np.sqrt(sigma_bar)
    sigma_prime = inst.sigma_prime
    boundary_prime = inst.boundary_prime
    source_prime = getattr(inst, "source_prime", None)
    n = pts.shape[0]
    x = pts.copy()
    acc = np.zeros(n)
    thr = np.ones(n)
    values = np.empty(n)
    steps_out = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.uint8)
    alive = np.arange(n)
    step = 0
    while alive.size:
        d, qpt = dom.boundary_query(x[alive])
        shell = d < eps
        done = shell if step < cfg.max_steps else np.ones_like(shell)
        if np.any(done):
            idx = alive[done]
            values[idx] = acc[idx] + thr[idx] * np.asarray(boundary_prime(qpt[done]))
            steps_out[idx] = step
            hits[idx] = shell[done]
            alive = alive[~done]
            if alive.size == 0:
                break
            d = d[~done]
        lane_p = pid[alive]
        lane_t = tid[alive]
        lane_s = sgn[alive]
        w0, w1, w2, w3 = philox4x64(2 * step, lane_p, lane_t, 0, seed, ikey)
        q = np.minimum(sqrt_sig * d, 500.0)
        small = q < 1.0e-6
        qs = np.where(small, 1.0, q)
        surf = np.where(small, 1.0 - q * q / 6.0, qs / np.sinh(qs))
        dirs = _sphere_dirs_3d(to_uniform(w1), to_uniform(w2))
        to_vol = to_uniform(w0) >= surf
        radius = d.copy()
        if np.any(to_vol):
            radius[to_vol] = d[to_vol] * invert_radial_event_cdf(
                q[to_vol], to_uniform(w3[to_vol])
            )
        x[alive] += lane_s[:, None] * radius[:, None] * dirs
        if np.any(to_vol):
            vol_idx = alive[to_vol]
            y = x[vol_idx]
            sp = np.asarray(sigma_prime(y))
            if np.any(sp > sigma_bar):
                worst = float(sp.max())
                raise MajorantViolationError(
                    f"majorant violated: sigma'={worst} > sigma_bar={sigma_bar}"
                )
            if source_prime is not None:
                acc[vol_idx] += thr[vol_idx] * np.asarray(source_prime(y)) / sigma_bar
            thr[vol_idx] *= 1.0 - sp / sigma_bar
        step += 1
    return values, steps_out, hits


# ---------------------------------------------------------------------------
# single-trajectory interfaces
# ---------------------------------------------------------------------------


def _require_interior(inst, xi):
    if not inst.domain.contains(xi):
        raise ExteriorQueryError(f"exterior query: start point {np.asarray(xi).tolist()}")


def _as_result(values, steps, hits, i=0):
    term = TERM_BOUNDARY if hits[i] else TERM_MAX_STEPS
    return TrajectoryResult(float(values[i]), int(steps[i]), term)


def walk_poisson(inst, xi, cfg, stream: TrajectoryStream | None = None) -> TrajectoryResult:
    """One walk-on-spheres trajectory from the interior point xi."""
    _require_interior(inst, xi)
    s = stream or TrajectoryStream()
    out = walk_poisson_values(
        inst, np.asarray(xi, dtype=np.float64)[None, :],
        [s.point_id], [s.traj_id], [s.sign], cfg,
    )
    return _as_result(*out)


def walk_poisson_antithetic(
    inst, xi, cfg, stream: TrajectoryStream | None = None
) -> tuple[TrajectoryResult, TrajectoryResult]:
    """A mirrored pair of trajectories sharing one random stream.

    The two walks consume identical draws; the second flips every direction
    vector, so corresponding sphere exits are exact antipodes. Each is
    marginally distributed like a plain walk.
    """
    _require_interior(inst, xi)
    s = stream or TrajectoryStream()
    p = np.asarray(xi, dtype=np.float64)[None, :].repeat(2, axis=0)
    out = walk_poisson_values(
        inst, p, [s.point_id] * 2, [s.traj_id] * 2, [1.0, -1.0], cfg
    )
    return _as_result(*out, i=0), _as_result(*out, i=1)


def walk_screened_delta(
    inst, xi, cfg, stream: TrajectoryStream | None = None
) -> TrajectoryResult:
    """One delta-tracking trajectory from the interior point xi."""
    _require_interior(inst, xi)
    s = stream or TrajectoryStream()
    out = walk_screened_values(
        inst, np.asarray(xi, dtype=np.float64)[None, :],
        [s.point_id], [s.traj_id], [s.sign], cfg,
    )
    return _as_result(*out)
