"""Parametric problem families for training and evaluation.

Two families ship with the package. The linear family poses Laplacian
u = f on wavy polar domains, with a two-bump radial-basis source and an
order-2 Fourier boundary. The varying-coefficient family poses
div(alpha grad u) - sigma u = -f on 3D domains with closed-form alpha,
sigma, and a manufactured exact solution u = g; its instances carry the
transformed-walk callables (sigma', g', f', sqrt(alpha)) and a per-instance
absorption majorant estimated from interior probes.

All field evaluators are pure, vectorized over a trailing coordinate axis,
and built from module-level functions so that problem objects survive
pickling into worker processes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property, partial
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import BallDomain, PolarDomain, domain_from_config, domain_to_config
from .walker import Problem, ScreenedProblem

# ---------------------------------------------------------------------------
# linear family
# ---------------------------------------------------------------------------


def _fourier_series(b, q):
    # matches the compiled kernel: angle functions from x/r, y/r with the
    # convention (c, s) = (1, 0) at the origin
    q = np.asarray(q, dtype=np.float64)
    x, y = q[..., 0], q[..., 1]
    r = np.hypot(x, y)
    safe = np.where(r == 0.0, 1.0, r)
    c = np.where(r == 0.0, 1.0, x / safe)
    s = np.where(r == 0.0, 0.0, y / safe)
    c2 = c * c - s * s
    s2 = 2.0 * c * s
    return b[0] + b[1] * c + b[2] * s + b[3] * c2 + b[4] * s2


def _rbf_pair(params, p):
    b1, b2, m1x, m1y, m2x, m2y = params
    p = np.asarray(p, dtype=np.float64)
    x, y = p[..., 0], p[..., 1]
    d1x, d1y = x - m1x, y - m1y
    d2x, d2y = x - m2x, y - m2y
    return b1 * np.exp(-(d1x * d1x + d1y * d1y)) + b2 * np.exp(
        -(d2x * d2x + d2y * d2y)
    )


@dataclass(frozen=True)
class LinearInstance:
    """One problem from the linear family; immutable after sampling."""

    c1: float
    c2: float
    beta: tuple[float, float]
    mu: tuple[tuple[float, float], tuple[float, float]]
    b: tuple[float, float, float, float, float]
    instance_key: int = 0

    @cached_property
    def domain(self) -> PolarDomain:
        return PolarDomain(1.0, self.c1, self.c2)

    @cached_property
    def source_params(self) -> tuple:
        return (
            self.beta[0],
            self.beta[1],
            self.mu[0][0],
            self.mu[0][1],
            self.mu[1][0],
            self.mu[1][1],
        )

    @cached_property
    def problem(self) -> Problem:
        return Problem(
            self.domain,
            boundary=partial(_fourier_series, self.b),
            source=partial(_rbf_pair, self.source_params),
            instance_key=self.instance_key,
            boundary_spec=(_kernels.BND_FOURIER5, self.b),
            source_spec=(_kernels.SRC_RBF2, self.source_params),
        )

    @property
    def params(self) -> np.ndarray:
        """Flat parameter vector: c1, c2, beta, mu (row-major), b0..b4."""
        return np.array(
            [self.c1, self.c2, *self.beta, *self.mu[0], *self.mu[1], *self.b]
        )


def sample_linear_instance(rng, instance_key: int = 0) -> LinearInstance:
    """Draw one linear-family instance; fixed draw order for replayability."""
    c1, c2 = rng.uniform(-0.2, 0.2, size=2)
    beta = rng.uniform(-1.0, 1.0, size=2)
    mu = rng.uniform(-0.5, 0.5, size=(2, 2))
    b = rng.uniform(-1.0, 1.0, size=5)
    return LinearInstance(
        float(c1),
        float(c2),
        (float(beta[0]), float(beta[1])),
        ((float(mu[0, 0]), float(mu[0, 1])), (float(mu[1, 0]), float(mu[1, 1]))),
        tuple(float(v) for v in b),
        instance_key,
    )


def eval_boundary_linear(inst: LinearInstance, x):
    """Order-2 Fourier series in the polar angle of x."""
    out = _fourier_series(inst.b, x)
    return float(out) if np.ndim(out) == 0 else out


def eval_source_linear(inst: LinearInstance, x):
    """Two isotropic Gaussian bumps (negative exponent, bounded)."""
    out = _rbf_pair(inst.source_params, x)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# varying-coefficient family
# ---------------------------------------------------------------------------


def _vc_log_alpha(phi, x):
    """h = log(alpha) with gradient and Laplacian, h = -x1^2 + cos(ax0)sin(bx1)."""
    x = np.asarray(x, dtype=np.float64)
    a = 4.0 * math.pi * phi
    b = 3.0 * math.pi * phi
    x0, x1 = x[..., 0], x[..., 1]
    ca, sa = np.cos(a * x0), np.sin(a * x0)
    cb, sb = np.cos(b * x1), np.sin(b * x1)
    h = -x1 * x1 + ca * sb
    grad = np.stack(
        [-a * sa * sb, -2.0 * x1 + b * ca * cb, np.zeros_like(x0)], axis=-1
    )
    lap = -2.0 - (a * a + b * b) * ca * sb
    return h, grad, lap


def _vc_solution(phi, x):
    """Manufactured solution u with gradient and Laplacian."""
    x = np.asarray(x, dtype=np.float64)
    p = math.pi * phi
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    s1, c1 = np.sin(p * x0), np.cos(p * x0)
    s2, c2 = np.sin(2.0 * p * x1), np.cos(2.0 * p * x1)
    u = s1 * c2 + (1.0 - c1) * (1.0 - s2) + np.sin(3.0 * p * x2) ** 2
    du0 = p * c1 * c2 + p * s1 * (1.0 - s2)
    du1 = -2.0 * p * s1 * s2 - 2.0 * p * (1.0 - c1) * c2
    du2 = 3.0 * p * np.sin(6.0 * p * x2)
    grad = np.stack([du0, du1, du2], axis=-1)
    lap = (
        -p * p * s1 * c2
        + p * p * c1 * (1.0 - s2)
        - 4.0 * p * p * s1 * c2
        + 4.0 * p * p * (1.0 - c1) * s2
        + 18.0 * p * p * np.cos(6.0 * p * x2)
    )
    return u, grad, lap


def _vc_sigma(a_min, a_max, x):
    x = np.asarray(x, dtype=np.float64)
    x0, x1 = x[..., 0], x[..., 1]
    return a_min + (a_max - a_min) * (
        1.0 + 0.5 * np.sin(2.0 * math.pi * x0) * np.cos(0.5 * math.pi * x1)
    )


def _vc_sigma_prime(phi, a_min, a_max, y):
    # transformed absorption for the sqrt(alpha) substitution:
    # sigma/alpha + (1/2) lap h + (1/4) |grad h|^2
    h, gh, lh = _vc_log_alpha(phi, y)
    sigma = _vc_sigma(a_min, a_max, y)
    return sigma * np.exp(-h) + 0.5 * lh + 0.25 * np.sum(gh * gh, axis=-1)


def _vc_sqrt_alpha(phi, y):
    h, _, _ = _vc_log_alpha(phi, y)
    return np.exp(0.5 * h)


def _vc_boundary_prime(phi, q):
    u, _, _ = _vc_solution(phi, q)
    return _vc_sqrt_alpha(phi, q) * u


def _vc_source(phi, a_min, a_max, y):
    h, gh, lh = _vc_log_alpha(phi, y)
    u, gu, lu = _vc_solution(phi, y)
    alpha = np.exp(h)
    sigma = _vc_sigma(a_min, a_max, y)
    return -alpha * lu - alpha * np.sum(gh * gu, axis=-1) + sigma * u


def _vc_source_prime(phi, a_min, a_max, y):
    return _vc_source(phi, a_min, a_max, y) / _vc_sqrt_alpha(phi, y)


@dataclass(frozen=True)
class VcInstance:
    """One varying-coefficient problem with a manufactured exact solution."""

    phi_alpha: float
    a_min: float
    a_max: float
    domain: object
    sigma_bar: float
    instance_key: int = 0

    @cached_property
    def problem(self) -> ScreenedProblem:
        args = (self.phi_alpha, self.a_min, self.a_max)
        return ScreenedProblem(
            self.domain,
            sigma_prime=partial(_vc_sigma_prime, *args),
            boundary_prime=partial(_vc_boundary_prime, self.phi_alpha),
            source_prime=partial(_vc_source_prime, *args),
            sqrt_alpha=partial(_vc_sqrt_alpha, self.phi_alpha),
            instance_key=self.instance_key,
        )

    def exact_solution(self, x):
        u, _, _ = _vc_solution(self.phi_alpha, x)
        return u

    def sigma_prime(self, x):
        return _vc_sigma_prime(self.phi_alpha, self.a_min, self.a_max, x)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.phi_alpha, self.a_min, self.a_max])


def eval_vc_fields(inst: VcInstance, x):
    """All closed-form fields at x: (alpha, grad_alpha, lap_alpha, sigma, g, f)."""
    h, gh, lh = _vc_log_alpha(inst.phi_alpha, x)
    alpha = np.exp(h)
    grad_alpha = alpha[..., None] * gh
    lap_alpha = alpha * (lh + np.sum(gh * gh, axis=-1))
    sigma = _vc_sigma(inst.a_min, inst.a_max, x)
    g, _, _ = _vc_solution(inst.phi_alpha, x)
    f = _vc_source(inst.phi_alpha, inst.a_min, inst.a_max, x)
    return alpha, grad_alpha, lap_alpha, sigma, g, f


_MAJORANT_PROBES = 10_000
_MAJORANT_SLACK = 1.1
_MAJORANT_FLOOR = 0.01


def majorant_for(phi, a_min, a_max, domain, rng, probes=_MAJORANT_PROBES) -> float:
    """Estimate the absorption majorant from interior probe points.

    Slack factor 1.1 over the observed supremum; floored at a small
    positive value because the supremum itself can be negative.
    """
    pts = domain.sample_interior(probes, rng)
    sup = float(_vc_sigma_prime(phi, a_min, a_max, pts).max())
    return max(_MAJORANT_SLACK * sup, _MAJORANT_FLOOR)


def sample_vc_instance(rng, domain, instance_key: int = 0) -> VcInstance:
    """Draw one varying-coefficient instance on the given 3D domain."""
    phi = float(rng.uniform(0.5, 1.5))
    a_min = float(rng.uniform(0.1, 0.3))
    a_max = float(rng.uniform(0.8, 1.5))
    sigma_bar = majorant_for(phi, a_min, a_max, domain, rng)
    return VcInstance(phi, a_min, a_max, domain, sigma_bar, instance_key)


# ---------------------------------------------------------------------------
# constant family (f = 0, g = c): exact targets, used by training sanity tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstInstance:
    c: float
    instance_key: int = 0

    @cached_property
    def domain(self) -> BallDomain:
        return BallDomain([0.0, 0.0], 1.0)

    @cached_property
    def problem(self) -> Problem:
        return Problem(
            self.domain,
            boundary=partial(_const_boundary, self.c),
            instance_key=self.instance_key,
            boundary_spec=(_kernels.BND_CONST, (self.c,)),
        )

    @property
    def params(self) -> np.ndarray:
        return np.array([self.c])


def _const_boundary(c, q):
    q = np.asarray(q)
    return np.full(q.shape[:-1], c)


# ---------------------------------------------------------------------------
# family objects: sampling, features, walk configuration
# ---------------------------------------------------------------------------


class LinearFamily:
    """Sampler and feature encoder for the linear 2D family."""

    feature_dim = 15

    def sample_instance(self, rng, instance_key: int = 0) -> LinearInstance:
        return sample_linear_instance(rng, instance_key)

    def sample_points(self, inst, n, rng) -> np.ndarray:
        return inst.domain.sample_interior(n, rng)

    def features(self, inst, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        tiled = np.tile(inst.params, (points.shape[0], 1))
        return np.concatenate([points, tiled], axis=1)

    def walk_config(self, inst, cfg):
        return cfg


class VcFamily:
    """Sampler and feature encoder for the varying-coefficient 3D family."""

    feature_dim = 6

    def __init__(self, domains):
        # one or more 3D domains; instances cycle through them
        self.domains = list(domains)

    def sample_instance(self, rng, instance_key: int = 0) -> VcInstance:
        domain = self.domains[instance_key % len(self.domains)]
        return sample_vc_instance(rng, domain, instance_key)

    def sample_points(self, inst, n, rng) -> np.ndarray:
        return inst.domain.sample_interior(n, rng)

    def features(self, inst, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        tiled = np.tile(inst.params, (points.shape[0], 1))
        return np.concatenate([points, tiled], axis=1)

    def walk_config(self, inst, cfg):
        return replace(cfg, sigma_bar=inst.sigma_bar)


class ConstantFamily:
    """Constant-boundary instances; targets are exact, useful for sanity runs."""

    feature_dim = 3

    def sample_instance(self, rng, instance_key: int = 0) -> ConstInstance:
        return ConstInstance(float(rng.uniform(-1.0, 1.0)), instance_key)

    def sample_points(self, inst, n, rng) -> np.ndarray:
        return inst.domain.sample_interior(n, rng)

    def features(self, inst, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        tiled = np.tile(inst.params, (points.shape[0], 1))
        return np.concatenate([points, tiled], axis=1)

    def walk_config(self, inst, cfg):
        return cfg


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def instance_to_config(inst) -> dict:
    if isinstance(inst, LinearInstance):
        return {
            "family": "linear",
            "c1": inst.c1,
            "c2": inst.c2,
            "beta": list(inst.beta),
            "mu": [list(m) for m in inst.mu],
            "b": list(inst.b),
            "instance_key": inst.instance_key,
        }
    if isinstance(inst, VcInstance):
        return {
            "family": "vc",
            "phi_alpha": inst.phi_alpha,
            "a_min": inst.a_min,
            "a_max": inst.a_max,
            "sigma_bar": inst.sigma_bar,
            "domain": domain_to_config(inst.domain),
            "instance_key": inst.instance_key,
        }
    if isinstance(inst, ConstInstance):
        return {"family": "constant", "c": inst.c, "instance_key": inst.instance_key}
    raise TypeError(f"unknown instance type {type(inst).__name__}")


def instance_from_config(cfg: dict, base_dir=None):
    family = cfg.get("family")
    if family == "linear":
        return LinearInstance(
            float(cfg["c1"]),
            float(cfg["c2"]),
            tuple(float(v) for v in cfg["beta"]),
            tuple(tuple(float(v) for v in row) for row in cfg["mu"]),
            tuple(float(v) for v in cfg["b"]),
            int(cfg.get("instance_key", 0)),
        )
    if family == "vc":
        domain = domain_from_config(cfg["domain"], base_dir=base_dir)
        return VcInstance(
            float(cfg["phi_alpha"]),
            float(cfg["a_min"]),
            float(cfg["a_max"]),
            domain,
            float(cfg["sigma_bar"]),
            int(cfg.get("instance_key", 0)),
        )
    if family == "constant":
        return ConstInstance(float(cfg["c"]), int(cfg.get("instance_key", 0)))
    raise ValueError(f"unknown family {family!r}")


def save_dataset(directory, instances) -> Path:
    """Write one JSON file per instance plus a manifest; returns manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for idx, inst in enumerate(instances):
        name = f"instance_{idx:04d}.json"
        with open(directory / name, "w") as fh:
            json.dump(instance_to_config(inst), fh, indent=1)
        files.append(name)
    manifest = directory / "manifest.json"
    with open(manifest, "w") as fh:
        json.dump({"count": len(files), "files": files}, fh, indent=1)
    return manifest


def load_dataset(directory):
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    out = []
    for name in manifest["files"]:
        with open(directory / name) as fh:
            out.append(instance_from_config(json.load(fh), base_dir=directory))
    return out
