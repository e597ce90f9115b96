"""Command-line entry point: solve, greens-check, train, inpaint, bench.

Every run is described by a JSON config file plus flat ``--key=value``
overrides (dotted keys reach into nested sections, values parse as JSON
with a plain-string fallback). Each text artifact starts with a header
line carrying the tool version, seed, worker count, and a hash of the
mathematical part of the effective config; binary PGM output carries the
same header as its comment line, and every command writes a summary JSON
next to its primary artifact.

Exit codes: 0 on success, 1 for usage or config problems, 2 when a
numerical check fails or a run diverges. The ``SPHEREWALK_WORKERS``
environment variable supplies the default worker count.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import replace
from functools import partial
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from . import __version__, _kernels
from .estimator import estimate
from .geometry import domain_from_config
from .greens import (
    BallKernelQuery,
    ScreenedVolumeSampler,
    ball_volume,
    greens_ball,
    greens_ball_mass,
    screened_surface_mass,
)
from .inpaint import inpaint_biharmonic, inpaint_harmonic, read_mask, read_pgm, write_pgm
from .pde import ConstantFamily, LinearFamily, VcFamily, instance_from_config
from .surrogate import Surrogate, TrainConfig, train
from .walker import Problem, WalkConfig

_ENV_WORKERS = "SPHEREWALK_WORKERS"

# Keys that change where or how fast a run executes but not what it
# computes; they stay out of the config hash so reruns compare equal.
_RUNTIME_KEYS = ("workers", "output", "history", "summary")


class UsageError(Exception):
    """Bad command line or config content; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(
            f"config {path} is not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return cfg


def _parse_overrides(tokens):
    out = {}
    for tok in tokens:
        if not tok.startswith("--") or "=" not in tok:
            raise UsageError(f"override {tok!r} must look like --key=value")
        key, _, raw = tok[2:].partition("=")
        if not key:
            raise UsageError(f"override {tok!r} has an empty key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return out


def _merge(base, layer):
    for key, value in layer.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def _effective_config(defaults, path, overrides, allowed):
    cfg = copy.deepcopy(defaults)
    layers = []
    if path is not None:
        layers.append(_load_config(path))
    layers.append(_parse_overrides(overrides))
    for layer in layers:
        unknown = set(layer) - allowed
        if unknown:
            raise UsageError(
                f"unknown config field(s): {', '.join(sorted(unknown))}; "
                f"allowed: {', '.join(sorted(allowed))}"
            )
        _merge(cfg, layer)
    return cfg


def _resolve_workers(cfg):
    workers = cfg.get("workers")
    if workers is None:
        env = os.environ.get(_ENV_WORKERS)
        if env is not None:
            try:
                workers = int(env)
            except ValueError:
                raise UsageError(f"{_ENV_WORKERS}={env!r} is not an integer") from None
        else:
            workers = 1
    workers = int(workers)
    if workers < 1:
        raise UsageError("workers must be at least 1")
    cfg["workers"] = workers
    return workers


def _config_hash(cfg):
    trimmed = {k: v for k, v in cfg.items() if k not in _RUNTIME_KEYS}
    blob = json.dumps(trimmed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _header(cfg):
    return (
        f"# spherewalk {__version__} seed={int(cfg.get('seed', 0))} "
        f"workers={cfg['workers']} config={_config_hash(cfg)}"
    )


def _write_summary(output, payload):
    path = Path(output).with_suffix(".summary.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _require(cfg, key, command):
    if cfg.get(key) is None:
        raise UsageError(f"{command} config needs {key!r}")
    return cfg[key]


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------


def _const_field(c, q):
    q = np.asarray(q)
    return np.full(q.shape[:-1], float(c))


def _build_problem(spec):
    """Constant-data problem from {"domain": ..., "g": ..., "f": ...}."""
    if not isinstance(spec, dict):
        raise UsageError("problem must be an object")
    try:
        domain = domain_from_config(_require(spec, "domain", "problem"))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad domain config: {exc}") from exc
    g = float(spec.get("g", 0.0))
    f = spec.get("f")
    return Problem(
        domain,
        boundary=partial(_const_field, g),
        source=None if f is None else partial(_const_field, float(f)),
        instance_key=int(spec.get("instance_key", 0)),
        boundary_spec=(_kernels.BND_CONST, (g,)),
        source_spec=None if f is None else (_kernels.SRC_CONST, (float(f),)),
    )


def _build_instance(cfg, command):
    problem = cfg.get("problem")
    instance = cfg.get("instance")
    if (problem is None) == (instance is None):
        raise UsageError(f"{command} config needs exactly one of 'problem' or 'instance'")
    if problem is not None:
        return _build_problem(problem)
    try:
        return instance_from_config(instance)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad instance config: {exc}") from exc


def _build_points(cfg, domain, command):
    """Explicit points, or an axis-aligned lattice filtered to the interior."""
    points = cfg.get("points")
    grid = cfg.get("grid")
    if (points is None) == (grid is None):
        raise UsageError(f"{command} config needs exactly one of 'points' or 'grid'")
    dim = domain.dim
    if points is not None:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != dim:
            raise UsageError(f"points must be rows of dimension {dim}")
        return pts, np.arange(pts.shape[0])
    lo = np.asarray(_require(grid, "lo", "grid"), dtype=np.float64)
    hi = np.asarray(_require(grid, "hi", "grid"), dtype=np.float64)
    shape = [int(n) for n in _require(grid, "shape", "grid")]
    if not (lo.shape == hi.shape == (dim,)) or len(shape) != dim:
        raise UsageError(f"grid lo/hi/shape must all have dimension {dim}")
    if any(n < 1 for n in shape):
        raise UsageError("grid shape entries must be positive")
    axes = [np.linspace(lo[a], hi[a], shape[a]) for a in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    ids = np.arange(pts.shape[0])
    inside = np.atleast_1d(domain.contains(pts))
    if not inside.any():
        raise UsageError("grid contains no interior points")
    return pts[inside], ids[inside]


def _walk_config(cfg, inst):
    sigma_bar = cfg.get("sigma_bar")
    if sigma_bar is None:
        sigma_bar = getattr(inst, "sigma_bar", None)
    return WalkConfig(
        eps_shell=cfg.get("eps_shell"),
        max_steps=int(cfg.get("max_steps", 1000)),
        antithetic=bool(cfg.get("antithetic", False)),
        sigma_bar=sigma_bar,
        rng_seed=int(cfg.get("seed", 0)),
    )


def _write_estimate_csv(path, header, ids, points, results):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh)
        dim = points.shape[1]
        w.writerow(["instance_id"] + [f"x{d}" for d in range(dim)] + ["mean", "variance", "n_samples"])
        for pid, pt, est in zip(ids, points, results):
            w.writerow(
                [int(pid)]
                + [repr(float(c)) for c in pt]
                + [repr(float(est.mean)), repr(float(est.variance)), int(est.n_samples)]
            )


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

_SOLVE_DEFAULTS = {
    "problem": None,
    "instance": None,
    "points": None,
    "grid": None,
    "trajectories": 100,
    "antithetic": False,
    "eps_shell": None,
    "max_steps": 1000,
    "sigma_bar": None,
    "seed": 0,
    "workers": None,
    "output": "solve.csv",
}


def cmd_solve(cfg):
    workers = _resolve_workers(cfg)
    inst = _build_instance(cfg, "solve")
    problem = getattr(inst, "problem", inst)
    points, ids = _build_points(cfg, problem.domain, "solve")
    L = int(cfg.get("trajectories", 100))
    walk = _walk_config(cfg, inst)
    header = _header(cfg)
    t0 = time.perf_counter()
    results = estimate(problem, points, L, walk, workers=workers, point_ids=ids)
    wall = time.perf_counter() - t0
    out = cfg["output"]
    _write_estimate_csv(out, header, ids, points, results)
    means = np.array([r.mean for r in results])
    summary = _write_summary(
        out,
        {
            "header": header,
            "command": "solve",
            "output": str(out),
            "n_points": int(points.shape[0]),
            "trajectories": L,
            "antithetic": walk.antithetic,
            "mean_min": float(means.min()),
            "mean_max": float(means.max()),
            "wall_seconds": round(wall, 3),
        },
    )
    print(header)
    print(f"wrote {out} ({points.shape[0]} points x {L} trajectories) and {summary}")
    return 0


# ---------------------------------------------------------------------------
# greens-check
# ---------------------------------------------------------------------------

_GREENS_DEFAULTS = {
    # 0.5% equals three standard errors of the mass estimate at this count
    "samples": 1_000_000,
    "pairs": 50,
    "radii": [0.5, 1.0, 2.0],
    "dims": [2, 3],
    "mass_tolerance": 5e-3,
    "balance_tolerance": 1e-6,
    "seed": 0,
    "workers": None,
    "output": "greens_check.txt",
}


def _harmonic_green_samples(d, r, rho):
    """Kernel values on an array of offsets, cross-checked pointwise.

    The vectorized expression must agree with the scalar kernel to within
    a couple of ulps; a spot check on the head of the array guards
    against drift.
    """
    if d == 2:
        vec = np.log(r / rho) * (1.0 / (2.0 * math.pi))
    else:
        vec = (1.0 / rho - 1.0 / r) * (1.0 / (4.0 * math.pi))
    for k in range(min(256, rho.size)):
        expected = greens_ball(BallKernelQuery(d, r, float(rho[k])))
        if abs(vec[k] - expected) > 1e-14 * abs(expected):
            raise RuntimeError(
                f"vectorized Green's value drifted from the kernel at d={d} r={r}"
            )
    return vec


def cmd_greens_check(cfg):
    _resolve_workers(cfg)
    header = _header(cfg)
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    n = int(cfg["samples"])
    lines = []
    failures = 0

    def check(label, deviation, tol):
        nonlocal failures
        ok = deviation < tol
        failures += 0 if ok else 1
        lines.append(f"{'pass' if ok else 'FAIL'} {label} deviation={deviation:.3e} tol={tol:.1e}")

    for d in cfg["dims"]:
        for r in cfg["radii"]:
            u = rng.random(n)
            rho = float(r) * u ** (1.0 / d)
            est = ball_volume(d, r) * _harmonic_green_samples(d, float(r), rho).mean()
            exact = greens_ball_mass(d, float(r))
            check(f"mass d={d} r={r}", abs(est - exact) / exact, cfg["mass_tolerance"])

    for _ in range(int(cfg["pairs"])):
        r = float(rng.uniform(0.25, 2.5))
        sigma = float(10.0 ** rng.uniform(-2.0, 2.0))
        sampler = ScreenedVolumeSampler(r, sigma)
        integral, _err = quad(
            lambda rho: 4.0 * math.pi * rho * rho * sampler.green(rho), 0.0, r, limit=200
        )
        balance = screened_surface_mass(r, sigma) + sigma * integral
        check(f"balance r={r:.3f} sigma={sigma:.3f}", abs(balance - 1.0), cfg["balance_tolerance"])

    for r in cfg["radii"]:
        check(f"surface-mass limit r={r}", abs(screened_surface_mass(float(r), 0.0) - 1.0), 1e-12)

    out = cfg["output"]
    with open(out, "w") as fh:
        fh.write(header + "\n")
        fh.write("\n".join(lines) + "\n")
    summary = _write_summary(
        out,
        {
            "header": header,
            "command": "greens-check",
            "output": str(out),
            "checks": len(lines),
            "failures": failures,
        },
    )
    print(header)
    for line in lines:
        print(line)
    print(f"wrote {out} and {summary}")
    if failures:
        print(f"numerical failure: {failures} check(s) failed", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_TRAIN_DEFAULTS = {
    "family": "constant",
    "domains": None,
    "hidden": [64, 64],
    "epochs": None,
    "points_per_instance": 1024,
    "instances": 8,
    "trajectories": 10,
    "lr": 1e-3,
    "weight_decay": 1e-6,
    "plateau_factor": 0.9,
    "plateau_patience": 2,
    "plateau_window": 50,
    "caching": True,
    "divergence_guard": 1e6,
    "walk": {},
    "seed": 0,
    "init_seed": None,
    "workers": None,
    "output": "surrogate.swnn",
    "history": "history.csv",
}


def _build_family(cfg):
    name = cfg.get("family", "constant")
    if name == "constant":
        return ConstantFamily()
    if name == "linear":
        return LinearFamily()
    if name == "vc":
        domains = cfg.get("domains") or [{"kind": "ball", "center": [0.0, 0.0, 0.0], "radius": 1.0}]
        try:
            return VcFamily([domain_from_config(d) for d in domains])
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"bad domain config: {exc}") from exc
    raise UsageError(f"unknown family {name!r}; expected constant, linear, or vc")


def cmd_train(cfg):
    workers = _resolve_workers(cfg)
    if cfg.get("epochs") is None:
        raise UsageError("train config needs 'epochs'")
    family = _build_family(cfg)
    header = _header(cfg)
    seed = int(cfg.get("seed", 0))
    init_seed = cfg.get("init_seed")
    init_seed = seed + 1 if init_seed is None else int(init_seed)
    walk_cfg = cfg.get("walk") or {}
    walk = WalkConfig(
        eps_shell=walk_cfg.get("eps_shell"),
        max_steps=int(walk_cfg.get("max_steps", 1000)),
        antithetic=bool(walk_cfg.get("antithetic", False)),
        sigma_bar=walk_cfg.get("sigma_bar"),
        rng_seed=int(walk_cfg.get("rng_seed", seed)),
    )
    try:
        tcfg = TrainConfig(
            epochs=int(cfg["epochs"]),
            points_per_instance=int(cfg["points_per_instance"]),
            instances=int(cfg["instances"]),
            trajectories=int(cfg["trajectories"]),
            lr=float(cfg["lr"]),
            weight_decay=float(cfg["weight_decay"]),
            plateau_factor=float(cfg["plateau_factor"]),
            plateau_patience=int(cfg["plateau_patience"]),
            plateau_window=int(cfg["plateau_window"]),
            caching=bool(cfg["caching"]),
            seed=seed,
            workers=workers,
            divergence_guard=float(cfg["divergence_guard"]),
            walk=walk,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sizes = [family.feature_dim] + [int(h) for h in cfg["hidden"]] + [1]
    model = Surrogate(sizes, rng=np.random.default_rng(init_seed))
    t0 = time.perf_counter()
    model, history = train(model, family, tcfg, np.random.default_rng(seed))
    wall = time.perf_counter() - t0
    out = cfg["output"]
    model.save(out)
    hist_path = cfg["history"]
    with open(hist_path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "lr", "wall"])
        for row in history:
            w.writerow([row.epoch, repr(row.loss), repr(row.lr), repr(row.wall)])
    summary = _write_summary(
        out,
        {
            "header": header,
            "command": "train",
            "output": str(out),
            "history": str(hist_path),
            "family": cfg.get("family", "constant"),
            "sizes": sizes,
            "epochs": tcfg.epochs,
            "final_loss": history[-1].loss if history else None,
            "final_lr": history[-1].lr if history else tcfg.lr,
            "wall_seconds": round(wall, 3),
        },
    )
    print(header)
    print(f"wrote {out}, {hist_path}, and {summary}")
    return 0


# ---------------------------------------------------------------------------
# inpaint
# ---------------------------------------------------------------------------

_INPAINT_DEFAULTS = {
    "image": None,
    "mask": None,
    "mode": "biharmonic",
    "walks": 64,
    "eps_shell": None,
    "max_steps": 1000,
    "seed": 0,
    "workers": None,
    "output": "inpainted.pgm",
}


def cmd_inpaint(cfg):
    workers = _resolve_workers(cfg)
    image_path = _require(cfg, "image", "inpaint")
    mask_path = _require(cfg, "mask", "inpaint")
    mode = cfg.get("mode", "biharmonic")
    if mode not in ("harmonic", "biharmonic"):
        raise UsageError(f"mode must be 'harmonic' or 'biharmonic', got {mode!r}")
    try:
        img = read_pgm(image_path)
        mask = read_mask(mask_path)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    walk = WalkConfig(
        eps_shell=cfg.get("eps_shell"),
        max_steps=int(cfg.get("max_steps", 1000)),
        rng_seed=int(cfg.get("seed", 0)),
    )
    walks = int(cfg.get("walks", 64))
    fill = inpaint_harmonic if mode == "harmonic" else inpaint_biharmonic
    t0 = time.perf_counter()
    try:
        result = fill(img, mask, walk, walks=walks, workers=workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    wall = time.perf_counter() - t0
    header = _header(cfg)
    out = cfg["output"]
    write_pgm(out, result, comment=header[2:])
    summary = _write_summary(
        out,
        {
            "header": header,
            "command": "inpaint",
            "output": str(out),
            "mode": mode,
            "walks": walks,
            "masked_pixels": int(mask.sum()),
            "image_shape": list(img.shape),
            "wall_seconds": round(wall, 3),
        },
    )
    print(header)
    print(f"wrote {out} ({int(mask.sum())} masked pixels, {mode}) and {summary}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

_BENCH_DEFAULTS = {
    "problem": None,
    "instance": None,
    "points": None,
    "grid": None,
    "trajectory_counts": [1, 10, 100],
    "replicas": 100,
    "antithetic": False,
    "eps_shell": None,
    "max_steps": 1000,
    "sigma_bar": None,
    "seed": 0,
    "workers": None,
    "output": "bench.csv",
}


def cmd_bench(cfg):
    workers = _resolve_workers(cfg)
    inst = _build_instance(cfg, "bench")
    problem = getattr(inst, "problem", inst)
    points, ids = _build_points(cfg, problem.domain, "bench")
    counts = [int(L) for L in cfg["trajectory_counts"]]
    replicas = int(cfg["replicas"])
    if replicas < 2 or not counts:
        raise UsageError("bench needs at least 2 replicas and one trajectory count")
    walk = _walk_config(cfg, inst)
    header = _header(cfg)
    rows = []
    summary_rows = []
    for L in counts:
        t0 = time.perf_counter()
        means = np.empty((replicas, points.shape[0]))
        for k in range(replicas):
            results = estimate(
                problem, points, L, walk, workers=workers,
                traj_start=k * L, point_ids=ids,
            )
            means[k] = [r.mean for r in results]
        wall = time.perf_counter() - t0
        var = float(means.var(axis=0, ddof=1).mean())
        rows.append(
            [L, replicas, repr(float(means.mean())), repr(var), repr(var * L), repr(wall / replicas)]
        )
        summary_rows.append({"trajectories": L, "replica_variance": var, "variance_times_l": var * L})
    out = cfg["output"]
    with open(out, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh)
        w.writerow(
            ["trajectories", "replicas", "mean", "replica_variance", "variance_times_l", "seconds_per_replica"]
        )
        w.writerows(rows)
    summary = _write_summary(
        out,
        {
            "header": header,
            "command": "bench",
            "output": str(out),
            "n_points": int(points.shape[0]),
            "replicas": replicas,
            "rows": summary_rows,
        },
    )
    print(header)
    print(f"wrote {out} and {summary}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "solve": (cmd_solve, _SOLVE_DEFAULTS),
    "greens-check": (cmd_greens_check, _GREENS_DEFAULTS),
    "train": (cmd_train, _TRAIN_DEFAULTS),
    "inpaint": (cmd_inpaint, _INPAINT_DEFAULTS),
    "bench": (cmd_bench, _BENCH_DEFAULTS),
}


def _build_parser():
    parser = _Parser(
        prog="spherewalk",
        description="Grid-free Monte Carlo PDE toolbox",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS), help="subcommand to run")
    parser.add_argument("config", nargs="?", help="JSON config file")
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    try:
        ns, extras = parser.parse_known_args(argv)
        run, defaults = _COMMANDS[ns.command]
        cfg = _effective_config(defaults, ns.config, extras, set(defaults))
        return run(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
