"""Trajectory-ensemble estimates and the epoch-averaged estimate cache.

`estimate` runs a fixed number of independent trajectories per query point
and reduces them to per-point moments. `EstimateCache` folds those
estimates in across epochs, keyed by (instance index, point index), and
serves the running average of epoch means as a training target. The
accumulation is one float addition per epoch per key, so an incremental
run, a resumed run, and a single-session replay of the same trajectory
windows all produce bit-identical targets.
"""

from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .geometry import ExteriorQueryError
from .walker import ScreenedProblem, walk_poisson_values, walk_screened_values

_MAGIC = b"SWEC"
_VERSION = 1
_HEADER = struct.Struct("<IQQ")
_ENTRY_DT = np.dtype(
    [
        ("j", "<i8"),
        ("i", "<i8"),
        ("mean_sum", "<f8"),
        ("n", "<i8"),
        ("mean", "<f8"),
        ("m2", "<f8"),
    ]
)


def chan_merge(n1, mean1, m21, n2, mean2, m22):
    """Pool two (count, mean, squared-deviation sum) triples.

    Equivalent to concatenating the underlying samples, but works from
    the reduced moments alone.
    """
    n = n1 + n2
    if n == 0:
        return 0, 0.0, 0.0
    delta = mean2 - mean1
    mean = mean1 + delta * (n2 / n)
    m2 = m21 + m22 + delta * delta * (n1 * n2 / n)
    return n, mean, m2


class WelfordAccumulator:
    """Single-pass mean and variance, stable for long streams."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def extend(self, values):
        for x in np.asarray(values, dtype=np.float64).ravel():
            self.push(float(x))

    def merge(self, other):
        self.n, self.mean, self.m2 = chan_merge(
            self.n, self.mean, self.m2, other.n, other.mean, other.m2
        )

    @property
    def variance(self):
        return self.m2 / (self.n - 1) if self.n >= 2 else math.nan


@dataclass(frozen=True)
class PointEstimate:
    """Moments of a finite trajectory ensemble at one query point."""

    mean: float
    m2: float
    n_samples: int

    @property
    def variance(self) -> float:
        if self.n_samples >= 2:
            return self.m2 / (self.n_samples - 1)
        return math.nan

    @property
    def std_error(self) -> float:
        v = self.variance
        return math.sqrt(v / self.n_samples) if v == v else math.nan

    @classmethod
    def from_values(cls, values) -> "PointEstimate":
        v = np.asarray(values, dtype=np.float64)
        mean = float(v.mean())
        m2 = float(np.square(v - mean).sum())
        return cls(mean, m2, int(v.size))


def _walk_fn(inst):
    if isinstance(inst, ScreenedProblem):
        return walk_screened_values
    return walk_poisson_values


def _estimate_block(inst, points, L, cfg, traj_start, point_ids):
    P = points.shape[0]
    if cfg.antithetic:
        pairs = L // 2
        # a mirrored pair shares one trajectory id; the id space still
        # advances by L per epoch so cached windows stay aligned
        tid = np.tile(np.repeat(traj_start + 2 * np.arange(pairs), 2), P)
        signs = np.tile([1.0, -1.0], pairs * P)
        rows_per = 2 * pairs
    else:
        tid = np.tile(traj_start + np.arange(L), P)
        signs = np.ones(P * L)
        rows_per = L
    pts = np.repeat(points, rows_per, axis=0)
    pid = np.repeat(np.asarray(point_ids, dtype=np.int64), rows_per)
    values, _, _ = _walk_fn(inst)(inst, pts, pid, tid, signs, cfg)
    out = []
    for p in range(P):
        v = values[p * rows_per : (p + 1) * rows_per]
        if cfg.antithetic:
            v = v.reshape(-1, 2).mean(axis=1)
        out.append(PointEstimate.from_values(v))
    return out


def estimate(inst, points, L, cfg, *, workers=1, traj_start=0, point_ids=None):
    """Estimate the solution at each point from L fresh trajectories.

    Returns one PointEstimate per point. With cfg.antithetic the L
    trajectories form L/2 mirrored pairs and the pair means are the
    samples, so n_samples is L/2. Results are independent of the worker
    count and of how points are batched.
    """
    inst = getattr(inst, "problem", inst)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[None, :]
    inside = np.atleast_1d(inst.domain.contains(points))
    if not inside.all():
        first = points[int(np.argmin(inside))]
        raise ExteriorQueryError(f"exterior query: start point {first.tolist()}")
    if L < 1:
        raise ValueError("trajectory count must be at least 1")
    if cfg.antithetic and L % 2:
        raise ValueError("antithetic estimation needs an even trajectory count")
    P = points.shape[0]
    point_ids = np.arange(P) if point_ids is None else np.asarray(point_ids)
    if workers <= 1 or P == 1:
        return _estimate_block(inst, points, L, cfg, traj_start, point_ids)
    chunks = np.array_split(np.arange(P), min(workers, P))
    try:
        ctx = get_context("fork")
    except ValueError:
        ctx = get_context()
    results = []
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [
            pool.submit(_estimate_block, inst, points[c], L, cfg, traj_start, point_ids[c])
            for c in chunks
        ]
        for fut in futures:
            results.extend(fut.result())
    return results


class CacheShapeError(RuntimeError):
    """Update keys do not match the cache's frozen key set."""


class EstimateCache:
    """Running average of per-epoch ensemble means, keyed by (j, i).

    The first update freezes the key set; later updates must cover exactly
    the same keys. After k epochs of L walks each, every entry holds
    n_samples = k*L and its target is the plain average of its k epoch
    means. Pooled variance is tracked alongside for diagnostics.
    """

    def __init__(self):
        self.epoch = 0
        self._index: dict[tuple[int, int], int] = {}
        self._keys = np.empty((0, 2), dtype=np.int64)
        self._mean_sum = np.empty(0)
        self._n = np.empty(0, dtype=np.int64)
        self._mean = np.empty(0)
        self._m2 = np.empty(0)

    def __len__(self):
        return len(self._index)

    @property
    def keys(self) -> list[tuple[int, int]]:
        return [(int(j), int(i)) for j, i in self._keys]

    def _adopt(self, keys):
        ks = sorted(keys)
        self._keys = np.asarray(ks, dtype=np.int64).reshape(len(ks), 2)
        self._index = {k: idx for idx, k in enumerate(ks)}
        z = len(ks)
        self._mean_sum = np.zeros(z)
        self._n = np.zeros(z, dtype=np.int64)
        self._mean = np.zeros(z)
        self._m2 = np.zeros(z)

    def update(self, fresh):
        """Fold one epoch of fresh per-key PointEstimates into the cache."""
        if self.epoch == 0 and not self._index:
            self._adopt(fresh.keys())
        elif set(fresh.keys()) != self._index.keys():
            raise CacheShapeError(
                "cache shape mismatch: update covers "
                f"{len(fresh)} keys, cache holds {len(self._index)}"
            )
        for key, est in fresh.items():
            idx = self._index[key]
            self._mean_sum[idx] += est.mean
            n, mean, m2 = chan_merge(
                int(self._n[idx]),
                float(self._mean[idx]),
                float(self._m2[idx]),
                est.n_samples,
                est.mean,
                est.m2,
            )
            self._n[idx] = n
            self._mean[idx] = mean
            self._m2[idx] = m2
        self.epoch += 1

    def target(self, key) -> float:
        """Average of this key's epoch means so far."""
        if self.epoch == 0:
            raise KeyError("cache is empty")
        return float(self._mean_sum[self._index[key]] / self.epoch)

    def targets(self) -> np.ndarray:
        """All targets, aligned with the sorted key order of `keys`."""
        if self.epoch == 0:
            return np.empty(0)
        return self._mean_sum / self.epoch

    def estimates(self) -> dict[tuple[int, int], PointEstimate]:
        out = {}
        for key, idx in self._index.items():
            out[key] = PointEstimate(
                float(self._mean_sum[idx] / self.epoch) if self.epoch else 0.0,
                float(self._m2[idx]),
                int(self._n[idx]),
            )
        return out

    def save(self, path):
        body = np.empty(len(self._index), dtype=_ENTRY_DT)
        body["j"] = self._keys[:, 0]
        body["i"] = self._keys[:, 1]
        body["mean_sum"] = self._mean_sum
        body["n"] = self._n
        body["mean"] = self._mean
        body["m2"] = self._m2
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(_HEADER.pack(_VERSION, self.epoch, len(body)))
            fh.write(body.tobytes())

    @classmethod
    def load(cls, path) -> "EstimateCache":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[: len(_MAGIC)] != _MAGIC:
            raise ValueError("not an estimate cache file")
        version, epoch, count = _HEADER.unpack_from(blob, len(_MAGIC))
        if version != _VERSION:
            raise ValueError(f"unsupported cache version {version}")
        offset = len(_MAGIC) + _HEADER.size
        body = np.frombuffer(blob, dtype=_ENTRY_DT, count=count, offset=offset)
        cache = cls()
        cache.epoch = int(epoch)
        cache._keys = np.stack([body["j"], body["i"]], axis=1).astype(np.int64)
        cache._index = {(int(j), int(i)): idx for idx, (j, i) in enumerate(cache._keys)}
        cache._mean_sum = body["mean_sum"].copy()
        cache._n = body["n"].copy().astype(np.int64)
        cache._mean = body["mean"].copy()
        cache._m2 = body["m2"].copy()
        return cache

    def export_csv(self, path, coords):
        """Write one row per key: instance id, coordinates, moments.

        coords maps each (j, i) key to that point's coordinate sequence.
        """
        rows = []
        for key, est in sorted(self.estimates().items()):
            rows.append((key[0], coords[key], est))
        export_csv(path, rows)


def export_csv(path, rows):
    """Write (instance_id, coords, PointEstimate) rows as CSV.

    Floats are rendered with repr, so identical estimates always produce
    identical bytes regardless of worker count or batching.
    """
    rows = list(rows)
    dim = len(rows[0][1]) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["instance_id"]
            + [f"x{d}" for d in range(dim)]
            + ["mean", "variance", "n_samples"]
        )
        for instance_id, coords, est in rows:
            w.writerow(
                [int(instance_id)]
                + [repr(float(c)) for c in coords]
                + [repr(float(est.mean)), repr(float(est.variance)), int(est.n_samples)]
            )


def cache_update(cache: EstimateCache, fresh) -> EstimateCache:
    """Fold one epoch of fresh estimates into the cache and return it."""
    cache.update(fresh)
    return cache
