"""Grayscale image inpainting by walk-on-spheres over masked pixel regions.

Images are float64 arrays of shape (height, width) with intensities in
[0, 1]; pixel (row r, column c) has its center at continuous coordinates
x = c, y = r. A mask marks unknown pixels. The masked region is treated as
a continuous domain whose boundary data lives at known pixel centers: the
distance query is (distance to the nearest known center) - 0.5 pixel, which
never overestimates clearance, and a walk exits onto the value of that
nearest center.

Two reconstructions are provided. The harmonic fill solves the Laplace
equation for the intensity directly. The smoother variant solves the
fourth-order problem split into two second-order passes: first estimate the
intensity Laplacian v on the unknown pixels (its boundary data comes from
5-point stencils on fully known pixels), then solve for the intensity with
v as a source field, sampled bilinearly from the precomputed grid.

Walks here run on the same counter-based streams as every other solver:
pixel id (row-major) selects the point stream, the walk index selects the
trajectory, and each pass uses its own instance key, so results are
independent of batch layout and worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context

import numpy as np
from scipy.ndimage import binary_dilation

from . import _kernels
from .walker import WalkConfig

__all__ = [
    "MaskDomain",
    "read_pgm",
    "write_pgm",
    "read_mask",
    "inpaint_harmonic",
    "inpaint_biharmonic",
]

# Instance keys separating the random streams of the three solve passes.
_KEY_HARMONIC = 1
_KEY_LAPLACIAN = 2
_KEY_INTENSITY = 3

# Candidates for nearest-known queries only need known pixels within
# Chebyshev distance 2 of an unknown one: any walk point sits within half a
# diagonal of the unknown region, which pins its nearest known center to
# that collar. Tests check this against a full scan.
_COLLAR = np.ones((5, 5), dtype=bool)


def _neighbors_known(known):
    """True where the pixel and all four in-bounds neighbors are known."""
    ok = np.zeros_like(known)
    ok[1:-1, 1:-1] = (
        known[1:-1, 1:-1]
        & known[:-2, 1:-1]
        & known[2:, 1:-1]
        & known[1:-1, :-2]
        & known[1:-1, 2:]
    )
    return ok


def _collar_of(valid):
    """Valid pixels close enough to an invalid one to ever be nearest."""
    return valid & binary_dilation(~valid, structure=_COLLAR)


class MaskDomain:
    """Union of unknown pixel squares, with known centers as the boundary.

    ``mask`` is a boolean (height, width) array, True where the pixel is
    unknown. Distances are in pixel units.
    """

    def __init__(self, mask):
        m = np.asarray(mask)
        if m.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {m.shape}")
        if m.dtype != bool:
            raise ValueError("mask must be boolean")
        self.mask = m.copy()
        self.height, self.width = m.shape

    @property
    def masked_count(self):
        return int(self.mask.sum())

    def masked_pixels(self):
        """(rows, cols) of unknown pixels in row-major order."""
        rows, cols = np.nonzero(self.mask)
        return rows, cols

    def boundary_pixels(self):
        """(rows, cols) of known pixels that can terminate a walk."""
        rows, cols = np.nonzero(_collar_of(~self.mask))
        return rows, cols

    def boundary_ring(self):
        """(rows, cols) of known pixels sharing an edge with unknown ones."""
        grown = binary_dilation(self.mask)
        rows, cols = np.nonzero(grown & ~self.mask)
        return rows, cols

    def bounding_radius(self):
        return 0.5 * float(np.hypot(self.height, self.width))

    def distance(self, x):
        """Clearance of query points: nearest known center minus half a pixel."""
        pts = np.asarray(x, dtype=np.float64)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        rows, cols = self.boundary_pixels()
        if rows.size == 0:
            raise ValueError("isolated mask: no known pixels border the unknown region")
        dx = pts[:, 0, None] - cols[None, :]
        dy = pts[:, 1, None] - rows[None, :]
        d = np.sqrt((dx * dx + dy * dy).min(axis=1)) - 0.5
        return float(d[0]) if single else d

    def contains(self, x):
        d = self.distance(x)
        if np.isscalar(d):
            return d > 0.0
        return d > 0.0


# ---------------------------------------------------------------------------
# PGM input and output
# ---------------------------------------------------------------------------


def _pgm_tokens(data):
    """Header tokens of a PGM byte string, skipping # comments."""
    tokens = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        ch = data[pos : pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    return tokens, pos + 1


def _read_pgm_raw(path):
    """Pixel values 0..255 as an int array, from P2 or P5."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, body = _pgm_tokens(data)
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file")
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ValueError(f"{path}: malformed PGM header") from None
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    n = width * height
    if magic == b"P5":
        raster = data[body : body + n]
        if len(raster) < n:
            raise ValueError(f"{path}: truncated PGM raster")
        img = np.frombuffer(raster, dtype=np.uint8, count=n).astype(np.int64)
    else:
        values = data[body - 1 :].split()
        if len(values) < n:
            raise ValueError(f"{path}: truncated PGM raster")
        img = np.array([int(v) for v in values[:n]], dtype=np.int64)
        if img.min() < 0 or img.max() > 255:
            raise ValueError(f"{path}: sample outside 0..255")
    return img.reshape(height, width)


def read_pgm(path):
    """Grayscale image in [0, 1] from a P2 or P5 PGM file."""
    return _read_pgm_raw(path) / 255.0


def read_mask(path):
    """Boolean mask from a PGM file holding only 0 (known) and 255 (unknown)."""
    raw = _read_pgm_raw(path)
    bad = (raw != 0) & (raw != 255)
    if bad.any():
        r, c = np.nonzero(bad)
        raise ValueError(
            f"{path}: mask pixels must be 0 or 255, "
            f"found {int(raw[r[0], c[0]])} at row {int(r[0])} col {int(c[0])}"
        )
    return raw == 255


def write_pgm(path, img, comment=None):
    """Write an image in [0, 1] as binary PGM, clamping out-of-range values."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    quantized = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    height, width = arr.shape
    header = [b"P5"]
    if comment:
        text = str(comment)
        if "\n" in text:
            raise ValueError("PGM comment must be a single line")
        header.append(b"# " + text.encode("ascii"))
    header.append(f"{width} {height}".encode("ascii"))
    header.append(b"255")
    with open(path, "wb") as fh:
        fh.write(b"\n".join(header) + b"\n")
        fh.write(quantized.tobytes())


# ---------------------------------------------------------------------------
# solver passes
# ---------------------------------------------------------------------------


def _run_lanes(cand_x, cand_y, cand_v, has_src, vgrid, px, py, pid, tid, seed, key, eps, max_steps):
    values, _steps, _hit = _kernels.walk_mask_2d(
        cand_x, cand_y, cand_v, has_src, vgrid,
        px, py, pid, tid,
        np.uint64(seed), np.uint64(key), eps, max_steps,
    )
    return values


def _solve_pixels(rows, cols, cand, values_at, width, vgrid, key, cfg, eps, walks, workers):
    """Mean of ``walks`` independent exit values per queried pixel center.

    ``cand`` is (rows, cols) of boundary pixels and ``values_at`` their
    data; ``vgrid`` of None solves the source-free equation.
    """
    cr, cc = cand
    cand_x = cc.astype(np.float64)
    cand_y = cr.astype(np.float64)
    cand_v = np.ascontiguousarray(values_at, dtype=np.float64)
    has_src = 0 if vgrid is None else 1
    grid = np.zeros((1, 2)) if vgrid is None else np.ascontiguousarray(vgrid)

    n = rows.size
    px = np.repeat(cols.astype(np.float64), walks)
    py = np.repeat(rows.astype(np.float64), walks)
    pid = np.repeat((rows * width + cols).astype(np.uint64), walks)
    tid = np.tile(np.arange(walks, dtype=np.uint64), n)

    if workers <= 1 or n == 1:
        values = _run_lanes(
            cand_x, cand_y, cand_v, has_src, grid,
            px, py, pid, tid, cfg.rng_seed, key, eps, cfg.max_steps,
        )
    else:
        lanes = np.arange(n * walks).reshape(n, walks)
        chunks = np.array_split(np.arange(n), min(workers, n))
        try:
            ctx = get_context("fork")
        except ValueError:
            ctx = get_context()
        parts = []
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [
                pool.submit(
                    _run_lanes,
                    cand_x, cand_y, cand_v, has_src, grid,
                    px[sel], py[sel], pid[sel], tid[sel],
                    cfg.rng_seed, key, eps, cfg.max_steps,
                )
                for c in chunks
                for sel in (lanes[c].ravel(),)
            ]
            for fut in futures:
                parts.append(fut.result())
        values = np.concatenate(parts)
    return values.reshape(n, walks).mean(axis=1)


def _as_domain(mask):
    return mask if isinstance(mask, MaskDomain) else MaskDomain(mask)


def _check_inputs(img, dom, walks):
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    if arr.shape != dom.mask.shape:
        raise ValueError(
            f"image shape {arr.shape} does not match mask shape {dom.mask.shape}"
        )
    if walks < 1:
        raise ValueError("walks must be at least 1")
    return arr


def inpaint_harmonic(img, mask, cfg=None, *, walks=64, workers=1):
    """Fill unknown pixels with the harmonic extension of known intensities.

    Each unknown pixel center gets the mean of ``walks`` source-free
    walk-on-spheres exits, so every filled value is a convex combination of
    nearby known intensities. Known pixels pass through bit-identical.
    """
    dom = _as_domain(mask)
    arr = _check_inputs(img, dom, walks)
    cfg = cfg or WalkConfig()
    out = arr.copy()
    if dom.masked_count == 0:
        return out
    rr, rc = dom.boundary_ring()
    if rr.size == 0:
        raise ValueError("isolated mask: no known pixels border the unknown region")
    rows, cols = dom.masked_pixels()
    br, bc = dom.boundary_pixels()
    eps = cfg.resolve_eps(dom)
    out[rows, cols] = _solve_pixels(
        rows, cols, (br, bc), arr[br, bc], dom.width,
        None, _KEY_HARMONIC, cfg, eps, walks, workers,
    )
    return out


def inpaint_biharmonic(img, mask, cfg=None, *, walks=64, workers=1):
    """Fill unknown pixels by the two-pass fourth-order reconstruction.

    Pass one estimates the intensity Laplacian v over the unknown pixels
    (and the known fringe whose stencils are incomplete), with boundary
    data from 5-point stencils on fully known pixels. Pass two solves for
    the intensity with boundary data from known pixels and v as the source,
    bilinearly interpolated from the pass-one grid. Output is clamped to
    [0, 1]; known pixels pass through bit-identical.
    """
    dom = _as_domain(mask)
    arr = _check_inputs(img, dom, walks)
    cfg = cfg or WalkConfig()
    out = arr.copy()
    if dom.masked_count == 0:
        return out
    rr, rc = dom.boundary_ring()
    if rr.size == 0:
        raise ValueError("isolated mask: no known pixels border the unknown region")

    known = ~dom.mask
    stencil_ok = _neighbors_known(known)
    if not stencil_ok.any():
        raise ValueError("stencil out of bounds: no known pixel has a full 5-point stencil")

    lap = np.zeros_like(arr)
    lap[1:-1, 1:-1] = (
        arr[:-2, 1:-1] + arr[2:, 1:-1] + arr[1:-1, :-2] + arr[1:-1, 2:]
        - 4.0 * arr[1:-1, 1:-1]
    )
    vgrid = np.where(stencil_ok, lap, 0.0)

    eps = cfg.resolve_eps(dom)
    # The Laplacian field is unknown wherever a stencil is incomplete; solve
    # it on those pixels near the mask so the bilinear source never reads a
    # placeholder zero inside the intensity walk's reach.
    near_mask = binary_dilation(dom.mask, structure=np.ones((3, 3), dtype=bool))
    v_rows, v_cols = np.nonzero(near_mask & ~stencil_ok)
    vr, vc = np.nonzero(_collar_of(stencil_ok))
    vgrid[v_rows, v_cols] = _solve_pixels(
        v_rows, v_cols, (vr, vc), vgrid[vr, vc], dom.width,
        None, _KEY_LAPLACIAN, cfg, eps, walks, workers,
    )

    rows, cols = dom.masked_pixels()
    br, bc = dom.boundary_pixels()
    filled = _solve_pixels(
        rows, cols, (br, bc), arr[br, bc], dom.width,
        vgrid, _KEY_INTENSITY, cfg, eps, walks, workers,
    )
    out[rows, cols] = np.clip(filled, 0.0, 1.0)
    return out
