"""Compiled inner loops for the walk estimators.

Every kernel walks one trajectory at a time in plain scalar code. All
randomness comes from a Philox counter addressed by
``(draw index, point id, trajectory id, tag)`` under the key
``(seed, instance key)``, so a trajectory's value depends only on those
coordinates and never on batch layout, chunking, or worker count. Each step
owns two counter blocks (draw indices ``2 * step`` and ``2 * step + 1``);
rejected draws are redone at increasing tag values within the same block
coordinate.

The machine this targets is single-core, so kernels are serial; parallelism
happens one process level up.
"""

import math

import numpy as np
from numba import njit

U64 = np.uint64

_M0 = U64(0xD2E7470EE14C6C93)
_M1 = U64(0xCA5A826395121157)
_W0 = U64(0x9E3779B97F4A7C15)
_W1 = U64(0xBB67AE8584CAA73B)
_MASK32 = U64(0xFFFFFFFF)
_SH32 = U64(32)
_SH11 = U64(11)
_U01_SCALE = 1.1102230246251565e-16  # 2 ** -53

TWO_PI = 6.283185307179586

# source kinds
SRC_NONE = 0
SRC_CONST = 1
SRC_RBF2 = 2

# boundary kinds
BND_CONST = 0
BND_FOURIER5 = 1
BND_LINEAR = 2

# 2D domain kinds
DOM_DISK = 0
DOM_POLAR = 1


@njit(cache=True, inline="always")
def _mulhi(a, b):
    ah = a >> _SH32
    al = a & _MASK32
    bh = b >> _SH32
    bl = b & _MASK32
    t = ah * bl + ((al * bl) >> _SH32)
    w = al * bh + (t & _MASK32)
    return ah * bh + (t >> _SH32) + (w >> _SH32)


@njit(cache=True)
def philox_block(key0, key1, c0, c1, c2, c3):
    """Philox 4x64-10: four uint64 words for one counter coordinate."""
    x0 = c0
    x1 = c1
    x2 = c2
    x3 = c3
    k0 = key0
    k1 = key1
    for _ in range(10):
        hi0 = _mulhi(_M0, x0)
        lo0 = _M0 * x0
        hi1 = _mulhi(_M1, x2)
        lo1 = _M1 * x2
        nx0 = hi1 ^ x1 ^ k0
        nx2 = hi0 ^ x3 ^ k1
        x0 = nx0
        x1 = lo1
        x2 = nx2
        x3 = lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return x0, x1, x2, x3


@njit(cache=True, inline="always")
def _u01(w):
    return float(w >> _SH11) * _U01_SCALE


@njit(cache=True)
def _nonzero_u(key0, key1, draw, pid, tid, first):
    """Return ``first`` unless it is exactly zero; then redraw at tag 1, 2, ...

    Zero uniforms would put volume samples on the kernel singularity.
    """
    u = first
    tag = U64(1)
    while u == 0.0:
        w0, _, _, _ = philox_block(key0, key1, draw, pid, tid, tag)
        u = _u01(w0)
        tag += U64(1)
    return u


# ---------------------------------------------------------------------------
# polar curve geometry
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def polar_radius_nb(theta, r0, c1, c2):
    return r0 * (1.0 + c1 * math.cos(4.0 * theta) + c2 * math.cos(8.0 * theta))


@njit(cache=True, inline="always")
def _curve_d2(theta, px, py, r0, c1, c2):
    r = polar_radius_nb(theta, r0, c1, c2)
    dx = r * math.cos(theta) - px
    dy = r * math.sin(theta) - py
    return dx * dx + dy * dy


@njit(cache=True)
def _polar_scan(px, py, bx, by, stride):
    """Index of the best boundary-table sample (coarse scan plus window)."""
    n = bx.shape[0]
    best = 1.0e300
    bj = 0
    j = 0
    while j < n:
        dx = bx[j] - px
        dy = by[j] - py
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
            bj = j
        j += stride
    if stride > 1:
        lo = bj - stride
        for off in range(2 * stride + 1):
            jj = (lo + off) % n
            dx = bx[jj] - px
            dy = by[jj] - py
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
                bj = jj
    return bj, best


@njit(cache=True)
def polar_query_refined(px, py, r0, c1, c2, bx, by, stride):
    """Distance and closest curve point, golden-section refined.

    The squared distance along the curve is unimodal inside a bracket of two
    table spacings, so golden-section search converges to the table's local
    minimum; 48 shrinks leave the bracket below 1e-12 radians.
    """
    n = bx.shape[0]
    bj, best = _polar_scan(px, py, bx, by, stride)
    h = TWO_PI / n
    a = (bj - 1) * h
    b = (bj + 1) * h
    inv = 0.6180339887498949
    x1 = b - inv * (b - a)
    x2 = a + inv * (b - a)
    f1 = _curve_d2(x1, px, py, r0, c1, c2)
    f2 = _curve_d2(x2, px, py, r0, c1, c2)
    for _ in range(48):
        if f1 < f2:
            b = x2
            x2 = x1
            f2 = f1
            x1 = b - inv * (b - a)
            f1 = _curve_d2(x1, px, py, r0, c1, c2)
        else:
            a = x1
            x1 = x2
            f1 = f2
            x2 = a + inv * (b - a)
            f2 = _curve_d2(x2, px, py, r0, c1, c2)
    tm = 0.5 * (a + b)
    r = polar_radius_nb(tm, r0, c1, c2)
    qx = r * math.cos(tm)
    qy = r * math.sin(tm)
    dx = qx - px
    dy = qy - py
    dm = dx * dx + dy * dy
    if best < dm:
        return math.sqrt(best), bx[bj], by[bj]
    return math.sqrt(dm), qx, qy


@njit(cache=True)
def polar_query_fast(px, py, r0, c1, c2, bx, by, stride):
    """Distance and closest curve point via one parabolic refinement step.

    Fits the squared distance at three adjacent table samples and evaluates
    the curve once at the fitted vertex. Cheaper than golden-section by ~40
    curve evaluations per call, which dominates walk cost; agreement with
    the refined query is far below the walkers' shell tolerance.
    """
    n = bx.shape[0]
    bj, best = _polar_scan(px, py, bx, by, stride)
    h = TWO_PI / n
    t0 = bj * h
    fm = _curve_d2(t0 - h, px, py, r0, c1, c2)
    fp = _curve_d2(t0 + h, px, py, r0, c1, c2)
    denom = fm - 2.0 * best + fp
    if denom > 0.0:
        shift = 0.5 * h * (fm - fp) / denom
    else:
        shift = 0.0
    if shift > h:
        shift = h
    elif shift < -h:
        shift = -h
    tm = t0 + shift
    r = polar_radius_nb(tm, r0, c1, c2)
    qx = r * math.cos(tm)
    qy = r * math.sin(tm)
    dx = qx - px
    dy = qy - py
    dm = dx * dx + dy * dy
    if best < dm:
        return math.sqrt(best), bx[bj], by[bj]
    return math.sqrt(dm), qx, qy


@njit(cache=True)
def polar_query_batch(pts, r0, c1, c2, bx, by, stride):
    n = pts.shape[0]
    dist = np.empty(n)
    closest = np.empty((n, 2))
    for i in range(n):
        d, qx, qy = polar_query_refined(pts[i, 0], pts[i, 1], r0, c1, c2, bx, by, stride)
        dist[i] = d
        closest[i, 0] = qx
        closest[i, 1] = qy
    return dist, closest


# ---------------------------------------------------------------------------
# problem term evaluation
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _eval_source_2d(kind, sp, x, y):
    if kind == SRC_CONST:
        return sp[0]
    # two isotropic Gaussian bumps
    d1x = x - sp[2]
    d1y = y - sp[3]
    d2x = x - sp[4]
    d2y = y - sp[5]
    return sp[0] * math.exp(-(d1x * d1x + d1y * d1y)) + sp[1] * math.exp(
        -(d2x * d2x + d2y * d2y)
    )


@njit(cache=True, inline="always")
def _eval_boundary_2d(kind, bp, x, y):
    if kind == BND_CONST:
        return bp[0]
    if kind == BND_LINEAR:
        return bp[0] * x + bp[1] * y + bp[2]
    # order-2 Fourier series in the polar angle of (x, y)
    r = math.sqrt(x * x + y * y)
    if r == 0.0:
        c = 1.0
        s = 0.0
    else:
        c = x / r
        s = y / r
    c2 = c * c - s * s
    s2 = 2.0 * c * s
    return bp[0] + bp[1] * c + bp[2] * s + bp[3] * c2 + bp[4] * s2


# ---------------------------------------------------------------------------
# plain walk, 2D
# ---------------------------------------------------------------------------


@njit(cache=True)
def walk_plain_2d(
    dom_kind,
    dp,
    bx,
    by,
    stride,
    src_kind,
    sp,
    bnd_kind,
    bp,
    px,
    py,
    pid,
    tid,
    sign,
    seed,
    ikey,
    eps,
    max_steps,
):
    """Walk-on-spheres for the Laplace/Poisson problem on a 2D domain.

    Estimates u with Delta u = f, u = g on the boundary: the boundary value
    at the exit point minus Green's-function-weighted source samples picked
    up along the walk.
    """
    n = px.shape[0]
    values = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    hit = np.empty(n, dtype=np.uint8)
    key0 = seed
    key1 = ikey
    inv_two_pi = 1.0 / TWO_PI
    for i in range(n):
        x = px[i]
        y = py[i]
        p = pid[i]
        t = tid[i]
        sg = sign[i]
        acc = 0.0
        step = 0
        while True:
            if dom_kind == DOM_DISK:
                ux = x - dp[0]
                uy = y - dp[1]
                rho = math.sqrt(ux * ux + uy * uy)
                d = dp[2] - rho
                if rho == 0.0:
                    qx = dp[0] + dp[2]
                    qy = dp[1]
                else:
                    qx = dp[0] + ux * dp[2] / rho
                    qy = dp[1] + uy * dp[2] / rho
            else:
                d, qx, qy = polar_query_fast(x, y, dp[0], dp[1], dp[2], bx, by, stride)
            if d < eps:
                values[i] = acc + _eval_boundary_2d(bnd_kind, bp, qx, qy)
                steps[i] = step
                hit[i] = 1
                break
            if step >= max_steps:
                values[i] = acc + _eval_boundary_2d(bnd_kind, bp, qx, qy)
                steps[i] = step
                hit[i] = 0
                break
            draw = U64(2 * step)
            w0, w1, w2, w3 = philox_block(key0, key1, draw, p, t, U64(0))
            if src_kind != SRC_NONE:
                phi = TWO_PI * _u01(w1)
                u_rad = _nonzero_u(key0, key1, draw, p, t, _u01(w2))
                rad = d * math.sqrt(u_rad)
                vx = x + sg * rad * math.cos(phi)
                vy = y + sg * rad * math.sin(phi)
                green = inv_two_pi * math.log(d / rad)
                area = math.pi * d * d
                acc -= area * _eval_source_2d(src_kind, sp, vx, vy) * green
            theta = TWO_PI * _u01(w0)
            x = x + sg * d * math.cos(theta)
            y = y + sg * d * math.sin(theta)
            step += 1
    return values, steps, hit


# ---------------------------------------------------------------------------
# plain walk, 3D ball
# ---------------------------------------------------------------------------


@njit(cache=True)
def walk_plain_ball3(
    dp,
    src_kind,
    sp,
    bnd_kind,
    bp,
    px,
    py,
    pz,
    pid,
    tid,
    sign,
    seed,
    ikey,
    eps,
    max_steps,
):
    """Walk-on-spheres for the 3D Poisson problem on a ball.

    Boundary kinds: BND_CONST uses bp[0]; BND_LINEAR is
    bp[0]*x + bp[1]*y + bp[2]*z + bp[3].
    """
    n = px.shape[0]
    values = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    hit = np.empty(n, dtype=np.uint8)
    key0 = seed
    key1 = ikey
    inv_four_pi = 1.0 / (2.0 * TWO_PI)
    four_thirds_pi = 2.0 * TWO_PI / 3.0
    cx = dp[0]
    cy = dp[1]
    cz = dp[2]
    R = dp[3]
    for i in range(n):
        x = px[i]
        y = py[i]
        z = pz[i]
        p = pid[i]
        t = tid[i]
        sg = sign[i]
        acc = 0.0
        step = 0
        while True:
            ux = x - cx
            uy = y - cy
            uz = z - cz
            rho = math.sqrt(ux * ux + uy * uy + uz * uz)
            d = R - rho
            if rho == 0.0:
                qx = cx + R
                qy = cy
                qz = cz
            else:
                qx = cx + ux * R / rho
                qy = cy + uy * R / rho
                qz = cz + uz * R / rho
            if d < eps or step >= max_steps:
                if bnd_kind == BND_CONST:
                    g = bp[0]
                else:
                    g = bp[0] * qx + bp[1] * qy + bp[2] * qz + bp[3]
                values[i] = acc + g
                steps[i] = step
                hit[i] = 1 if d < eps else 0
                break
            draw = U64(2 * step)
            w0, w1, w2, w3 = philox_block(key0, key1, draw, p, t, U64(0))
            if src_kind != SRC_NONE:
                wb0, _, _, _ = philox_block(key0, key1, draw + U64(1), p, t, U64(0))
                zz = 2.0 * _u01(w2) - 1.0
                ss = math.sqrt(max(0.0, 1.0 - zz * zz))
                phi = TWO_PI * _u01(w3)
                u_rad = _nonzero_u(key0, key1, draw + U64(1), p, t, _u01(wb0))
                rad = d * u_rad ** (1.0 / 3.0)
                vx = x + sg * rad * ss * math.cos(phi)
                vy = y + sg * rad * ss * math.sin(phi)
                vz = z + sg * rad * zz
                green = inv_four_pi * (1.0 / rad - 1.0 / d)
                vol = four_thirds_pi * d * d * d
                if src_kind == SRC_CONST:
                    f = sp[0]
                else:
                    f = 0.0
                acc -= vol * f * green
            zz = 2.0 * _u01(w0) - 1.0
            ss = math.sqrt(max(0.0, 1.0 - zz * zz))
            phi = TWO_PI * _u01(w1)
            x = x + sg * d * ss * math.cos(phi)
            y = y + sg * d * ss * math.sin(phi)
            z = z + sg * d * zz
            step += 1
    return values, steps, hit


# ---------------------------------------------------------------------------
# screened transport, 3D ball, constant coefficients
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _surface_weight(q):
    """q / sinh(q), the no-volume-event probability for one step."""
    if q < 1.0e-6:
        return 1.0 - q * q / 6.0
    return q / math.sinh(q)


@njit(cache=True, inline="always")
def _radial_cdf(q, tt):
    if q < 1.0e-4:
        return tt * tt * (3.0 - 2.0 * tt)
    return (math.sinh(q) - q * tt * math.cosh(q * (1.0 - tt)) - math.sinh(q * (1.0 - tt))) / (
        math.sinh(q) - q
    )


@njit(cache=True)
def invert_radial_cdf(q, u):
    """Solve CDF(t) = u for the volume-event radius fraction t in [0, 1].

    Fixed 64-step bisection: deterministic and exact to the last float.
    """
    lo = 0.0
    hi = 1.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if _radial_cdf(q, mid) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def walk_screened_ball3(
    dp,
    sigma_bar,
    sprime,
    has_fprime,
    fprime,
    gprime,
    px,
    py,
    pz,
    pid,
    tid,
    sign,
    seed,
    ikey,
    eps,
    max_steps,
):
    """Delta-tracking walk for div(alpha grad u) - sigma u = -f on a ball,
    specialized to constant transformed coefficients.

    Each step either jumps to the sphere surface (probability q/sinh q) or
    to an interior point drawn from the screened kernel density, where the
    source deposits and the throughput picks up (1 - sigma'/sigma_bar).
    """
    n = px.shape[0]
    values = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    hit = np.empty(n, dtype=np.uint8)
    key0 = seed
    key1 = ikey
    sqrt_sig = math.sqrt(sigma_bar)
    cx = dp[0]
    cy = dp[1]
    cz = dp[2]
    R = dp[3]
    for i in range(n):
        x = px[i]
        y = py[i]
        z = pz[i]
        p = pid[i]
        t = tid[i]
        sg = sign[i]
        acc = 0.0
        thr = 1.0
        step = 0
        while True:
            ux = x - cx
            uy = y - cy
            uz = z - cz
            rho = math.sqrt(ux * ux + uy * uy + uz * uz)
            d = R - rho
            if d < eps or step >= max_steps:
                if rho == 0.0:
                    pass  # boundary value is constant, location irrelevant
                acc += thr * gprime
                values[i] = acc
                steps[i] = step
                hit[i] = 1 if d < eps else 0
                break
            if thr == 0.0 and has_fprime == 0:
                values[i] = acc
                steps[i] = step
                hit[i] = 1
                break
            q = sqrt_sig * d
            if q > 500.0:
                q = 500.0
            surf = _surface_weight(q)
            draw = U64(2 * step)
            w0, w1, w2, w3 = philox_block(key0, key1, draw, p, t, U64(0))
            zz = 2.0 * _u01(w1) - 1.0
            ss = math.sqrt(max(0.0, 1.0 - zz * zz))
            phi = TWO_PI * _u01(w2)
            dx = ss * math.cos(phi)
            dy = ss * math.sin(phi)
            dz = zz
            if _u01(w0) < surf:
                x = x + sg * d * dx
                y = y + sg * d * dy
                z = z + sg * d * dz
            else:
                tt = invert_radial_cdf(q, _u01(w3))
                rad = d * tt
                x = x + sg * rad * dx
                y = y + sg * rad * dy
                z = z + sg * rad * dz
                if has_fprime != 0:
                    acc += thr * fprime / sigma_bar
                thr *= 1.0 - sprime / sigma_bar
            step += 1
    return values, steps, hit


# ---------------------------------------------------------------------------
# masked-pixel walk (inpainting)
# ---------------------------------------------------------------------------


@njit(cache=True)
def walk_mask_2d(
    cand_x,
    cand_y,
    cand_v,
    has_src,
    vgrid,
    px,
    py,
    pid,
    tid,
    seed,
    ikey,
    eps,
    max_steps,
):
    """Walk-on-spheres inside a masked pixel region.

    The boundary is the set of known pixels: distance is (nearest known
    center) - 0.5, the exit value is that pixel's intensity. The optional
    source is a field sampled bilinearly from ``vgrid`` in pixel
    coordinates (x = column, y = row).
    """
    n = px.shape[0]
    values = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    hit = np.empty(n, dtype=np.uint8)
    key0 = seed
    key1 = ikey
    m = cand_x.shape[0]
    inv_two_pi = 1.0 / TWO_PI
    H = vgrid.shape[0]
    W = vgrid.shape[1]
    for i in range(n):
        x = px[i]
        y = py[i]
        p = pid[i]
        t = tid[i]
        acc = 0.0
        step = 0
        while True:
            best = 1.0e300
            bj = 0
            for j in range(m):
                dx = cand_x[j] - x
                dy = cand_y[j] - y
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
                    bj = j
            d = math.sqrt(best) - 0.5
            if d < eps or step >= max_steps:
                values[i] = acc + cand_v[bj]
                steps[i] = step
                hit[i] = 1 if d < eps else 0
                break
            draw = U64(2 * step)
            w0, w1, w2, w3 = philox_block(key0, key1, draw, p, t, U64(0))
            if has_src != 0:
                phi = TWO_PI * _u01(w1)
                u_rad = _nonzero_u(key0, key1, draw, p, t, _u01(w2))
                rad = d * math.sqrt(u_rad)
                vx = x + rad * math.cos(phi)
                vy = y + rad * math.sin(phi)
                # bilinear sample of the source grid, edge-clamped
                fx = min(max(vx, 0.0), W - 1.0)
                fy = min(max(vy, 0.0), H - 1.0)
                ix = int(fx)
                iy = int(fy)
                if ix > W - 2:
                    ix = W - 2
                if iy > H - 2:
                    iy = H - 2
                ax = fx - ix
                ay = fy - iy
                f = (
                    vgrid[iy, ix] * (1.0 - ax) * (1.0 - ay)
                    + vgrid[iy, ix + 1] * ax * (1.0 - ay)
                    + vgrid[iy + 1, ix] * (1.0 - ax) * ay
                    + vgrid[iy + 1, ix + 1] * ax * ay
                )
                green = inv_two_pi * math.log(d / rad)
                acc -= math.pi * d * d * f * green
            theta = TWO_PI * _u01(w0)
            x = x + d * math.cos(theta)
            y = y + d * math.sin(theta)
            step += 1
    return values, steps, hit
