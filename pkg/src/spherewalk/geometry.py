"""Domain geometry: containment, boundary distance, closest points, sampling.

Three domain families share one informal protocol (``dim``, ``contains``,
``boundary_query``, ``sample_interior``, ``sample_boundary``, bounding
queries):

* ``PolarDomain`` — a star-shaped 2D region bounded by
  r(theta) = r0 (1 + c1 cos 4 theta + c2 cos 8 theta).
* ``BallDomain`` — an analytic disk or ball; exact distances, no tables.
* ``MeshDomain`` — a closed triangle mesh with a BVH for closest-point
  queries and angle-weighted pseudo-normals for inside/outside tests.

Distance queries are the inner loop of every walker, so the polar curve
keeps a dense boundary table and refines the best sample by golden-section
search; accuracy is 1e-6 * r0 or better.
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import polar_query_batch, polar_query_refined

__all__ = [
    "ExteriorQueryError",
    "DegenerateDomainError",
    "PolarDomain",
    "BallDomain",
    "MeshDomain",
    "load_obj",
    "make_box_mesh",
    "make_icosphere",
    "domain_from_config",
    "domain_to_config",
]


class ExteriorQueryError(ValueError):
    """A point-local query was made outside the domain."""


class DegenerateDomainError(RuntimeError):
    """Rejection sampling cannot find the domain interior."""


def _as_points(x, dim):
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {pts.shape}")
    return np.ascontiguousarray(pts), single


def _rejection_sample(dom, n, rng, *, max_candidates=10_000_000, min_acceptance=1e-4):
    """Uniform interior points by rejection from the inflated bounding box."""
    lo, hi = dom._sampling_box()
    out = np.empty((n, dom.dim))
    filled = 0
    tried = 0
    accepted = 0
    while filled < n:
        batch = min(65536, max(4096, 2 * (n - filled)))
        cand = rng.uniform(lo, hi, size=(batch, dom.dim))
        inside = dom.contains(cand)
        hits = cand[inside]
        take = min(hits.shape[0], n - filled)
        out[filled : filled + take] = hits[:take]
        filled += take
        tried += batch
        accepted += hits.shape[0]
        if tried >= max_candidates and accepted < min_acceptance * tried:
            raise DegenerateDomainError(
                "degenerate domain: interior acceptance "
                f"{accepted}/{tried} below {min_acceptance}"
            )
    return out


class PolarDomain:
    """Star-shaped 2D domain r(theta) = r0 (1 + c1 cos 4t + c2 cos 8t).

    Requires |c1| + |c2| < 1 so the radius stays positive. The boundary is
    tabulated at ``table_size`` angles; distance queries scan the table
    (with a coarse stride when the curve is mild) and refine the winner.
    """

    dim = 2

    # curves up to this combined amplitude are smooth enough for a strided
    # coarse scan to land in the right basin (property-tested)
    _FAST_SCAN_LIMIT = 0.45

    def __init__(self, r0=1.0, c1=0.0, c2=0.0, *, table_size=4096):
        if r0 <= 0.0:
            raise ValueError("r0 must be positive")
        if abs(c1) + abs(c2) >= 1.0:
            raise ValueError("|c1| + |c2| must be < 1 for a valid boundary")
        self.r0 = float(r0)
        self.c1 = float(c1)
        self.c2 = float(c2)
        self.table_size = int(table_size)
        theta = np.arange(self.table_size) * (2.0 * np.pi / self.table_size)
        r = self.radius(theta)
        self._bx = np.ascontiguousarray(r * np.cos(theta))
        self._by = np.ascontiguousarray(r * np.sin(theta))
        self._stride = 64 if abs(c1) + abs(c2) <= self._FAST_SCAN_LIMIT else 1
        self._lo = np.array([self._bx.min(), self._by.min()])
        self._hi = np.array([self._bx.max(), self._by.max()])

    def radius(self, theta):
        """Boundary radius at polar angle(s) theta."""
        theta = np.asarray(theta, dtype=np.float64)
        return self.r0 * (
            1.0 + self.c1 * np.cos(4.0 * theta) + self.c2 * np.cos(8.0 * theta)
        )

    def bounding_box(self):
        return self._lo.copy(), self._hi.copy()

    def bounding_radius(self):
        center = 0.5 * (self._lo + self._hi)
        d = np.hypot(self._bx - center[0], self._by - center[1])
        return float(d.max())

    def contains(self, x):
        pts, single = _as_points(x, 2)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        inside = rho < self.radius(theta)
        return bool(inside[0]) if single else inside

    def boundary_query(self, x):
        """Distance to the boundary curve and the closest curve point."""
        pts, single = _as_points(x, 2)
        dist, closest = polar_query_batch(
            pts, self.r0, self.c1, self.c2, self._bx, self._by, self._stride
        )
        if single:
            return float(dist[0]), closest[0]
        return dist, closest

    def distance_to_boundary(self, p):
        p = np.asarray(p, dtype=np.float64)
        rho = math.hypot(p[0], p[1])
        if rho > float(self.radius(math.atan2(p[1], p[0]))):
            raise ExteriorQueryError(f"exterior query: point {p.tolist()}")
        d, _, _ = polar_query_refined(
            p[0], p[1], self.r0, self.c1, self.c2, self._bx, self._by, self._stride
        )
        return float(d)

    def sample_interior(self, n, rng, **kw):
        return _rejection_sample(self, n, rng, **kw)

    def sample_boundary(self, n, rng=None):
        theta = np.arange(n) * (2.0 * np.pi / n)
        r = self.radius(theta)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    def _sampling_box(self):
        pad = 0.01 * (self._hi - self._lo)
        return self._lo - pad, self._hi + pad

    def __repr__(self):
        return f"PolarDomain(r0={self.r0}, c1={self.c1}, c2={self.c2})"


class BallDomain:
    """Disk (2D) or ball (3D) with exact analytic geometry."""

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=np.float64)
        if self.center.ndim != 1 or self.center.shape[0] not in (2, 3):
            raise ValueError("center must be a 2- or 3-vector")
        if radius <= 0.0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.dim = self.center.shape[0]

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def bounding_radius(self):
        return self.radius

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        rho = np.linalg.norm(pts - self.center, axis=1)
        inside = rho < self.radius
        return bool(inside[0]) if single else inside

    def boundary_query(self, x):
        pts, single = _as_points(x, self.dim)
        u = pts - self.center
        rho = np.linalg.norm(u, axis=1)
        dist = np.abs(self.radius - rho)
        safe = np.where(rho == 0.0, 1.0, rho)
        dirs = np.where(rho[:, None] == 0.0, _axis0(self.dim), u / safe[:, None])
        closest = self.center + self.radius * dirs
        if single:
            return float(dist[0]), closest[0]
        return dist, closest

    def distance_to_boundary(self, p):
        p = np.asarray(p, dtype=np.float64)
        rho = float(np.linalg.norm(p - self.center))
        if rho > self.radius:
            raise ExteriorQueryError(f"exterior query: point {p.tolist()}")
        return self.radius - rho

    def sample_interior(self, n, rng, **kw):
        return _rejection_sample(self, n, rng, **kw)

    def sample_boundary(self, n, rng=None):
        if self.dim == 2:
            theta = np.arange(n) * (2.0 * np.pi / n)
            ring = np.column_stack([np.cos(theta), np.sin(theta)])
            return self.center + self.radius * ring
        # Fibonacci lattice: deterministic, near-uniform sphere covering
        i = np.arange(n)
        golden = math.pi * (3.0 - math.sqrt(5.0))
        z = 1.0 - (2.0 * i + 1.0) / n
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = golden * i
        sphere = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
        return self.center + self.radius * sphere

    def _sampling_box(self):
        lo, hi = self.bounding_box()
        pad = 0.01 * (hi - lo)
        return lo - pad, hi + pad

    def __repr__(self):
        return f"BallDomain(center={self.center.tolist()}, radius={self.radius})"


def _axis0(dim):
    e = np.zeros(dim)
    e[0] = 1.0
    return e


# ---------------------------------------------------------------------------
# triangle meshes
# ---------------------------------------------------------------------------

def _dot3(u, v):
    return u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1] + u[..., 2] * v[..., 2]


# closest-feature codes from closest_on_triangles
_REG_A, _REG_B, _REG_C, _REG_AB, _REG_BC, _REG_CA, _REG_FACE = range(7)


def closest_on_triangles(p, a, b, c):
    """Closest points on triangles and the feature regions they lie on.

    All inputs broadcast on leading axes; vectors live on the last axis.
    Returns (closest (..., 3), region (...,) int8) with region one of
    vertex A/B/C, edge AB/BC/CA, or the face interior.
    """
    p, a, b, c = np.broadcast_arrays(
        np.asarray(p, dtype=np.float64),
        np.asarray(a, dtype=np.float64),
        np.asarray(b, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
    )
    ab = b - a
    ac = c - a
    ap = p - a
    # explicit component sums: identical rounding for any operand layout,
    # so the BVH and the brute-force scan agree bit for bit
    d1 = _dot3(ab, ap)
    d2 = _dot3(ac, ap)
    bp = p - b
    d3 = _dot3(ab, bp)
    d4 = _dot3(ac, bp)
    cp = p - c
    d5 = _dot3(ab, cp)
    d6 = _dot3(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    in_a = (d1 <= 0.0) & (d2 <= 0.0)
    in_b = (d3 >= 0.0) & (d4 <= d3)
    in_c = (d6 >= 0.0) & (d5 <= d6)
    on_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    on_ca = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
    on_bc = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)

    def _safe_div(num, den):
        return num / np.where(den == 0.0, 1.0, den)

    t_ab = np.clip(_safe_div(d1, d1 - d3), 0.0, 1.0)
    t_ca = np.clip(_safe_div(d2, d2 - d6), 0.0, 1.0)
    t_bc = np.clip(_safe_div(d4 - d3, (d4 - d3) + (d5 - d6)), 0.0, 1.0)
    denom = va + vb + vc
    v = _safe_div(vb, denom)
    w = _safe_div(vc, denom)

    q_face = a + ab * v[..., None] + ac * w[..., None]
    region = np.full(p.shape[:-1], _REG_FACE, dtype=np.int8)
    closest = q_face.copy()

    # later assignments must not override earlier (priority) regions
    def _claim(mask, reg, q):
        free = region == _REG_FACE
        m = mask & free if reg != _REG_FACE else mask
        region[m] = reg
        closest[m] = q[m] if q.shape == closest.shape else np.broadcast_to(q, closest.shape)[m]

    _claim(in_a, _REG_A, a)
    _claim(in_b, _REG_B, b)
    _claim(in_c, _REG_C, c)
    _claim(on_ab, _REG_AB, a + ab * t_ab[..., None])
    _claim(on_bc, _REG_BC, b + (c - b) * t_bc[..., None])
    _claim(on_ca, _REG_CA, a + ac * t_ca[..., None])
    return closest, region


class _BVH:
    """Median-split bounding volume hierarchy over triangles."""

    LEAF_SIZE = 8

    def __init__(self, tri_lo, tri_hi):
        n = tri_lo.shape[0]
        centroids = 0.5 * (tri_lo + tri_hi)
        self.order = np.arange(n)
        max_nodes = 4 * n + 2
        self.node_lo = np.empty((max_nodes, 3))
        self.node_hi = np.empty((max_nodes, 3))
        self.node_child = np.full((max_nodes, 2), -1, dtype=np.int64)
        self.node_range = np.zeros((max_nodes, 2), dtype=np.int64)
        self._count = 0
        self._build(tri_lo, tri_hi, centroids, 0, n)

    def _build(self, tri_lo, tri_hi, centroids, start, stop):
        idx = self._count
        self._count += 1
        sel = self.order[start:stop]
        self.node_lo[idx] = tri_lo[sel].min(axis=0)
        self.node_hi[idx] = tri_hi[sel].max(axis=0)
        if stop - start <= self.LEAF_SIZE:
            self.node_range[idx] = (start, stop)
            return idx
        cent = centroids[sel]
        axis = int(np.argmax(self.node_hi[idx] - self.node_lo[idx]))
        mid = (stop - start) // 2
        part = np.argpartition(cent[:, axis], mid)
        self.order[start:stop] = sel[part]
        left = self._build(tri_lo, tri_hi, centroids, start, start + mid)
        right = self._build(tri_lo, tri_hi, centroids, start + mid, stop)
        self.node_child[idx] = (left, right)
        return idx

    def _box_d2(self, node, p):
        d = np.maximum(self.node_lo[node] - p, 0.0) + np.maximum(
            p - self.node_hi[node], 0.0
        )
        return float(d @ d)

    def query(self, p, tri_a, tri_b, tri_c):
        """Index of a nearest triangle plus its closest point and region."""
        best_d2 = np.inf
        best = (-1, None, None)
        stack = [0]
        while stack:
            node = stack.pop()
            if self._box_d2(node, p) >= best_d2 and best[0] >= 0:
                continue
            left, right = self.node_child[node]
            if left < 0:
                start, stop = self.node_range[node]
                sel = self.order[start:stop]
                q, reg = closest_on_triangles(p, tri_a[sel], tri_b[sel], tri_c[sel])
                diff = q - p
                d2 = _dot3(diff, diff)
                j = int(np.argmin(d2))
                if d2[j] < best_d2:
                    best_d2 = float(d2[j])
                    best = (int(sel[j]), q[j], int(reg[j]))
            else:
                dl = self._box_d2(left, p)
                dr = self._box_d2(right, p)
                # visit the nearer child first for earlier pruning
                if dl <= dr:
                    stack.append(right)
                    stack.append(left)
                else:
                    stack.append(left)
                    stack.append(right)
        return best


class MeshDomain:
    """Closed triangle mesh domain (3D).

    Inside/outside classification follows the angle-weighted pseudo-normal
    of the closest feature, which is exact for closed meshes. Faces must be
    consistently oriented with outward normals.
    """

    dim = 3

    # below this triangle count a full vectorized scan beats BVH traversal
    _BRUTE_LIMIT = 4096

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (n, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("faces must be (m, 3) triangles")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise ValueError("face index out of range")
        self.vertices = v
        self.faces = f
        self._a = v[f[:, 0]]
        self._b = v[f[:, 1]]
        self._c = v[f[:, 2]]
        self._build_normals()
        tri = np.stack([self._a, self._b, self._c], axis=1)
        self._bvh = _BVH(tri.min(axis=1), tri.max(axis=1))
        self._lo = v.min(axis=0)
        self._hi = v.max(axis=0)

    def _build_normals(self):
        a, b, c = self._a, self._b, self._c
        raw = np.cross(b - a, c - a)
        norms = np.linalg.norm(raw, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("degenerate triangle in mesh")
        self.face_normals = raw / norms[:, None]
        self.face_areas = 0.5 * norms

        nv = self.vertices.shape[0]
        vnorm = np.zeros((nv, 3))
        edge_acc: dict[tuple[int, int], np.ndarray] = {}
        for t in range(self.faces.shape[0]):
            i, j, k = self.faces[t]
            n = self.face_normals[t]
            pts = self.vertices[[i, j, k]]
            for local, vid in enumerate((i, j, k)):
                e1 = pts[(local + 1) % 3] - pts[local]
                e2 = pts[(local + 2) % 3] - pts[local]
                cosang = np.dot(e1, e2) / (np.linalg.norm(e1) * np.linalg.norm(e2))
                ang = math.acos(min(1.0, max(-1.0, cosang)))
                vnorm[vid] += ang * n
            for u, w in ((i, j), (j, k), (k, i)):
                key = (u, w) if u < w else (w, u)
                edge_acc[key] = edge_acc.get(key, 0.0) + n
        lens = np.linalg.norm(vnorm, axis=1)
        self.vertex_normals = vnorm / np.where(lens == 0.0, 1.0, lens)[:, None]
        self._edge_index = {key: idx for idx, key in enumerate(edge_acc)}
        en = np.array([edge_acc[k] for k in self._edge_index])
        lens = np.linalg.norm(en, axis=1)
        self.edge_normals = en / np.where(lens == 0.0, 1.0, lens)[:, None]

    # -- queries ---------------------------------------------------------

    def _closest_brute(self, pts):
        n = pts.shape[0]
        tri_idx = np.empty(n, dtype=np.int64)
        closest = np.empty((n, 3))
        region = np.empty(n, dtype=np.int8)
        # chunk the (points x triangles) table to bound memory
        chunk = max(1, 2_000_000 // max(1, self.faces.shape[0]))
        for s in range(0, n, chunk):
            e = min(n, s + chunk)
            q, reg = closest_on_triangles(
                pts[s:e, None, :], self._a[None], self._b[None], self._c[None]
            )
            diff = q - pts[s:e, None, :]
            d2 = _dot3(diff, diff)
            j = np.argmin(d2, axis=1)
            rows = np.arange(e - s)
            tri_idx[s:e] = j
            closest[s:e] = q[rows, j]
            region[s:e] = reg[rows, j]
        return tri_idx, closest, region

    def _closest(self, pts):
        if self.faces.shape[0] <= self._BRUTE_LIMIT:
            return self._closest_brute(pts)
        n = pts.shape[0]
        tri_idx = np.empty(n, dtype=np.int64)
        closest = np.empty((n, 3))
        region = np.empty(n, dtype=np.int8)
        for i in range(n):
            t, q, reg = self._bvh.query(pts[i], self._a, self._b, self._c)
            tri_idx[i] = t
            closest[i] = q
            region[i] = reg
        return tri_idx, closest, region

    def _feature_normal(self, tri_idx, region):
        normals = np.empty((tri_idx.shape[0], 3))
        for i, (t, reg) in enumerate(zip(tri_idx, region)):
            f = self.faces[t]
            if reg == _REG_FACE:
                normals[i] = self.face_normals[t]
            elif reg in (_REG_A, _REG_B, _REG_C):
                normals[i] = self.vertex_normals[f[reg]]
            else:
                pairs = {_REG_AB: (0, 1), _REG_BC: (1, 2), _REG_CA: (2, 0)}
                u, w = (f[j] for j in pairs[reg])
                key = (u, w) if u < w else (w, u)
                normals[i] = self.edge_normals[self._edge_index[key]]
        return normals

    def signed_distance(self, x):
        """Negative inside, positive outside, zero on the surface."""
        pts, single = _as_points(x, 3)
        tri_idx, closest, region = self._closest(pts)
        diff = pts - closest
        dist = np.linalg.norm(diff, axis=1)
        normals = self._feature_normal(tri_idx, region)
        sign = np.where(np.einsum("ij,ij->i", diff, normals) < 0.0, -1.0, 1.0)
        sd = sign * dist
        return float(sd[0]) if single else sd

    def contains(self, x):
        sd = self.signed_distance(x)
        if np.isscalar(sd):
            return sd < 0.0
        return sd < 0.0

    def boundary_query(self, x):
        pts, single = _as_points(x, 3)
        _, closest, _ = self._closest(pts)
        dist = np.linalg.norm(pts - closest, axis=1)
        if single:
            return float(dist[0]), closest[0]
        return dist, closest

    def distance_to_boundary(self, p):
        sd = self.signed_distance(np.asarray(p, dtype=np.float64))
        if sd > 0.0:
            raise ExteriorQueryError(f"exterior query: point {np.asarray(p).tolist()}")
        return -sd

    # -- extents / sampling ----------------------------------------------

    def bounding_box(self):
        return self._lo.copy(), self._hi.copy()

    def bounding_radius(self):
        center = 0.5 * (self._lo + self._hi)
        return float(np.linalg.norm(self.vertices - center, axis=1).max())

    def sample_interior(self, n, rng, **kw):
        return _rejection_sample(self, n, rng, **kw)

    def sample_boundary(self, n, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        cum = np.cumsum(self.face_areas)
        pick = np.searchsorted(cum, rng.uniform(0.0, cum[-1], n))
        u = rng.random(n)
        v = rng.random(n)
        fold = u + v > 1.0
        u[fold] = 1.0 - u[fold]
        v[fold] = 1.0 - v[fold]
        a, b, c = self._a[pick], self._b[pick], self._c[pick]
        return a + u[:, None] * (b - a) + v[:, None] * (c - a)

    def _sampling_box(self):
        pad = 0.01 * (self._hi - self._lo)
        return self._lo - pad, self._hi + pad

    def __repr__(self):
        return (
            f"MeshDomain({self.vertices.shape[0]} vertices, "
            f"{self.faces.shape[0]} faces)"
        )


# ---------------------------------------------------------------------------
# mesh input and construction
# ---------------------------------------------------------------------------


def load_obj(path) -> MeshDomain:
    """Read an ASCII OBJ file (v and f records; polygons fan-triangulated)."""
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for field in parts[1:]:
                    tok = field.split("/")[0]
                    i = int(tok)
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise ValueError(f"no mesh data in {path}")
    return MeshDomain(np.array(verts), np.array(faces))


def make_box_mesh(center=(0.0, 0.0, 0.0), half_extent=1.0) -> MeshDomain:
    """Axis-aligned cube with outward-oriented faces."""
    c = np.asarray(center, dtype=np.float64)
    h = float(half_extent)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=np.float64,
    )
    verts = c + h * corners
    # two triangles per face, wound counterclockwise seen from outside
    faces = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 7], [1, 7, 3],  # +z
        ],
        dtype=np.int64,
    )
    return MeshDomain(verts, faces)


def make_icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)) -> MeshDomain:
    """Geodesic sphere: subdivided icosahedron projected to the radius."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}
        new_faces = []

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key in cache:
                return cache[key]
            mid = np.array(verts[i]) + np.array(verts[j])
            mid /= np.linalg.norm(mid)
            verts.append(tuple(mid))
            cache[key] = len(verts) - 1
            return cache[key]

        for i, j, k in faces:
            a = midpoint(i, j)
            b = midpoint(j, k)
            c = midpoint(k, i)
            new_faces += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return MeshDomain(v, np.array(faces, dtype=np.int64))


# ---------------------------------------------------------------------------
# descriptor serialization
# ---------------------------------------------------------------------------


def domain_from_config(cfg: dict, base_dir=None):
    """Build a domain from a JSON-style descriptor dict."""
    kind = cfg.get("kind")
    if kind == "polar":
        return PolarDomain(
            r0=cfg.get("r0", 1.0), c1=cfg.get("c1", 0.0), c2=cfg.get("c2", 0.0)
        )
    if kind == "ball":
        return BallDomain(cfg.get("center", [0.0, 0.0, 0.0]), cfg.get("radius", 1.0))
    if kind == "mesh":
        if "path" in cfg:
            import os

            path = cfg["path"]
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            return load_obj(path)
        return MeshDomain(np.array(cfg["vertices"]), np.array(cfg["faces"]))
    raise ValueError(f"unknown domain kind: {kind!r}")


def domain_to_config(dom) -> dict:
    if isinstance(dom, PolarDomain):
        return {"kind": "polar", "r0": dom.r0, "c1": dom.c1, "c2": dom.c2}
    if isinstance(dom, BallDomain):
        return {"kind": "ball", "center": dom.center.tolist(), "radius": dom.radius}
    if isinstance(dom, MeshDomain):
        return {
            "kind": "mesh",
            "vertices": dom.vertices.tolist(),
            "faces": dom.faces.tolist(),
        }
    raise TypeError(f"cannot serialize domain {type(dom).__name__}")
