"""Work-surface reconstruction from a point cloud.

Pipeline: iterative RANSAC plane extraction, largest-cluster scatter
removal, occupancy-grid contour tracing of the plane's boundary, and
ear-clipping triangulation into a DesktopMesh.

All functions are pure; the RANSAC generator is passed in (or seeded)
explicitly so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry2d import ensure_ccw, point_in_polygon, polygon_area
from .scene import DesktopMesh


class DesktopError(Exception):
    pass


class NoPlaneFoundError(DesktopError):
    def __init__(self, detail="no plane found"):
        super().__init__(detail)


class DegenerateSurfaceError(DesktopError):
    def __init__(self):
        super().__init__("degenerate surface")


@dataclass
class PlaneModel:
    normal: np.ndarray        # unit, canonicalized upward
    offset: float             # normal . p = offset
    inlier_indices: np.ndarray

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        self.normal, self.offset = canonicalize_plane(self.normal, self.offset)
        self.inlier_indices = np.asarray(self.inlier_indices, dtype=int)

    def distances(self, points) -> np.ndarray:
        return np.abs(np.asarray(points, dtype=float) @ self.normal - self.offset)


@dataclass
class DetectParams:
    dist_threshold: float = 0.01
    iterations: int = 1000
    min_inliers: int = 500
    max_planes: int = 5
    cluster_radius: float = 0.05
    cell: float = 0.02
    seed: int = 0


def canonicalize_plane(normal, offset):
    """Unit normal pointing up (+z); ties broken toward +x then +y."""
    normal = np.asarray(normal, dtype=float)
    n = np.linalg.norm(normal)
    if n < 1e-12:
        raise DegenerateSurfaceError()
    normal, offset = normal / n, float(offset) / n
    flip = normal[2] < 0 or (normal[2] == 0 and (normal[0] < 0 or (normal[0] == 0 and normal[1] < 0)))
    if flip:
        normal, offset = -normal, -offset
    return normal, offset


def fit_plane_lsq(points):
    """Total-least-squares plane through points (SVD of the centered cloud)."""
    pts = np.asarray(points, dtype=float)
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    normal = vt[-1]
    return canonicalize_plane(normal, float(np.dot(normal, centroid)))


def segment_planes(cloud, dist_threshold=0.01, min_inliers=500, max_planes=5,
                   iterations=1000, rng=None):
    """Iterative RANSAC: fit a plane, remove its inliers, repeat.

    Returns PlaneModels ordered by descending inlier count; indices refer
    to the original cloud. Clouds smaller than min_inliers yield [].
    """
    if dist_threshold <= 0:
        raise ValueError("dist_threshold must be positive")
    if min_inliers < 3:
        raise ValueError("min_inliers must be >= 3")
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if rng is None:
        rng = np.random.default_rng(0)
    remaining = np.arange(len(pts))
    planes = []
    while len(planes) < max_planes and remaining.size >= min_inliers:
        sub = pts[remaining]
        best_mask, best_count = None, 0
        for _ in range(iterations):
            idx = rng.choice(remaining.size, size=3, replace=False)
            a, b, c = sub[idx]
            n = np.cross(b - a, c - a)
            norm = np.linalg.norm(n)
            if norm < 1e-12:
                continue
            n = n / norm
            d = np.abs((sub - a) @ n)
            mask = d <= dist_threshold
            count = int(mask.sum())
            if count > best_count:
                best_count, best_mask = count, mask
        if best_mask is None or best_count < min_inliers:
            break
        # one refinement pass: TLS refit on the consensus set, re-select inliers
        normal, offset = fit_plane_lsq(sub[best_mask])
        mask = np.abs(sub @ normal - offset) <= dist_threshold
        if int(mask.sum()) < min_inliers:
            mask = best_mask
            normal, offset = fit_plane_lsq(sub[best_mask])
        planes.append(PlaneModel(normal, offset, remaining[mask]))
        remaining = remaining[~mask]
    planes.sort(key=lambda p: -p.inlier_indices.size)
    return planes


def remove_scatter(plane: PlaneModel, cloud, cluster_radius=0.05) -> np.ndarray:
    """Keep only the largest Euclidean cluster of the plane's inliers.

    Clusters are connected components of the "within cluster_radius" graph.
    Equal-size clusters tie-break on the lowest contained cloud index.
    Returns sorted indices into the original cloud.
    """
    if cluster_radius <= 0:
        raise ValueError("cluster_radius must be positive")
    idx = np.asarray(plane.inlier_indices, dtype=int)
    if idx.size == 0:
        return idx
    pts = np.asarray(cloud, dtype=float)[idx]
    roots = _euclidean_components(pts, cluster_radius)
    labels, counts = np.unique(roots, return_counts=True)
    best = max(zip(labels, counts), key=lambda lc: (lc[1], -idx[roots == lc[0]].min()))
    return np.sort(idx[roots == best[0]])


def _euclidean_components(pts, radius) -> np.ndarray:
    """Connected components of the "within radius" graph, one label per point.

    Exact single-linkage clustering, computed on a spatial grid so dense
    clouds do not require the quadratic-ish all-pairs neighbor graph. Bin
    size radius/sqrt(6) makes any two points in the same or face-adjacent
    bins provably within radius of each other, so those unions are free;
    only bin pairs still in different components get an explicit minimum
    point-to-point distance check.
    """
    n = len(pts)
    b = radius / np.sqrt(6.0)
    keys = np.floor(pts / b).astype(np.int64)
    bins: dict = {}
    for i, key in enumerate(map(tuple, keys)):
        bins.setdefault(key, []).append(i)
    bin_keys = list(bins)
    bin_index = {k: i for i, k in enumerate(bin_keys)}
    parent = list(range(len(bin_keys)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for k, (kx, ky, kz) in enumerate(bin_keys):
        for nb in ((kx + 1, ky, kz), (kx, ky + 1, kz), (kx, ky, kz + 1)):
            if nb in bin_index:
                union(k, bin_index[nb])

    # bin centers can be up to radius + b*sqrt(3) apart while still holding
    # a point pair within radius; check exactly those candidates
    centers = (np.array(bin_keys, dtype=float) + 0.5) * b
    reach = radius + b * np.sqrt(3.0)
    tree = cKDTree(centers)
    for i, j in tree.query_pairs(reach, output_type="ndarray"):
        if find(i) == find(j):
            continue
        pa, pb = pts[bins[bin_keys[i]]], pts[bins[bin_keys[j]]]
        d2 = np.sum((pa[:, None, :] - pb[None, :, :]) ** 2, axis=-1)
        if d2.min() <= radius * radius + 1e-15:
            union(i, j)

    bin_root = np.array([find(i) for i in range(len(bin_keys))])
    roots = np.empty(n, dtype=np.int64)
    for k, members in enumerate(bins.values()):
        roots[members] = bin_root[k]
    return roots


def plane_basis(normal, offset):
    """Deterministic 2D frame on a plane (shared with DesktopMesh)."""
    n = np.asarray(normal, dtype=float)
    ref = np.array([1.0, 0, 0]) if abs(n[0]) < 0.9 else np.array([0.0, 1, 0])
    u = ref - np.dot(ref, n) * n
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return n * offset, u, v


def extract_boundary(points, plane: PlaneModel, cell=0.02) -> np.ndarray:
    """Outer contour of the occupied region after projecting onto the plane.

    Points are binned into a square grid of pitch `cell`; the returned
    polygon follows the outer edge of the union of occupied cells, so its
    area includes the half-cell skirt around the samples. CCW, plane coords.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateSurfaceError()
    if cell <= 0:
        raise ValueError("cell must be positive")
    origin, u, v = plane_basis(plane.normal, plane.offset)
    uv = np.stack([(pts - origin) @ u, (pts - origin) @ v], axis=-1)
    spread = np.linalg.svd(uv - uv.mean(axis=0), compute_uv=False)
    if spread[1] <= 1e-8 * max(1.0, spread[0]):
        raise DegenerateSurfaceError()

    u0, v0 = uv.min(axis=0) - cell  # one-cell margin so the contour never touches the grid edge
    counts: dict = {}
    for x, y in uv:
        key = (int(np.floor((x - u0) / cell)), int(np.floor((y - v0) / cell)))
        counts[key] = counts.get(key, 0) + 1
    # occupancy threshold at half the median cell density: a border cell
    # survives only when it is at least about half covered by samples, so
    # the traced outline is an unbiased estimate of the true surface edge
    # (keeping every touched cell would overshoot by up to a cell per side)
    threshold = max(1, int(np.ceil(0.5 * float(np.median(list(counts.values()))))))
    cells = {c for c, k in counts.items() if k >= threshold}
    if not cells:
        cells = set(counts)
    loop = _largest_outer_loop(cells)
    poly = np.array([[u0 + i * cell, v0 + j * cell] for i, j in loop])
    return ensure_ccw(_collapse_collinear(poly))


def _largest_outer_loop(cells):
    """Walk the directed boundary edges of a cell union; return the biggest loop.

    Each occupied-cell side facing an empty cell contributes a directed
    lattice edge with the region on its left, so outer loops come out CCW.
    Pinch corners (two outgoing edges) are resolved by taking the sharpest
    left turn, which keeps every loop simple.
    """
    edges = {}
    for (i, j) in cells:
        if (i, j - 1) not in cells:
            edges.setdefault((i, j), []).append((i + 1, j))
        if (i + 1, j) not in cells:
            edges.setdefault((i + 1, j), []).append((i + 1, j + 1))
        if (i, j + 1) not in cells:
            edges.setdefault((i + 1, j + 1), []).append((i, j + 1))
        if (i - 1, j) not in cells:
            edges.setdefault((i, j + 1), []).append((i, j))
    loops = []
    remaining = {(a, b) for a, outs in edges.items() for b in outs}
    while remaining:
        start, nxt = next(iter(sorted(remaining)))
        loop = [start]
        cur, prev_dir = nxt, (nxt[0] - start[0], nxt[1] - start[1])
        remaining.discard((start, nxt))
        while cur != start:
            loop.append(cur)
            outs = [b for b in edges.get(cur, []) if (cur, b) in remaining]
            if not outs:
                break
            # sharpest left turn relative to the incoming direction
            def turn(b):
                d = (b[0] - cur[0], b[1] - cur[1])
                cross = prev_dir[0] * d[1] - prev_dir[1] * d[0]
                dot = prev_dir[0] * d[0] + prev_dir[1] * d[1]
                return np.arctan2(cross, dot)
            nxt = max(outs, key=turn)
            remaining.discard((cur, nxt))
            prev_dir = (nxt[0] - cur[0], nxt[1] - cur[1])
            cur = nxt
        if len(loop) >= 4 and cur == start:
            loops.append(loop)
    if not loops:
        raise DegenerateSurfaceError()
    return max(loops, key=lambda lp: abs(polygon_area(np.array(lp, dtype=float))))


def _collapse_collinear(poly, eps=1e-12):
    out = []
    n = len(poly)
    for k in range(n):
        a, b, c = poly[k - 1], poly[k], poly[(k + 1) % n]
        if abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) > eps:
            out.append(b)
    return np.array(out) if len(out) >= 3 else np.asarray(poly)


def polygon_is_simple(poly) -> bool:
    """Brute-force pairwise segment intersection check."""
    p = np.asarray(poly, dtype=float)
    n = len(p)
    segs = [(p[i], p[(i + 1) % n]) for i in range(n)]

    def intersects(s1, s2):
        (a, b), (c, d) = s1, s2

        def orient(p0, p1, p2):
            val = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
            return 0 if abs(val) < 1e-12 else (1 if val > 0 else -1)

        o1, o2 = orient(a, b, c), orient(a, b, d)
        o3, o4 = orient(c, d, a), orient(c, d, b)
        return o1 != o2 and o3 != o4

    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # adjacent through the wrap-around
            if intersects(segs[i], segs[j]):
                return False
    return True


def triangulate_polygon(poly) -> list:
    """Ear clipping of a simple CCW polygon; always yields len(poly)-2 triples."""
    p = ensure_ccw(np.asarray(poly, dtype=float))
    idx = list(range(len(p)))
    tris = []

    def cross_at(k):
        a, b, c = p[idx[k - 1]], p[idx[k]], p[idx[(k + 1) % len(idx)]]
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def is_ear(k):
        a, b, c = p[idx[k - 1]], p[idx[k]], p[idx[(k + 1) % len(idx)]]
        for m in range(len(idx)):
            if m in (k - 1 if k else len(idx) - 1, k, (k + 1) % len(idx)):
                continue
            q = p[idx[m]]
            # a vertex on the candidate diagonal also invalidates the ear:
            # clipping across it would cover area outside the polygon
            if _in_triangle_inclusive(q, a, b, c):
                return False
        return True

    while len(idx) > 3:
        clipped = False
        for k in range(len(idx)):
            if cross_at(k) > 1e-14 and is_ear(k):
                tris.append((idx[k - 1], idx[k], idx[(k + 1) % len(idx)]))
                del idx[k]
                clipped = True
                break
        if not clipped:
            # only collinear ears left; clip one (zero-area triangle) to make progress
            flat = min(range(len(idx)), key=lambda k: abs(cross_at(k)))
            tris.append((idx[flat - 1], idx[flat], idx[(flat + 1) % len(idx)]))
            del idx[flat]
    tris.append(tuple(idx))
    return tris


def _in_triangle_inclusive(q, a, b, c):
    def side(p0, p1):
        return (p1[0] - p0[0]) * (q[1] - p0[1]) - (p1[1] - p0[1]) * (q[0] - p0[0])

    d1, d2, d3 = side(a, b), side(b, c), side(c, a)
    return d1 >= -1e-14 and d2 >= -1e-14 and d3 >= -1e-14


def make_mesh(boundary, normal, offset) -> DesktopMesh:
    """Triangulate a boundary polygon into a DesktopMesh."""
    poly = ensure_ccw(np.asarray(boundary, dtype=float))
    if len(poly) < 3:
        raise DesktopError("boundary polygon needs at least 3 vertices")
    if not polygon_is_simple(poly):
        raise DesktopError("boundary polygon is self-intersecting")
    tris = triangulate_polygon(poly)
    tri_area = sum(abs(polygon_area(poly[list(t)])) for t in tris)
    area = abs(polygon_area(poly))
    if area > 0 and abs(tri_area - area) > 1e-6 * area:
        raise DesktopError(f"triangulation area mismatch: {tri_area} vs {area}")
    return DesktopMesh(normal=np.asarray(normal, dtype=float), offset=float(offset),
                       boundary=poly, triangles=tris)


def detect_desktop(cloud, params: DetectParams | None = None) -> DesktopMesh:
    """Full pipeline: segment, pick the largest plane, de-scatter, mesh."""
    params = params or DetectParams()
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    rng = np.random.default_rng(params.seed)
    planes = segment_planes(pts, dist_threshold=params.dist_threshold,
                            min_inliers=params.min_inliers, max_planes=params.max_planes,
                            iterations=params.iterations, rng=rng)
    if not planes:
        raise NoPlaneFoundError()
    plane = planes[0]
    kept = remove_scatter(plane, pts, params.cluster_radius)
    if kept.size < 3:
        raise NoPlaneFoundError("largest plane cluster too small")
    boundary = extract_boundary(pts[kept], plane, params.cell)
    return make_mesh(boundary, plane.normal, plane.offset)


def mesh_inlier_points(cloud, plane: PlaneModel):
    return np.asarray(cloud, dtype=float)[plane.inlier_indices]
