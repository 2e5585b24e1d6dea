"""Signed point-to-surface distances from labeled voxel grids to a triangle mesh.

The distance kernel is the exact closest point on each triangle (not on the
mesh vertices).  Queries run either by brute force over all triangles or
through a bounding-volume hierarchy; both go through the same vectorized
kernel, so they agree to rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

MIN_TRIANGLE_AREA = 1e-12


class Label(enum.IntEnum):
    BACKGROUND = 0
    GM = 1
    WM = 2
    CSF = 3

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown voxel label {text!r}") from None


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle references a vertex index out of range")
        if t.size:
            areas = triangle_areas(v[t[:, 0]], v[t[:, 1]], v[t[:, 2]])
            bad = np.flatnonzero(areas < MIN_TRIANGLE_AREA)
            if bad.size:
                raise ValueError(f"degenerate triangle {int(bad[0])} (area {areas[bad[0]]:.3g} mm^2)")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v, t = self.vertices, self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def __len__(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True)
class LabeledVoxelGrid:
    origin: np.ndarray
    spacing: float
    dims: tuple[int, int, int]
    labels: np.ndarray  # int codes of Label, shape dims

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError("grid dims must be three positive integers")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.size != int(np.prod(dims)):
            raise ValueError("label array size does not match grid dims")
        labels = labels.reshape(dims)
        if labels.min() < 0 or labels.max() > max(Label):
            raise ValueError("label array contains unknown label codes")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    def centroids(self, index: np.ndarray) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * self.spacing


@dataclass(frozen=True)
class LcdmOutput:
    index: np.ndarray  # (m, 3) voxel indices in C order
    labels: np.ndarray  # (m,) Label codes
    signed_distance: np.ndarray  # (m,) mm, negative for WM

    @property
    def gm_distances(self) -> np.ndarray:
        return self.signed_distance[self.labels == Label.GM]


def triangle_areas(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", u, v)


def closest_points(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest points on triangles (a, b, c) to points p; all arrays broadcast to (..., 3).

    Voronoi-region classification: vertex, edge or face region, checked in
    the usual order so the first matching region wins.
    """
    p, a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (p, a, b, c)))
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[..., None] + ac * w[..., None]

        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(m[..., None], b + (c - b) * t_bc[..., None], out)

        t_ac = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + ac * t_ac[..., None], out)

        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[..., None], c, out)

        t_ab = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + ab * t_ab[..., None], out)

        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[..., None], b, out)

        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[..., None], a, out)
    return out


def closest_point_on_triangle(p, tri) -> tuple[np.ndarray, float]:
    """Closest point on the closed triangle ``tri`` (3x3) to ``p`` and its distance."""
    tri = np.asarray(tri, dtype=float).reshape(3, 3)
    if triangle_areas(tri[0], tri[1], tri[2]) < MIN_TRIANGLE_AREA:
        raise ValueError("degenerate triangle")
    p = np.asarray(p, dtype=float).reshape(3)
    q = closest_points(p, tri[0], tri[1], tri[2])
    return q, float(np.linalg.norm(p - q))


def brute_force_distances(points, mesh: TriangleMesh, chunk: int = 2_000_000) -> np.ndarray:
    """Unsigned distance from each point to the mesh by checking every triangle."""
    if len(mesh) == 0:
        raise ValueError("mesh has no triangles")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    a, b, c = mesh.corners
    out = np.empty(len(pts))
    step = max(1, chunk // len(mesh))
    for s in range(0, len(pts), step):
        block = pts[s:s + step, None, :]
        q = closest_points(block, a[None], b[None], c[None])
        out[s:s + step] = np.sqrt(np.min(np.sum((block - q) ** 2, axis=-1), axis=1))
    return out


@dataclass(frozen=True)
class MeshAccel:
    """Flattened bounding-volume hierarchy.

    Node ``i`` has box ``lo[i]``..``hi[i]``; internal nodes have children
    ``left[i]``/``right[i]``, leaves have ``left[i] == -1`` and own the
    triangles ``order[start[i]:start[i] + count[i]]``.
    """

    mesh: TriangleMesh
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    leaf_size: int = field(default=4)

    @property
    def n_nodes(self) -> int:
        return len(self.lo)


def build_accel(mesh: TriangleMesh, leaf_size: int = 4) -> MeshAccel:
    """Build a BVH by median split along the longest centroid axis."""
    if len(mesh) == 0:
        raise ValueError("mesh has no triangles")
    a, b, c = mesh.corners
    tri_lo = np.minimum(np.minimum(a, b), c)
    tri_hi = np.maximum(np.maximum(a, b), c)
    cent = (a + b + c) / 3.0
    order = np.arange(len(mesh))
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node(s: int, e: int) -> int:
        idx = order[s:e]
        lo.append(tri_lo[idx].min(axis=0))
        hi.append(tri_hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        return len(lo) - 1

    root = new_node(0, len(mesh))
    stack = [root]
    while stack:
        node = stack.pop()
        s, n = start[node], count[node]
        if n <= leaf_size:
            continue
        idx = order[s:s + n]
        spread = np.ptp(cent[idx], axis=0)
        axis = int(np.argmax(spread))
        sub = np.argsort(cent[idx, axis], kind="stable")
        order[s:s + n] = idx[sub]
        mid = s + n // 2
        left[node] = new_node(s, mid)
        right[node] = new_node(mid, s + n)
        count[node] = 0
        stack.extend((left[node], right[node]))

    return MeshAccel(
        mesh=mesh,
        lo=np.array(lo),
        hi=np.array(hi),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        count=np.array(count, dtype=np.int64),
        order=order,
        leaf_size=leaf_size,
    )


def _box_dist2(pts: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    d = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
    return np.sum(d * d, axis=-1)


def _leaf_pairs(accel: MeshAccel, pidx: np.ndarray, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = accel.count[nodes]
    rep_p = np.repeat(pidx, counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    tris = accel.order[np.repeat(accel.start[nodes], counts) + offsets]
    return rep_p, tris


def _update_best(accel: MeshAccel, pts: np.ndarray, best2: np.ndarray,
                 pidx: np.ndarray, nodes: np.ndarray) -> None:
    if pidx.size == 0:
        return
    rep_p, tris = _leaf_pairs(accel, pidx, nodes)
    a, b, c = accel.mesh.corners
    p = pts[rep_p]
    q = closest_points(p, a[tris], b[tris], c[tris])
    np.minimum.at(best2, rep_p, np.sum((p - q) ** 2, axis=-1))


def accel_distances(points, accel: MeshAccel, batch: int = 4096) -> np.ndarray:
    """Unsigned point-to-mesh distances through the BVH.

    All points in a batch traverse the tree together: a greedy descent gives
    each point an upper bound, then a breadth-first sweep visits only the
    nodes whose box could still hold a closer triangle.
    """
    pts_all = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty(len(pts_all))
    for s in range(0, len(pts_all), batch):
        out[s:s + batch] = _accel_batch(pts_all[s:s + batch], accel)
    return out


def _accel_batch(pts: np.ndarray, accel: MeshAccel) -> np.ndarray:
    n = len(pts)
    best2 = np.full(n, np.inf)
    ids = np.arange(n)

    # greedy descent towards the nearer child box
    node = np.zeros(n, dtype=np.int64)
    while True:
        inner = accel.left[node] >= 0
        if not inner.any():
            break
        l, r = accel.left[node[inner]], accel.right[node[inner]]
        p = pts[inner]
        go_left = _box_dist2(p, accel.lo[l], accel.hi[l]) <= _box_dist2(p, accel.lo[r], accel.hi[r])
        node[inner] = np.where(go_left, l, r)
    _update_best(accel, pts, best2, ids, node)

    pidx = ids
    nodes = np.zeros(n, dtype=np.int64)
    while pidx.size:
        lb = _box_dist2(pts[pidx], accel.lo[nodes], accel.hi[nodes])
        keep = lb <= best2[pidx] * (1.0 + 1e-12)
        pidx, nodes = pidx[keep], nodes[keep]
        leaf = accel.left[nodes] < 0
        _update_best(accel, pts, best2, pidx[leaf], nodes[leaf])
        inner_p, inner_n = pidx[~leaf], nodes[~leaf]
        pidx = np.concatenate((inner_p, inner_p))
        nodes = np.concatenate((accel.left[inner_n], accel.right[inner_n]))
    return np.sqrt(best2)


def distance_to_surface(p, accel: MeshAccel) -> float:
    return float(accel_distances(np.asarray(p, dtype=float).reshape(1, 3), accel)[0])


def signed_by_label(distance: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Negative magnitude for WM voxels, positive otherwise."""
    return np.where(np.asarray(labels) == Label.WM, -np.abs(distance), np.abs(distance))


def compute_lcdm(grid: LabeledVoxelGrid, mesh: TriangleMesh, accel: MeshAccel | None = None) -> LcdmOutput:
    """Signed distance of every non-background voxel centroid to the surface."""
    if accel is None:
        accel = build_accel(mesh)
    flat = grid.labels.reshape(-1)
    keep = np.flatnonzero(flat != Label.BACKGROUND)
    index = np.stack(np.unravel_index(keep, grid.dims), axis=1)
    dist = accel_distances(grid.centroids(index), accel)
    labels = flat[keep]
    return LcdmOutput(index=index, labels=labels, signed_distance=signed_by_label(dist, labels))
