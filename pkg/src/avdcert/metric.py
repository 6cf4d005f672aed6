"""Metric fields given by their SPD square-root matrix field.

The square-root field is the stored primary object; the quadratic-form metric
is derived on demand. Two asymmetric distances are provided: the Du/Wang form
evaluates the field at the second argument, the Labelle/Shewchuk form at the
first.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import smallmat
from .errors import DegenerateMeshError, DomainError, FormatError, NotSpdError

_FACTORIAL = {2: 2.0, 3: 6.0}


class DistanceKind(str, Enum):
    DW = "dw"
    LS = "ls"

    @classmethod
    def parse(cls, value) -> "DistanceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown distance kind {value!r}; expected 'dw' or 'ls'")


def _as_array(m) -> np.ndarray:
    if isinstance(m, SpdMatrix):
        return m.array
    return np.asarray(m, dtype=float)


class SpdMatrix:
    """Symmetric positive-definite matrix of dimension 2 or 3.

    Construction fails for asymmetric or non-positive-definite input, naming
    the offending eigenvalue. The stored array is immutable.
    """

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.array(array, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] not in (2, 3):
            raise NotSpdError(f"expected a 2x2 or 3x3 matrix, got shape {arr.shape}")
        if not np.array_equal(arr, arr.T):
            raise NotSpdError("matrix entries are not exactly symmetric")
        lam_min = float(smallmat.sym_min_eigvalue(arr))
        if not lam_min > 0.0:
            raise NotSpdError(
                f"matrix is not positive-definite: smallest eigenvalue {lam_min:.6g}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)

    @classmethod
    def from_upper(cls, dim: int, values) -> "SpdMatrix":
        """Build from the row-major upper triangle (m11 m12 [m13] m22 [m23] [m33])."""
        values = [float(v) for v in values]
        expected = dim * (dim + 1) // 2
        if len(values) != expected:
            raise NotSpdError(
                f"need {expected} upper-triangle entries for dimension {dim}, got {len(values)}"
            )
        arr = np.zeros((dim, dim))
        it = iter(values)
        for i in range(dim):
            for j in range(i, dim):
                arr[i, j] = arr[j, i] = next(it)
        return cls(arr)

    @property
    def dim(self) -> int:
        return self.array.shape[0]

    def upper_triangle(self) -> list[float]:
        n = self.dim
        return [float(self.array[i, j]) for i in range(n) for j in range(i, n)]

    def __setattr__(self, name, value):
        raise AttributeError("SpdMatrix is immutable")

    def __repr__(self):
        return f"SpdMatrix({self.array.tolist()})"


def sqrt_spd(q) -> SpdMatrix:
    """Unique SPD square root: the returned M satisfies M @ M = Q."""
    arr = _as_array(q)
    if not isinstance(q, SpdMatrix):
        q = SpdMatrix(arr)  # validates symmetry and positive-definiteness
    return SpdMatrix(smallmat.sqrt_spd_array(q.array))


def spectral_norm(a) -> float:
    """Largest singular value; equals the maximum eigenvalue for SPD input."""
    return float(smallmat.spectral_norm(_as_array(a)))


def min_eigenvalue(a) -> float:
    """Smallest eigenvalue of an SPD matrix; reciprocal of spectral_norm of its inverse."""
    arr = _as_array(a)
    smallmat.assert_spd(arr)
    return float(smallmat.sym_min_eigvalue(arr))


class MetricField:
    """Square-root matrix field over an axis-aligned bounded domain.

    kind is "analytic" (callable-backed) or "pl" (mesh-backed); smoothness is
    one of "C0", "C1", "PL".
    """

    def __init__(self, dim, kind, smoothness, lower, upper, batch_eval,
                 mesh=None, validate_eval=False):
        self.dim = int(dim)
        self.kind = str(kind)
        self.smoothness = str(smoothness)
        self.lower = np.asarray(lower, dtype=float).copy()
        self.upper = np.asarray(upper, dtype=float).copy()
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise DomainError("bounding box does not match the field dimension")
        if not np.all(self.upper > self.lower):
            raise DomainError("bounding box is empty")
        self.lower.flags.writeable = False
        self.upper.flags.writeable = False
        self._batch_eval = batch_eval
        self.mesh = mesh
        self._validate_eval = bool(validate_eval)

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, matrix, lower, upper) -> "MetricField":
        m = matrix if isinstance(matrix, SpdMatrix) else SpdMatrix(matrix)
        arr = m.array

        def batch(points):
            return np.broadcast_to(arr, (len(points),) + arr.shape).copy()

        return cls(m.dim, "analytic", "C1", lower, upper, batch)

    @classmethod
    def from_callable(cls, fn: Callable, lower, upper, smoothness="C1",
                      batch_fn: Optional[Callable] = None) -> "MetricField":
        """Wrap a point -> square-root-matrix callable.

        fn maps a length-n point to an SPD (n, n) array. batch_fn, when given,
        maps an (N, n) array to (N, n, n) and is used for vectorized paths.
        """
        lower = np.asarray(lower, dtype=float)
        dim = lower.shape[0]

        if batch_fn is None:
            def batch(points):
                return np.stack([_as_array(fn(p)) for p in points]) if len(points) \
                    else np.empty((0, dim, dim))
        else:
            batch = batch_fn

        return cls(dim, "analytic", smoothness, lower, upper, batch,
                   validate_eval=True)

    @classmethod
    def from_metric_callable(cls, qfn: Callable, lower, upper, smoothness="C1",
                             batch_fn: Optional[Callable] = None) -> "MetricField":
        """Wrap a quadratic-form metric callable; square roots are taken per point."""
        if batch_fn is None:
            def batch(points):
                if not len(points):
                    lo = np.asarray(lower, dtype=float)
                    return np.empty((0, lo.shape[0], lo.shape[0]))
                stacked = np.stack([_as_array(qfn(p)) for p in points])
                return smallmat.sqrt_spd_array(stacked)
        else:
            def batch(points):
                return smallmat.sqrt_spd_array(batch_fn(points))

        field = cls.from_callable(lambda p: None, lower, upper, smoothness)
        field._batch_eval = batch
        return field

    @classmethod
    def from_mesh(cls, mesh: "SimplicialMetricMesh") -> "MetricField":
        return cls(mesh.dim, "pl", "PL", mesh.lower, mesh.upper,
                   mesh.interpolate_many, mesh=mesh)

    # -- geometry ------------------------------------------------------------

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all((pts >= self.lower) & (pts <= self.upper), axis=1)
        if self.mesh is not None:
            ok = inside.copy()
            if np.any(inside):
                idx, _ = self.mesh.locate_many(pts[inside])
                ok[np.flatnonzero(inside)] = idx >= 0
            return ok
        return inside

    def require_inside(self, point, name="point"):
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            raise DomainError(f"{name} has shape {p.shape}, expected ({self.dim},)")
        if not self.contains(p[None])[0]:
            raise DomainError(f"{name} {p.tolist()} lies outside the domain")
        return p

    # -- evaluation ----------------------------------------------------------

    def sqrt_many(self, points, check_domain=False) -> np.ndarray:
        """Square-root matrices at an (N, n) array of points, shape (N, n, n)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if check_domain:
            inside = self.contains(pts)
            if not np.all(inside):
                bad = pts[~inside][0]
                raise DomainError(f"point {bad.tolist()} lies outside the domain")
        out = self._batch_eval(pts)
        if self._validate_eval and len(out):
            smallmat.assert_spd(out, "field value")
        return out

    def sqrt_at(self, point) -> SpdMatrix:
        p = self.require_inside(point)
        return SpdMatrix(self.sqrt_many(p[None])[0])

    def metric_at(self, point) -> SpdMatrix:
        m = self.sqrt_at(point).array
        return SpdMatrix(m @ m)


def dw_distance(field: MetricField, a, b) -> float:
    """Distance with the field evaluated at the second argument."""
    a = field.require_inside(a, "first point")
    b = field.require_inside(b, "second point")
    m = field.sqrt_many(b[None])[0]
    return float(np.linalg.norm(m @ (a - b)))


def ls_distance(field: MetricField, a, b) -> float:
    """Distance with the field evaluated at the first argument.

    Delegates to dw_distance with swapped arguments so the duality
    ls(a, b) == dw(b, a) holds bit for bit.
    """
    return dw_distance(field, b, a)


class SimplicialMetricMesh:
    """Simplicial complex with one square-root matrix per vertex.

    The matrix field is interpolated linearly inside each simplex; the
    coordinate derivatives of the field are constant per simplex and are
    precomputed at construction.
    """

    def __init__(self, vertices, simplices, vertex_sqrt):
        self.vertices = np.array(vertices, dtype=float)
        self.simplices = np.array(simplices, dtype=int)
        self.vertex_sqrt = np.array(vertex_sqrt, dtype=float)

        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise DomainError(f"vertices must be (N, 2) or (N, 3), got {self.vertices.shape}")
        n = self.vertices.shape[1]
        nv = self.vertices.shape[0]
        if self.simplices.ndim != 2 or self.simplices.shape[1] != n + 1:
            raise DomainError(f"simplices must be (M, {n + 1}), got {self.simplices.shape}")
        if self.simplices.size and (self.simplices.min() < 0 or self.simplices.max() >= nv):
            raise DomainError("simplex vertex index out of range")
        if self.vertex_sqrt.shape != (nv, n, n):
            raise DomainError(
                f"vertex matrices must be ({nv}, {n}, {n}), got {self.vertex_sqrt.shape}")
        if self.simplices.shape[0] == 0:
            raise DomainError("mesh has no simplices")

        if not smallmat.is_symmetric(self.vertex_sqrt):
            raise NotSpdError("a vertex matrix is not exactly symmetric")
        lam = smallmat.sym_min_eigvalue(self.vertex_sqrt)
        if np.any(lam <= 0.0):
            j = int(np.argmin(lam))
            raise NotSpdError(
                f"vertex {j} matrix is not positive-definite"
                f" (smallest eigenvalue {float(lam[j]):.6g})")

        self.lower = self.vertices.min(axis=0)
        self.upper = self.vertices.max(axis=0)
        scale = float(np.linalg.norm(self.upper - self.lower))
        if scale <= 0.0:
            raise DomainError("mesh vertices are degenerate (zero bounding box)")

        corners = self.vertices[self.simplices]               # (ns, n+1, n)
        edges = corners[:, 1:, :] - corners[:, :1, :]         # (ns, n, n) rows = edges
        # Columns of the affine map are the edge vectors.
        self._edge_mat = np.swapaxes(edges, -1, -2)
        det = np.linalg.det(self._edge_mat)
        volume = np.abs(det) / _FACTORIAL[n]
        floor = 1e-12 * scale**n
        if np.any(volume <= floor):
            i = int(np.argmin(volume))
            raise DegenerateMeshError(
                f"simplex {i} is degenerate (volume {float(volume[i]):.6g})")
        self._edge_inv = np.linalg.inv(self._edge_mat)        # (ns, n, n)

        # Barycentric weight gradients: rows j = 1..n of edge_inv, row 0 closes to zero sum.
        grad_w = np.empty((self.num_simplices, n + 1, n))
        grad_w[:, 1:, :] = self._edge_inv
        grad_w[:, 0, :] = -self._edge_inv.sum(axis=1)
        # gradients[i, k] = d/dx_k of the interpolated matrix inside simplex i.
        m_per_simplex = self.vertex_sqrt[self.simplices]      # (ns, n+1, n, n)
        self.gradients = np.einsum("sjk,sjab->skab", grad_w, m_per_simplex)
        self.gradients.flags.writeable = False

        for arr in (self.vertices, self.simplices, self.vertex_sqrt):
            arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_simplices(self) -> int:
        return self.simplices.shape[0]

    def vertex_matrix(self, j: int) -> SpdMatrix:
        return SpdMatrix(self.vertex_sqrt[j])

    def barycentric(self, simplex: int, points: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of (N, n) points in one simplex, shape (N, n+1)."""
        pts = np.atleast_2d(points)
        v0 = self.vertices[self.simplices[simplex, 0]]
        w_rest = (self._edge_inv[simplex] @ (pts - v0).T).T
        w0 = 1.0 - w_rest.sum(axis=1)
        return np.concatenate([w0[:, None], w_rest], axis=1)

    def locate_many(self, points, tol: float = 1e-12):
        """Containing simplex per point (lowest index wins) and barycentric weights.

        Points outside every simplex get index -1.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.dim
        idx = np.full(len(pts), -1, dtype=int)
        weights = np.zeros((len(pts), n + 1))
        remaining = np.arange(len(pts))
        corners = self.vertices[self.simplices]
        los = corners.min(axis=1)
        his = corners.max(axis=1)
        pad = tol * max(1.0, float(np.linalg.norm(self.upper - self.lower)))
        for s in range(self.num_simplices):
            if remaining.size == 0:
                break
            sub = pts[remaining]
            box = np.all((sub >= los[s] - pad) & (sub <= his[s] + pad), axis=1)
            if not np.any(box):
                continue
            cand = remaining[box]
            bary = self.barycentric(s, pts[cand])
            inside = np.all(bary >= -tol, axis=1)
            hit = cand[inside]
            if hit.size:
                idx[hit] = s
                weights[hit] = np.clip(bary[inside], 0.0, None)
                remaining = np.setdiff1d(remaining, hit, assume_unique=True)
        row_sum = weights.sum(axis=1, keepdims=True)
        good = idx >= 0
        if np.any(good):
            weights[good] /= row_sum[good]
        return idx, weights

    def locate(self, point, tol: float = 1e-12):
        p = np.asarray(point, dtype=float)
        idx, weights = self.locate_many(p[None], tol=tol)
        if idx[0] < 0:
            # Name the simplex that came closest to containing the point.
            best, best_margin = 0, -np.inf
            for s in range(self.num_simplices):
                margin = float(self.barycentric(s, p[None]).min())
                if margin > best_margin:
                    best, best_margin = s, margin
            raise DomainError(
                f"point {p.tolist()} lies outside the complex"
                f" (nearest simplex {best})")
        return int(idx[0]), weights[0]

    def interpolate_many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx, weights = self.locate_many(pts)
        if np.any(idx < 0):
            bad = pts[idx < 0][0]
            raise DomainError(f"point {bad.tolist()} lies outside the complex")
        stacked = self.vertex_sqrt[self.simplices[idx]]       # (N, n+1, n, n)
        return np.einsum("pj,pjab->pab", weights, stacked)

    def interpolate(self, point) -> SpdMatrix:
        simplex, weights = self.locate(point)
        stacked = self.vertex_sqrt[self.simplices[simplex]]
        m = np.einsum("j,jab->ab", weights, stacked)
        return SpdMatrix(0.5 * (m + m.T))

    def gradient(self, simplex: int, direction) -> np.ndarray:
        """Directional derivative of the field inside one simplex (linear in direction)."""
        r = np.asarray(direction, dtype=float)
        return np.einsum("k,kab->ab", r, self.gradients[simplex])

    def as_field(self) -> MetricField:
        return MetricField.from_mesh(self)


def interpolate_metric_sqrt(mesh: SimplicialMetricMesh, point) -> SpdMatrix:
    """Barycentric interpolation of the vertex matrices at one point."""
    return mesh.interpolate(point)


def directional_derivative(field: MetricField, point, direction,
                           step_scale: float = 1e-5) -> np.ndarray:
    """Directional derivative of the square-root field at a point.

    The direction must be a unit vector. Piecewise-linear fields return the
    exact per-simplex value and refuse points on simplex faces; analytic
    fields use a central finite difference with step step_scale * diameter.
    """
    p = field.require_inside(point)
    r = np.asarray(direction, dtype=float)
    if abs(float(np.linalg.norm(r)) - 1.0) > 1e-9:
        raise DomainError("direction must be a unit vector")

    if field.mesh is not None:
        simplex, weights = field.mesh.locate(p)
        if float(weights.min()) < 1e-12:
            raise DomainError(
                "point lies on a simplex face; evaluate per simplex via"
                " SimplicialMetricMesh.gradient")
        return field.mesh.gradient(simplex, r)

    h = step_scale * field.diameter
    hi, lo = p + h * r, p - h * r
    if not (field.contains(hi[None])[0] and field.contains(lo[None])[0]):
        raise DomainError("point is too close to the boundary for a central difference")
    m = field.sqrt_many(np.stack([hi, lo]))
    return (m[0] - m[1]) / (2.0 * h)


# -- mesh file format --------------------------------------------------------

def _parse_floats(tokens, count, lineno, what):
    if len(tokens) != count:
        raise FormatError(f"expected {count} numbers for {what}, got {len(tokens)}", lineno)
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise FormatError(f"non-numeric token in {what}", lineno)


def load_mesh(path) -> SimplicialMetricMesh:
    """Read a mesh + metric file (header 'avdmesh', 'v' and 's' records)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()

    header = None
    verts, mats, simplices = [], [], []
    dim = nv = ns = 0
    for lineno, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if header is None:
            if tokens[0] != "avdmesh":
                raise FormatError(f"expected 'avdmesh' header, got {tokens[0]!r}", lineno)
            if len(tokens) != 4:
                raise FormatError("header must be 'avdmesh <n> <num_vertices> <num_simplices>'",
                                  lineno)
            try:
                dim, nv, ns = int(tokens[1]), int(tokens[2]), int(tokens[3])
            except ValueError:
                raise FormatError("non-integer header field", lineno)
            if dim not in (2, 3):
                raise FormatError(f"dimension must be 2 or 3, got {dim}", lineno)
            header = tokens
            continue
        tag = tokens[0]
        if tag == "v":
            tri = dim * (dim + 1) // 2
            values = _parse_floats(tokens[1:], dim + tri, lineno, "vertex record")
            verts.append(values[:dim])
            try:
                mats.append(SpdMatrix.from_upper(dim, values[dim:]).array)
            except NotSpdError as exc:
                raise FormatError(str(exc), lineno)
        elif tag == "s":
            if len(tokens) != dim + 2:
                raise FormatError(f"expected {dim + 1} vertex indices", lineno)
            try:
                simplices.append([int(t) for t in tokens[1:]])
            except ValueError:
                raise FormatError("non-integer simplex index", lineno)
        else:
            raise FormatError(f"unknown record tag {tag!r}", lineno)

    if header is None:
        raise FormatError("empty mesh file", 1)
    if len(verts) != nv:
        raise FormatError(f"header declares {nv} vertices, file has {len(verts)}")
    if len(simplices) != ns:
        raise FormatError(f"header declares {ns} simplices, file has {len(simplices)}")
    return SimplicialMetricMesh(np.array(verts), np.array(simplices), np.stack(mats))


def save_mesh(mesh: SimplicialMetricMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"avdmesh {mesh.dim} {mesh.num_vertices} {mesh.num_simplices}\n")
        for j in range(mesh.num_vertices):
            coords = " ".join(repr(float(c)) for c in mesh.vertices[j])
            tri = " ".join(repr(v) for v in mesh.vertex_matrix(j).upper_triangle())
            fh.write(f"v {coords} {tri}\n")
        for s in range(mesh.num_simplices):
            fh.write("s " + " ".join(str(int(i)) for i in mesh.simplices[s]) + "\n")
