"""Uniform tensor grids, masked domains, scalar fields and their calculus.

Fields are node-centered samples on a uniform grid.  A masked field models a
zero-trace function on the masked domain by zero extension: values vanish on
the mask's boundary layer and outside it, and all stencils see plain zeros
beyond the grid.  Unmasked fields use second-order one-sided differences at
the grid edges instead.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridError, MaskError

DEFAULT_DIM_CAP = 4
DEFAULT_NODE_CAP = 2**27


def _as_tuple(x, n, cast):
    if np.isscalar(x):
        return (cast(x),) * n
    t = tuple(cast(v) for v in x)
    if len(t) != n:
        raise GridError(f"expected {n} per-axis entries, got {len(t)}")
    return t


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centered grid: node k along axis i sits at origin[i] + k*spacing[i]."""

    dim: int
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __init__(self, dim, shape, spacing, origin=None, *,
                 dim_cap=DEFAULT_DIM_CAP, node_cap=DEFAULT_NODE_CAP):
        dim = int(dim)
        if dim < 2:
            raise GridError(f"dim must be >= 2, got {dim}")
        if dim > dim_cap:
            raise GridError(f"dim {dim} exceeds cap {dim_cap}")
        shape = _as_tuple(shape, dim, int)
        spacing = _as_tuple(spacing, dim, float)
        if origin is None:
            origin = (0.0,) * dim
        origin = _as_tuple(origin, dim, float)
        if any(s < 3 for s in shape):
            raise GridError(f"every axis needs >= 3 nodes, got {shape}")
        if any(h <= 0 for h in spacing):
            raise GridError(f"spacings must be positive, got {spacing}")
        if math.prod(shape) > node_cap:
            raise GridError(f"node count {math.prod(shape)} exceeds cap {node_cap}")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, dim, shape, halfwidth, **kw):
        """Grid whose nodes span [-halfwidth, halfwidth] per axis, centered at 0."""
        shape = _as_tuple(shape, dim, int)
        hw = _as_tuple(halfwidth, dim, float)
        spacing = tuple(2 * w / (s - 1) for w, s in zip(hw, shape))
        origin = tuple(-w for w in hw)
        return cls(dim, shape, spacing, origin, **kw)

    @property
    def n_nodes(self) -> int:
        return math.prod(self.shape)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(i) for i in range(self.dim)]

    def meshgrid(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin)
        hi = lo + (np.asarray(self.shape) - 1) * np.asarray(self.spacing)
        return lo, hi

    def same_geometry(self, other: "GridSpec") -> bool:
        return (self.shape == other.shape and
                np.allclose(self.spacing, other.spacing) and
                np.allclose(self.origin, other.origin))


@dataclass(frozen=True)
class AffineMap:
    """Affine change of variables x -> matrix @ x + translation.

    Carries any invertible matrix; helpers that need a volume-preserving
    (unimodular) element call :meth:`require_unimodular`.
    """

    matrix: np.ndarray
    translation: np.ndarray

    def __init__(self, matrix, translation=None):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got shape {m.shape}")
        n = m.shape[0]
        t = np.zeros(n) if translation is None else np.array(translation, dtype=float)
        if t.shape != (n,):
            raise ValueError(f"translation must have shape ({n},)")
        d = float(np.linalg.det(m))
        if d == 0.0 or not np.isfinite(d):
            raise ValueError("matrix is not invertible")
        m.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def require_unimodular(self, tol: float = 1e-12) -> "AffineMap":
        if abs(self.det - 1.0) > tol:
            raise ValueError(f"|det - 1| = {abs(self.det - 1.0):.3e} exceeds {tol}")
        return self

    def inverse(self) -> "AffineMap":
        minv = np.linalg.inv(self.matrix)
        return AffineMap(minv, -minv @ self.translation)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return points @ self.matrix.T + self.translation

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(np.eye(dim))

    @classmethod
    def translation_by(cls, shift) -> "AffineMap":
        shift = np.asarray(shift, dtype=float)
        return cls(np.eye(len(shift)), shift)


# alias used where a group element (det = 1) is meant
UnimodularTransform = AffineMap


class DomainMask:
    """Boolean inside/outside flags on a grid; the discrete stand-in for a domain.

    Boundary nodes are inside nodes with an outside (or off-grid) face
    neighbor; interior nodes are inside and not boundary.  Zero-trace fields
    are pinned to zero on boundary nodes.
    """

    def __init__(self, grid: GridSpec, inside: np.ndarray):
        inside = np.asarray(inside, dtype=bool)
        if inside.shape != grid.shape:
            raise MaskError(f"inside flags shape {inside.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.inside = inside
        self.inside.setflags(write=False)
        self._boundary = None
        if not inside.any():
            raise MaskError("mask has no inside nodes")
        if not self.interior.any():
            raise MaskError("mask has no interior nodes")

    @property
    def boundary(self) -> np.ndarray:
        if self._boundary is None:
            # pad with "outside" so off-grid neighbors count as outside
            padded = np.pad(self.inside, 1, constant_values=False)
            dim = self.grid.dim
            core = [slice(1, -1)] * dim
            all_nb_inside = np.ones_like(self.inside)
            for ax in range(dim):
                up = list(core); up[ax] = slice(2, None)
                dn = list(core); dn[ax] = slice(None, -2)
                all_nb_inside &= padded[tuple(up)] & padded[tuple(dn)]
            bnd = self.inside & ~all_nb_inside
            bnd.setflags(write=False)
            self._boundary = bnd
        return self._boundary

    @property
    def interior(self) -> np.ndarray:
        return self.inside & ~self.boundary

    @property
    def volume(self) -> float:
        return float(self.inside.sum()) * self.grid.cell_volume

    @classmethod
    def full(cls, grid: GridSpec) -> "DomainMask":
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def from_predicate(cls, grid: GridSpec, pred: Callable[[np.ndarray], np.ndarray]) -> "DomainMask":
        pts = np.stack([x.ravel() for x in grid.meshgrid()], axis=1)
        inside = np.asarray(pred(pts), dtype=bool).reshape(grid.shape)
        return cls(grid, inside)

    @classmethod
    def box(cls, grid: GridSpec, lo, hi) -> "DomainMask":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return cls.from_predicate(grid, lambda p: np.all((p > lo) & (p < hi), axis=1))

    @classmethod
    def ball(cls, grid: GridSpec, center, radius: float) -> "DomainMask":
        center = np.asarray(center, dtype=float)
        return cls.from_predicate(grid, lambda p: np.sum((p - center) ** 2, axis=1) < radius**2)

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Nearest-node membership test for an (M, N) array of points."""
        lo = np.asarray(self.grid.origin)
        h = np.asarray(self.grid.spacing)
        idx = np.rint((points - lo) / h).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < np.asarray(self.grid.shape)), axis=1)
        out = np.zeros(len(points), dtype=bool)
        if ok.any():
            flat = np.ravel_multi_index(tuple(idx[ok].T), self.grid.shape)
            out[ok] = self.inside.ravel()[flat]
        return out


class ScalarField:
    """Real values per grid node, optionally restricted to a masked domain.

    Masked fields are projected onto the zero-trace subspace at construction:
    values outside the mask interior are set to zero.  Instances are
    immutable; operations return new fields.
    """

    def __init__(self, grid: GridSpec, values: np.ndarray, mask: DomainMask | None = None):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise GridError(f"values shape {values.shape} != grid shape {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if mask is not None:
            if mask.grid is not grid and not mask.grid.same_geometry(grid):
                raise MaskError("mask grid does not match field grid")
            values[~mask.interior] = 0.0
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.mask = mask

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[..., np.ndarray],
                      mask: DomainMask | None = None) -> "ScalarField":
        return cls(grid, fn(*grid.meshgrid()), mask)

    @classmethod
    def zeros(cls, grid: GridSpec, mask: DomainMask | None = None) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), mask)

    @property
    def region(self) -> np.ndarray | None:
        """Quadrature region: inside flags for masked fields, None for full grid."""
        return self.mask.inside if self.mask is not None else None


def _check_differentiable(grid: GridSpec):
    if any(s < 3 for s in grid.shape):
        raise GridError("stencils need >= 3 nodes per axis")


def _pad_zero(values: np.ndarray) -> np.ndarray:
    return np.pad(values, 1)


def _central_diff_padded(vp: np.ndarray, ax: int, h: float) -> np.ndarray:
    """Central difference of a zero-padded array, returned on the core region."""
    dim = vp.ndim
    core = [slice(1, -1)] * dim
    up = list(core)
    dn = list(core)
    up[ax] = slice(2, None)
    dn[ax] = slice(None, -2)
    return (vp[tuple(up)] - vp[tuple(dn)]) / (2.0 * h)


def _gradient_axis_edge2(values: np.ndarray, ax: int, h: float) -> np.ndarray:
    return np.gradient(values, h, axis=ax, edge_order=2)


def gradient(u: ScalarField) -> np.ndarray:
    """First derivatives per node, stacked on the last axis.

    Masked fields use central differences with zero extension; unmasked
    fields use central differences inside and second-order one-sided
    differences at the grid edges.
    """
    _check_differentiable(u.grid)
    n = u.grid.dim
    out = np.empty(u.grid.shape + (n,))
    if u.mask is not None:
        vp = _pad_zero(u.values)
        for ax in range(n):
            out[..., ax] = _central_diff_padded(vp, ax, u.grid.spacing[ax])
    else:
        for ax in range(n):
            out[..., ax] = _gradient_axis_edge2(u.values, ax, u.grid.spacing[ax])
    return out


def _second_diff_tight(values: np.ndarray, ax: int, h: float, padded: bool) -> np.ndarray:
    dim = values.ndim
    if padded:
        core = [slice(1, -1)] * dim
        up = list(core); up[ax] = slice(2, None)
        dn = list(core); dn[ax] = slice(None, -2)
        return (values[tuple(up)] - 2.0 * values[tuple(core)] + values[tuple(dn)]) / h**2
    # unmasked: tight central inside, 4-point one-sided at the two edge layers
    v = values
    sl = lambda a, b=None: tuple(slice(a, b) if k == ax else slice(None) for k in range(dim))
    idx = lambda i: tuple(i if k == ax else slice(None) for k in range(dim))
    out = np.empty_like(v)
    out[sl(1, -1)] = (v[sl(2, None)] - 2.0 * v[sl(1, -1)] + v[sl(None, -2)]) / h**2
    if v.shape[ax] >= 4:
        out[idx(0)] = (2 * v[idx(0)] - 5 * v[idx(1)] + 4 * v[idx(2)] - v[idx(3)]) / h**2
        out[idx(-1)] = (2 * v[idx(-1)] - 5 * v[idx(-2)] + 4 * v[idx(-3)] - v[idx(-4)]) / h**2
    else:
        out[idx(0)] = out[idx(1)]
        out[idx(-1)] = out[idx(-2)]
    return out


def hessian(u: ScalarField) -> np.ndarray:
    """Second derivatives per node, shape (*grid.shape, N, N), symmetric.

    Diagonal entries use the tight three-point second difference; mixed
    entries use the symmetric four-point cross stencil (composition of
    central first differences).
    """
    _check_differentiable(u.grid)
    n = u.grid.dim
    h = u.grid.spacing
    out = np.empty(u.grid.shape + (n, n))
    if u.mask is not None:
        vp = _pad_zero(u.values)
        firsts = [_pad_zero(_central_diff_padded(vp, a, h[a])) for a in range(n)]
        for i in range(n):
            out[..., i, i] = _second_diff_tight(vp, i, h[i], padded=True)
            for j in range(i + 1, n):
                mij = _central_diff_padded(firsts[j], i, h[i])
                out[..., i, j] = mij
                out[..., j, i] = mij
    else:
        firsts = [_gradient_axis_edge2(u.values, a, h[a]) for a in range(n)]
        for i in range(n):
            out[..., i, i] = _second_diff_tight(u.values, i, h[i], padded=False)
            for j in range(i + 1, n):
                mij = _gradient_axis_edge2(firsts[j], i, h[i])
                mji = _gradient_axis_edge2(firsts[i], j, h[j])
                sym = 0.5 * (mij + mji)
                out[..., i, j] = sym
                out[..., j, i] = sym
    return out


def integrate(u: ScalarField) -> float:
    """Node-weighted quadrature with weight prod(spacing), mask-restricted."""
    if u.mask is not None:
        s = float(np.sum(u.values, where=u.mask.inside))
    else:
        s = float(np.sum(u.values))
    return s * u.grid.cell_volume


def integrate_values(values: np.ndarray, grid: GridSpec,
                     region: np.ndarray | None = None) -> float:
    if region is not None:
        s = float(np.sum(values, where=region))
    else:
        s = float(np.sum(values))
    return s * grid.cell_volume


def lp_norm(u: ScalarField, p: float) -> float:
    """(integral of |u|^p)^(1/p)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mass = integrate_values(np.abs(u.values) ** p, u.grid, u.region)
    return mass ** (1.0 / p)


def resample(u: ScalarField, amap: AffineMap, target: GridSpec | None = None) -> ScalarField:
    """Pull-back u along an affine map: result(x) = u(matrix @ x + translation).

    Values are multilinear interpolations of the source nodes and zero where
    the mapped point leaves the source grid.  The result is unmasked (a
    transformed mask is generally not grid-aligned).
    """
    from . import backend

    if target is None:
        target = u.grid
    if amap.dim != u.grid.dim or target.dim != u.grid.dim:
        raise ValueError("dimension mismatch between field, map and target grid")
    vals = backend.interp_affine(u.values, amap.matrix, amap.translation,
                                 np.asarray(u.grid.origin), np.asarray(u.grid.spacing),
                                 target)
    return ScalarField(target, vals)


def dyadic_rescale(u: ScalarField, j: int, y, target: GridSpec | None = None) -> ScalarField:
    """Zoom u to dyadic level j about y: result(x) = 2^((N-2)j/2) * u(2^j (x - y)).

    The prefactor keeps the homogeneous H^1 norm invariant.
    """
    n = u.grid.dim
    y = np.asarray(y, dtype=float)
    try:
        scale = 2.0 ** j
        pref = 2.0 ** (0.5 * (n - 2) * j)
    except OverflowError:
        raise ValueError(f"dyadic level {j} under/overflows") from None
    if not (np.isfinite(scale) and np.isfinite(pref)) or scale == 0.0:
        raise ValueError(f"dyadic level {j} under/overflows")
    amap = AffineMap(scale * np.eye(n), -scale * y)
    out = resample(u, amap, target)
    return ScalarField(out.grid, pref * out.values)


@dataclass
class LiminfEstimate:
    measure: float
    std_error: float
    window_lo: np.ndarray
    window_hi: np.ndarray
    n_samples: int
    prefix: int
    n_maps: int
    window_empty: bool = False

    @property
    def window_volume(self) -> float:
        if self.window_empty:
            return 0.0
        return float(np.prod(self.window_hi - self.window_lo))


def _image_bbox(mask: DomainMask, amap: AffineMap) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box of {x : amap(x) in bbox(mask)}."""
    lo, hi = mask.grid.bounds()
    inv = amap.inverse()
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    img = inv(corners)
    return img.min(axis=0), img.max(axis=0)


def liminf_measure_estimate(mask: DomainMask, maps: Sequence[AffineMap],
                            prefix: int, samples: int, seed: int = 0) -> LiminfEstimate:
    """Monte-Carlo measure of the intersection of pulled-back domain copies.

    A point x belongs to the k-th copy when maps[k](x) lands inside the mask;
    the estimate covers the intersection over k = prefix..len(maps) (1-based)
    and stands in for the tail of a lim-inf of transformed domains.  The
    sampling window is the intersection of the per-copy bounding boxes (it
    contains the set being measured); window and standard error are reported.
    """
    if not 1 <= prefix <= len(maps):
        raise ValueError(f"prefix must be in [1, {len(maps)}], got {prefix}")
    if samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {samples}")
    active = list(maps)[prefix - 1:]
    lo = None
    hi = None
    for m in active:
        blo, bhi = _image_bbox(mask, m)
        lo = blo if lo is None else np.maximum(lo, blo)
        hi = bhi if hi is None else np.minimum(hi, bhi)
    if np.any(hi <= lo):
        return LiminfEstimate(0.0, 0.0, lo, hi, 0, prefix, len(maps), window_empty=True)
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((samples, mask.grid.dim)) * (hi - lo)
    member = np.ones(samples, dtype=bool)
    for m in active:
        member &= mask.contains_points(m(pts))
        if not member.any():
            break
    vol = float(np.prod(hi - lo))
    frac = member.mean()
    se = vol * math.sqrt(max(frac * (1.0 - frac), 0.0) / samples)
    return LiminfEstimate(vol * frac, se, lo, hi, samples, prefix, len(maps))
