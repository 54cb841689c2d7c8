"""The affine-invariant Dirichlet energy and its companions.

For a field u the Gram matrix A[u] collects the integrated products of first
partials, A_ij = int d_i u d_j u.  Everything else here is a function of A:

* affine energy       E2 = N det(A)^(1/N),
* affine Sobolev J2   J2 = omega_N^(-1/N) det(A)^(1/(2N)),
* the volume-preserving change of variables T with T^T A T = det(A)^(1/N) I.

E2 equals the minimum of the plain Dirichlet energy over unimodular changes
of variables; the sampled-minimum sweep checks that numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grids
from .errors import DegenerateGramError
from .grids import AffineMap, GridSpec, ScalarField
from .smallalg import (jacobi_eigh, random_unimodular, sphere_directions,
                       spd_inverse_and_det, unit_sphere_area)

# det(A) <= DEGENERACY_FLOOR * (tr A / N)^N counts as singular
DEGENERACY_FLOOR = 1e-12


class GramMatrix:
    """Symmetric PSD matrix of integrated first-derivative products."""

    def __init__(self, entries: np.ndarray, grad_norm_sq: float | None = None):
        a = np.array(entries, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("entries must be square")
        scale = max(np.abs(a).max(), 1.0)
        if not np.allclose(a, a.T, atol=1e-12 * scale):
            raise ValueError("entries must be symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.entries = a
        self.dim = n
        self.grad_norm_sq = float(np.trace(a)) if grad_norm_sq is None else grad_norm_sq
        self._eig = None

    @property
    def eig(self):
        if self._eig is None:
            self._eig = jacobi_eigh(self.entries)
        return self._eig

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    @property
    def det(self) -> float:
        return float(np.prod(self.eig[0]))

    @property
    def degenerate(self) -> bool:
        tr = self.trace
        if tr <= 0.0:
            return True
        return self.det <= DEGENERACY_FLOOR * (tr / self.dim) ** self.dim

    def inverse(self) -> np.ndarray:
        if self.degenerate:
            raise DegenerateGramError("Gram matrix is numerically singular")
        inv, _ = spd_inverse_and_det(self.entries, self.eig)
        return inv

    def __repr__(self):
        return f"GramMatrix(dim={self.dim}, trace={self.trace:.6g}, det={self.det:.6g})"


def gram_matrix(u: ScalarField) -> GramMatrix:
    """A_ij[u] = integral of d_i u * d_j u over the mask (or the full grid)."""
    g = grids.gradient(u)
    n = u.grid.dim
    region = u.region
    a = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            a[i, j] = grids.integrate_values(g[..., i] * g[..., j], u.grid, region)
            a[j, i] = a[i, j]
    return GramMatrix(a)


def grad_norm_sq(u: ScalarField) -> float:
    """integral of |grad u|^2 (the trace of the Gram matrix)."""
    g = grids.gradient(u)
    return grids.integrate_values(np.sum(g * g, axis=-1), u.grid, u.region)


def affine_energy(a: GramMatrix) -> float:
    """N det(A)^(1/N); zero when A is singular (the energy vanishes there)."""
    if a.degenerate:
        return 0.0
    return a.dim * a.det ** (1.0 / a.dim)


def affine_sobolev_j2(a: GramMatrix) -> float:
    """omega_N^(-1/N) det(A)^(1/(2N)); zero for singular A (degenerate case)."""
    if a.degenerate:
        return 0.0
    n = a.dim
    return unit_sphere_area(n) ** (-1.0 / n) * a.det ** (1.0 / (2 * n))


def j2_by_sphere_integral(u: ScalarField, directions: int | None = None,
                          seed: int = 0) -> float:
    """J2 straight from its definition as a sphere integral.

    Evaluates (int_{S^{N-1}} (w . A w)^(-N/2) dS_w)^(-1/N) with equal-weight
    quadrature; must agree with the closed form affine_sobolev_j2.
    """
    a = gram_matrix(u)
    if a.degenerate:
        raise DegenerateGramError("field has singular Gram matrix")
    n = a.dim
    if directions is None:
        directions = {2: 256, 3: 4000}.get(n, 200_000)
    minimum = {2: 50, 3: 200}.get(n, 1000)
    if directions < minimum:
        raise ValueError(f"need at least {minimum} directions for N={n}")
    w = sphere_directions(n, directions, seed=seed)
    quad = np.einsum("ki,ij,kj->k", w, a.entries, w)
    integral = unit_sphere_area(n) * np.mean(quad ** (-0.5 * n))
    return float(integral ** (-1.0 / n))


@dataclass
class NormalizingTransform:
    """Unimodular T with T^T A T = det(A)^(1/N) I, split as rotation * diagonal."""

    rotation: np.ndarray
    diagonal_scaling: np.ndarray
    composed: AffineMap


def normalizing_transform(a: GramMatrix) -> NormalizingTransform:
    """The volume-preserving change of variables that isotropizes A.

    T = T0 diag(det(A)^(1/2N) / sqrt(lambda_i)) with T0 orthogonal
    diagonalizing A; then T^T A T = det(A)^(1/N) I and det T = 1.
    """
    if a.degenerate:
        raise DegenerateGramError("cannot normalize a singular Gram matrix")
    n = a.dim
    off = a.entries - np.diag(np.diag(a.entries))
    if np.abs(off).max() <= 1e-14 * max(a.trace, 1e-300):
        # already diagonal: keep the identity rotation (no eigenvector shuffle)
        w, v = np.diag(a.entries).copy(), np.eye(n)
    else:
        w, v = a.eig
    if np.any(w <= 0):
        raise DegenerateGramError("Gram matrix is not positive definite")
    if np.linalg.det(v) < 0:
        v = v.copy()
        v[:, 0] = -v[:, 0]
    # geometric mean via logs to stay accurate for wide eigenvalue spreads
    g = math.exp(np.sum(np.log(w)) / (2.0 * n))
    d = g / np.sqrt(w)
    t = v @ np.diag(d)
    t /= np.linalg.det(t) ** (1.0 / n)  # pin det to 1 up to roundoff
    return NormalizingTransform(rotation=v, diagonal_scaling=d,
                                composed=AffineMap(t))


@dataclass
class SampledMinResult:
    sampled_min: float
    at_normalizer: float
    n_samples: int
    seed: int
    sampled_values: np.ndarray


def energy_via_sampled_min(u: ScalarField, n_samples: int = 200, seed: int = 0,
                           cond_cap: float = 100.0,
                           target: GridSpec | None = None) -> SampledMinResult:
    """Check E2(u) = min over unimodular T of |grad (u o T)|_2^2 by sampling.

    Draws seeded volume-preserving matrices with capped condition number,
    measures the Dirichlet energy of each resampled composition, and also
    evaluates it at the normalizing transform, where the minimum is attained.
    """
    a = gram_matrix(u)
    if a.degenerate:
        raise DegenerateGramError("field has singular Gram matrix")
    tstar = normalizing_transform(a).composed
    at_norm = grad_norm_sq(grids.resample(u, tstar, target))
    rng = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    for k in range(n_samples):
        t = AffineMap(random_unimodular(rng, u.grid.dim, cond_cap))
        vals[k] = grad_norm_sq(grids.resample(u, t, target))
    return SampledMinResult(sampled_min=float(vals.min()), at_normalizer=at_norm,
                            n_samples=n_samples, seed=seed, sampled_values=vals)


def critical_exponent(n: int) -> float:
    """2* = 2N/(N-2), the critical Sobolev exponent (N >= 3)."""
    if n < 3:
        raise ValueError("2* is only defined for N >= 3")
    return 2.0 * n / (n - 2.0)


def sobolev_ratio(u: ScalarField) -> float:
    """|u|_{2*} / J2(u); bounded above uniformly, maximized by the bubble."""
    n = u.grid.dim
    p = critical_exponent(n)
    a = gram_matrix(u)
    if a.degenerate:
        raise DegenerateGramError("field has singular Gram matrix")
    num = grids.lp_norm(u, p)
    if num == 0.0:
        raise ValueError("field is identically zero")
    return num / affine_sobolev_j2(a)
