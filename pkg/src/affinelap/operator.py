"""The affine Laplacian, its variational check, and the inner linear solver.

The operator applies det(A)^(1/N) sum_ij (A^-1)_ij d_i d_j with the field's
own Gram matrix A; it is the derivative of -E2/2, nonlocal only through A.
The constant-coefficient solve is the primitive used by all outer solvers:
A is frozen per iterate, which makes each inner problem linear and CG-able.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend, grids
from .energy import GramMatrix, affine_energy, gram_matrix
from .errors import ConvergenceError, DegenerateGramError, PreconditionError
from .grids import DomainMask, ScalarField
from .smallalg import jacobi_eigh, spd_inverse_and_det


def scaled_inverse(m: GramMatrix | np.ndarray) -> np.ndarray:
    """det(M)^(1/N) * M^-1, the coefficient matrix of the operator."""
    entries = m.entries if isinstance(m, GramMatrix) else np.asarray(m, dtype=float)
    eig = jacobi_eigh(entries)
    w, _ = eig
    if np.any(w <= 0):
        raise ValueError("coefficient matrix must be positive definite")
    inv, det = spd_inverse_and_det(entries, eig)
    n = entries.shape[0]
    return det ** (1.0 / n) * inv


class EllipticStencil:
    """Constant-coefficient operator sum_ij C_ij d_i d_j on a masked grid.

    C is SPD; the discrete operator is symmetric and negative definite on
    the zero-boundary subspace, so CG applies to its negation.
    """

    def __init__(self, coefficient: np.ndarray, mask: DomainMask):
        coefficient = np.asarray(coefficient, dtype=float)
        w, _ = jacobi_eigh(coefficient)
        if np.any(w <= 0):
            raise ValueError("stencil coefficient matrix must be SPD")
        self.coefficient = coefficient
        self.mask = mask
        self.interior = mask.interior

    def apply(self, values: np.ndarray) -> np.ndarray:
        """L v on the full grid, v implicitly zero outside the interior."""
        v = np.where(self.interior, values, 0.0)
        out = backend.apply_quadratic_stencil(v, self.coefficient, self.mask.grid.spacing)
        out[~self.interior] = 0.0
        return out

    def weights_table(self) -> list[tuple[tuple[int, ...], float]]:
        """Stencil coefficients per neighbor offset (debug aid)."""
        n = self.mask.grid.dim
        h = self.mask.grid.spacing
        table: dict[tuple[int, ...], float] = {}
        zero = (0,) * n
        for i in range(n):
            e = [0] * n
            e[i] = 1
            w = self.coefficient[i, i] / h[i] ** 2
            table[tuple(e)] = table.get(tuple(e), 0.0) + w
            table[tuple(-x for x in e)] = table.get(tuple(-x for x in e), 0.0) + w
            table[zero] = table.get(zero, 0.0) - 2.0 * w
        for i in range(n):
            for j in range(i + 1, n):
                w = 2.0 * self.coefficient[i, j] / (4.0 * h[i] * h[j])
                for si, sj, sgn in ((1, 1, 1), (-1, -1, 1), (1, -1, -1), (-1, 1, -1)):
                    off = [0] * n
                    off[i] = si
                    off[j] = sj
                    table[tuple(off)] = table.get(tuple(off), 0.0) + sgn * w
        return sorted(table.items())


def stencil_gram(u: ScalarField) -> GramMatrix:
    """Gram matrix in the quadrature the elliptic stencil induces.

    Diagonal entries use forward differences (|delta_i u|^2 equals
    <u, -d_i^2 u> for the tight three-point stencil with zero extension),
    off-diagonal entries the central-difference products matching the
    four-point cross.  With this matrix, <u, -L_M u> equals
    det(M)^(1/N) sum_ij (M^-1)_ij A~_ij(u) exactly for every SPD M, which
    makes the solvers' majorization, inner solves and Euler-Lagrange
    residuals one consistent discrete system.  Differs from gram_matrix by
    the discretization error.
    """
    n = u.grid.dim
    h = u.grid.spacing
    vol = u.grid.cell_volume
    vp = np.pad(u.values, 1)
    a = np.empty((n, n))
    core = [slice(1, -1)] * n
    centrals = []
    for i in range(n):
        d = np.diff(vp, axis=i) / h[i]
        a[i, i] = float(np.sum(d * d)) * vol
        up = list(core); up[i] = slice(2, None)
        dn = list(core); dn[i] = slice(None, -2)
        centrals.append((vp[tuple(up)] - vp[tuple(dn)]) / (2.0 * h[i]))
    for i in range(n):
        for j in range(i + 1, n):
            a[i, j] = float(np.sum(centrals[i] * centrals[j])) * vol
            a[j, i] = a[i, j]
    return GramMatrix(a)


def affine_laplacian(u: ScalarField) -> ScalarField:
    """det(A[u])^(1/N) sum_ij (A^-1[u])_ij d_i d_j u as an unmasked field.

    A is computed once from u (the operator is nonlocal only through it);
    the contraction uses the hessian stencils, so masked fields see zero
    extension and unmasked fields one-sided edge differences.
    """
    a = gram_matrix(u)
    if a.degenerate:
        raise DegenerateGramError("affine Laplacian undefined: singular Gram matrix")
    coeff = scaled_inverse(a)
    vals = np.einsum("...ij,ij->...", grids.hessian(u), coeff)
    return ScalarField(u.grid, vals)


def apply_anisotropic(u: ScalarField, coeff: np.ndarray) -> np.ndarray:
    """sum_ij coeff_ij d_i d_j u with zero extension (raw array)."""
    return backend.apply_quadratic_stencil(u.values, coeff, u.grid.spacing)


@dataclass
class FrechetCheck:
    fd: float
    pairing: float
    rel_err: float


def _dot(a: np.ndarray, b: np.ndarray, grid, region=None) -> float:
    prod = a * b
    return grids.integrate_values(prod, grid, region)


def frechet_check(u: ScalarField, v: ScalarField, eps: float = 1e-5) -> FrechetCheck:
    """Compare a centered difference of -E2/2 against the operator pairing.

    fd      = [-E2(u + eps v)/2 + E2(u - eps v)/2] / (2 eps)
    pairing = integral of affine_laplacian(u) * v, evaluated in its
              integrated-by-parts form -sum_ij C_ij <d_i u, d_j v> so the
              identity is exact at the discrete level (the strong form
              differs by an O(h^2) summation-by-parts defect).
    """
    if not 1e-8 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-8, 1e-2], got {eps}")
    if v.grid is not u.grid and not v.grid.same_geometry(u.grid):
        raise ValueError("u and v must share a grid")
    if v.mask is None:
        edge = np.ones(v.grid.shape, dtype=bool)
        edge[tuple(slice(1, -1) for _ in range(v.grid.dim))] = False
        if np.abs(v.values[edge]).max() > 0.0:
            raise PreconditionError("perturbation must vanish at the grid edge")
    a = gram_matrix(u)
    if a.degenerate:
        raise DegenerateGramError("Frechet check undefined: singular Gram matrix")
    ep = affine_energy(gram_matrix(u.with_values(u.values + eps * v.values)))
    em = affine_energy(gram_matrix(u.with_values(u.values - eps * v.values)))
    fd = (-0.5 * ep + 0.5 * em) / (2.0 * eps)
    coeff = scaled_inverse(a)
    gu = grids.gradient(u)
    gv = grids.gradient(v)
    n = u.grid.dim
    pairing = 0.0
    for i in range(n):
        for j in range(n):
            pairing -= coeff[i, j] * _dot(gu[..., i], gv[..., j], u.grid, u.region)
    denom = max(abs(fd), abs(pairing))
    rel = abs(fd - pairing) / denom if denom > 0 else 0.0
    return FrechetCheck(fd=fd, pairing=pairing, rel_err=rel)


@dataclass
class CgResult:
    field: ScalarField
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)

    def trace_rows(self) -> list[tuple[int, float, float]]:
        return [(k, r, e) for k, (r, e) in enumerate(zip(self.residuals, self.energies))]


def constant_coeff_solve(m: GramMatrix | np.ndarray, f: ScalarField, mask: DomainMask,
                         tol: float = 1e-10, max_iter: int | None = None,
                         diagonal: np.ndarray | None = None,
                         collect_trace: bool = False) -> CgResult:
    """Solve det(M)^(1/N) sum_ij (M^-1)_ij d_i d_j u = -f, u = 0 on the boundary.

    Conjugate gradients on the (negated, SPD) stencil; stops when the
    residual 2-norm falls below tol * |f|_2.  An optional nonnegative-ish
    diagonal term turns the system into (-L + diag) u = f, which the
    penalty solver uses for the potential term.
    """
    entries = m.entries if isinstance(m, GramMatrix) else np.asarray(m, dtype=float)
    coeff = scaled_inverse(entries)
    stencil = EllipticStencil(coeff, mask)
    interior = mask.interior
    b = np.where(interior, f.values, 0.0)
    if diagonal is not None and diagonal.shape != b.shape:
        raise ValueError("diagonal term must match the grid shape")

    def op(x: np.ndarray) -> np.ndarray:
        y = -stencil.apply(x)
        if diagonal is not None:
            y = y + np.where(interior, diagonal * x, 0.0)
        return y

    w, _ = jacobi_eigh(entries)
    cond = float(w.max() / w.min())
    if max_iter is None:
        max_iter = max(200, int(10.0 * math.sqrt(interior.sum()) * math.sqrt(cond)))

    bnorm = math.sqrt(float(np.sum(b * b)))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return CgResult(ScalarField(mask.grid, x, mask), 0, True)
    r = b.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    result = CgResult(ScalarField(mask.grid, x, mask), 0, False)
    for k in range(1, max_iter + 1):
        ap = op(p)
        alpha = rs / float(np.sum(p * ap))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.sum(r * r))
        if collect_trace:
            result.residuals.append(math.sqrt(rs_new))
            result.energies.append(-0.5 * float(np.sum(x * (b + r))))
        if math.sqrt(rs_new) <= tol * bnorm:
            result.iterations = k
            result.converged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    else:
        raise ConvergenceError(
            f"CG did not reach tol={tol:g} within {max_iter} iterations "
            f"(residual {math.sqrt(rs):.3e}, |f| {bnorm:.3e})")
    result.field = ScalarField(mask.grid, x, mask)
    return result


def operator_residual(u: ScalarField, f: ScalarField, mask: DomainMask) -> float:
    """Relative interior 2-norm of affine_laplacian(u) - f."""
    lap = affine_laplacian(u)
    interior = mask.interior
    diff = np.where(interior, lap.values - f.values, 0.0)
    ref = np.where(interior, f.values, 0.0)
    refn = math.sqrt(float(np.sum(ref * ref)))
    if refn == 0.0:
        refn = 1.0
    return math.sqrt(float(np.sum(diff * diff))) / refn


@dataclass
class ComparisonReport:
    holds: bool
    n_violations: int
    max_violation: float
    data_ordered_nodes: int
    residual_1: float
    residual_2: float
    violating_nodes: np.ndarray


def comparison_check(u1: ScalarField, u2: ScalarField, f1: ScalarField, f2: ScalarField,
                     mask: DomainMask, residual_tol: float = 1e-6,
                     order_tol: float = 1e-10) -> ComparisonReport:
    """Ordering transfer for the operator: data down implies solutions up.

    Both inputs must approximately solve affine_laplacian(u_i) = f_i.  The
    fields are straightened by their own normalizing transforms and the
    node-wise implication "f1 >= f2 implies u1 <= u2" is reported, with the
    violating nodes listed rather than asserted (the discrete cross stencil
    is not an M-matrix, so coarse grids may violate it).
    """
    from .energy import normalizing_transform

    r1 = operator_residual(u1, f1, mask)
    r2 = operator_residual(u2, f2, mask)
    if r1 > residual_tol or r2 > residual_tol:
        raise PreconditionError(
            f"inputs do not solve the operator equation: residuals {r1:.3e}, {r2:.3e}")
    t1 = normalizing_transform(gram_matrix(u1)).composed
    t2 = normalizing_transform(gram_matrix(u2)).composed
    # u o T^-1 means resampling along the inverse map
    u1s = grids.resample(u1, t1.inverse())
    u2s = grids.resample(u2, t2.inverse())
    f1s = grids.resample(f1, t1.inverse())
    f2s = grids.resample(f2, t2.inverse())
    scale = max(np.abs(f1s.values).max(), np.abs(f2s.values).max(), 1e-300)
    data_ordered = f1s.values >= f2s.values - order_tol * scale
    uscale = max(np.abs(u1s.values).max(), np.abs(u2s.values).max(), 1e-300)
    sol_ordered = u1s.values <= u2s.values + order_tol * uscale
    bad = data_ordered & ~sol_ordered
    viol = np.argwhere(bad)
    maxv = float(np.max(u1s.values[bad] - u2s.values[bad])) if bad.any() else 0.0
    return ComparisonReport(holds=not bad.any(), n_violations=int(bad.sum()),
                            max_violation=maxv, data_ordered_nodes=int(data_ordered.sum()),
                            residual_1=r1, residual_2=r2, violating_nodes=viol)
