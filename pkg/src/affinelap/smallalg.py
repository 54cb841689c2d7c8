"""Dense helpers for tiny symmetric matrices and sphere quadrature.

Dimensions here are 2..4, so a dependency-free cyclic Jacobi sweep is both
simple and accurate to near machine precision.
"""

from __future__ import annotations

import math

import numpy as np


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns).  Sweeps stop
    when the off-diagonal Frobenius mass drops below tol * ||a||_F; the
    default is machine-tight so that downstream congruence identities hold
    to 1e-10 even for badly conditioned input.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(a[offmask] ** 2)))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def spd_inverse_and_det(a: np.ndarray, eig=None):
    """(a^{-1}, det a) for symmetric positive definite a via Jacobi."""
    if eig is None:
        eig = jacobi_eigh(a)
    w, v = eig
    if np.any(w <= 0):
        raise ValueError("matrix is not positive definite")
    inv = (v / w) @ v.T
    return 0.5 * (inv + inv.T), float(np.prod(w))


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-ish random rotation with det +1 (QR with sign fix)."""
    m = rng.standard_normal((n, n))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_unimodular(rng: np.random.Generator, n: int,
                      cond_cap: float = 100.0) -> np.ndarray:
    """Random volume-preserving matrix with condition number <= cond_cap.

    Built as rotation @ diag @ rotation with log-uniform singular values
    recentred to product one, so the determinant is exactly one up to a
    final renormalization.
    """
    if cond_cap < 1.0:
        raise ValueError("cond_cap must be >= 1")
    q1 = random_orthogonal(rng, n)
    q2 = random_orthogonal(rng, n)
    half = 0.5 * math.log(cond_cap)
    e = rng.uniform(-half, half, size=n)
    e -= e.mean()
    t = q1 @ np.diag(np.exp(e)) @ q2
    d = np.linalg.det(t)  # 1 up to roundoff; renormalize so |det - 1| ~ eps
    return t / d ** (1.0 / n)


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n (2*pi for n=2, 4*pi for n=3)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def sphere_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Equal-weight quadrature directions on S^{n-1}.

    n=2: uniformly spaced angles (trapezoidal rule, spectrally accurate).
    n=3: Fibonacci spiral (quasi-uniform).
    n>=4: seeded uniform random directions.
    """
    if count < 1:
        raise ValueError("need at least one direction")
    if n == 2:
        th = 2.0 * math.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        k = np.arange(count)
        z = 1.0 - (2.0 * k + 1.0) / count
        phi = k * math.pi * (3.0 - math.sqrt(5.0))
        r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
