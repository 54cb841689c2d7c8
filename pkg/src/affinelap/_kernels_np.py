"""Vectorized numpy implementations of the hot kernels.

These are the reference implementations; the optional compiled extension in
``_stencil_core`` provides fused-loop versions of the same operations for
2D/3D.  Both sides must agree to rounding error (see tests/test_backend.py).
"""

from __future__ import annotations

import itertools

import numpy as np


def apply_quadratic_stencil(values: np.ndarray, coeff: np.ndarray,
                            spacing) -> np.ndarray:
    """Apply sum_ij coeff[i,j] * d_i d_j with zero extension beyond the array.

    Diagonal terms use the tight three-point second difference, mixed terms
    the symmetric four-point cross, so the operator is symmetric and (for
    SPD coeff, after a sign flip) positive definite on zero-boundary data.
    """
    n = values.ndim
    h = np.asarray(spacing, dtype=float)
    vp = np.pad(values, 1)
    core = [slice(1, -1)] * n
    out = np.zeros_like(values)
    for i in range(n):
        up = list(core); up[i] = slice(2, None)
        dn = list(core); dn[i] = slice(None, -2)
        out += (coeff[i, i] / h[i] ** 2) * (
            vp[tuple(up)] - 2.0 * vp[tuple(core)] + vp[tuple(dn)]
        )
    for i in range(n):
        for j in range(i + 1, n):
            pp = list(core); pp[i] = slice(2, None); pp[j] = slice(2, None)
            mm = list(core); mm[i] = slice(None, -2); mm[j] = slice(None, -2)
            pm = list(core); pm[i] = slice(2, None); pm[j] = slice(None, -2)
            mp = list(core); mp[i] = slice(None, -2); mp[j] = slice(2, None)
            cross = (vp[tuple(pp)] + vp[tuple(mm)] - vp[tuple(pm)] - vp[tuple(mp)])
            out += (2.0 * coeff[i, j] / (4.0 * h[i] * h[j])) * cross
    return out


def interp_affine(src: np.ndarray, matrix: np.ndarray, translation: np.ndarray,
                  src_origin: np.ndarray, src_spacing: np.ndarray,
                  target_axes: list[np.ndarray]) -> np.ndarray:
    """Multilinear interpolation of src at matrix @ x + translation per target node.

    Points outside the source grid contribute zero.
    """
    n = src.ndim
    mesh = np.meshgrid(*target_axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    q = (pts @ matrix.T + translation - src_origin) / src_spacing
    lo = np.floor(q).astype(np.int64)
    frac = q - lo
    shape = np.asarray(src.shape)
    acc = np.zeros(len(pts))
    flat = src.ravel()
    for corner in itertools.product((0, 1), repeat=n):
        idx = lo + np.asarray(corner)
        valid = np.all((idx >= 0) & (idx < shape), axis=1)
        if not valid.any():
            continue
        w = np.ones(valid.sum())
        for ax, c in enumerate(corner):
            w *= frac[valid, ax] if c else (1.0 - frac[valid, ax])
        lin = np.ravel_multi_index(tuple(idx[valid].T), src.shape)
        acc[valid] += w * flat[lin]
    return acc.reshape(tuple(len(a) for a in target_axes))
