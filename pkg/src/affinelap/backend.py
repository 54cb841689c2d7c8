"""Kernel dispatch: compiled extension when available, numpy otherwise.

The compiled core covers the 2D/3D hot paths (constant-coefficient stencil
application inside CG, multilinear affine resampling).  Everything else, and
any other dimension, runs through the numpy kernels.  Set AFFINELAP_PURE=1
to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_np

try:
    from . import _stencil_core as _core
except ImportError:  # extension not built
    _core = None

_FORCE_PURE = os.environ.get("AFFINELAP_PURE", "") == "1"
HAVE_COMPILED = _core is not None
USE_COMPILED = HAVE_COMPILED and not _FORCE_PURE
BACKEND = "compiled" if USE_COMPILED else "numpy"


def apply_quadratic_stencil(values: np.ndarray, coeff: np.ndarray, spacing) -> np.ndarray:
    """sum_ij coeff[i,j] d_i d_j applied with zero extension."""
    n = values.ndim
    if USE_COMPILED and n in (2, 3):
        vp = np.pad(values, 1)
        out = np.empty_like(values)
        h = np.asarray(spacing, dtype=float)
        c = np.ascontiguousarray(coeff, dtype=float)
        if n == 2:
            _core.apply_stencil_2d(vp, c, h, out)
        else:
            _core.apply_stencil_3d(vp, c, h, out)
        return out
    return _kernels_np.apply_quadratic_stencil(values, coeff, spacing)


def interp_affine(src: np.ndarray, matrix: np.ndarray, translation: np.ndarray,
                  src_origin: np.ndarray, src_spacing: np.ndarray, target) -> np.ndarray:
    """Resample src at matrix @ x + translation for every node x of target."""
    axes = target.axes()
    n = src.ndim
    if USE_COMPILED and n in (2, 3):
        out = np.empty(target.shape)
        args = (np.ascontiguousarray(src, dtype=float),
                np.ascontiguousarray(matrix, dtype=float),
                np.asarray(translation, dtype=float),
                np.asarray(src_origin, dtype=float),
                np.asarray(src_spacing, dtype=float),
                np.asarray(target.origin, dtype=float),
                np.asarray(target.spacing, dtype=float),
                out)
        if n == 2:
            _core.interp_affine_2d(*args)
        else:
            _core.interp_affine_3d(*args)
        return out
    return _kernels_np.interp_affine(src, matrix, translation,
                                     np.asarray(src_origin, dtype=float),
                                     np.asarray(src_spacing, dtype=float), axes)
