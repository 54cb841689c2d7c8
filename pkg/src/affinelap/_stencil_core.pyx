# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused-loop kernels for the 2D/3D hot paths.

Inputs mirror the numpy fallback in _kernels_np.py: the stencil kernels take
a zero-padded source array, the interpolation kernels take the raw source
plus grid geometry.  Outputs must match the fallback to rounding error.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def apply_stencil_2d(const double[:, ::1] vp, const double[:, ::1] c, const double[::1] h,
                     double[:, ::1] out):
    """out = sum_ij c[i,j] d_i d_j u for zero-padded vp (padding width 1)."""
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1]
    cdef double w00 = c[0, 0] / (h[0] * h[0])
    cdef double w11 = c[1, 1] / (h[1] * h[1])
    cdef double w01 = 2.0 * c[0, 1] / (4.0 * h[0] * h[1])
    cdef Py_ssize_t i, j, ip, jp
    for i in range(n0):
        ip = i + 1
        for j in range(n1):
            jp = j + 1
            out[i, j] = (
                w00 * (vp[ip + 1, jp] - 2.0 * vp[ip, jp] + vp[ip - 1, jp])
                + w11 * (vp[ip, jp + 1] - 2.0 * vp[ip, jp] + vp[ip, jp - 1])
                + w01 * (vp[ip + 1, jp + 1] + vp[ip - 1, jp - 1]
                         - vp[ip + 1, jp - 1] - vp[ip - 1, jp + 1])
            )


def apply_stencil_3d(const double[:, :, ::1] vp, const double[:, ::1] c, const double[::1] h,
                     double[:, :, ::1] out):
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1], n2 = out.shape[2]
    cdef double w00 = c[0, 0] / (h[0] * h[0])
    cdef double w11 = c[1, 1] / (h[1] * h[1])
    cdef double w22 = c[2, 2] / (h[2] * h[2])
    cdef double w01 = 2.0 * c[0, 1] / (4.0 * h[0] * h[1])
    cdef double w02 = 2.0 * c[0, 2] / (4.0 * h[0] * h[2])
    cdef double w12 = 2.0 * c[1, 2] / (4.0 * h[1] * h[2])
    cdef Py_ssize_t i, j, k, ip, jp, kp
    for i in range(n0):
        ip = i + 1
        for j in range(n1):
            jp = j + 1
            for k in range(n2):
                kp = k + 1
                out[i, j, k] = (
                    w00 * (vp[ip + 1, jp, kp] - 2.0 * vp[ip, jp, kp] + vp[ip - 1, jp, kp])
                    + w11 * (vp[ip, jp + 1, kp] - 2.0 * vp[ip, jp, kp] + vp[ip, jp - 1, kp])
                    + w22 * (vp[ip, jp, kp + 1] - 2.0 * vp[ip, jp, kp] + vp[ip, jp, kp - 1])
                    + w01 * (vp[ip + 1, jp + 1, kp] + vp[ip - 1, jp - 1, kp]
                             - vp[ip + 1, jp - 1, kp] - vp[ip - 1, jp + 1, kp])
                    + w02 * (vp[ip + 1, jp, kp + 1] + vp[ip - 1, jp, kp - 1]
                             - vp[ip + 1, jp, kp - 1] - vp[ip - 1, jp, kp + 1])
                    + w12 * (vp[ip, jp + 1, kp + 1] + vp[ip, jp - 1, kp - 1]
                             - vp[ip, jp + 1, kp - 1] - vp[ip, jp - 1, kp + 1])
                )


def interp_affine_2d(const double[:, ::1] src, const double[:, ::1] m, const double[::1] tr,
                     const double[::1] so, const double[::1] sh,
                     const double[::1] to, const double[::1] th, double[:, ::1] out):
    """out[a,b] = bilinear src at m @ x + tr, x the (a,b) target node; 0 outside."""
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1]
    cdef Py_ssize_t s0 = src.shape[0], s1 = src.shape[1]
    cdef double x0, x1, q0, q1, f0, f1, v
    cdef Py_ssize_t a, b, i0, i1
    for a in range(n0):
        x0 = to[0] + a * th[0]
        for b in range(n1):
            x1 = to[1] + b * th[1]
            q0 = (m[0, 0] * x0 + m[0, 1] * x1 + tr[0] - so[0]) / sh[0]
            q1 = (m[1, 0] * x0 + m[1, 1] * x1 + tr[1] - so[1]) / sh[1]
            # truncate-then-adjust floor (no libc call in the hot loop)
            i0 = <Py_ssize_t>q0
            if q0 < i0:
                i0 -= 1
            i1 = <Py_ssize_t>q1
            if q1 < i1:
                i1 -= 1
            f0 = q0 - i0
            f1 = q1 - i1
            v = 0.0
            if 0 <= i0 < s0 and 0 <= i1 < s1:
                v += (1.0 - f0) * (1.0 - f1) * src[i0, i1]
            if 0 <= i0 + 1 < s0 and 0 <= i1 < s1:
                v += f0 * (1.0 - f1) * src[i0 + 1, i1]
            if 0 <= i0 < s0 and 0 <= i1 + 1 < s1:
                v += (1.0 - f0) * f1 * src[i0, i1 + 1]
            if 0 <= i0 + 1 < s0 and 0 <= i1 + 1 < s1:
                v += f0 * f1 * src[i0 + 1, i1 + 1]
            out[a, b] = v


def interp_affine_3d(const double[:, :, ::1] src, const double[:, ::1] m, const double[::1] tr,
                     const double[::1] so, const double[::1] sh,
                     const double[::1] to, const double[::1] th, double[:, :, ::1] out):
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1], n2 = out.shape[2]
    cdef Py_ssize_t s0 = src.shape[0], s1 = src.shape[1], s2 = src.shape[2]
    cdef double x0, x1, x2, q0, q1, q2, f0, f1, f2, v, w
    cdef Py_ssize_t a, b, c, i0, i1, i2, d0, d1, d2, j0, j1, j2
    for a in range(n0):
        x0 = to[0] + a * th[0]
        for b in range(n1):
            x1 = to[1] + b * th[1]
            for c in range(n2):
                x2 = to[2] + c * th[2]
                q0 = (m[0, 0] * x0 + m[0, 1] * x1 + m[0, 2] * x2 + tr[0] - so[0]) / sh[0]
                q1 = (m[1, 0] * x0 + m[1, 1] * x1 + m[1, 2] * x2 + tr[1] - so[1]) / sh[1]
                q2 = (m[2, 0] * x0 + m[2, 1] * x1 + m[2, 2] * x2 + tr[2] - so[2]) / sh[2]
                i0 = <Py_ssize_t>q0
                if q0 < i0:
                    i0 -= 1
                i1 = <Py_ssize_t>q1
                if q1 < i1:
                    i1 -= 1
                i2 = <Py_ssize_t>q2
                if q2 < i2:
                    i2 -= 1
                f0 = q0 - i0
                f1 = q1 - i1
                f2 = q2 - i2
                v = 0.0
                for d0 in range(2):
                    j0 = i0 + d0
                    if j0 < 0 or j0 >= s0:
                        continue
                    for d1 in range(2):
                        j1 = i1 + d1
                        if j1 < 0 or j1 >= s1:
                            continue
                        for d2 in range(2):
                            j2 = i2 + d2
                            if j2 < 0 or j2 >= s2:
                                continue
                            w = ((f0 if d0 else 1.0 - f0)
                                 * (f1 if d1 else 1.0 - f1)
                                 * (f2 if d2 else 1.0 - f2))
                            v += w * src[j0, j1, j2]
                out[a, b, c] = v
