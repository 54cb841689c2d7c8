"""Shared field builders for the test suite."""

import numpy as np

from affinelap import GridSpec, ScalarField


def smoothstep(t):
    """Quintic step: 1 for t <= 0, 0 for t >= 1, C^2 in between."""
    s = np.clip(t, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def window(grid, start=0.75, end=0.95):
    """Compactly supported C^2 window: 1 inside start*halfwidth, 0 beyond end."""
    lo, hi = grid.bounds()
    c = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    mesh = grid.meshgrid()
    w = np.ones(grid.shape)
    for i in range(grid.dim):
        t = (np.abs(mesh[i] - c[i]) / half[i] - start) / (end - start)
        w *= smoothstep(t)
    return w


def gauss(grid, quad, center=None, amp=1.0):
    """amp * exp(-x^T quad x / 2) sampled on the grid."""
    quad = np.asarray(quad, dtype=float)
    mesh = grid.meshgrid()
    n = grid.dim
    if center is None:
        lo, hi = grid.bounds()
        center = 0.5 * (lo + hi)
    xs = [mesh[i] - center[i] for i in range(n)]
    expo = np.zeros(grid.shape)
    for i in range(n):
        for j in range(n):
            expo += quad[i, j] * xs[i] * xs[j]
    return amp * np.exp(-0.5 * expo)


def bump_field(grid, seed, n_bumps=2, sigma_frac=(0.10, 0.22), mask=None,
               windowed=True, centered_within=0.35, signed=False, support=0.95):
    """Seeded sum of anisotropic Gaussians, windowed to support*halfwidth."""
    rng = np.random.default_rng(seed)
    lo, hi = grid.bounds()
    c = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    vals = np.zeros(grid.shape)
    n = grid.dim
    for _ in range(n_bumps):
        center = c + (rng.random(n) - 0.5) * 2.0 * centered_within * half
        sig = (sigma_frac[0] + rng.random(n) * (sigma_frac[1] - sigma_frac[0])) * half
        ang = rng.random() * np.pi
        quad = np.diag(1.0 / sig**2)
        if n == 2:
            r = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
            quad = r @ quad @ r.T
        amp = 0.5 + rng.random()
        if signed and rng.random() < 0.5:
            amp = -amp
        vals += gauss(grid, quad, center, amp)
    if windowed:
        vals = vals * window(grid, start=0.79 * support, end=support)
    return ScalarField(grid, vals, mask)


def grid2(shape=129, halfwidth=1.0):
    return GridSpec.centered(2, shape, halfwidth)


def grid3(shape=65, halfwidth=1.0):
    return GridSpec.centered(3, shape, halfwidth)
