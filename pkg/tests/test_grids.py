import numpy as np
import pytest

from affinelap import (AffineMap, DomainMask, GridError, GridSpec, ScalarField,
                       dyadic_rescale, gradient, hessian, integrate,
                       liminf_measure_estimate, lp_norm, resample)
from affinelap.energy import affine_energy, gram_matrix, grad_norm_sq

from conftest import bump_field, grid2


def test_gridspec_validation():
    with pytest.raises(GridError):
        GridSpec(1, 8, 0.1)
    with pytest.raises(GridError):
        GridSpec(2, (2, 8), 0.1)
    with pytest.raises(GridError):
        GridSpec(2, 8, 0.0)
    with pytest.raises(GridError):
        GridSpec(5, 8, 0.1)
    with pytest.raises(GridError):
        GridSpec(2, 10_000, 0.1, node_cap=10**6)
    g = GridSpec.centered(2, 17, 1.0)
    lo, hi = g.bounds()
    assert np.allclose(lo, [-1, -1]) and np.allclose(hi, [1, 1])
    assert g.n_nodes == 17 * 17


def test_mask_boundary_and_interior():
    g = GridSpec.centered(2, 33, 1.0)
    m = DomainMask.ball(g, (0, 0), 0.7)
    assert m.inside.any()
    assert m.boundary.any()
    assert m.interior.sum() < m.inside.sum()
    # boundary nodes are inside nodes with an outside face neighbor
    assert not (m.boundary & ~m.inside).any()
    full = DomainMask.full(g)
    # for the all-inside mask the grid edge is the boundary
    assert full.boundary[0, :].all() and full.boundary[:, -1].all()
    assert not full.boundary[5, 5]


def test_masked_field_zeroed_outside_interior():
    g = GridSpec.centered(2, 33, 1.0)
    m = DomainMask.ball(g, (0, 0), 0.7)
    u = ScalarField(g, np.ones(g.shape), m)
    assert np.all(u.values[~m.interior] == 0.0)
    assert np.all(u.values[m.interior] == 1.0)


def test_gradient_zero_and_linear():
    g = GridSpec.centered(2, 17, 1.0)
    z = ScalarField.zeros(g)
    assert np.all(gradient(z) == 0.0)
    u = ScalarField.from_function(g, lambda x, y: x)
    gr = gradient(u)
    assert np.allclose(gr[..., 0], 1.0, atol=1e-13)
    assert np.allclose(gr[..., 1], 0.0, atol=1e-13)


def test_gradient_gaussian_second_order():
    errs = []
    for shape in (65, 129, 257):
        g = GridSpec.centered(2, shape, 3.0)
        x, y = g.meshgrid()
        u = ScalarField(g, np.exp(-(x * x + y * y) / 2))
        gr = gradient(u)
        exact = np.stack([-x * u.values, -y * u.values], axis=-1)
        errs.append(np.abs(gr - exact).max())
    h = [6.0 / (s - 1) for s in (65, 129, 257)]
    # observed order ~2
    order = np.log(errs[0] / errs[2]) / np.log(h[0] / h[2])
    assert order > 1.8
    assert errs[2] <= 1.5 * errs[1] * (h[2] / h[1]) ** 2 * 1.5


def test_hessian_linear_and_bilinear_exact():
    g = GridSpec.centered(2, 17, 1.0)
    lin = ScalarField.from_function(g, lambda x, y: 3 * x - 2 * y + 1)
    assert np.allclose(hessian(lin), 0.0, atol=1e-12)
    u = ScalarField.from_function(g, lambda x, y: x * y)
    h = hessian(u)
    assert np.allclose(h[..., 0, 1], 1.0, atol=1e-12)
    assert np.allclose(h[..., 1, 0], 1.0, atol=1e-12)
    assert np.allclose(h[..., 0, 0], 0.0, atol=1e-12)
    assert np.allclose(h[..., 1, 1], 0.0, atol=1e-12)


def test_hessian_quadratic_exact_interior():
    g = GridSpec.centered(2, 33, 1.0)
    u = ScalarField.from_function(g, lambda x, y: 2 * x * x - x * y + 0.5 * y * y)
    h = hessian(u)
    inner = (slice(1, -1), slice(1, -1))
    assert np.allclose(h[inner + (0, 0)], 4.0, atol=1e-11)
    assert np.allclose(h[inner + (0, 1)], -1.0, atol=1e-11)
    assert np.allclose(h[inner + (1, 1)], 1.0, atol=1e-11)


def test_hessian_gaussian_second_order():
    errs = []
    shapes = (65, 129, 257)
    for shape in shapes:
        g = GridSpec.centered(2, shape, 3.0)
        x, y = g.meshgrid()
        v = np.exp(-(x * x + y * y) / 2)
        u = ScalarField(g, v)
        h = hessian(u)
        exact = np.empty(g.shape + (2, 2))
        exact[..., 0, 0] = (x * x - 1) * v
        exact[..., 1, 1] = (y * y - 1) * v
        exact[..., 0, 1] = exact[..., 1, 0] = x * y * v
        errs.append(np.abs(h - exact).max())
    order = np.log(errs[0] / errs[2]) / np.log(4.0)
    assert order > 1.8


def test_integrate_box_and_gaussian():
    g = GridSpec(2, (11, 11), (0.1, 0.1), (0.0, 0.0))
    one = ScalarField(g, np.ones(g.shape))
    # node-weighted sum: 121 cells of volume 0.01
    assert integrate(one) == pytest.approx(1.21)
    assert integrate(ScalarField.zeros(g)) == 0.0
    g = GridSpec.centered(2, 769, 6.0)  # h = 1/64
    u = ScalarField.from_function(g, lambda x, y: np.exp(-(x * x + y * y)))
    assert abs(integrate(u) - np.pi) < 1e-6


def test_lp_norm_plateau_and_gaussian():
    g = GridSpec.centered(2, 257, 2.0)
    with pytest.raises(ValueError):
        lp_norm(ScalarField.zeros(g), 0.5)
    assert lp_norm(ScalarField.zeros(g), 2.0) == 0.0
    # plateau of height 3 over a box of volume 1
    x, y = g.meshgrid()
    vals = np.where((np.abs(x) < 0.5) & (np.abs(y) < 0.5), 3.0, 0.0)
    v = ScalarField(g, vals)
    h = g.spacing[0]
    assert lp_norm(v, 3.0) == pytest.approx(3.0 * 1.0 ** (1 / 3), rel=4 * h)
    # |exp(-|x|^2)|_2 = sqrt(pi/2)
    g = GridSpec.centered(2, 769, 6.0)
    u = ScalarField.from_function(g, lambda x, y: np.exp(-(x * x + y * y)))
    assert abs(lp_norm(u, 2.0) - np.sqrt(np.pi / 2.0)) < 1e-4


def test_integral_monotonicity_seeded():
    g = grid2(65)
    for seed in range(20):
        u = bump_field(g, seed, signed=True)
        v = u.with_values(np.abs(u.values) * (1.0 + 0.3))
        assert integrate(ScalarField(g, np.abs(u.values))) <= integrate(v) + 1e-14
        assert lp_norm(u, 2.5) <= lp_norm(v, 2.5) + 1e-14


def test_resample_identity_and_translation():
    g = GridSpec.centered(2, 33, 1.0)
    u = bump_field(g, 3)
    r = resample(u, AffineMap.identity(2))
    assert np.allclose(r.values, u.values, atol=1e-13)
    h = g.spacing[0]
    shifted = resample(u, AffineMap.translation_by((h, 0.0)))
    assert np.allclose(shifted.values[:-1, :], u.values[1:, :], atol=1e-13)


def test_resample_invariance_refines():
    """Unimodular resampling preserves L^p norms with an O(h)->0 error."""
    t = AffineMap(np.array([[1.0, 0.6], [0.0, 1.0]]))
    errs = []
    for shape in (65, 129, 257):
        g = GridSpec.centered(2, shape, 1.0)
        u = bump_field(g, 11, centered_within=0.15)
        v = resample(u, t)
        p = 3.0
        errs.append(abs(lp_norm(v, p) - lp_norm(u, p)) / lp_norm(u, p))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 5e-3


def test_resample_shear_energy_drift():
    g = GridSpec.centered(2, 257, 1.0)  # h = 1/128
    u = bump_field(g, 5, centered_within=0.1)
    t = AffineMap(np.array([[1.0, 1.0], [0.0, 1.0]]))
    e0 = affine_energy(gram_matrix(u))
    e1 = affine_energy(gram_matrix(resample(u, t)))
    assert abs(e1 - e0) / e0 < 0.01


def test_dyadic_rescale_identity_and_group_law():
    g = GridSpec.centered(2, 129, 2.0)
    u = bump_field(g, 7, centered_within=0.1)
    same = dyadic_rescale(u, 0, (0.0, 0.0))
    assert np.allclose(same.values, u.values, atol=1e-13)
    two = dyadic_rescale(dyadic_rescale(u, 1, (0, 0)), 1, (0, 0))
    one = dyadic_rescale(u, 2, (0, 0))
    ref = np.abs(one.values).max()
    assert np.abs(two.values - one.values).max() < 5e-3 * ref


def test_dyadic_rescale_preserves_h1_norm():
    for n, shape in ((2, 257), (3, 97)):
        g = GridSpec.centered(n, shape, 2.0)
        u = bump_field(g, 9, centered_within=0.05, sigma_frac=(0.25, 0.35))
        v = dyadic_rescale(u, 1, np.zeros(n))
        a = np.sqrt(grad_norm_sq(u))
        b = np.sqrt(grad_norm_sq(v))
        assert abs(a - b) / a < 0.01


def test_dyadic_rescale_overflow_guard():
    g = GridSpec.centered(2, 33, 1.0)
    u = bump_field(g, 0)
    with pytest.raises(ValueError):
        dyadic_rescale(u, 3000, (0, 0))


def test_liminf_identity_maps_recovers_volume():
    g = GridSpec.centered(2, 129, 2.0)
    m = DomainMask.ball(g, (0, 0), 1.0)
    maps = [AffineMap.identity(2) for _ in range(4)]
    est = liminf_measure_estimate(m, maps, prefix=1, samples=200_000, seed=1)
    assert abs(est.measure - m.volume) <= max(3 * est.std_error, 2e-2 * m.volume)


def test_liminf_translates_vanish_monotonically():
    g = GridSpec.centered(2, 129, 1.0)
    m = DomainMask.ball(g, (0, 0), 0.8)
    maps = [AffineMap.translation_by((2.5 * k, 0.0)) for k in range(1, 13)]
    prev = None
    # longer prefix suffix => more sets intersected => smaller measure
    for n in range(len(maps), 0, -1):
        est = liminf_measure_estimate(m, maps, prefix=n, samples=5000, seed=2)
        if prev is not None:
            assert est.measure <= prev + 1e-12
        prev = est.measure
    est10 = liminf_measure_estimate(m, maps, prefix=10, samples=5000, seed=3)
    assert est10.measure <= 1e-3 * m.volume


def test_liminf_precondition_errors():
    g = GridSpec.centered(2, 65, 1.0)
    m = DomainMask.ball(g, (0, 0), 0.5)
    maps = [AffineMap.identity(2)]
    with pytest.raises(ValueError):
        liminf_measure_estimate(m, maps, prefix=2, samples=5000)
    with pytest.raises(ValueError):
        liminf_measure_estimate(m, maps, prefix=1, samples=10)
