import numpy as np
import pytest

from affinelap import (AffineMap, DomainMask, GridSpec, PreconditionError,
                       ScalarField)
from affinelap.solvers import (SolverConfig, bubble_profile, check_subcritical,
                               critical_bubble_check, ground_state, initial_bump,
                               pde_residual, penalty_ground_state, rescale_to_pde,
                               solve_affine_poisson)

from conftest import gauss
from test_operator import classical_poisson_cg


def monotone(trace, key="objective"):
    vals = [t[key] for t in trace]
    return all(vals[i + 1] <= vals[i] + 1e-12 * max(abs(vals[i]), 1.0)
               for i in range(len(vals) - 1))


def ball_setup(shape=65, radius=0.8):
    g = GridSpec.centered(2, shape, 1.0)
    mask = DomainMask.ball(g, (0, 0), radius)
    return g, mask


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(damping=0.0)
    with pytest.raises(ValueError):
        SolverConfig(damping=1.5)
    with pytest.raises(ValueError):
        SolverConfig(box_halfwidth=-1.0)
    check_subcritical(3.0, 2)
    with pytest.raises(ValueError):
        check_subcritical(2.0, 2)
    with pytest.raises(ValueError):
        check_subcritical(6.0, 3)


def test_poisson_zero_rhs_flagged():
    g, mask = ball_setup()
    rep = solve_affine_poisson(ScalarField.zeros(g, mask), mask)
    assert rep.converged
    assert rep.flags["degenerate_rhs"]
    assert rep.objective == 0.0
    assert np.all(rep.minimizer.values == 0.0)


def test_poisson_radial_matches_classical_oracle():
    g, mask = ball_setup()
    f = ScalarField(g, gauss(g, 8.0 * np.eye(2)), mask)
    rep = solve_affine_poisson(f, mask, SolverConfig(inner_tol=1e-12))
    oracle = classical_poisson_cg(f.values, mask, tol=1e-12)
    scale = np.abs(oracle).max()
    assert np.abs(rep.minimizer.values - oracle).max() <= 1e-6 * scale
    assert rep.converged
    assert rep.pde_residual < 1e-8


def test_poisson_kappa_negative_and_monotone_suite():
    g, mask = ball_setup(49)
    x, y = g.meshgrid()
    cases = [
        gauss(g, 8.0 * np.eye(2)),
        gauss(g, np.array([[12.0, 3.0], [3.0, 6.0]]), center=(0.2, -0.1)),
        np.sign(x) * gauss(g, 10.0 * np.eye(2)),  # sign-changing data
        gauss(g, 20.0 * np.eye(2), center=(0.3, 0.2))
        - 0.7 * gauss(g, 15.0 * np.eye(2), center=(-0.3, -0.2)),
    ]
    for vals in cases:
        rep = solve_affine_poisson(ScalarField(g, vals, mask), mask)
        assert rep.objective < 0.0
        assert rep.flags["kappa_negative"]
        assert monotone(rep.trace)
        assert rep.converged


def test_ground_state_basics_and_rescale():
    g, mask = ball_setup()
    cfg = SolverConfig(p=3.0, n_starts=2, max_outer=150, seed=1)
    rep = ground_state(3.0, mask, cfg)
    assert rep.converged
    assert monotone(rep.trace)
    # E2 <= Dirichlet energy on the same constraint set
    assert rep.objective <= rep.flags["classical_objective"] + 1e-6
    # strict interior positivity of the minimizer
    assert np.all(rep.minimizer.values[mask.interior] > 0.0)
    # multiplier positive, near the pairing value N
    assert rep.flags["lambda_positive"]
    assert rep.lagrange_multiplier == pytest.approx(2.0, rel=0.1)
    # unit constraint
    from affinelap import lp_norm
    assert lp_norm(rep.minimizer, 3.0) == pytest.approx(1.0, abs=1e-12)
    # homogeneity rescale drops the multiplier to one
    w = rescale_to_pde(rep.minimizer, rep.lagrange_multiplier, 3.0, "dirichlet")
    post = pde_residual(w, 3.0, mask, "dirichlet")
    assert post <= 10 * rep.pde_residual + 1e-12
    assert post <= 1e-4


def test_ground_state_sheared_domain_equivariance():
    # square domain vs its image under a unit-determinant shear, same h
    g1 = GridSpec.centered(2, 97, 1.0)
    m1 = DomainMask.box(g1, (-0.8, -0.8), (0.8, 0.8))
    s = np.array([[1.0, 1.0], [0.0, 1.0]])
    sinv = np.linalg.inv(s)
    g2 = GridSpec(2, (193, 97), g1.spacing, (-2.0, -1.0))
    m2 = DomainMask.from_predicate(
        g2, lambda pts: np.all(np.abs(pts @ sinv.T) < 0.8, axis=1))
    cfg = SolverConfig(p=3.0, n_starts=2, max_outer=150)
    k1 = ground_state(3.0, m1, cfg).objective
    k2 = ground_state(3.0, m2, cfg).objective
    assert abs(k1 - k2) / k1 < 0.02


def test_rescale_to_pde_validation():
    g, mask = ball_setup(33)
    u = ScalarField(g, initial_bump(mask), mask)
    assert np.allclose(rescale_to_pde(u, 1.0, 3.0).values, u.values)
    with pytest.raises(ValueError):
        rescale_to_pde(u, -2.0, 3.0)
    with pytest.raises(ValueError):
        rescale_to_pde(u, 1.0, 3.0, kind="bogus")


def thomas_solve(lower, diag, upper, rhs):
    n = len(rhs)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / den if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den
    x = np.zeros(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def radial_penalty_oracle(p, big_r=6.0, m=1500, iters=400, dim=2):
    """Ground state of -(1/r^(d-1))(r^(d-1) u')' + u = lam u^(p-1), |u|_p = 1.

    Independent 1D radial discretization solved by normalized inverse
    iteration with a tridiagonal (Thomas) solver.
    """
    r = np.linspace(0.0, big_r, m + 1)
    dr = r[1] - r[0]
    area = 2 * np.pi if dim == 2 else 4 * np.pi
    w = area * np.maximum(r, dr / 8) ** (dim - 1) * dr  # quadrature weights
    # operator rows for interior nodes 0..m-1 (Dirichlet at r = big_r)
    rp = (r[:-1] + dr / 2) ** (dim - 1)
    rm = np.concatenate([[0.0], (r[1:-1] - dr / 2) ** (dim - 1)])
    rc = np.maximum(r[:-1], dr / 8) ** (dim - 1)
    lower = np.concatenate([[0.0], -rm[1:] / (rc[1:] * dr**2)])
    upper = -rp / (rc * dr**2)
    diag = (rp + rm) / (rc * dr**2) + 1.0
    u = np.exp(-r[:-1] ** 2)
    u /= (np.sum(np.abs(u) ** p * w[:-1])) ** (1 / p)
    for _ in range(iters):
        v = thomas_solve(lower, diag, upper, np.abs(u) ** (p - 2) * u)
        u = v / (np.sum(np.abs(v) ** p * w[:-1])) ** (1 / p)
    du = np.gradient(np.concatenate([u, [0.0]]), r)
    energy = np.sum((du[:-1] ** 2 + u**2) * w[:-1])
    return energy


def test_penalty_flat_potential_matches_radial_oracle():
    g = GridSpec.centered(2, 97, 6.0)
    v = ScalarField(g, np.ones(g.shape))
    cfg = SolverConfig(p=3.0, n_starts=2, max_outer=150, truncation_check=False)
    rep = penalty_ground_state(v, 3.0, cfg)
    assert rep.converged
    oracle = radial_penalty_oracle(3.0)
    assert abs(rep.objective - oracle) / oracle < 0.02


def test_penalty_well_strictly_lowers_kappa():
    g = GridSpec.centered(2, 65, 5.0)
    mesh = g.meshgrid()
    r2 = sum(m * m for m in mesh)
    vflat = ScalarField(g, np.ones(g.shape))
    vwell = ScalarField(g, 1.0 - 0.5 * np.exp(-r2))
    cfg = SolverConfig(p=3.0, n_starts=2, max_outer=150, truncation_check=False,
                       outer_tol=1e-9)
    k_flat = penalty_ground_state(vflat, 3.0, cfg)
    k_well = penalty_ground_state(vwell, 3.0, cfg)
    assert monotone(k_well.trace)
    margin = k_flat.objective - k_well.objective
    assert margin > 3 * max(cfg.outer_tol * abs(k_flat.objective), 1e-9)
    assert margin > 0.05  # the strict gap is macroscopic for this well


def test_penalty_truncation_check_and_rescale():
    g = GridSpec.centered(2, 65, 5.0)
    mesh = g.meshgrid()
    r2 = sum(m * m for m in mesh)
    v = ScalarField(g, 1.0 - 0.4 * np.exp(-r2))
    cfg = SolverConfig(p=3.0, n_starts=1, max_outer=150)
    rep = penalty_ground_state(v, 3.0, cfg)
    assert "truncation_drift" in rep.flags
    assert not rep.flags["truncation_sensitive"]
    w = rescale_to_pde(rep.minimizer, rep.lagrange_multiplier, 3.0, "penalty")
    post = pde_residual(w, 3.0, DomainMask.full(g), "penalty", v.values)
    assert post <= 1e-4


def test_penalty_rejects_potential_above_one():
    g = GridSpec.centered(2, 33, 2.0)
    v = ScalarField(g, 1.0 + 0.1 * np.exp(-sum(m * m for m in g.meshgrid())))
    with pytest.raises(PreconditionError):
        penalty_ground_state(v, 3.0, SolverConfig(p=3.0, n_starts=1))


def test_bubble_check_quotients():
    rep = critical_bubble_check(shape=97)
    assert rep.max_spread < 0.02
    base_grad = rep.results[0].gradient_quotient
    # diag(2, 1, 1/2) inflates the plain gradient quotient by tr(T^T T)/3 = 1.75
    assert rep.results[2].gradient_quotient / base_grad >= 1.10
    assert rep.results[2].gradient_quotient / base_grad == pytest.approx(1.75, rel=0.05)
    # rotations leave both quotients essentially unchanged
    assert rep.results[1].gradient_quotient / base_grad == pytest.approx(1.0, abs=0.04)

    # identity quotient against a fine radial quadrature oracle
    r = np.linspace(1e-9, 10.0 * np.sqrt(3), 300_001)
    prof = bubble_profile(r, 3, 1.5, (4.0, 9.5))
    du = np.gradient(prof, r)
    grad2 = np.trapezoid(du * du * r * r, r) * 4 * np.pi
    l6 = (np.trapezoid(np.abs(prof) ** 6 * r * r, r) * 4 * np.pi) ** (1 / 6)
    oracle = grad2 / l6**2
    assert abs(rep.quotient_at_identity - oracle) / oracle < 0.02


def test_bubble_check_rejects_bad_transforms():
    with pytest.raises(ValueError):
        critical_bubble_check(transforms=[AffineMap(2.0 * np.eye(3))], shape=33)
    squash = AffineMap(np.diag([16.0, 1.0, 1 / 16.0]))
    with pytest.raises(ValueError):
        critical_bubble_check(transforms=[squash], shape=33)
    with pytest.raises(ValueError):
        critical_bubble_check(dim=2)
