"""Affine-invariant Dirichlet energies, the affine Laplacian, and solvers."""

from .backend import BACKEND, HAVE_COMPILED
from .energy import (GramMatrix, NormalizingTransform, affine_energy,
                     affine_sobolev_j2, critical_exponent, energy_via_sampled_min,
                     gram_matrix, grad_norm_sq, j2_by_sphere_integral,
                     normalizing_transform, sobolev_ratio)
from .errors import (ConvergenceError, DegenerateGramError, GridError,
                     MaskError, PreconditionError)
from .fieldio import read_afld, write_afld, write_slice_csv
from .grids import (AffineMap, DomainMask, GridSpec, LiminfEstimate, ScalarField,
                    UnimodularTransform, dyadic_rescale, gradient, hessian,
                    integrate, liminf_measure_estimate, lp_norm, resample)

__version__ = "0.1.0"
