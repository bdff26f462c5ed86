"""Continuous directed polymer in a mollified Gaussian space-time environment."""
from .analysis import (
    BoundReport,
    Estimate,
    bound_report,
    collision_probability,
    green_potential_integral,
    khasminskii_bound,
    martingale_diff_second_moment,
    occupation_oracle_mc,
    pair_second_moment_mc,
)
from .hermite import (
    MultiIndex,
    expected_in_under_gaussian,
    gaussian_moment,
    hermite_coeffs,
    i_n,
    y_n_decay_curve,
    y_n_estimate,
)
from .kernels import covariance_build, discrete_v0, make_mollifier, phi, v_at
from .noise import VirtualNoiseField, gaussian_at, pair_with_kernel
from .polymer import (
    antithetic_seeds,
    endpoint_ensemble,
    hamiltonian,
    mgf_endpoint,
    partition_estimate,
    quenched_moment,
    sample_path,
    she_params_to_polymer,
)

__version__ = "0.1.0"
