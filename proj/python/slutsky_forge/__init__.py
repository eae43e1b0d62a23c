"""Measure-transport laboratory for stochastic demand systems.

The heavy lifting lives in the compiled extension; this package re-exports
its surface: demand families, composite transport flows with an optional
rotation correction, identification estimates, marginal diagnostics, and the
income-elasticity symmetry bounds.
"""

from slutsky_forge._core import (
    ConfigError,
    DomainError,
    Family,
    Flow,
    InconsistencyError,
    NumericError,
    UnsupportedError,
    __version__,
    compute_coeffs,
    energy_distance,
    estimate_functionals,
    interval,
    ks_two_sample,
    make_family,
    nonid_demo,
    poisson_check,
    rotation_field,
    sym_test,
    sym_test_csv,
    write_moments_csv,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "Family",
    "Flow",
    "InconsistencyError",
    "NumericError",
    "UnsupportedError",
    "__version__",
    "compute_coeffs",
    "energy_distance",
    "estimate_functionals",
    "interval",
    "ks_two_sample",
    "make_family",
    "nonid_demo",
    "poisson_check",
    "rotation_field",
    "sym_test",
    "sym_test_csv",
    "write_moments_csv",
]
