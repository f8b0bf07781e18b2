"""Semi-supervised label extension with p-Dirichlet energies."""

from ._core import (
    PdirichletError,
    __version__,
    chebyshev_diff_matrix,
    chebyshev_nodes,
    clenshaw_curtis_weights,
    constraint_labels,
    density_on_mesh,
    discrete_energy,
    epsilon_bounds,
    error_metrics,
    kde,
    minimize_discrete,
    nonlocal_energy,
    reference_density,
    run,
    sample_density,
    sigma_eta,
    solve_continuum,
    solve_p2_direct,
    uniform_mesh,
)

__all__ = [
    "PdirichletError",
    "__version__",
    "chebyshev_diff_matrix",
    "chebyshev_nodes",
    "clenshaw_curtis_weights",
    "constraint_labels",
    "density_on_mesh",
    "discrete_energy",
    "epsilon_bounds",
    "error_metrics",
    "kde",
    "minimize_discrete",
    "nonlocal_energy",
    "reference_density",
    "run",
    "sample_density",
    "sigma_eta",
    "solve_continuum",
    "solve_p2_direct",
    "uniform_mesh",
]
