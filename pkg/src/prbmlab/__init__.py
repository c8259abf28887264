"""prbmlab: a numerical laboratory for power-law random band matrices."""

__version__ = "0.1.0"

from .profiles import (  # noqa: E402,F401
    VarianceProfile,
    build_power_law_profile,
    build_profile_function,
    cauchy_density,
    periodic_distance,
    profile_eigenvalues,
    student_t_density,
)
from .deterministic import (  # noqa: E402,F401
    ShapeParameters,
    certify_assumption_bounds,
    critical_scales,
    evolution_kernel,
    m_sc,
    m_t,
    theta_propagator,
)
from .ensemble import RngStream, sample_gue, sample_mbm_increment, sample_prbm  # noqa: E402,F401
from .spectral import (  # noqa: E402,F401
    bulk_filter,
    eigendecompose,
    localization_length,
    que_observable,
    spacing_ratio_statistic,
)
from .loops import LoopSpec, diffusion_residual, l_loop_2, n_loop, resolvent, t_variable  # noqa: E402,F401
from .kloops import (  # noqa: E402,F401
    KhatCalculator,
    decay_factors,
    enumerate_noncrossing_trees,
    khat_ode_oracle,
    khat_recursive,
    kloop_ward_check,
    verify_tree_bound,
)
from .flow import distributional_check, flow_params_for_target, simulate_flow, z_flow  # noqa: E402,F401
from .experiments import ExperimentConfig, fit_exponent  # noqa: E402,F401
