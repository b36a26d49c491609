"""Super-accelerated gradient descent laboratory.

Optimizer update rules with a tunable lookahead coefficient sigma,
benchmark landscapes, damped-oscillator surrogate analysis, timescale
fitting, sigma sweeps, and a from-scratch MLP for digit classification.
"""

from .landscapes import (
    Landscape,
    LinRegDataset,
    SpectrumReport,
    finite_diff_gradient,
    linreg_hessian_spectrum,
    linreg_landscape,
    locate_minimum,
    make_linreg_dataset,
    parabola,
    synth2d,
)
from .optim import (
    MOMENTUM_SUPERACCEL,
    PLAIN_GD,
    RMSPROP_SUPERACCEL,
    NonFiniteError,
    OptimConfig,
    OptimState,
    SigmaSchedule,
    Trajectory,
    alpha_of,
    run_trajectory,
    step,
    step_gd,
    step_rmsprop_superaccel,
    step_superaccel,
)
from .oscillator import (
    ODE1,
    ODE2,
    ODE3,
    OdeCoeffs,
    OscillatorSolution,
    integrate_ode,
    ode_coeffs,
    sigma_star_formula,
    solve_closed_form,
)
from .fitting import (
    FitResult,
    SigmaScan,
    extract_timescale,
    find_sigma_star_numeric,
    fit_damped_cosine,
    fit_exponential_envelope,
    rmsprop_sigma_star_scan,
)
from .mlp import (
    FULL_BATCH,
    LabeledDataset,
    MlpParams,
    MlpSpec,
    TrainHistory,
    as_landscape,
    forward,
    init_params,
    load_mnist_idx,
    loss_and_grad,
    train,
)

__version__ = "0.1.0"
