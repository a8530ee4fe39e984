"""Predictive-coding networks trained by integrating the inference gradient flow."""

from .energy import EnergyReport, ParamGradient, activity_grad, hpc_energy, param_grad, pc_energy
from .inference import (
    PIDCoeffs,
    SolveStats,
    SolverConfig,
    euler_step,
    heun_step,
    pid_adapt,
    scaled_error_norm,
    solve_inference,
)
from .netcore import (
    Activation,
    ActivityState,
    Layer,
    Network,
    forward,
    init_activities_random,
    init_activities_with_ffwd,
    init_network,
    load_network,
    save_network,
)
from .optim import OptimState, adam_update, apply_update, init_optim, sgd_update
from .theory import energy_gap, linear_equilibrium_energy, rescaling_matrix, weight_chain
from .trainer import (
    StepResult,
    make_hpc_step,
    make_pc_step,
    test_discriminative_pc,
    test_generative_pc,
    update_params,
)

__version__ = "0.1.0"
