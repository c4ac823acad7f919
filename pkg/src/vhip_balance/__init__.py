"""Balance control toolkit for the 2D variable-height inverted pendulum."""

from .capturability import (
    RegionClass,
    SliceSpec,
    classify,
    extremal_velocity,
    in_inner,
    in_outer,
    slice_scan,
    stationary_capture_target,
    velocity_box,
)
from .control import (
    BalanceTarget,
    DcmController,
    GainConfig,
    GainInfeasible,
    IciBalanceController,
    IcpController,
    LpInfeasible,
    PureIciPolicy,
    ScalarLP,
    dcm_policy,
    eta_p,
    ici_policy,
    icp_policy,
    lp_max_scalar,
    solve_gains,
)
from .harness import (
    ControllerSpec,
    Scenario,
    TrialRecord,
    cli_dispatch,
    monte_carlo,
    run_scenario,
    sample_velocity_in_outer,
    success,
)
from .indicators import (
    DcmDivergence,
    DcmState,
    Ici,
    TwoSided,
    alpha,
    beta,
    dcm_update,
    ici,
    ici_rate,
    icp,
    omega,
    two_sided,
)
from .model import (
    ComState,
    ConstraintSet,
    ControlInput,
    SimulationAborted,
    StateConstraintViolation,
    Trajectory,
    apply_push,
    input_admissible,
    phi,
    simulate,
    step,
    vhip_derivative,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
