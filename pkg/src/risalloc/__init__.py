"""Resource allocation for RIS-assisted downlinks."""

from .channel import (
    ChannelRealization,
    DegenerateChannelError,
    EffectiveChannel,
    RisConfig,
    build_effective,
    composite_channel,
    sample_realization,
)
from .mu_opt import PowerAllocation, joint_optimize, objective_log, phase_ascent, power_opt
from .report import OptimizationReport
from .scenario import ScenarioConfig, load_config, noise_power
from .su_opt import SuSolution, alternating_max, eval_snr, lb_max, ub_max

__version__ = "0.1.0"
