"""Occurrence-time POVMs for detector effects and scattering time delays."""
from .delay import (
    DelayReport,
    WavePacket,
    compare_delay_routes,
    eisenbud_wigner,
    eisenbud_wigner_terms,
    measure_shift,
    operator_delay,
    packet_click_density,
)
from .exceptions import AccuracyWarning, ConfigError, DomainError, GridMismatchError, NumericalFailure
from .grid import (
    EnergyGrid,
    KernelOperator,
    Section,
    identity_kernel,
    inner_product,
    make_grid,
    min_eigenvalue,
    section_from_function,
)
from .povm import (
    Connection,
    EffectKernel,
    IntervalMeasureKernel,
    NormalizedKernel,
    TimeWindow,
    apply_time_operator,
    click_density,
    connection,
    first_moment,
    interval_kernel,
    matrix_povm,
    net_limit_check,
    normalize_kernel,
    shift_interval_covariance_check,
    total_duration_expectation,
    transition_time,
    truncated_duration_operator,
)
from .radial import (
    PhaseShiftTable,
    PotentialSpec,
    RadialSolution,
    build_phase_table,
    extract_phase_shift,
    on_shell_S,
    solve_radial,
)
from .shell import OutgoingSelector, ShellSpec, apply_Q, closed_form_c, numerical_effect_kernel, shell_connection

__version__ = "0.1.0"
