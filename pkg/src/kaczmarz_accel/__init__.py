"""Kaczmarz row-projection solvers with Shanks-kernel sequence acceleration."""

from .accel import AccelConfig, AccelRun, ak_run, rk_run, stopping_signal
from .errors import BreakdownError, CapabilityError, ConfigurationError, SingularityError
from .kaczmarz import (
    BlockPartition,
    ProjectorSet,
    SpectralDiagnostics,
    SweepTrace,
    block_sweep,
    iterate,
    iteration_matrix,
    projector_oracle,
    single_step,
    spectral_diagnostics,
    sweep,
)
from .linalg import (
    BandedRowMatrix,
    DenseRowMatrix,
    GALLERY_KINDS,
    LinearSystem,
    NoiseSpec,
    RowMatrix,
    add_noise,
    build_gallery,
    dump_matrix,
    precondition_rows,
)
from .transforms import (
    EpsilonTable,
    MMPE,
    MPE,
    RRE,
    SCALAR_EPSILON,
    TOPOLOGICAL,
    TRANSFORM_NAMES,
    TransformKind,
    TransformWindow,
    VECTOR_EPSILON,
    default_auxiliary,
    epsilon_extend,
    k1_closed_form,
    make_window,
    moment_matrix,
    solve_coefficients,
    transform_apply,
    window_length,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
