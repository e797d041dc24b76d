"""Multi-block ADMM solver for convex quadratic SDPs.

Each outer iteration solves the two groups of blocks inexactly with a single
symmetric Gauss-Seidel cycle per group, carries an explicit error certificate
for the cycle, and reports relative KKT residuals of the recovered
primal-dual pair.
"""

from .admm_core import (
    IterateState,
    IterationRecord,
    SolveReport,
    SolverConfig,
    StepConstants,
    TwoBlockProblem,
    exact_composite_minimizer,
    ims_step,
    initial_state,
    make_operators,
    sgs_step,
    solve,
    steplength_constants,
)
from .baseline import DirectSpadmm
from .blockops import BlockOperator, BlockPartition, BlockVector
from .diagnostics import complexity_trend, kkt_distance
from .errors import (
    BlockStructureError,
    CertificateError,
    DivergenceError,
    IndefiniteOperatorError,
    InnerSolverContractError,
    SingularBlockError,
    UnsupportedMetricError,
)
from .io import CsvLogWriter, load_problem, read_log, save_problem, write_summary
from .qsdp import (
    DualAssembly,
    DualIterate,
    QOperatorSpec,
    QsdpProblem,
    build_dual_blocks,
    generate_biq,
    kkt_residuals,
    random_biq,
)
from .sgs_cycle import QuadraticBlockObjective

__all__ = [
    "BlockOperator",
    "BlockPartition",
    "BlockStructureError",
    "BlockVector",
    "CertificateError",
    "CsvLogWriter",
    "DirectSpadmm",
    "DivergenceError",
    "DualAssembly",
    "DualIterate",
    "IndefiniteOperatorError",
    "InnerSolverContractError",
    "IterateState",
    "IterationRecord",
    "QOperatorSpec",
    "QsdpProblem",
    "QuadraticBlockObjective",
    "SingularBlockError",
    "SolveReport",
    "SolverConfig",
    "StepConstants",
    "TwoBlockProblem",
    "UnsupportedMetricError",
    "build_dual_blocks",
    "complexity_trend",
    "exact_composite_minimizer",
    "generate_biq",
    "ims_step",
    "initial_state",
    "kkt_distance",
    "kkt_residuals",
    "load_problem",
    "make_operators",
    "random_biq",
    "read_log",
    "save_problem",
    "sgs_step",
    "solve",
    "steplength_constants",
    "write_summary",
]

__version__ = "0.1.0"
