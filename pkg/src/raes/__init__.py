"""RAES: sparsify a dense regular graph into a bounded-degree subgraph by
rounds of random link requests, plus tools to analyze the result and to
encode executions compactly."""

from .analysis import (
    EXHAUSTIVE_LIMIT,
    CutFractions,
    ExpansionReport,
    NodeClassification,
    classify_nodes,
    cut_fractions,
    exact_expansion,
    sampled_expansion,
    spectral_expansion_lower_bound,
)
from .errors import (
    ClassificationViolation,
    ConvergenceFailure,
    DecodeError,
    GenerationFailure,
    InternalError,
    InvalidParameter,
    PreconditionError,
    RaesError,
    SizeLimitError,
)
from .experiment import ExperimentConfig, run_experiment, summarize
from .graph import (
    CutCount,
    Graph,
    SpectralResult,
    edge_count,
    gen_circulant,
    gen_complete,
    gen_complete_bipartite,
    gen_random_regular,
    mixing_bound,
    read_graph,
    second_eigenvalue,
    write_graph,
)
from .protocol import (
    Execution,
    ExecutionTrace,
    NotTerminated,
    RaesParams,
    RandomTape,
    Request,
    RunStats,
    SubgraphH,
    fresh_tape,
    run_raes,
    unsettled_after,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
