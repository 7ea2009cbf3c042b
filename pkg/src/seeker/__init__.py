"""seeker: an interactive data-discovery and preparation engine.

A user's evolving information need is reified as a relational state
(T, Q): target table schemas plus an ordered SQL statement list. A
conductor loop aligns that state with retrieved evidence, materializes T
from multi-source documents, executes Q with an embedded SQL engine, and
always reports back to the user. An evaluation harness with a simulated
user measures how reliably interactions converge on latent questions.
"""

from seeker.backend import (
    CompletionRequest,
    PriceSheet,
    RemoteBackend,
    ScriptedBackend,
    Usage,
    cost,
)
from seeker.conductor import Conductor, ConductorConfig, GroundingGap, ground_check
from seeker.evalharness import (
    BenchmarkQuestion,
    SimConfig,
    aggregate,
    detect_convergence,
    run_simulation,
)
from seeker.ir import HashingEmbedding, IndexStore
from seeker.materialize import MaterializationRequest, Materializer
from seeker.model import (
    Action,
    ActionKind,
    ColumnSpec,
    DocKind,
    Document,
    Dtype,
    QueryEdit,
    Relation,
    SessionTranscript,
    State,
    StateDiff,
    TableSpec,
    apply_diff,
    diff_states,
    parse_table_document,
    serialize_table_document,
)
from seeker.session import Session

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "BenchmarkQuestion",
    "ColumnSpec",
    "CompletionRequest",
    "Conductor",
    "ConductorConfig",
    "DocKind",
    "Document",
    "Dtype",
    "GroundingGap",
    "HashingEmbedding",
    "IndexStore",
    "MaterializationRequest",
    "Materializer",
    "PriceSheet",
    "QueryEdit",
    "Relation",
    "RemoteBackend",
    "ScriptedBackend",
    "Session",
    "SessionTranscript",
    "SimConfig",
    "State",
    "StateDiff",
    "TableSpec",
    "Usage",
    "aggregate",
    "apply_diff",
    "cost",
    "detect_convergence",
    "diff_states",
    "ground_check",
    "parse_table_document",
    "run_simulation",
    "serialize_table_document",
]
