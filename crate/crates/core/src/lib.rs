//! Core data model and symbolic machinery for structure-first query building:
//! query graphs and their abstractions, the graph-level generation grammar,
//! an embedded triple store, and grounding of abstract structures against it.

pub mod graph;
pub mod grammar;
pub mod grounding;
pub mod kb;

pub use graph::{
    abstract_query, canonical_code, is_isomorphic, validate_tree, Aqg, AqgEdge, CanonicalCode, Direction,
    Edge, EdgeClass, GraphError, QueryGraph, TreeViolation, Vertex, VertexClass,
};
pub use grammar::{
    build_ground_truth, operator_at, replay, Action, ActionSequence, GenerationState, GrammarError,
    OperatorKind, TraversalStrategy, VertexLabel,
};
pub use grounding::{
    attach_type, enumerate_directions, enumerate_intermediate, ground, is_groundable, CandidateSet,
    GroundingError, IntermediateGraph, LinkingResults,
};
pub use kb::{to_sparql, AnswerSet, KbBuilder, KbError, KnowledgeBase, Term};
