//! Graphical causal inference under missing data.
//!
//! m-graphs carry observed, partially missing, proxy, selection and latent nodes. Every
//! partially missing `Y` has one selection node `S` and an auto-created proxy `Y_star`
//! with parents `{Y, S}`. Bidirected edges are expanded into fresh latents before any
//! separation query. Error terms are never materialized.

pub mod catalog;
pub mod dag;
pub mod enumerate;
pub mod error;
pub mod graph;
pub mod graphoid;
pub mod identification;
pub mod missingness;
pub mod models;
pub mod parse;
pub mod separation;
pub mod swig;
pub mod term;

pub use catalog::{
    attrition_catalog, necessity_counterexample, panel_catalog, AttritionDesign, CatalogEntry, ImplicationCatalog,
    PanelVariant,
};
pub use dag::{CausalGraph, Dag, DagNode, NodeRole};
pub use enumerate::{
    enumerate_independencies, implied_by, minimal_testable_set, prune_statements, Scope, DEFAULT_MAX_CONDITIONING,
};
pub use error::GraphError;
pub use graph::{Edge, GraphBuilder, MGraph, NodeKind};
pub use identification::{
    plan_identification, Assumption, EstimandKind, EstimandSpec, Formula, IdentificationPlan, IdentificationStatus,
    Strategy,
};
pub use missingness::{classify, Missingness, MissingnessVerdict};
pub use parse::parse_graph;
pub use separation::{d_separated, d_separated_str, path_is_active, SeparationVerdict};
pub use swig::{counterfactual_independencies, split, Intervention, SwigGraph};
pub use term::{CIStatement, Term};
