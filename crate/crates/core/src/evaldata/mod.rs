//! Implicit-feedback data: ingestion, leave-one-out splits with sampled
//! evaluation negatives, and HR@K / NDCG@K evaluation.

mod evaluate;
mod ingest;
pub mod metrics;
mod split;
pub mod store;

pub use evaluate::{
    evaluate_model, evaluate_sweep, held_out_positions, write_sweep_csv, EvalResult, PopularityScorer, RandomScorer,
    Scorer, Split,
};
pub use ingest::{load_interactions, parse_interactions, IdMap, Interaction, InteractionFormat, LoadedInteractions};
pub use metrics::{hr_at_k, ndcg_at_k, RankedList};
pub use split::{leave_one_out_split, InteractionDataset};

/// Default number of sampled negatives ranked against each held-out item.
pub const DEFAULT_EVAL_NEGATIVES: usize = 99;
