//! Joint embeddings of users, POIs, routes, time periods and stay points,
//! learned from eight weighted information graphs built over check-in data,
//! and served as geo-filtered top-n POI recommendations.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! ```text
//! corpus ──► mobility ──► graphs ──► trainer ──► recommender ──► evaluator
//!   │                       ▲
//!   └───────────────────────┘
//! ```
//!
//! * [`corpus`] parses check-ins and friendships and defines the time-period
//!   binning shared by every downstream stage.
//! * [`mobility`] extracts per-user routes inside time periods and the stay
//!   point (longest dwell) of each route.
//! * [`graphs`] builds the eight weighted graphs and the alias tables used to
//!   sample edges and negatives in constant time.
//! * [`trainer`] runs edge-sampled negative-sampling SGD over all graphs.
//! * [`recommender`] scores unvisited POIs near a query location.
//! * [`evaluator`] splits the data, computes Accuracy@n and runs sweeps.
//!
//! The guide in `book/` walks through each stage with runnable snippets.

pub mod alias;
pub mod config;
pub mod corpus;
pub mod embedding_io;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod geo;
pub mod graphs;
pub mod mobility;
pub mod pipeline;
pub mod recommender;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/mobility.md")]
    mod mobility {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/recommendation.md")]
    mod recommendation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
