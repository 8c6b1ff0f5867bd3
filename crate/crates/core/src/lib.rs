//! Visual-inspiration network analytics for NFT markets.
//!
//! The crate builds time-respecting inspiration graphs between assets and
//! between collections from image embeddings, summarises their structure,
//! contrasts the market performance of inspiring and inspired assets, relates
//! network growth to market time series, and explains pairwise similarity
//! judgements with sampled Shapley values.

pub mod cli;
pub mod collection_graph;
pub mod error;
pub mod graph;
pub mod market;
pub mod metrics;
pub mod model;
pub mod nft_graph;
pub mod shap;
pub mod similarity;
pub mod timeseries;
pub mod tlcc;

pub use error::{Error, ErrorCategory, Result};
