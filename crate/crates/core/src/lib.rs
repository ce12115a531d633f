//! Batch forensic pipeline for customs trade data.
//!
//! Turns raw, noisy trade CSVs into a prioritized anomaly case file and a
//! package of intelligence reports: resilient ingestion with a quarantine,
//! per-record feature engineering, K-Means trade archetypes, grouped IQR
//! price-outlier detection, Isolation Forest mega-trade detection, composite
//! risk scoring, country-network community and centrality analysis,
//! Shapley-based score explanation, and trendline divergence.
//!
//! The `trade-forensics` binary orchestrates the full run; every stage is
//! seeded from one master seed, so identical inputs produce identical
//! outputs.

pub mod archetypes;
pub mod config;
pub mod csv_util;
pub mod error;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod mega_trade;
pub mod pipeline;
pub mod price_anomaly;
pub mod reporting;
pub mod risk_engine;
pub mod synthgen;
pub mod trade_network;
pub mod trendline;

pub use error::{Error, Result};
