//! Per-record feature engineering: base-10 logs of value and weight, the
//! price-per-kg unit metric, and the vague-description heuristic flag.
//!
//! Degenerate quantities stay absent (`None`) instead of being imputed; a
//! record is `cluster_eligible` only when both logs are defined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TradeRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub record_id: u64,
    pub log_value: Option<f64>,
    pub log_weight: Option<f64>,
    pub price_per_kg: Option<f64>,
    pub is_vague: bool,
    pub cluster_eligible: bool,
}

/// Lowercase keywords whose presence marks a description as vague.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VagueKeywordList {
    keywords: Vec<String>,
}

pub const DEFAULT_VAGUE_KEYWORDS: [&str; 4] = [
    "mixtures",
    "halogenated",
    "n.e.c.",
    "not elsewhere specified",
];

impl Default for VagueKeywordList {
    fn default() -> Self {
        VagueKeywordList::new(DEFAULT_VAGUE_KEYWORDS.iter().map(|s| s.to_string()))
            .expect("default keyword list is valid")
    }
}

impl VagueKeywordList {
    /// Keywords are lowercased and deduplicated; an empty list is invalid.
    pub fn new<I: IntoIterator<Item = String>>(keywords: I) -> Result<Self> {
        let mut out: Vec<String> = Vec::new();
        for k in keywords {
            let k = k.trim().to_lowercase();
            if k.is_empty() {
                continue;
            }
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(Error::config("vague keyword list must not be empty"));
        }
        Ok(VagueKeywordList { keywords: out })
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }
}

/// True iff any keyword is a case-insensitive substring of the description.
pub fn flag_vague(description: &str, keywords: &VagueKeywordList) -> bool {
    let lower = description.to_lowercase();
    keywords.keywords().iter().any(|k| lower.contains(k))
}

pub fn build_feature_row(record: &TradeRecord, keywords: &VagueKeywordList) -> FeatureRow {
    let log_value = (record.primary_value_usd > 0.0).then(|| record.primary_value_usd.log10());
    let log_weight = (record.net_wgt_kg > 0.0).then(|| record.net_wgt_kg.log10());
    let price_per_kg =
        (record.net_wgt_kg > 0.0).then(|| record.primary_value_usd / record.net_wgt_kg);
    FeatureRow {
        record_id: record.record_id,
        log_value,
        log_weight,
        price_per_kg,
        is_vague: flag_vague(&record.description, keywords),
        cluster_eligible: log_value.is_some() && log_weight.is_some(),
    }
}
