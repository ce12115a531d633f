//! Pipeline configuration: a flat key-value file where every key has a
//! documented default, so an empty config is valid. One master seed
//! deterministically derives every per-stage seed; individual seed keys may
//! still override the derivation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archetypes;
use crate::error::{Error, Result};
use crate::features::DEFAULT_VAGUE_KEYWORDS;
use crate::ingest::ColumnMapping;
use crate::mega_trade;
use crate::price_anomaly;
use crate::trendline::DEFAULT_HIGH_RISK_HS;

pub const DEFAULT_MASTER_SEED: u64 = 42;

// Stage offsets for seed derivation from the master seed.
const SEED_KMEANS: u64 = 1;
const SEED_IFOREST: u64 = 2;
const SEED_EXPLAIN: u64 = 3;
const SEED_SHAP_BACKGROUND: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    /// Master seed; per-stage seeds derive from it unless overridden.
    pub seed: u64,

    // ingest column mapping (UN Comtrade bulk headers by default)
    pub col_period: String,
    pub col_reporter: String,
    pub col_partner: String,
    pub col_flow: String,
    pub col_hs_code: String,
    pub col_description: String,
    pub col_value: String,
    pub col_weight: String,

    pub vague_keywords: Vec<String>,

    pub clusters: usize,
    pub kmeans_seed: Option<u64>,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,

    pub iqr_multiplier: f64,
    pub min_group_size: usize,

    pub iforest_trees: usize,
    pub iforest_subsample: usize,
    pub iforest_seed: Option<u64>,
    pub contamination: f64,

    pub high_risk_hs_codes: Vec<String>,

    pub surrogate_trees: usize,
    /// Scored rows are subsampled to this many before the surrogate fit.
    pub surrogate_max_rows: usize,
    pub shap_background: usize,
    pub explain_seed: Option<u64>,
    /// Explanations are computed for at most this many top case entries.
    pub shap_max_explanations: usize,

    /// Optional seeded shuffle of the Louvain sweep order.
    pub louvain_shuffle_seed: Option<u64>,
    /// Weight community edges by flagged value instead of flagged count.
    pub graph_weight_by_value: bool,

    /// Route for the anomalous-price histogram; the top hotspot when unset.
    pub histogram_reporter: Option<String>,
    pub histogram_partner: Option<String>,
    pub histogram_bins: usize,

    pub emit_reports: bool,
    pub emit_shap_values: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mapping = ColumnMapping::default();
        PipelineConfig {
            input: None,
            out_dir: None,
            seed: DEFAULT_MASTER_SEED,
            col_period: mapping.period,
            col_reporter: mapping.reporter,
            col_partner: mapping.partner,
            col_flow: mapping.flow,
            col_hs_code: mapping.hs_code,
            col_description: mapping.description,
            col_value: mapping.value,
            col_weight: mapping.weight,
            vague_keywords: DEFAULT_VAGUE_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            clusters: archetypes::DEFAULT_CLUSTERS,
            kmeans_seed: None,
            kmeans_max_iter: archetypes::DEFAULT_MAX_ITER,
            kmeans_tol: archetypes::DEFAULT_TOL,
            iqr_multiplier: price_anomaly::DEFAULT_IQR_MULTIPLIER,
            min_group_size: price_anomaly::DEFAULT_MIN_GROUP_SIZE,
            iforest_trees: mega_trade::DEFAULT_TREES,
            iforest_subsample: mega_trade::DEFAULT_SUBSAMPLE,
            iforest_seed: None,
            contamination: mega_trade::DEFAULT_CONTAMINATION,
            high_risk_hs_codes: DEFAULT_HIGH_RISK_HS.iter().map(|s| s.to_string()).collect(),
            surrogate_trees: 20,
            surrogate_max_rows: 20_000,
            shap_background: 100,
            explain_seed: None,
            shap_max_explanations: 2_000,
            louvain_shuffle_seed: None,
            graph_weight_by_value: false,
            histogram_reporter: None,
            histogram_partner: None,
            histogram_bins: 20,
            emit_reports: true,
            emit_shap_values: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config '{}': {e}", path.display())))?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("invalid config '{}': {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::config("clusters must be at least 1"));
        }
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(Error::config(
                "contamination must lie strictly between 0 and 0.5",
            ));
        }
        if self.iqr_multiplier <= 0.0 || !self.iqr_multiplier.is_finite() {
            return Err(Error::config("iqr_multiplier must be positive"));
        }
        if self.min_group_size == 0 {
            return Err(Error::config("min_group_size must be at least 1"));
        }
        if self.iforest_trees == 0 || self.iforest_subsample < 2 {
            return Err(Error::config(
                "iforest_trees must be >= 1 and iforest_subsample >= 2",
            ));
        }
        if self.surrogate_trees == 0 || self.surrogate_max_rows < 10 {
            return Err(Error::config(
                "surrogate_trees must be >= 1 and surrogate_max_rows >= 10",
            ));
        }
        if self.shap_background == 0 {
            return Err(Error::config("shap_background must be at least 1"));
        }
        if self.histogram_bins == 0 {
            return Err(Error::config("histogram_bins must be at least 1"));
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::config("kmeans_max_iter must be at least 1"));
        }
        if self.vague_keywords.iter().all(|k| k.trim().is_empty()) {
            return Err(Error::config("vague_keywords must not be empty"));
        }
        self.column_mapping().validate()
    }

    pub fn column_mapping(&self) -> ColumnMapping {
        ColumnMapping {
            period: self.col_period.clone(),
            reporter: self.col_reporter.clone(),
            partner: self.col_partner.clone(),
            flow: self.col_flow.clone(),
            hs_code: self.col_hs_code.clone(),
            description: self.col_description.clone(),
            value: self.col_value.clone(),
            weight: self.col_weight.clone(),
        }
    }

    pub fn kmeans_seed(&self) -> u64 {
        self.kmeans_seed.unwrap_or(self.seed.wrapping_add(SEED_KMEANS))
    }

    pub fn iforest_seed(&self) -> u64 {
        self.iforest_seed.unwrap_or(self.seed.wrapping_add(SEED_IFOREST))
    }

    pub fn explain_seed(&self) -> u64 {
        self.explain_seed.unwrap_or(self.seed.wrapping_add(SEED_EXPLAIN))
    }

    pub fn shap_background_seed(&self) -> u64 {
        self.seed.wrapping_add(SEED_SHAP_BACKGROUND)
    }
}
