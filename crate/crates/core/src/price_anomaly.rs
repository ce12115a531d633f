//! Per-commodity price-outlier detection with Tukey fences, and the two-queue
//! triage that separates data-quality noise from review-worthy anomalies.
//!
//! Prices are compared only against their own HS-code peer group; a record is
//! flagged when its price lies strictly outside the group's fences, so a
//! constant-price group never flags anything.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::FeatureRow;
use crate::ingest::TradeRecord;

pub const DEFAULT_IQR_MULTIPLIER: f64 = 1.5;
pub const DEFAULT_MIN_GROUP_SIZE: usize = 4;

/// Quartile summary of one HS-code group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPriceStats {
    pub hs_code: String,
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Low,
    High,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Low => "Low",
            Side::High => "High",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Queue {
    DataQualityReview,
    CustomsReview,
}

impl Queue {
    pub fn as_str(&self) -> &'static str {
        match self {
            Queue::DataQualityReview => "DataQualityReview",
            Queue::CustomsReview => "CustomsReview",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceAnomaly {
    pub record_id: u64,
    pub hs_code: String,
    pub price_per_kg: f64,
    pub side: Side,
    pub queue: Option<Queue>,
}

/// A record with a defined price, ready for grouped detection.
#[derive(Debug, Clone, PartialEq)]
pub struct PricedRecord {
    pub record_id: u64,
    pub hs_code: String,
    pub price_per_kg: f64,
    pub net_wgt_kg: f64,
}

/// Pair records with their feature rows, keeping only defined prices.
pub fn priced_records(records: &[TradeRecord], features: &[FeatureRow]) -> Vec<PricedRecord> {
    records
        .iter()
        .zip(features)
        .filter_map(|(r, f)| {
            debug_assert_eq!(r.record_id, f.record_id);
            f.price_per_kg.map(|p| PricedRecord {
                record_id: r.record_id,
                hs_code: r.hs_code.clone(),
                price_per_kg: p,
                net_wgt_kg: r.net_wgt_kg,
            })
        })
        .collect()
}

/// Quantile by linear interpolation at position (n-1)*q on a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Quartiles and fences per HS-code group.
pub fn group_stats(rows: &[PricedRecord], iqr_multiplier: f64) -> BTreeMap<String, GroupPriceStats> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.hs_code).or_default().push(r.price_per_kg);
    }
    groups
        .into_iter()
        .map(|(hs, mut prices)| {
            prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q1 = quantile_sorted(&prices, 0.25);
            let median = quantile_sorted(&prices, 0.50);
            let q3 = quantile_sorted(&prices, 0.75);
            let iqr = q3 - q1;
            let stats = GroupPriceStats {
                hs_code: hs.to_string(),
                n: prices.len(),
                q1,
                median,
                q3,
                iqr,
                lower_fence: q1 - iqr_multiplier * iqr,
                upper_fence: q3 + iqr_multiplier * iqr,
            };
            (hs.to_string(), stats)
        })
        .collect()
}

/// Flag rows strictly outside their group's fences. Groups smaller than
/// `min_group_size` are skipped; their quartiles are too degenerate to trust.
/// Output is ordered by record_id; queues are not yet assigned.
pub fn detect_price_outliers(
    rows: &[PricedRecord],
    stats: &BTreeMap<String, GroupPriceStats>,
    min_group_size: usize,
) -> Vec<PriceAnomaly> {
    let mut out = Vec::new();
    for r in rows {
        let Some(s) = stats.get(&r.hs_code) else {
            continue;
        };
        if s.n < min_group_size {
            continue;
        }
        let side = if r.price_per_kg > s.upper_fence {
            Side::High
        } else if r.price_per_kg < s.lower_fence {
            Side::Low
        } else {
            continue;
        };
        out.push(PriceAnomaly {
            record_id: r.record_id,
            hs_code: r.hs_code.clone(),
            price_per_kg: r.price_per_kg,
            side,
            queue: None,
        });
    }
    out.sort_by_key(|a| a.record_id);
    out
}

/// Route an anomaly: weight below 1.0 kg is a data-quality problem, anything
/// heavier goes to customs review.
pub fn triage(mut anomaly: PriceAnomaly, net_wgt_kg: f64) -> PriceAnomaly {
    anomaly.queue = Some(if net_wgt_kg < 1.0 {
        Queue::DataQualityReview
    } else {
        Queue::CustomsReview
    });
    anomaly
}
