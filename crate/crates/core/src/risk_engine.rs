//! Composite risk scoring and case-file assembly.
//!
//! Each scored record gets a price deviation score, a dataset-wide value
//! percentile score, and the weighted composite `0.7 * price + 0.3 * value`
//! that ranks the exported case file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csv_util::{csv_line, fmt_f64};
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::ingest::{Period, TradeRecord};
use crate::price_anomaly::{GroupPriceStats, PriceAnomaly, Queue, Side};

pub const PRICE_WEIGHT: f64 = 0.7;
pub const VALUE_WEIGHT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub record_id: u64,
    pub price_score: f64,
    pub value_score: f64,
    pub composite: f64,
}

/// Deviation of a price from its group median, saturating at three IQRs
/// (twice the outer-fence distance). A zero-IQR group scores any deviation
/// as 1 and no deviation as 0.
pub fn price_score(price_per_kg: f64, stats: &GroupPriceStats) -> f64 {
    let dev = (price_per_kg - stats.median).abs();
    if stats.iqr == 0.0 {
        if dev == 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (dev / (3.0 * stats.iqr)).min(1.0)
    }
}

/// Sorted dataset values supporting mid-rank percentile lookups.
#[derive(Debug, Clone)]
pub struct ValueRanks {
    sorted: Vec<f64>,
}

impl ValueRanks {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ValueRanks { sorted: values }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// Mid-rank percentile of `value` among all dataset values, in [0, 1]:
/// `(below + 0.5 * equal - 0.5) / (n - 1)`, clamped. The unique maximum
/// scores 1, the unique minimum 0. Fewer than two values scores 0.5.
pub fn value_score(value: f64, ranks: &ValueRanks) -> f64 {
    let n = ranks.sorted.len();
    if n < 2 {
        return 0.5;
    }
    let below = ranks.sorted.partition_point(|v| *v < value);
    let not_above = ranks.sorted.partition_point(|v| *v <= value);
    let equal = not_above - below;
    let raw = (below as f64 + 0.5 * equal as f64 - 0.5) / (n - 1) as f64;
    raw.clamp(0.0, 1.0)
}

/// Exactly `0.7 * price + 0.3 * value`; inputs must sit in [0, 1].
pub fn composite_score(price: f64, value: f64) -> Result<f64> {
    for (name, v) in [("price_score", price), ("value_score", value)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::parameter(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(PRICE_WEIGHT * price + VALUE_WEIGHT * value)
}

/// Score every record with a defined price against its group stats and the
/// dataset value distribution. Keyed by record_id.
pub fn score_records(
    records: &[TradeRecord],
    features: &[FeatureRow],
    stats: &BTreeMap<String, GroupPriceStats>,
    ranks: &ValueRanks,
) -> Result<BTreeMap<u64, RiskScore>> {
    let mut out = BTreeMap::new();
    for (r, f) in records.iter().zip(features) {
        let Some(price) = f.price_per_kg else {
            continue;
        };
        let Some(s) = stats.get(&r.hs_code) else {
            continue;
        };
        let p = price_score(price, s);
        let v = value_score(r.primary_value_usd, ranks);
        out.insert(
            r.record_id,
            RiskScore {
                record_id: r.record_id,
                price_score: p,
                value_score: v,
                composite: composite_score(p, v)?,
            },
        );
    }
    Ok(out)
}

/// One exported case-file row. Only customs-review anomalies qualify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFileEntry {
    pub record_id: u64,
    pub period: Period,
    pub reporter: String,
    pub partner: String,
    pub hs_code: String,
    pub description: String,
    pub primary_value_usd: f64,
    pub net_wgt_kg: f64,
    pub price_per_kg: f64,
    pub cluster_id: Option<usize>,
    pub is_vague: bool,
    pub price_outlier_side: Side,
    pub mega_trade: bool,
    pub price_score: f64,
    pub value_score: f64,
    pub composite: f64,
    pub queue: Queue,
    /// The subset exhibiting both a price anomaly and a vague description.
    pub highest_priority: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFileSummary {
    pub count: usize,
    pub total_value_usd: f64,
    pub customs_review: usize,
    pub data_quality_review: usize,
}

/// Assemble the prioritized case file from triaged anomalies.
///
/// Entries are the CustomsReview anomalies enriched with per-record flags,
/// sorted by composite descending, ties by value descending then record_id
/// ascending. The summary counts both queues.
pub fn build_case_file(
    anomalies: &[PriceAnomaly],
    records: &[TradeRecord],
    features: &[FeatureRow],
    scores: &BTreeMap<u64, RiskScore>,
    mega_ids: &BTreeSet<u64>,
    clusters: &BTreeMap<u64, usize>,
) -> Result<(Vec<CaseFileEntry>, CaseFileSummary)> {
    let by_id: BTreeMap<u64, (&TradeRecord, &FeatureRow)> = records
        .iter()
        .zip(features)
        .map(|(r, f)| (r.record_id, (r, f)))
        .collect();

    let mut customs = 0usize;
    let mut data_quality = 0usize;
    let mut entries = Vec::new();
    for a in anomalies {
        match a.queue {
            Some(Queue::CustomsReview) => customs += 1,
            Some(Queue::DataQualityReview) => {
                data_quality += 1;
                continue;
            }
            None => {
                return Err(Error::parameter(format!(
                    "anomaly for record {} reached the case file untriaged",
                    a.record_id
                )))
            }
        }
        let (record, feature) = by_id
            .get(&a.record_id)
            .ok_or_else(|| Error::parameter(format!("unknown record id {}", a.record_id)))?;
        let score = scores.get(&a.record_id).ok_or_else(|| {
            Error::parameter(format!("record {} has no risk score", a.record_id))
        })?;
        entries.push(CaseFileEntry {
            record_id: record.record_id,
            period: record.period,
            reporter: record.reporter.clone(),
            partner: record.partner.clone(),
            hs_code: record.hs_code.clone(),
            description: record.description.clone(),
            primary_value_usd: record.primary_value_usd,
            net_wgt_kg: record.net_wgt_kg,
            price_per_kg: a.price_per_kg,
            cluster_id: clusters.get(&a.record_id).copied(),
            is_vague: feature.is_vague,
            price_outlier_side: a.side,
            mega_trade: mega_ids.contains(&a.record_id),
            price_score: score.price_score,
            value_score: score.value_score,
            composite: score.composite,
            queue: Queue::CustomsReview,
            highest_priority: feature.is_vague,
        });
    }

    entries.sort_by(|a, b| {
        b.composite
            .partial_cmp(&a.composite)
            .unwrap()
            .then(
                b.primary_value_usd
                    .partial_cmp(&a.primary_value_usd)
                    .unwrap(),
            )
            .then(a.record_id.cmp(&b.record_id))
    });

    let total_value_usd: f64 = entries.iter().map(|e| e.primary_value_usd).sum();
    let summary = CaseFileSummary {
        count: entries.len(),
        total_value_usd,
        customs_review: customs,
        data_quality_review: data_quality,
    };
    Ok((entries, summary))
}

pub const CASE_FILE_COLUMNS: &str = "record_id,period,reporter,partner,hs_code,description,primary_value_usd,net_wgt_kg,price_per_kg,cluster_id,is_vague,price_outlier_side,mega_trade,price_score,value_score,composite,queue,highest_priority";

pub fn write_case_file_csv(path: &Path, entries: &[CaseFileEntry]) -> Result<()> {
    let mut out = String::from(CASE_FILE_COLUMNS);
    out.push('\n');
    for e in entries {
        let cluster = e.cluster_id.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&csv_line(&[
            e.record_id.to_string(),
            e.period.to_string(),
            e.reporter.clone(),
            e.partner.clone(),
            e.hs_code.clone(),
            e.description.clone(),
            fmt_f64(e.primary_value_usd),
            fmt_f64(e.net_wgt_kg),
            fmt_f64(e.price_per_kg),
            cluster,
            e.is_vague.to_string(),
            e.price_outlier_side.as_str().to_string(),
            e.mega_trade.to_string(),
            fmt_f64(e.price_score),
            fmt_f64(e.value_score),
            fmt_f64(e.composite),
            e.queue.as_str().to_string(),
            e.highest_priority.to_string(),
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_case_file_summary(path: &Path, summary: &CaseFileSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::parameter(format!("summary serialization: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}
