//! The intelligence package: hotspot routes, pair-value heatmap data,
//! per-reporter and per-HS summaries, Sankey flow rows, time series,
//! plot-ready exports, and the policy memo.
//!
//! Everything here is an aggregation of upstream outputs with deterministic
//! ordering and exact conservation identities; files are emitted as plot-ready
//! CSV/JSON, never rendered graphics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csv_util::{csv_line, fmt_f64};
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::ingest::{Period, TradeRecord};
use crate::mega_trade::{SpikeReport, YearlyMega};
use crate::price_anomaly::GroupPriceStats;
use crate::risk_engine::{CaseFileEntry, RiskScore};
use crate::trendline::hs6;

pub const DEFAULT_TOP_K: usize = 15;

/// Ordered reporter -> partner pair; aggregate labels like "World" are
/// permitted here (route reporting keeps what the graph drops).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RouteKey {
    pub reporter: String,
    pub partner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteCount {
    pub route: RouteKey,
    pub count: u64,
}

/// Top-k case-file routes by entry count; ties resolve lexically.
pub fn hotspot_routes(entries: &[CaseFileEntry], k: usize) -> Vec<RouteCount> {
    let mut counts: BTreeMap<RouteKey, u64> = BTreeMap::new();
    for e in entries {
        *counts
            .entry(RouteKey {
                reporter: e.reporter.clone(),
                partner: e.partner.clone(),
            })
            .or_insert(0) += 1;
    }
    let mut routes: Vec<RouteCount> = counts
        .into_iter()
        .map(|(route, count)| RouteCount { route, count })
        .collect();
    routes.sort_by(|a, b| b.count.cmp(&a.count).then(a.route.cmp(&b.route)));
    routes.truncate(k);
    routes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReporterSummaryRow {
    pub reporter: String,
    pub record_count: usize,
    pub avg_composite: f64,
    pub vague_count: usize,
    pub flagged_value: f64,
}

/// Heatmap matrix of flagged value by (reporter, partner); cell sums equal
/// the case-file total exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValueMatrix {
    pub reporters: Vec<String>,
    pub partners: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsRiskRow {
    pub hs_code: String,
    pub n: usize,
    pub avg_composite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summaries {
    pub reporter_summary: Vec<ReporterSummaryRow>,
    pub pair_matrix: PairValueMatrix,
    pub hs_risk_ranking: Vec<HsRiskRow>,
    pub sankey: Vec<RouteCount>,
}

/// Reporter, pair, HS-code, and Sankey aggregations.
///
/// `flagged_union` is the set of record ids flagged by any detection layer;
/// the Sankey rows count those anomalous shipments per route.
pub fn aggregate_summaries(
    records: &[TradeRecord],
    features: &[FeatureRow],
    scores: &BTreeMap<u64, RiskScore>,
    entries: &[CaseFileEntry],
    flagged_union: &BTreeSet<u64>,
) -> Summaries {
    // per-reporter aggregates over all records
    #[derive(Default)]
    struct Acc {
        records: usize,
        scored: usize,
        composite_sum: f64,
        vague: usize,
        flagged_value: f64,
    }
    let mut by_reporter: BTreeMap<&str, Acc> = BTreeMap::new();
    for (r, f) in records.iter().zip(features) {
        let acc = by_reporter.entry(&r.reporter).or_default();
        acc.records += 1;
        if f.is_vague {
            acc.vague += 1;
        }
        if let Some(s) = scores.get(&r.record_id) {
            acc.scored += 1;
            acc.composite_sum += s.composite;
        }
    }
    for e in entries {
        if let Some(acc) = by_reporter.get_mut(e.reporter.as_str()) {
            acc.flagged_value += e.primary_value_usd;
        }
    }
    let reporter_summary = by_reporter
        .into_iter()
        .map(|(reporter, acc)| ReporterSummaryRow {
            reporter: reporter.to_string(),
            record_count: acc.records,
            avg_composite: if acc.scored > 0 {
                acc.composite_sum / acc.scored as f64
            } else {
                0.0
            },
            vague_count: acc.vague,
            flagged_value: acc.flagged_value,
        })
        .collect();

    // pair heatmap over case entries
    let mut pair_values: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for e in entries {
        *pair_values.entry((&e.reporter, &e.partner)).or_insert(0.0) += e.primary_value_usd;
    }
    let reporters: Vec<String> = pair_values
        .keys()
        .map(|(r, _)| r.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let partners: Vec<String> = pair_values
        .keys()
        .map(|(_, p)| p.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cells = reporters
        .iter()
        .map(|r| {
            partners
                .iter()
                .map(|p| {
                    pair_values
                        .get(&(r.as_str(), p.as_str()))
                        .copied()
                        .unwrap_or(0.0)
                })
                .collect()
        })
        .collect();
    let pair_matrix = PairValueMatrix {
        reporters,
        partners,
        cells,
    };

    // per-HS mean composite, top 15
    let mut by_hs: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in records {
        if let Some(s) = scores.get(&r.record_id) {
            let slot = by_hs.entry(&r.hs_code).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += s.composite;
        }
    }
    let mut hs_risk_ranking: Vec<HsRiskRow> = by_hs
        .into_iter()
        .map(|(hs, (n, sum))| HsRiskRow {
            hs_code: hs.to_string(),
            n,
            avg_composite: sum / n as f64,
        })
        .collect();
    hs_risk_ranking.sort_by(|a, b| {
        b.avg_composite
            .partial_cmp(&a.avg_composite)
            .unwrap()
            .then(a.hs_code.cmp(&b.hs_code))
    });
    hs_risk_ranking.truncate(DEFAULT_TOP_K);

    // Sankey: anomalous shipments (any detection layer) per route
    let mut sankey_counts: BTreeMap<RouteKey, u64> = BTreeMap::new();
    for r in records {
        if flagged_union.contains(&r.record_id) {
            *sankey_counts
                .entry(RouteKey {
                    reporter: r.reporter.clone(),
                    partner: r.partner.clone(),
                })
                .or_insert(0) += 1;
        }
    }
    let mut sankey: Vec<RouteCount> = sankey_counts
        .into_iter()
        .map(|(route, count)| RouteCount { route, count })
        .collect();
    sankey.sort_by(|a, b| b.count.cmp(&a.count).then(a.route.cmp(&b.route)));
    sankey.truncate(DEFAULT_TOP_K);

    Summaries {
        reporter_summary,
        pair_matrix,
        hs_risk_ranking,
        sankey,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyCumulative {
    pub year: i32,
    pub month: u8,
    pub value: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub monthly_cumulative: Vec<MonthlyCumulative>,
    pub mega_yearly: Vec<YearlyMega>,
    /// Top-5 reporters by total mega value, everything else under "Other";
    /// per-year values sum to the yearly totals exactly.
    pub mega_by_reporter: Vec<(i32, String, f64)>,
    pub mega_flagged_months: Vec<(i32, u8)>,
}

/// Monthly cumulative flagged value plus the mega-trade yearly series with a
/// top-reporter decomposition.
pub fn temporal_series(case_periods: &[(Period, f64)], spike: &SpikeReport) -> TimeSeries {
    let mut monthly_map: BTreeMap<(i32, u8), f64> = BTreeMap::new();
    for (p, value) in case_periods {
        if let Some(m) = p.month {
            *monthly_map.entry((p.year, m)).or_insert(0.0) += value;
        }
    }
    let mut monthly_cumulative = Vec::new();
    if let (Some(&first), Some(&last)) = (monthly_map.keys().next(), monthly_map.keys().next_back())
    {
        let mut cumulative = 0.0;
        let (mut y, mut m) = first;
        loop {
            let value = monthly_map.get(&(y, m)).copied().unwrap_or(0.0);
            cumulative += value;
            monthly_cumulative.push(MonthlyCumulative {
                year: y,
                month: m,
                value,
                cumulative,
            });
            if (y, m) == last {
                break;
            }
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
    }

    // rank reporters by their total mega value
    let mut reporter_totals: BTreeMap<&str, f64> = BTreeMap::new();
    for row in &spike.by_reporter {
        *reporter_totals.entry(&row.reporter).or_insert(0.0) += row.total_value;
    }
    let mut ranked: Vec<(&str, f64)> = reporter_totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    let top: BTreeSet<&str> = ranked.iter().take(5).map(|(r, _)| *r).collect();

    let mut decomposed: BTreeMap<(i32, String), f64> = BTreeMap::new();
    for row in &spike.by_reporter {
        let label = if top.contains(row.reporter.as_str()) {
            row.reporter.clone()
        } else {
            "Other".to_string()
        };
        *decomposed.entry((row.year, label)).or_insert(0.0) += row.total_value;
    }
    let mega_by_reporter = decomposed
        .into_iter()
        .map(|((year, reporter), value)| (year, reporter, value))
        .collect();

    TimeSeries {
        monthly_cumulative,
        mega_yearly: spike.yearly.clone(),
        mega_by_reporter,
        mega_flagged_months: spike.flagged_months.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub record_id: u64,
    pub log_weight: f64,
    pub log_value: f64,
    pub cluster_id: Option<usize>,
    pub is_high_risk_hs: bool,
}

/// One scatter row per cluster-eligible record.
pub fn scatter_rows(
    records: &[TradeRecord],
    features: &[FeatureRow],
    clusters: &BTreeMap<u64, usize>,
    high_risk_hs: &[String],
) -> Vec<ScatterRow> {
    records
        .iter()
        .zip(features)
        .filter(|(_, f)| f.cluster_eligible)
        .map(|(r, f)| ScatterRow {
            record_id: r.record_id,
            log_weight: f.log_weight.unwrap(),
            log_value: f.log_value.unwrap(),
            cluster_id: clusters.get(&r.record_id).copied(),
            is_high_risk_hs: high_risk_hs.iter().any(|c| c == hs6(&r.hs_code)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub hs_code: String,
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Smallest group value at or above the lower fence.
    pub whisker_low: f64,
    /// Largest group value at or below the upper fence.
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Per-HS boxplot geometry: quartiles, the whiskers (extreme values still
/// inside the fences), and every value outside them.
pub fn boxplot_stats(
    prices_by_hs: &BTreeMap<String, Vec<f64>>,
    stats: &BTreeMap<String, GroupPriceStats>,
) -> Vec<BoxplotRow> {
    let mut rows = Vec::new();
    for (hs, prices) in prices_by_hs {
        let Some(s) = stats.get(hs) else { continue };
        let mut sorted = prices.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let inside: Vec<f64> = sorted
            .iter()
            .copied()
            .filter(|p| *p >= s.lower_fence && *p <= s.upper_fence)
            .collect();
        let (whisker_low, whisker_high) = match (inside.first(), inside.last()) {
            (Some(lo), Some(hi)) => (*lo, *hi),
            _ => (s.q1, s.q3),
        };
        let outliers: Vec<f64> = sorted
            .iter()
            .copied()
            .filter(|p| *p < s.lower_fence || *p > s.upper_fence)
            .collect();
        rows.push(BoxplotRow {
            hs_code: hs.clone(),
            n: s.n,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            lower_fence: s.lower_fence,
            upper_fence: s.upper_fence,
            whisker_low,
            whisker_high,
            outliers,
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteHistogram {
    pub route: RouteKey,
    /// (bin_start, bin_end, count); equal-width bins over the observed range.
    pub bins: Vec<(f64, f64, u64)>,
}

/// Histogram of anomalous prices on one route. An empty selection yields an
/// empty bin list; a degenerate range collapses to a single bin.
pub fn route_price_histogram(
    entries: &[CaseFileEntry],
    route: &RouteKey,
    n_bins: usize,
) -> RouteHistogram {
    let prices: Vec<f64> = entries
        .iter()
        .filter(|e| e.reporter == route.reporter && e.partner == route.partner)
        .map(|e| e.price_per_kg)
        .collect();
    if prices.is_empty() {
        return RouteHistogram {
            route: route.clone(),
            bins: Vec::new(),
        };
    }
    let lo = prices.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return RouteHistogram {
            route: route.clone(),
            bins: vec![(lo, hi, prices.len() as u64)],
        };
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for p in &prices {
        let mut idx = ((p - lo) / width) as usize;
        if idx >= n_bins {
            idx = n_bins - 1; // the maximum lands in the last bin
        }
        counts[idx] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect();
    RouteHistogram {
        route: route.clone(),
        bins,
    }
}

/// Everything the memo and the writers need in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub hotspots: Vec<RouteCount>,
    pub summaries: Summaries,
    pub time_series: TimeSeries,
    pub scatter: Vec<ScatterRow>,
    pub boxplots: Vec<BoxplotRow>,
    pub histogram: RouteHistogram,
    pub case_count: usize,
    pub case_total_value: f64,
}

/// Strategic plain-text memo. Every figure is taken verbatim from the bundle
/// so the memo can never disagree with the data files.
pub fn policy_memo(bundle: &ReportBundle) -> String {
    let mut exporters: Vec<(&str, f64)> = bundle
        .summaries
        .reporter_summary
        .iter()
        .filter(|r| r.flagged_value > 0.0)
        .map(|r| (r.reporter.as_str(), r.flagged_value))
        .collect();
    exporters.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));

    // destination hubs: column sums of the pair matrix
    let matrix = &bundle.summaries.pair_matrix;
    let mut hubs: Vec<(&str, f64)> = matrix
        .partners
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let total: f64 = matrix.cells.iter().map(|row| row[j]).sum();
            (p.as_str(), total)
        })
        .filter(|(_, v)| *v > 0.0)
        .collect();
    hubs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));

    let list = |items: &[(&str, f64)]| -> String {
        if items.is_empty() {
            "none identified".to_string()
        } else {
            items
                .iter()
                .take(3)
                .map(|(name, value)| format!("{name} ({} USD)", fmt_f64(*value)))
                .collect::<Vec<_>>()
                .join(", ")
        }
    };

    let mut memo = String::new();
    memo.push_str("# Policy Memo: High-Risk Trade Flows\n\n");
    memo.push_str("## Summary of Findings\n\n");
    memo.push_str(&format!(
        "- {} shipments were flagged for customs review, totaling {} USD.\n",
        bundle.case_count,
        fmt_f64(bundle.case_total_value)
    ));
    memo.push_str(&format!(
        "- Top exporter hotspots: {}.\n",
        list(&exporters)
    ));
    memo.push_str(&format!("- Top destination hubs: {}.\n", list(&hubs)));
    if let Some(top) = bundle.hotspots.first() {
        memo.push_str(&format!(
            "- Most frequent high-risk route: {} -> {} ({} flagged shipments).\n",
            top.route.reporter, top.route.partner, top.count
        ));
    }
    if !bundle.time_series.mega_flagged_months.is_empty() {
        let months: Vec<String> = bundle
            .time_series
            .mega_flagged_months
            .iter()
            .map(|(y, m)| format!("{y:04}-{m:02}"))
            .collect();
        memo.push_str(&format!(
            "- Anomalous mega-trade activity concentrated in: {}.\n",
            months.join(", ")
        ));
    }
    memo.push_str("\n## Recommended Actions\n\n");
    memo.push_str(
        "The flagged shipments above warrant targeted audits and bilateral \
         engagement with the listed hotspot jurisdictions. Customs authorities \
         should query the shipment identifiers from the case file in their \
         internal systems, prioritize physical inspection of the highest \
         composite-score entries, and open coordinated reviews of the dominant \
         routes before the next reporting cycle.\n",
    );
    memo
}

fn route_file_slug(route: &RouteKey) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect()
    };
    format!("{}_to_{}", clean(&route.reporter), clean(&route.partner))
}

// ---- file writers ----------------------------------------------------------

pub fn write_hotspots_csv(path: &Path, routes: &[RouteCount]) -> Result<()> {
    let mut out = String::from("reporter,partner,count\n");
    for r in routes {
        out.push_str(&csv_line(&[
            r.route.reporter.clone(),
            r.route.partner.clone(),
            r.count.to_string(),
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_pair_matrix_csv(path: &Path, matrix: &PairValueMatrix) -> Result<()> {
    let mut header = vec!["reporter".to_string()];
    header.extend(matrix.partners.iter().cloned());
    let mut out = csv_line(&header);
    out.push('\n');
    for (i, reporter) in matrix.reporters.iter().enumerate() {
        let mut cells = vec![reporter.clone()];
        cells.extend(matrix.cells[i].iter().map(|v| fmt_f64(*v)));
        out.push_str(&csv_line(&cells));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_reporter_summary_csv(path: &Path, rows: &[ReporterSummaryRow]) -> Result<()> {
    let mut out = String::from("reporter,record_count,avg_composite,vague_count,flagged_value\n");
    for r in rows {
        out.push_str(&csv_line(&[
            r.reporter.clone(),
            r.record_count.to_string(),
            fmt_f64(r.avg_composite),
            r.vague_count.to_string(),
            fmt_f64(r.flagged_value),
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_hs_ranking_csv(path: &Path, rows: &[HsRiskRow]) -> Result<()> {
    let mut out = String::from("hs_code,n,avg_composite\n");
    for r in rows {
        out.push_str(&csv_line(&[
            r.hs_code.clone(),
            r.n.to_string(),
            fmt_f64(r.avg_composite),
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_sankey_csv(path: &Path, rows: &[RouteCount]) -> Result<()> {
    let mut out = String::from("source,target,anomalous_shipments\n");
    for r in rows {
        out.push_str(&csv_line(&[
            r.route.reporter.clone(),
            r.route.partner.clone(),
            r.count.to_string(),
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_time_series_json(path: &Path, series: &TimeSeries) -> Result<()> {
    let json = serde_json::to_string_pretty(series)
        .map_err(|e| Error::parameter(format!("time series serialization: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn write_scatter_csv(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut out = String::from("record_id,log_weight,log_value,cluster_id,is_high_risk_hs\n");
    for r in rows {
        out.push_str(&csv_line(&[
            r.record_id.to_string(),
            fmt_f64(r.log_weight),
            fmt_f64(r.log_value),
            r.cluster_id.map(|c| c.to_string()).unwrap_or_default(),
            r.is_high_risk_hs.to_string(),
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_boxplots_csv(path: &Path, rows: &[BoxplotRow]) -> Result<()> {
    let mut out = String::from(
        "hs_code,n,q1,median,q3,lower_fence,upper_fence,whisker_low,whisker_high,outliers\n",
    );
    for r in rows {
        let outliers = r
            .outliers
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&csv_line(&[
            r.hs_code.clone(),
            r.n.to_string(),
            fmt_f64(r.q1),
            fmt_f64(r.median),
            fmt_f64(r.q3),
            fmt_f64(r.lower_fence),
            fmt_f64(r.upper_fence),
            fmt_f64(r.whisker_low),
            fmt_f64(r.whisker_high),
            outliers,
        ]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes `plot_histogram_<route>.csv`; returns the file name used.
pub fn write_histogram_csv(out_dir: &Path, histogram: &RouteHistogram) -> Result<String> {
    let name = format!("plot_histogram_{}.csv", route_file_slug(&histogram.route));
    let mut out = String::from("bin_start,bin_end,count\n");
    for (lo, hi, count) in &histogram.bins {
        out.push_str(&csv_line(&[fmt_f64(*lo), fmt_f64(*hi), count.to_string()]));
        out.push('\n');
    }
    std::fs::write(out_dir.join(&name), out)?;
    Ok(name)
}

pub fn write_memo(path: &Path, memo: &str) -> Result<()> {
    std::fs::write(path, memo)?;
    Ok(())
}
