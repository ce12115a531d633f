//! Isolation Forest over (log_value, log_weight) for "mega-trade" detection,
//! plus temporal aggregation of the detected events and robust spike flagging.
//!
//! Forest construction follows the original formulation: each tree is grown
//! on a random subsample, splitting on a uniformly random feature at a
//! uniformly random value inside that feature's node-local range, down to
//! `ceil(log2(subsample))` levels or single-point nodes. The anomaly score is
//! `2^(-E[h(x)]/c(psi))` with the usual average-path-length adjustment at
//! external nodes.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Period;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;
pub const DEFAULT_CONTAMINATION: f64 = 0.01;

const EULER_MASCHERONI: f64 = 0.5772156649;

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points; the normalizing constant of the anomaly score. `c(1) = 0`.
pub fn avg_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    2.0 * ((nf - 1.0).ln() + EULER_MASCHERONI) - 2.0 * (nf - 1.0) / nf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum IsoNode {
    Split {
        feature: usize,
        value: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        size: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IsoTree {
    nodes: Vec<IsoNode>,
}

impl IsoTree {
    fn path_length(&self, point: [f64; 2]) -> f64 {
        let mut idx = 0usize;
        let mut depth = 0.0;
        loop {
            match &self.nodes[idx] {
                IsoNode::Leaf { size } => {
                    return depth + avg_path_length(*size as usize);
                }
                IsoNode::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    idx = if point[*feature] < *value {
                        *left as usize
                    } else {
                        *right as usize
                    };
                    depth += 1.0;
                }
            }
        }
    }

    #[cfg(test)]
    fn max_depth(&self) -> usize {
        fn walk(nodes: &[IsoNode], idx: usize, depth: usize) -> usize {
            match &nodes[idx] {
                IsoNode::Leaf { .. } => depth,
                IsoNode::Split { left, right, .. } => walk(nodes, *left as usize, depth + 1)
                    .max(walk(nodes, *right as usize, depth + 1)),
            }
        }
        walk(&self.nodes, 0, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub n_trees: usize,
    /// Requested subsample size.
    pub subsample_size: usize,
    /// Actual per-tree sample size, `min(subsample_size, n_points)`.
    pub effective_subsample: usize,
    /// Trees stop splitting at this depth: `ceil(log2(effective_subsample))`.
    pub height_limit: usize,
    pub seed: u64,
    trees: Vec<IsoTree>,
}

fn build_node(
    points: &[[f64; 2]],
    idxs: &mut [u32],
    depth: usize,
    height_limit: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<IsoNode>,
) -> u32 {
    if depth >= height_limit || idxs.len() <= 1 {
        nodes.push(IsoNode::Leaf {
            size: idxs.len() as u32,
        });
        return (nodes.len() - 1) as u32;
    }

    // node-local ranges; only features that actually vary are splittable
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in idxs.iter() {
        for f in 0..2 {
            let v = points[i as usize][f];
            lo[f] = lo[f].min(v);
            hi[f] = hi[f].max(v);
        }
    }
    let candidates: Vec<usize> = (0..2).filter(|&f| hi[f] > lo[f]).collect();
    if candidates.is_empty() {
        nodes.push(IsoNode::Leaf {
            size: idxs.len() as u32,
        });
        return (nodes.len() - 1) as u32;
    }

    let feature = candidates[rng.gen_range(0..candidates.len())];
    let value = rng.gen_range(lo[feature]..hi[feature]);

    // partition in place: < value goes left
    let mut split = 0;
    for i in 0..idxs.len() {
        if points[idxs[i] as usize][feature] < value {
            idxs.swap(i, split);
            split += 1;
        }
    }

    let slot = nodes.len();
    nodes.push(IsoNode::Leaf { size: 0 }); // placeholder
    let (left_idxs, right_idxs) = idxs.split_at_mut(split);
    let left = build_node(points, left_idxs, depth + 1, height_limit, rng, nodes);
    let right = build_node(points, right_idxs, depth + 1, height_limit, rng, nodes);
    nodes[slot] = IsoNode::Split {
        feature,
        value,
        left,
        right,
    };
    slot as u32
}

/// Partial Fisher-Yates: the first `take` entries of a shuffled index array.
fn sample_indices(n: usize, take: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut idxs: Vec<u32> = (0..n as u32).collect();
    for i in 0..take {
        let j = rng.gen_range(i..n);
        idxs.swap(i, j);
    }
    idxs.truncate(take);
    idxs
}

/// Grow a forest. Per-tree RNGs derive deterministically from the master
/// seed, so trees are independent yet the whole fit is reproducible.
pub fn fit_isolation_forest(
    points: &[[f64; 2]],
    n_trees: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<IsolationForestModel> {
    if points.len() < 2 {
        return Err(Error::parameter("isolation forest needs at least 2 points"));
    }
    if n_trees == 0 || subsample_size < 2 {
        return Err(Error::parameter(
            "isolation forest needs n_trees >= 1 and subsample >= 2",
        ));
    }
    let effective = subsample_size.min(points.len());
    let height_limit = (effective as f64).log2().ceil() as usize;

    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut idxs = sample_indices(points.len(), effective, &mut rng);
            let mut nodes = Vec::new();
            build_node(points, &mut idxs, 0, height_limit, &mut rng, &mut nodes);
            IsoTree { nodes }
        })
        .collect();

    Ok(IsolationForestModel {
        n_trees,
        subsample_size,
        effective_subsample: effective,
        height_limit,
        seed,
        trees,
    })
}

/// Anomaly score in (0, 1]; larger is more isolated.
pub fn score(model: &IsolationForestModel, point: [f64; 2]) -> Result<f64> {
    if !point[0].is_finite() || !point[1].is_finite() {
        return Err(Error::parameter("point must be finite"));
    }
    let mean_path: f64 = model
        .trees
        .iter()
        .map(|t| t.path_length(point))
        .sum::<f64>()
        / model.trees.len() as f64;
    Ok(2f64.powf(-mean_path / avg_path_length(model.effective_subsample)))
}

/// A cluster-eligible record presented for mega-trade detection.
#[derive(Debug, Clone, PartialEq)]
pub struct MegaCandidate {
    pub record_id: u64,
    pub point: [f64; 2],
    pub period: Period,
    pub reporter: String,
    pub primary_value_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MegaTradeEvent {
    pub record_id: u64,
    pub score: f64,
    pub period: Period,
    pub reporter: String,
    pub primary_value_usd: f64,
}

/// Flag exactly `ceil(contamination * n)` highest-scoring candidates.
/// Ties at the cutoff break toward higher value, then lower record id.
/// Output is sorted by record_id.
pub fn detect_mega_trades(
    candidates: &[MegaCandidate],
    model: &IsolationForestModel,
    contamination: f64,
) -> Result<Vec<MegaTradeEvent>> {
    if !(contamination > 0.0 && contamination < 0.5) {
        return Err(Error::parameter(
            "contamination must lie strictly between 0 and 0.5",
        ));
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let take = (contamination * candidates.len() as f64).ceil() as usize;
    let mut scored: Vec<(f64, &MegaCandidate)> = candidates
        .iter()
        .map(|c| Ok((score(model, c.point)?, c)))
        .collect::<Result<_>>()?;
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.partial_cmp(sa)
            .unwrap()
            .then(
                b.primary_value_usd
                    .partial_cmp(&a.primary_value_usd)
                    .unwrap(),
            )
            .then(a.record_id.cmp(&b.record_id))
    });
    let mut events: Vec<MegaTradeEvent> = scored
        .into_iter()
        .take(take)
        .map(|(s, c)| MegaTradeEvent {
            record_id: c.record_id,
            score: s,
            period: c.period,
            reporter: c.reporter.clone(),
            primary_value_usd: c.primary_value_usd,
        })
        .collect();
    events.sort_by_key(|e| e.record_id);
    Ok(events)
}

/// One month of the mega-trade series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyMega {
    pub year: i32,
    pub month: u8,
    pub count: usize,
    pub total_value: f64,
}

/// Value of one reporter's mega-trades in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlyReporterValue {
    pub year: i32,
    pub reporter: String,
    pub count: usize,
    pub total_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlyMega {
    pub year: i32,
    pub count: usize,
    pub total_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpikeReport {
    /// Zero-filled monthly series spanning the observed range. Annual-only
    /// events (no month) appear in the yearly aggregates but not here.
    pub monthly: Vec<MonthlyMega>,
    /// Months whose total value exceeds median + 3 * 1.4826 * MAD.
    pub flagged_months: Vec<(i32, u8)>,
    pub yearly: Vec<YearlyMega>,
    /// Per-reporter yearly decomposition; sums to the yearly totals exactly.
    pub by_reporter: Vec<YearlyReporterValue>,
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Aggregate events into monthly/yearly series and flag spike months with the
/// robust median + 3*MAD rule (the spike itself cannot inflate the threshold
/// the way it would inflate a standard deviation).
pub fn temporal_spikes(events: &[MegaTradeEvent]) -> SpikeReport {
    if events.is_empty() {
        return SpikeReport::default();
    }

    let mut monthly_map: BTreeMap<(i32, u8), (usize, f64)> = BTreeMap::new();
    // reporter -> year -> (count, value); reporter-major so yearly totals are
    // computed from the same addends in the same order as the decomposition
    let mut reporter_year: BTreeMap<&str, BTreeMap<i32, (usize, f64)>> = BTreeMap::new();
    for e in events {
        if let Some(m) = e.period.month {
            let slot = monthly_map.entry((e.period.year, m)).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += e.primary_value_usd;
        }
        let slot = reporter_year
            .entry(&e.reporter)
            .or_default()
            .entry(e.period.year)
            .or_insert((0, 0.0));
        slot.0 += 1;
        slot.1 += e.primary_value_usd;
    }

    // zero-fill months across the observed range
    let mut monthly = Vec::new();
    if let (Some(&first), Some(&last)) =
        (monthly_map.keys().next(), monthly_map.keys().next_back())
    {
        let (mut y, mut m) = first;
        loop {
            let (count, total_value) = monthly_map.get(&(y, m)).copied().unwrap_or((0, 0.0));
            monthly.push(MonthlyMega {
                year: y,
                month: m,
                count,
                total_value,
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

    let mut values: Vec<f64> = monthly.iter().map(|m| m.total_value).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let flagged_months = if values.is_empty() {
        Vec::new()
    } else {
        let med = median_sorted(&values);
        let mut devs: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
        devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mad = median_sorted(&devs);
        let threshold = med + 3.0 * 1.4826 * mad;
        monthly
            .iter()
            .filter(|m| m.total_value > threshold)
            .map(|m| (m.year, m.month))
            .collect()
    };

    let mut by_reporter = Vec::new();
    let mut yearly_map: BTreeMap<i32, (usize, f64)> = BTreeMap::new();
    for (reporter, years) in &reporter_year {
        for (year, (count, value)) in years {
            by_reporter.push(YearlyReporterValue {
                year: *year,
                reporter: reporter.to_string(),
                count: *count,
                total_value: *value,
            });
            let slot = yearly_map.entry(*year).or_insert((0, 0.0));
            slot.0 += count;
            slot.1 += value;
        }
    }
    by_reporter.sort_by(|a, b| (a.year, &a.reporter).cmp(&(b.year, &b.reporter)));
    let yearly = yearly_map
        .into_iter()
        .map(|(year, (count, total_value))| YearlyMega {
            year,
            count,
            total_value,
        })
        .collect();

    SpikeReport {
        monthly,
        flagged_months,
        yearly,
        by_reporter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_path_length_closed_forms() {
        assert_eq!(avg_path_length(0), 0.0);
        assert_eq!(avg_path_length(1), 0.0);
        // c(2) = 2*(ln 1 + gamma) - 1
        assert!((avg_path_length(2) - 0.15443).abs() < 1e-5);
        // strictly increasing for n >= 2
        for n in 2..200 {
            assert!(avg_path_length(n + 1) > avg_path_length(n));
        }
    }

    #[test]
    fn identical_points_give_single_leaf_trees_and_equal_scores() {
        let points = vec![[1.0, 1.0]; 50];
        let model = fit_isolation_forest(&points, 20, 16, 5).unwrap();
        for tree in &model.trees {
            assert_eq!(tree.nodes.len(), 1);
        }
        let s0 = score(&model, [1.0, 1.0]).unwrap();
        // E[h] = c(psi) so the score is exactly 0.5
        assert!((s0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_reproduces_forest_exactly() {
        let points: Vec<[f64; 2]> = (0..300)
            .map(|i| [((i * 37) % 100) as f64 * 0.01, ((i * 61) % 100) as f64 * 0.01])
            .collect();
        let a = fit_isolation_forest(&points, 25, 64, 123).unwrap();
        let b = fit_isolation_forest(&points, 25, 64, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tree_depth_respects_height_limit() {
        let points: Vec<[f64; 2]> = (0..500)
            .map(|i| [(i as f64).sin(), (i as f64).cos()])
            .collect();
        let model = fit_isolation_forest(&points, 30, 256, 7).unwrap();
        assert_eq!(model.height_limit, 8);
        for tree in &model.trees {
            assert!(tree.max_depth() <= model.height_limit);
        }
    }

    #[test]
    fn planted_far_outliers_rank_at_top() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut points: Vec<[f64; 2]> = (0..1000)
            .map(|_| {
                // Box-Muller standard normals
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                let r = (-2.0 * u1.ln()).sqrt();
                [
                    r * (2.0 * std::f64::consts::PI * u2).cos(),
                    r * (2.0 * std::f64::consts::PI * u2).sin(),
                ]
            })
            .collect();
        for i in 0..10 {
            let angle = i as f64 * 0.63;
            points.push([9.0 * angle.cos(), 9.0 * angle.sin()]);
        }
        let model = fit_isolation_forest(&points, DEFAULT_TREES, DEFAULT_SUBSAMPLE, 11).unwrap();
        let mut scores: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, score(&model, *p).unwrap()))
            .collect();
        for (_, s) in &scores {
            assert!(*s > 0.0 && *s <= 1.0);
        }
        scores.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let cutoff = (points.len() as f64 * 0.02).ceil() as usize;
        let top: Vec<usize> = scores[..cutoff].iter().map(|(i, _)| *i).collect();
        for planted in 1000..1010 {
            assert!(top.contains(&planted), "outlier {planted} not in top 2%");
        }
        // a planted far outlier scores above the median inlier score
        let median_inlier = {
            let mut inliers: Vec<f64> = scores
                .iter()
                .filter(|(i, _)| *i < 1000)
                .map(|(_, s)| *s)
                .collect();
            inliers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            inliers[inliers.len() / 2]
        };
        let planted_score = score(&model, points[1000]).unwrap();
        assert!(planted_score > median_inlier);
    }

    fn candidate(id: u64, value: f64, point: [f64; 2]) -> MegaCandidate {
        MegaCandidate {
            record_id: id,
            point,
            period: Period::monthly(2021, 2),
            reporter: "Arland".into(),
            primary_value_usd: value,
        }
    }

    #[test]
    fn detection_count_is_contamination_quantile() {
        let points: Vec<[f64; 2]> = (0..1000).map(|i| [i as f64 * 0.001, 0.5]).collect();
        let model = fit_isolation_forest(&points, 50, 128, 3).unwrap();
        let candidates: Vec<MegaCandidate> = points
            .iter()
            .enumerate()
            .map(|(i, p)| candidate(i as u64, i as f64, *p))
            .collect();
        let events = detect_mega_trades(&candidates, &model, 0.01).unwrap();
        assert_eq!(events.len(), 10);
        assert!(detect_mega_trades(&[], &model, 0.01).unwrap().is_empty());
        assert!(detect_mega_trades(&candidates, &model, 0.6).is_err());
    }

    #[test]
    fn detection_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<[f64; 2]> = (0..500)
            .map(|_| [rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0])
            .collect();
        let model = fit_isolation_forest(&points, 40, 64, 17).unwrap();
        let candidates: Vec<MegaCandidate> = points
            .iter()
            .enumerate()
            .map(|(i, p)| candidate(i as u64, (i % 7) as f64, *p))
            .collect();
        let events = detect_mega_trades(&candidates, &model, 0.05).unwrap();

        // oracle: independently sort by (score, value, -id) and take the top
        let mut oracle: Vec<(f64, f64, u64)> = candidates
            .iter()
            .map(|c| (score(&model, c.point).unwrap(), c.primary_value_usd, c.record_id))
            .collect();
        oracle.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(b.1.partial_cmp(&a.1).unwrap())
                .then(a.2.cmp(&b.2))
        });
        let take = (0.05f64 * 500.0).ceil() as usize;
        let mut expected: Vec<u64> = oracle[..take].iter().map(|(_, _, id)| *id).collect();
        expected.sort_unstable();
        let got: Vec<u64> = events.iter().map(|e| e.record_id).collect();
        assert_eq!(got, expected);
    }

    fn event(year: i32, month: u8, reporter: &str, value: f64) -> MegaTradeEvent {
        MegaTradeEvent {
            record_id: 0,
            score: 0.9,
            period: Period::monthly(year, month),
            reporter: reporter.into(),
            primary_value_usd: value,
        }
    }

    #[test]
    fn constant_series_has_no_spikes() {
        let events: Vec<MegaTradeEvent> =
            (1..=12).map(|m| event(2021, m, "Arland", 100.0)).collect();
        let report = temporal_spikes(&events);
        assert_eq!(report.monthly.len(), 12);
        assert!(report.flagged_months.is_empty());
    }

    #[test]
    fn single_tenfold_month_is_flagged() {
        // eleven months at 100, one at 1000: median 100, MAD 0, threshold 100
        let mut events: Vec<MegaTradeEvent> =
            (1..=11).map(|m| event(2021, m, "Arland", 100.0)).collect();
        events.push(event(2021, 12, "Arland", 1000.0));
        let report = temporal_spikes(&events);
        assert_eq!(report.flagged_months, vec![(2021, 12)]);
    }

    #[test]
    fn decomposition_sums_to_yearly_totals() {
        let events = vec![
            event(2020, 1, "Arland", 10.0),
            event(2020, 5, "Bellonia", 20.0),
            event(2021, 2, "Arland", 40.0),
            event(2021, 2, "Corvia", 5.0),
        ];
        let report = temporal_spikes(&events);
        for y in &report.yearly {
            let sum: f64 = report
                .by_reporter
                .iter()
                .filter(|r| r.year == y.year)
                .map(|r| r.total_value)
                .sum();
            assert_eq!(sum, y.total_value);
            let count: usize = report
                .by_reporter
                .iter()
                .filter(|r| r.year == y.year)
                .map(|r| r.count)
                .sum();
            assert_eq!(count, y.count);
        }
        // gap months are zero-filled
        assert_eq!(report.monthly.len(), 14);
    }
}
