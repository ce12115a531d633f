//! Seeded synthetic trade-dataset generator with planted ground truth.
//!
//! The generator exists to exercise the pipeline, not to imitate real trade
//! statistics. Plants are placed far beyond their detection thresholds
//! (price outliers at five IQRs past the group median, mega-trades eight
//! sigma out in log space) so a missed plant indicates a bug rather than
//! statistical bad luck. Everything derives from one seed; the same spec
//! yields byte-identical CSV output.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csv_util::{csv_line, fmt_f64};
use crate::error::{Error, Result};
use crate::price_anomaly::quantile_sorted;

/// What to plant and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    /// Total data lines emitted, including malformed ones.
    pub n_records: usize,
    pub n_price_outliers: usize,
    pub n_vague: usize,
    pub n_mega_trades: usize,
    /// (general population, high-risk population) log-log slopes.
    pub planted_slopes: (f64, f64),
    /// Country groups; flagged routes stay inside a group with
    /// `intra_block_bias` probability.
    pub community_blocks: Vec<Vec<String>>,
    pub intra_block_bias: f64,
    /// Fraction of data lines rendered malformed.
    pub defect_rate: f64,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            n_records: 1000,
            n_price_outliers: 40,
            n_vague: 15,
            n_mega_trades: 5,
            planted_slopes: (1.0, 1.5),
            community_blocks: default_blocks(),
            intra_block_bias: 0.8,
            defect_rate: 0.05,
            seed: 7,
        }
    }
}

pub fn default_blocks() -> Vec<Vec<String>> {
    vec![
        vec!["Arland", "Bellonia", "Corvia", "Dalmora", "Elvia"],
        vec!["Feldova", "Grantos", "Halvia", "Istravia", "Jotania"],
        vec!["Kestrovia", "Lumara", "Moravik", "Nordavia", "Ostrel"],
    ]
    .into_iter()
    .map(|b| b.into_iter().map(String::from).collect())
    .collect()
}

/// Where every plant went.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub outlier_record_ids: Vec<u64>,
    pub vague_record_ids: Vec<u64>,
    pub mega_record_ids: Vec<u64>,
    pub community_of_country: BTreeMap<String, usize>,
    /// (general, high-risk) slopes the populations were generated with.
    pub true_slopes: (f64, f64),
    /// 1-based input line number -> defect category name.
    pub defect_lines: Vec<(u64, String)>,
    /// Month holding every planted mega-trade.
    pub spike_month: Option<(i32, u8)>,
    /// Route carrying the plurality of planted outliers.
    pub dominant_route: Option<(String, String)>,
    /// Reporter issuing most vague entries.
    pub vague_hotspot: Option<String>,
}

const NORMAL_CODES: [(&str, f64); 8] = [
    ("290311", 2.5),
    ("290312", 4.0),
    ("290319", 6.5),
    ("290341", 9.0),
    ("290342", 14.0),
    ("290349", 22.0),
    ("382471", 35.0),
    ("382472", 55.0),
];

const HIGH_RISK_CODES: [(&str, f64); 4] = [
    ("290377", 18.0),
    ("290379", 27.0),
    ("382478", 42.0),
    ("382499", 64.0),
];

const CLEAN_DESCRIPTIONS: [&str; 8] = [
    "Chlorodifluoromethane (HCFC-22), 99.9% pure",
    "Trifluoromethane refrigerant gas, cylinders",
    "Carbon tetrachloride, technical grade",
    "Dichloromethane solvent in steel drums",
    "1,1,1-Trichloroethane, stabilized",
    "Bromomethane fumigant, pressurized containers",
    "Refrigerant gas R-410A, sealed cylinders",
    "Pentafluoroethane (HFC-125), bulk shipment",
];

const VAGUE_DESCRIPTIONS: [&str; 4] = [
    "Mixtures containing halogenated derivatives of methane",
    "Chemical products n.e.c.",
    "Preparations and compounds, not elsewhere specified",
    "Halogenated hydrocarbon blends, unspecified grade",
];

const MONTHS_SPAN: usize = 36; // 2020-01 .. 2022-12
const SPIKE_MONTH: (i32, u8) = (2021, 2);
const LOG_WEIGHT_MEAN: f64 = 2.5;
const LOG_WEIGHT_SIGMA: f64 = 0.6;
const HIGH_RISK_LOG_WEIGHT_SIGMA: f64 = 0.3;
const MEGA_SIGMA_SHIFT: f64 = 8.0;

#[derive(Debug, Clone)]
struct Row {
    period: (i32, u8),
    reporter: String,
    partner: String,
    flow: &'static str,
    hs_code: String,
    description: String,
    value: f64,
    weight: f64,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn month_of(index: usize) -> (i32, u8) {
    (2020 + (index / 12) as i32, (index % 12) as u8 + 1)
}

/// Sample `take` distinct values from `pool` (partial Fisher-Yates).
fn sample_distinct(pool: &mut Vec<usize>, take: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(take);
    for _ in 0..take {
        let j = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(j));
    }
    out.sort_unstable();
    out
}

fn render_row(row: &Row) -> String {
    csv_line(&[
        format!("{:04}{:02}", row.period.0, row.period.1),
        row.reporter.clone(),
        row.partner.clone(),
        row.flow.to_string(),
        row.hs_code.clone(),
        row.description.clone(),
        fmt_f64(row.value),
        fmt_f64(row.weight),
    ])
}

const DEFECT_CATEGORIES: [&str; 5] = [
    "FieldCount",
    "NumericParse",
    "MissingRequired",
    "BadHsCode",
    "EncodingError",
];

/// Render a defective variant of `row` for the given category. Returned as
/// raw bytes because the encoding defect is invalid UTF-8 by design. The
/// description is swapped for a comma-free one so field positions stay
/// trivially countable while corrupting specific cells.
fn render_defect(row: &Row, category: &str) -> Vec<u8> {
    let mut damaged = row.clone();
    damaged.description = "unlabeled consignment".into();
    let row = &damaged.clone();
    match category {
        "FieldCount" => {
            let line = render_row(row);
            let cut = line.rfind(',').unwrap();
            return line[..cut].as_bytes().to_vec();
        }
        "NumericParse" => damaged.value = -5.0,
        "MissingRequired" => damaged.reporter = String::new(),
        "BadHsCode" => damaged.hs_code = "99XY12".into(),
        "EncodingError" => {
            let mut bytes = Vec::new();
            let line = render_row(row);
            // splice a raw invalid byte into the value cell (7th field)
            let mut commas = 0;
            for b in line.bytes() {
                bytes.push(b);
                if b == b',' {
                    commas += 1;
                    if commas == 6 {
                        bytes.push(b'1');
                        bytes.push(0xFF);
                    }
                }
            }
            return bytes;
        }
        other => panic!("unknown defect category {other}"),
    }
    render_row(&damaged).into_bytes()
}

/// Generate the dataset and its ground truth. Deterministic per spec.
pub fn generate_dataset(spec: &PlantSpec) -> Result<(Vec<u8>, GroundTruth)> {
    if spec.n_records == 0 {
        return Err(Error::parameter("n_records must be positive"));
    }
    if !(0.0..1.0).contains(&spec.defect_rate) {
        return Err(Error::parameter("defect_rate must lie in [0, 1)"));
    }
    if spec.community_blocks.len() < 2 || spec.community_blocks.iter().any(|b| b.len() < 2) {
        return Err(Error::parameter(
            "need at least two community blocks of two countries each",
        ));
    }
    let n_defects = (spec.defect_rate * spec.n_records as f64).round() as usize;
    let n_valid = spec.n_records - n_defects;
    let n_plants = spec.n_price_outliers + spec.n_vague + spec.n_mega_trades;
    if n_plants > n_valid {
        return Err(Error::parameter(format!(
            "{n_plants} plants exceed {n_valid} valid records"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let countries: Vec<(String, usize)> = spec
        .community_blocks
        .iter()
        .enumerate()
        .flat_map(|(b, group)| group.iter().map(move |c| (c.clone(), b)))
        .collect();
    let (slope_general, slope_high) = spec.planted_slopes;

    // baseline rows
    let mut rows: Vec<Row> = Vec::with_capacity(n_valid);
    for _ in 0..n_valid {
        let (reporter, block) = countries[rng.gen_range(0..countries.len())].clone();
        let partner = if rng.gen::<f64>() < 0.05 {
            "World".to_string()
        } else if rng.gen::<f64>() < spec.intra_block_bias {
            let group = &spec.community_blocks[block];
            loop {
                let p = &group[rng.gen_range(0..group.len())];
                if *p != reporter {
                    break p.clone();
                }
            }
        } else {
            loop {
                let (p, _) = &countries[rng.gen_range(0..countries.len())];
                if *p != reporter {
                    break p.clone();
                }
            }
        };
        let high_risk = rng.gen::<f64>() < 0.10;
        let (code, base_price, sigma_w, slope) = if high_risk {
            let (c, b) = HIGH_RISK_CODES[rng.gen_range(0..HIGH_RISK_CODES.len())];
            (c, b, HIGH_RISK_LOG_WEIGHT_SIGMA, slope_high)
        } else {
            let (c, b) = NORMAL_CODES[rng.gen_range(0..NORMAL_CODES.len())];
            (c, b, LOG_WEIGHT_SIGMA, slope_general)
        };
        let log_weight = LOG_WEIGHT_MEAN + sigma_w * gaussian(&mut rng);
        let weight = 10f64.powf(log_weight);
        let band = 0.8 + 0.4 * rng.gen::<f64>();
        // log10(value) = slope * log10(weight) + log10(base * band)
        let value = base_price * band * weight.powf(slope);
        let description = CLEAN_DESCRIPTIONS[rng.gen_range(0..CLEAN_DESCRIPTIONS.len())];
        rows.push(Row {
            period: month_of(rng.gen_range(0..MONTHS_SPAN)),
            reporter,
            partner,
            flow: if rng.gen::<bool>() { "Import" } else { "Export" },
            hs_code: code.to_string(),
            description: description.to_string(),
            value,
            weight,
        });
    }

    // choose disjoint plant targets; price and mega plants need normal codes
    let normal_set: Vec<usize> = (0..n_valid)
        .filter(|&i| NORMAL_CODES.iter().any(|(c, _)| *c == rows[i].hs_code))
        .collect();
    if normal_set.len() < spec.n_price_outliers + spec.n_mega_trades {
        return Err(Error::parameter(
            "not enough normal-code records to hold the requested plants",
        ));
    }
    let mut normal_pool = normal_set;
    let outlier_ids = sample_distinct(&mut normal_pool, spec.n_price_outliers, &mut rng);
    let mega_ids = sample_distinct(&mut normal_pool, spec.n_mega_trades, &mut rng);
    let mut rest_pool: Vec<usize> = (0..n_valid)
        .filter(|i| !outlier_ids.contains(i) && !mega_ids.contains(i))
        .collect();
    let vague_ids = sample_distinct(&mut rest_pool, spec.n_vague, &mut rng);

    // price outliers: push the price five-plus IQRs above the group median
    let dominant_route = (
        spec.community_blocks[0][0].clone(),
        spec.community_blocks[0][1].clone(),
    );
    let group_stats = |rows: &[Row]| -> BTreeMap<String, (f64, f64)> {
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in rows {
            groups
                .entry(r.hs_code.clone())
                .or_default()
                .push(r.value / r.weight);
        }
        groups
            .into_iter()
            .map(|(code, mut prices)| {
                prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let q1 = quantile_sorted(&prices, 0.25);
                let median = quantile_sorted(&prices, 0.50);
                let q3 = quantile_sorted(&prices, 0.75);
                (code, (median, (q3 - q1).max(median * 0.05)))
            })
            .collect()
    };
    let baseline_stats = group_stats(&rows);
    for (k, &i) in outlier_ids.iter().enumerate() {
        let row = &mut rows[i];
        if row.weight < 1.0 {
            row.weight = 1.0 + 9.0 * rng.gen::<f64>();
        }
        let (median, iqr) = baseline_stats[&row.hs_code];
        let price = median + (5.0 + 3.0 * rng.gen::<f64>()) * iqr;
        row.value = price * row.weight;
        if k * 10 < spec.n_price_outliers * 4 {
            // 40% of outliers ride the dominant route
            row.reporter = dominant_route.0.clone();
            row.partner = dominant_route.1.clone();
        }
    }

    // mega-trades: eight sigma out along the weight axis at mid-band price,
    // all in the spike month, one dominant reporter
    let mega_reporter = spec.community_blocks[1][0].clone();
    for (k, &i) in mega_ids.iter().enumerate() {
        let row = &mut rows[i];
        let base = NORMAL_CODES
            .iter()
            .find(|(c, _)| *c == row.hs_code)
            .map(|(_, b)| *b)
            .unwrap();
        let log_weight = LOG_WEIGHT_MEAN + MEGA_SIGMA_SHIFT * LOG_WEIGHT_SIGMA;
        row.weight = 10f64.powf(log_weight) * (1.0 + 0.05 * k as f64);
        row.value = base * row.weight.powf(slope_general);
        row.period = SPIKE_MONTH;
        if k % 5 != 4 {
            row.reporter = mega_reporter.clone();
        }
    }

    // vague descriptions; one reporter issues 60% of them
    let vague_hotspot = spec.community_blocks[1][1].clone();
    for (k, &i) in vague_ids.iter().enumerate() {
        let row = &mut rows[i];
        row.description = VAGUE_DESCRIPTIONS[rng.gen_range(0..VAGUE_DESCRIPTIONS.len())].into();
        if k * 10 < spec.n_vague * 6 {
            row.reporter = vague_hotspot.clone();
        }
    }

    // verify every planted outlier clears the final Tukey fences; plants can
    // shift the quartiles, so nudge any stragglers further out
    for _ in 0..8 {
        let final_stats = {
            let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in &rows {
                groups
                    .entry(r.hs_code.clone())
                    .or_default()
                    .push(r.value / r.weight);
            }
            groups
                .into_iter()
                .map(|(code, mut prices)| {
                    prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let q1 = quantile_sorted(&prices, 0.25);
                    let q3 = quantile_sorted(&prices, 0.75);
                    (code, q3 + 1.5 * (q3 - q1))
                })
                .collect::<BTreeMap<String, f64>>()
        };
        let mut all_clear = true;
        for &i in &outlier_ids {
            let row = &mut rows[i];
            let price = row.value / row.weight;
            let fence = final_stats[&row.hs_code];
            if price <= fence {
                row.value = (fence * 2.0) * row.weight;
                all_clear = false;
            }
        }
        if all_clear {
            break;
        }
    }

    // defect line positions among all data lines
    let mut positions: Vec<usize> = (0..spec.n_records).collect();
    let defect_positions = sample_distinct(&mut positions, n_defects, &mut rng);

    // emit: header is line 1; data line at position p is line p + 2
    let header = "period,reporterDesc,partnerDesc,flowDesc,cmdCode,cmdDesc,primaryValue,netWgt";
    let mut csv: Vec<u8> = format!("{header}\n").into_bytes();
    let mut defect_lines = Vec::new();
    let mut valid_cursor = 0usize;
    let mut defect_cursor = 0usize;
    for position in 0..spec.n_records {
        if defect_cursor < defect_positions.len() && defect_positions[defect_cursor] == position {
            let category = DEFECT_CATEGORIES[defect_cursor % DEFECT_CATEGORIES.len()];
            // corrupt a plausible row that is NOT part of the valid stream
            let template = &rows[valid_cursor.min(rows.len() - 1)];
            csv.extend_from_slice(&render_defect(template, category));
            csv.push(b'\n');
            defect_lines.push((position as u64 + 2, category.to_string()));
            defect_cursor += 1;
        } else {
            csv.extend_from_slice(render_row(&rows[valid_cursor]).as_bytes());
            csv.push(b'\n');
            valid_cursor += 1;
        }
    }
    debug_assert_eq!(valid_cursor, n_valid);

    let truth = GroundTruth {
        outlier_record_ids: outlier_ids.iter().map(|&i| i as u64).collect(),
        vague_record_ids: vague_ids.iter().map(|&i| i as u64).collect(),
        mega_record_ids: mega_ids.iter().map(|&i| i as u64).collect(),
        community_of_country: countries.into_iter().collect(),
        true_slopes: spec.planted_slopes,
        defect_lines,
        spike_month: (spec.n_mega_trades > 0).then_some(SPIKE_MONTH),
        dominant_route: (spec.n_price_outliers > 0).then_some(dominant_route),
        vague_hotspot: (spec.n_vague > 0).then_some(vague_hotspot),
    };
    Ok((csv, truth))
}
