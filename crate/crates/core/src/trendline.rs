//! Value-to-weight trendline comparison: ordinary least squares of log_value
//! on log_weight for the whole dataset versus the high-risk HS codes, and the
//! slope divergence between the two fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fig 4's labeled high-risk markers.
pub const DEFAULT_HIGH_RISK_HS: [&str; 4] = ["290377", "290379", "382478", "382499"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PopulationTag {
    All,
    HighRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendlineFit {
    pub population: PopulationTag,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Mean position of one high-risk code's records, for plot overlays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeMarker {
    pub hs6: String,
    pub mean_log_weight: f64,
    pub mean_log_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub fit_all: TrendlineFit,
    pub fit_highrisk: TrendlineFit,
    pub slope_divergence: f64,
    pub high_risk_hs_codes: Vec<String>,
    pub markers: Vec<CodeMarker>,
    pub warning: Option<String>,
}

/// One row of the regression input: (log_weight, log_value, hs_code).
#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    pub log_weight: f64,
    pub log_value: f64,
    pub hs_code: String,
}

/// Closed-form least squares of y on x. Needs two points and nonzero
/// x-variance; a zero total sum of squares defines r_squared as 1.
pub fn fit_ols(points: &[(f64, f64)], population: PopulationTag) -> Result<TrendlineFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::degenerate(format!(
            "least squares needs at least 2 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::degenerate("zero variance in log_weight"));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sst: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r_squared = if sst == 0.0 { 1.0 } else { 1.0 - sse / sst };
    Ok(TrendlineFit {
        population,
        slope,
        intercept,
        r_squared,
        n,
    })
}

/// HS codes are truncated to their 6-digit international prefix before the
/// high-risk lookup; national 8-10 digit extensions still match.
pub fn hs6(code: &str) -> &str {
    if code.len() > 6 {
        &code[..6]
    } else {
        code
    }
}

/// Fit both populations and report the slope divergence. A high-risk
/// population under 10 rows degrades to a warning while the fits are still
/// attempted.
pub fn divergence_report(
    points: &[TrendPoint],
    high_risk_hs_codes: &[String],
) -> Result<DivergenceReport> {
    let all: Vec<(f64, f64)> = points.iter().map(|p| (p.log_weight, p.log_value)).collect();
    let high: Vec<&TrendPoint> = points
        .iter()
        .filter(|p| high_risk_hs_codes.iter().any(|c| c == hs6(&p.hs_code)))
        .collect();

    let warning = (high.len() < 10).then(|| {
        format!(
            "high-risk population has only {} rows; slope estimate is unstable",
            high.len()
        )
    });

    let fit_all = fit_ols(&all, PopulationTag::All)?;
    let high_points: Vec<(f64, f64)> = high.iter().map(|p| (p.log_weight, p.log_value)).collect();
    let fit_highrisk = fit_ols(&high_points, PopulationTag::HighRisk)?;

    let mut by_code: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for p in &high {
        let slot = by_code.entry(hs6(&p.hs_code)).or_insert((0.0, 0.0, 0));
        slot.0 += p.log_weight;
        slot.1 += p.log_value;
        slot.2 += 1;
    }
    let markers = by_code
        .into_iter()
        .map(|(code, (w, v, n))| CodeMarker {
            hs6: code.to_string(),
            mean_log_weight: w / n as f64,
            mean_log_value: v / n as f64,
            n,
        })
        .collect();

    Ok(DivergenceReport {
        slope_divergence: fit_highrisk.slope - fit_all.slope,
        fit_all,
        fit_highrisk,
        high_risk_hs_codes: high_risk_hs_codes.to_vec(),
        markers,
        warning,
    })
}
