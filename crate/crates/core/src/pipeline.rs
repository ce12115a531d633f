//! End-to-end pipeline orchestration and the run manifest.
//!
//! Stages execute in a fixed order — ingest, features, archetypes,
//! price_anomaly, mega_trade, risk_engine, trade_network, explain, trendline,
//! reporting — and every stage's record counts, timing, and seeds land in
//! `manifest.json`. A stage failure aborts the run and still writes a partial
//! manifest naming the stage.
//!
//! All randomness derives from the config's master seed, so a given (config,
//! input) pair reproduces its output files byte for byte. The one exception
//! is the manifest itself, which records wall-clock stage timings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archetypes::{self, ArchetypeLabel, KMeansModel};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::explain::{self, ForestParams, ShapExplanation, SURROGATE_FEATURES};
use crate::features::{build_feature_row, FeatureRow, VagueKeywordList};
use crate::ingest::{self, ParseOutcome, TradeRecord};
use crate::mega_trade::{self, MegaCandidate, SpikeReport};
use crate::price_anomaly::{self, PriceAnomaly, Queue};
use crate::reporting::{self, ReportBundle, RouteKey};
use crate::risk_engine::{self, CaseFileEntry, CaseFileSummary, RiskScore, ValueRanks};
use crate::trade_network::{self, FlaggedTrade};
use crate::trendline::{self, DivergenceReport, TrendPoint};

/// Which outputs a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Every stage and every file.
    Full,
    /// Parsing and the reject quarantine only.
    IngestOnly,
    /// Recompute everything, rewrite only the reporting outputs.
    ReportsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub data_lines: u64,
    pub parsed: usize,
    pub rejected: usize,
    pub cluster_eligible: usize,
    pub price_flagged_customs: usize,
    pub price_flagged_data_quality: usize,
    pub mega_trades: usize,
    pub case_file_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsUsed {
    pub master: u64,
    pub kmeans: u64,
    pub iforest: u64,
    pub explain: u64,
    pub shap_background: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub input_sha256: String,
    pub counts: ManifestCounts,
    pub stage_timings: Vec<StageTiming>,
    pub seeds: SeedsUsed,
    pub outputs: Vec<String>,
    pub failed_stage: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::parameter(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), json)?;
    Ok(())
}

struct StageClock {
    timings: Vec<StageTiming>,
}

impl StageClock {
    fn new() -> Self {
        StageClock { timings: Vec::new() }
    }

    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let result = f().map_err(|e| e.in_stage(name));
        self.timings.push(StageTiming {
            name: name.to_string(),
            wall_ms: start.elapsed().as_millis() as u64,
        });
        result
    }
}

/// Mean composite score per reporter over scored records; 0 when a reporter
/// has no scored records.
fn avg_risk_by_reporter(
    records: &[TradeRecord],
    scores: &BTreeMap<u64, RiskScore>,
) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in records {
        let slot = acc.entry(&r.reporter).or_insert((0, 0.0));
        if let Some(s) = scores.get(&r.record_id) {
            slot.0 += 1;
            slot.1 += s.composite;
        }
    }
    acc.into_iter()
        .map(|(reporter, (n, sum))| {
            let mean = if n > 0 { sum / n as f64 } else { 0.0 };
            (reporter.to_string(), mean)
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct ArchetypesArtifact<'a> {
    status: &'a str,
    clusters: usize,
    seed: u64,
    inertia: Option<f64>,
    iterations_run: Option<usize>,
    centroids: Vec<[f64; 2]>,
    labels: Vec<ArchetypeLabel>,
}

#[derive(Debug, Serialize)]
struct TrendlineArtifact<'a> {
    status: &'a str,
    reason: Option<String>,
    report: Option<&'a DivergenceReport>,
}

#[derive(Debug, Serialize)]
struct ShapSummaryArtifact {
    status: String,
    n_explanations: usize,
    background_size: usize,
    ranking: Vec<ShapRankEntry>,
}

#[derive(Debug, Serialize)]
struct ShapRankEntry {
    feature: String,
    mean_abs_phi: f64,
}

/// Run the pipeline per `config`, writing outputs under its out_dir.
pub fn run_pipeline(config: &PipelineConfig, mode: RunMode) -> Result<RunManifest> {
    config.validate()?;
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::config("no input file configured"))?
        .clone();
    let out_dir = config
        .out_dir
        .as_ref()
        .ok_or_else(|| Error::config("no output directory configured"))?
        .clone();

    // read input before touching the output directory: a missing input must
    // not leave partial outputs behind
    let input_bytes = std::fs::read(&input)?;
    let input_sha256 = sha256_hex(&input_bytes);
    std::fs::create_dir_all(&out_dir)?;

    let seeds = SeedsUsed {
        master: config.seed,
        kmeans: config.kmeans_seed(),
        iforest: config.iforest_seed(),
        explain: config.explain_seed(),
        shap_background: config.shap_background_seed(),
    };
    let mut manifest = RunManifest {
        config: config.clone(),
        input_sha256,
        counts: ManifestCounts::default(),
        stage_timings: Vec::new(),
        seeds,
        outputs: Vec::new(),
        failed_stage: None,
    };

    match run_stages(config, mode, &input_bytes, &out_dir, &mut manifest) {
        Ok(()) => {
            write_manifest(&out_dir, &manifest)?;
            manifest.outputs.push("manifest.json".into());
            Ok(manifest)
        }
        Err(e) => {
            if let Error::Stage { stage, .. } = &e {
                manifest.failed_stage = Some(stage.to_string());
            }
            // best effort: the partial manifest is diagnostic output
            let _ = write_manifest(&out_dir, &manifest);
            Err(e)
        }
    }
}

fn run_stages(
    config: &PipelineConfig,
    mode: RunMode,
    input_bytes: &[u8],
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let full_outputs = mode != RunMode::ReportsOnly;
    let mut clock = StageClock::new();
    let emit = |manifest: &mut RunManifest, name: &str| {
        manifest.outputs.push(name.to_string());
    };

    // ---- ingest -------------------------------------------------------
    let outcome: ParseOutcome = clock.run("ingest", || {
        let parsed = ingest::parse_stream(input_bytes, &config.column_mapping())?;
        if full_outputs {
            ingest::write_rejects_csv(&out_dir.join("rejects.csv"), &parsed.rejects)?;
        }
        Ok(parsed)
    })?;
    if full_outputs {
        emit(manifest, "rejects.csv");
    }
    manifest.counts.data_lines = outcome.data_lines;
    manifest.counts.parsed = outcome.records.len();
    manifest.counts.rejected = outcome.rejects.len();
    manifest.stage_timings = clock.timings.clone();
    if mode == RunMode::IngestOnly {
        return Ok(());
    }
    let records = outcome.records;

    // ---- features -------------------------------------------------------
    let features: Vec<FeatureRow> = clock.run("features", || {
        let keywords = VagueKeywordList::new(config.vague_keywords.iter().cloned())?;
        Ok(records.iter().map(|r| build_feature_row(r, &keywords)).collect())
    })?;
    let eligible: Vec<(u64, [f64; 2])> = records
        .iter()
        .zip(&features)
        .filter(|(_, f)| f.cluster_eligible)
        .map(|(r, f)| (r.record_id, [f.log_weight.unwrap(), f.log_value.unwrap()]))
        .collect();
    manifest.counts.cluster_eligible = eligible.len();

    // ---- archetypes -------------------------------------------------------
    let (kmeans_model, clusters): (Option<KMeansModel>, BTreeMap<u64, usize>) =
        clock.run("archetypes", || {
            if eligible.len() < config.clusters {
                if full_outputs {
                    let artifact = ArchetypesArtifact {
                        status: "skipped: fewer eligible records than clusters",
                        clusters: config.clusters,
                        seed: config.kmeans_seed(),
                        inertia: None,
                        iterations_run: None,
                        centroids: vec![],
                        labels: vec![],
                    };
                    std::fs::write(
                        out_dir.join("archetypes.json"),
                        serde_json::to_string_pretty(&artifact).unwrap(),
                    )?;
                }
                return Ok((None, BTreeMap::new()));
            }
            let points: Vec<[f64; 2]> = eligible.iter().map(|(_, p)| *p).collect();
            let model = archetypes::fit_kmeans(
                &points,
                config.clusters,
                config.kmeans_seed(),
                config.kmeans_max_iter,
                config.kmeans_tol,
            )?;
            let mut assignment = BTreeMap::new();
            for (id, p) in &eligible {
                assignment.insert(*id, archetypes::assign(&model, *p)?);
            }
            if full_outputs {
                let mut log_w: Vec<f64> = points.iter().map(|p| p[0]).collect();
                let mut log_v: Vec<f64> = points.iter().map(|p| p[1]).collect();
                log_w.sort_by(|a, b| a.partial_cmp(b).unwrap());
                log_v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let labels = archetypes::label_archetypes(
                    &model,
                    price_anomaly::quantile_sorted(&log_w, 0.5),
                    price_anomaly::quantile_sorted(&log_v, 0.5),
                );
                let artifact = ArchetypesArtifact {
                    status: "ok",
                    clusters: model.k,
                    seed: model.seed,
                    inertia: Some(model.inertia),
                    iterations_run: Some(model.iterations_run),
                    centroids: model.centroids.clone(),
                    labels,
                };
                std::fs::write(
                    out_dir.join("archetypes.json"),
                    serde_json::to_string_pretty(&artifact).unwrap(),
                )?;
            }
            Ok((Some(model), assignment))
        })?;
    let _ = kmeans_model;
    if full_outputs {
        emit(manifest, "archetypes.json");
    }

    // ---- price_anomaly -------------------------------------------------------
    let (priced, stats, triaged): (
        Vec<price_anomaly::PricedRecord>,
        BTreeMap<String, price_anomaly::GroupPriceStats>,
        Vec<PriceAnomaly>,
    ) = clock.run("price_anomaly", || {
        let priced = price_anomaly::priced_records(&records, &features);
        let stats = price_anomaly::group_stats(&priced, config.iqr_multiplier);
        let weight_of: BTreeMap<u64, f64> =
            priced.iter().map(|p| (p.record_id, p.net_wgt_kg)).collect();
        let triaged: Vec<PriceAnomaly> =
            price_anomaly::detect_price_outliers(&priced, &stats, config.min_group_size)
                .into_iter()
                .map(|a| {
                    let w = weight_of[&a.record_id];
                    price_anomaly::triage(a, w)
                })
                .collect();
        Ok((priced, stats, triaged))
    })?;
    manifest.counts.price_flagged_customs = triaged
        .iter()
        .filter(|a| a.queue == Some(Queue::CustomsReview))
        .count();
    manifest.counts.price_flagged_data_quality = triaged
        .iter()
        .filter(|a| a.queue == Some(Queue::DataQualityReview))
        .count();

    // ---- mega_trade -------------------------------------------------------
    let (mega_events, spike): (Vec<mega_trade::MegaTradeEvent>, SpikeReport) =
        clock.run("mega_trade", || {
            if eligible.len() < 2 {
                return Ok((Vec::new(), SpikeReport::default()));
            }
            let by_id: BTreeMap<u64, &TradeRecord> =
                records.iter().map(|r| (r.record_id, r)).collect();
            // feature space (log_value, log_weight)
            let candidates: Vec<MegaCandidate> = eligible
                .iter()
                .map(|(id, p)| {
                    let r = by_id[id];
                    MegaCandidate {
                        record_id: *id,
                        point: [p[1], p[0]],
                        period: r.period,
                        reporter: r.reporter.clone(),
                        primary_value_usd: r.primary_value_usd,
                    }
                })
                .collect();
            let points: Vec<[f64; 2]> = candidates.iter().map(|c| c.point).collect();
            let model = mega_trade::fit_isolation_forest(
                &points,
                config.iforest_trees,
                config.iforest_subsample,
                config.iforest_seed(),
            )?;
            let events = mega_trade::detect_mega_trades(&candidates, &model, config.contamination)?;
            let spike = mega_trade::temporal_spikes(&events);
            Ok((events, spike))
        })?;
    manifest.counts.mega_trades = mega_events.len();
    let mega_ids: BTreeSet<u64> = mega_events.iter().map(|e| e.record_id).collect();

    // ---- risk_engine -------------------------------------------------------
    let (scores, case_entries, case_summary): (
        BTreeMap<u64, RiskScore>,
        Vec<CaseFileEntry>,
        CaseFileSummary,
    ) = clock.run("risk_engine", || {
        let ranks = ValueRanks::new(records.iter().map(|r| r.primary_value_usd).collect());
        let scores = risk_engine::score_records(&records, &features, &stats, &ranks)?;
        let (entries, summary) =
            risk_engine::build_case_file(&triaged, &records, &features, &scores, &mega_ids, &clusters)?;
        if full_outputs {
            risk_engine::write_case_file_csv(&out_dir.join("case_file.csv"), &entries)?;
            risk_engine::write_case_file_summary(&out_dir.join("case_file_summary.json"), &summary)?;
        }
        Ok((scores, entries, summary))
    })?;
    if full_outputs {
        emit(manifest, "case_file.csv");
        emit(manifest, "case_file_summary.json");
    }
    manifest.counts.case_file_entries = case_entries.len();

    // ---- trade_network -------------------------------------------------------
    let flagged_union: BTreeSet<u64> = triaged
        .iter()
        .map(|a| a.record_id)
        .chain(mega_ids.iter().copied())
        .collect();
    clock.run("trade_network", || {
        let flagged_trades: Vec<FlaggedTrade> = records
            .iter()
            .filter(|r| flagged_union.contains(&r.record_id))
            .map(|r| FlaggedTrade {
                reporter: r.reporter.clone(),
                partner: r.partner.clone(),
                flow: r.flow,
                primary_value_usd: r.primary_value_usd,
            })
            .collect();
        let graph = trade_network::build_graph(&flagged_trades, config.graph_weight_by_value);
        let partition = trade_network::louvain_partition(&graph, config.louvain_shuffle_seed);
        let centrality = trade_network::betweenness(&graph);
        let avg_risk = avg_risk_by_reporter(&records, &scores);
        let report = trade_network::transshipment_report(&graph, &centrality, &avg_risk);
        if full_outputs {
            trade_network::write_communities_csv(&out_dir.join("communities.csv"), &partition)?;
            trade_network::write_centrality_csv(&out_dir.join("centrality.csv"), &report)?;
        }
        Ok(())
    })?;
    if full_outputs {
        emit(manifest, "communities.csv");
        emit(manifest, "centrality.csv");
    }

    // ---- explain -------------------------------------------------------
    clock.run("explain", || {
        let mut train_rows: Vec<Vec<f64>> = Vec::new();
        let mut train_targets: Vec<f64> = Vec::new();
        let mut train_ids: Vec<u64> = Vec::new();
        for (r, f) in records.iter().zip(&features) {
            if !f.cluster_eligible {
                continue;
            }
            let Some(score) = scores.get(&r.record_id) else {
                continue;
            };
            train_rows.push(vec![
                if f.is_vague { 1.0 } else { 0.0 },
                f.log_value.unwrap(),
                f.log_weight.unwrap(),
            ]);
            train_targets.push(score.composite);
            train_ids.push(r.record_id);
        }

        if train_rows.len() < 10 {
            if full_outputs {
                let artifact = ShapSummaryArtifact {
                    status: "skipped: fewer than 10 scored rows".into(),
                    n_explanations: 0,
                    background_size: 0,
                    ranking: vec![],
                };
                std::fs::write(
                    out_dir.join("shap_summary.json"),
                    serde_json::to_string_pretty(&artifact).unwrap(),
                )?;
            }
            return Ok(());
        }

        // cap training size; seeded subsample keeps the fit reproducible
        if train_rows.len() > config.surrogate_max_rows {
            let mut idxs: Vec<usize> = (0..train_rows.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.explain_seed());
            idxs.shuffle(&mut rng);
            idxs.truncate(config.surrogate_max_rows);
            idxs.sort_unstable();
            train_rows = idxs.iter().map(|&i| train_rows[i].clone()).collect();
            train_targets = idxs.iter().map(|&i| train_targets[i]).collect();
            train_ids = idxs.iter().map(|&i| train_ids[i]).collect();
        }

        let params = ForestParams {
            n_trees: config.surrogate_trees,
            ..ForestParams::default()
        };
        let forest =
            explain::fit_surrogate_forest(&train_rows, &train_targets, params, config.explain_seed())?;

        let background: Vec<Vec<f64>> = {
            let mut idxs: Vec<usize> = (0..train_rows.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.shap_background_seed());
            idxs.shuffle(&mut rng);
            idxs.truncate(config.shap_background.min(train_rows.len()));
            idxs.sort_unstable();
            idxs.into_iter().map(|i| train_rows[i].clone()).collect()
        };

        let row_by_id: BTreeMap<u64, &Vec<f64>> =
            train_ids.iter().copied().zip(train_rows.iter()).collect();
        let mut explanations: Vec<ShapExplanation> = Vec::new();
        for entry in case_entries.iter().take(config.shap_max_explanations) {
            if let Some(row) = row_by_id.get(&entry.record_id) {
                explanations.push(explain::shapley_values(
                    &forest,
                    entry.record_id,
                    row,
                    &background,
                )?);
            }
        }
        // no case entries: explain a seeded sample of scored rows instead so
        // the ranking still reflects the fitted surrogate
        if explanations.is_empty() {
            for (i, row) in train_rows.iter().take(50).enumerate() {
                explanations.push(explain::shapley_values(&forest, train_ids[i], row, &background)?);
            }
        }

        let names: Vec<String> = SURROGATE_FEATURES.iter().map(|s| s.to_string()).collect();
        let ranking = explain::mean_abs_shap_report(&explanations, &names);
        if full_outputs {
            let artifact = ShapSummaryArtifact {
                status: "ok".into(),
                n_explanations: explanations.len(),
                background_size: background.len(),
                ranking: ranking
                    .iter()
                    .map(|(feature, mean)| ShapRankEntry {
                        feature: feature.clone(),
                        mean_abs_phi: *mean,
                    })
                    .collect(),
            };
            std::fs::write(
                out_dir.join("shap_summary.json"),
                serde_json::to_string_pretty(&artifact).unwrap(),
            )?;
            if config.emit_shap_values {
                let mut out =
                    String::from("record_id,baseline,phi_is_vague,phi_log_value,phi_log_weight\n");
                for e in &explanations {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        e.record_id,
                        crate::csv_util::fmt_f64(e.baseline),
                        crate::csv_util::fmt_f64(e.phi[0]),
                        crate::csv_util::fmt_f64(e.phi[1]),
                        crate::csv_util::fmt_f64(e.phi[2]),
                    ));
                }
                std::fs::write(out_dir.join("shap_values.csv"), out)?;
            }
        }
        Ok(())
    })?;
    if full_outputs {
        emit(manifest, "shap_summary.json");
        if config.emit_shap_values {
            emit(manifest, "shap_values.csv");
        }
    }

    // ---- trendline -------------------------------------------------------
    let divergence: Option<DivergenceReport> = clock.run("trendline", || {
        let points: Vec<TrendPoint> = records
            .iter()
            .zip(&features)
            .filter(|(_, f)| f.cluster_eligible)
            .map(|(r, f)| TrendPoint {
                log_weight: f.log_weight.unwrap(),
                log_value: f.log_value.unwrap(),
                hs_code: r.hs_code.clone(),
            })
            .collect();
        match trendline::divergence_report(&points, &config.high_risk_hs_codes) {
            Ok(report) => {
                if full_outputs {
                    let artifact = TrendlineArtifact {
                        status: "ok",
                        reason: None,
                        report: Some(&report),
                    };
                    std::fs::write(
                        out_dir.join("trendlines.json"),
                        serde_json::to_string_pretty(&artifact).unwrap(),
                    )?;
                }
                Ok(Some(report))
            }
            Err(Error::DegenerateInput(reason)) => {
                if full_outputs {
                    let artifact = TrendlineArtifact {
                        status: "skipped",
                        reason: Some(reason),
                        report: None,
                    };
                    std::fs::write(
                        out_dir.join("trendlines.json"),
                        serde_json::to_string_pretty(&artifact).unwrap(),
                    )?;
                }
                Ok(None)
            }
            Err(e) => Err(e),
        }
    })?;
    let _ = divergence;
    if full_outputs {
        emit(manifest, "trendlines.json");
    }

    // ---- reporting -------------------------------------------------------
    if config.emit_reports {
        clock.run("reporting", || {
            let hotspots = reporting::hotspot_routes(&case_entries, reporting::DEFAULT_TOP_K);
            let summaries = reporting::aggregate_summaries(
                &records,
                &features,
                &scores,
                &case_entries,
                &flagged_union,
            );
            let case_periods: Vec<_> = case_entries
                .iter()
                .map(|e| (e.period, e.primary_value_usd))
                .collect();
            let time_series = reporting::temporal_series(&case_periods, &spike);
            let scatter = reporting::scatter_rows(
                &records,
                &features,
                &clusters,
                &config.high_risk_hs_codes,
            );
            let mut prices_by_hs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for p in &priced {
                prices_by_hs
                    .entry(p.hs_code.clone())
                    .or_default()
                    .push(p.price_per_kg);
            }
            let boxplots = reporting::boxplot_stats(&prices_by_hs, &stats);

            let route = match (&config.histogram_reporter, &config.histogram_partner) {
                (Some(r), Some(p)) => Some(RouteKey {
                    reporter: r.clone(),
                    partner: p.clone(),
                }),
                _ => hotspots.first().map(|h| h.route.clone()),
            };
            let histogram = route
                .map(|r| reporting::route_price_histogram(&case_entries, &r, config.histogram_bins));

            let bundle = ReportBundle {
                hotspots,
                summaries,
                time_series,
                scatter,
                boxplots,
                histogram: histogram.clone().unwrap_or(reporting::RouteHistogram {
                    route: RouteKey {
                        reporter: String::new(),
                        partner: String::new(),
                    },
                    bins: vec![],
                }),
                case_count: case_summary.count,
                case_total_value: case_summary.total_value_usd,
            };

            reporting::write_hotspots_csv(&out_dir.join("hotspots.csv"), &bundle.hotspots)?;
            reporting::write_pair_matrix_csv(
                &out_dir.join("pair_value_matrix.csv"),
                &bundle.summaries.pair_matrix,
            )?;
            reporting::write_reporter_summary_csv(
                &out_dir.join("reporter_summary.csv"),
                &bundle.summaries.reporter_summary,
            )?;
            reporting::write_hs_ranking_csv(
                &out_dir.join("hs_risk_ranking.csv"),
                &bundle.summaries.hs_risk_ranking,
            )?;
            reporting::write_sankey_csv(&out_dir.join("sankey_flows.csv"), &bundle.summaries.sankey)?;
            reporting::write_time_series_json(
                &out_dir.join("time_series.json"),
                &bundle.time_series,
            )?;
            reporting::write_scatter_csv(&out_dir.join("plot_scatter.csv"), &bundle.scatter)?;
            reporting::write_boxplots_csv(&out_dir.join("plot_boxplots.csv"), &bundle.boxplots)?;
            let mut written = vec![
                "hotspots.csv".to_string(),
                "pair_value_matrix.csv".into(),
                "reporter_summary.csv".into(),
                "hs_risk_ranking.csv".into(),
                "sankey_flows.csv".into(),
                "time_series.json".into(),
                "plot_scatter.csv".into(),
                "plot_boxplots.csv".into(),
            ];
            if let Some(h) = &histogram {
                written.push(reporting::write_histogram_csv(out_dir, h)?);
            }
            reporting::write_memo(&out_dir.join("memo.md"), &reporting::policy_memo(&bundle))?;
            written.push("memo.md".into());
            manifest.outputs.extend(written);
            Ok(())
        })?;
    }

    manifest.stage_timings = clock.timings;
    Ok(())
}

/// Re-emit the reporting outputs for a previous run.
///
/// The manifest pins the config and the input checksum; the pipeline is
/// recomputed deterministically and only report files are rewritten.
pub fn reemit_reports(manifest_path: &Path, out_dir: Option<PathBuf>) -> Result<RunManifest> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::config(format!("cannot read manifest: {e}")))?;
    let prior: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("invalid manifest: {e}")))?;
    let mut config = prior.config.clone();
    if let Some(dir) = out_dir {
        config.out_dir = Some(dir);
    }
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::config("manifest carries no input path"))?;
    let bytes = std::fs::read(input)?;
    if sha256_hex(&bytes) != prior.input_sha256 {
        return Err(Error::config(format!(
            "input '{}' no longer matches the manifest checksum",
            input.display()
        )));
    }
    run_pipeline(&config, RunMode::ReportsOnly)
}
