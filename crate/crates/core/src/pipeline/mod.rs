//! End-to-end run: ingest or synthesize, label, summarize, select models by
//! cross-validation, fit, explain, sweep dependence curves and compare
//! sub-systems. Every figure is written as CSV data and then as SVG.
//!
//! Seeds: each consumer derives its seed from the master seed with
//! [`mix_seed`] and a fixed counter (see [`SeedStream`]), so any stage can be
//! rerun alone with identical results.

mod artifacts;
mod config;

use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_table, stratified_undersampled_folds, summarize_groups, synth_generate, undersample_balanced,
    write_table_csv, FeatureTable, Schema,
};
use crate::dependence::{partial_dependence, GridSpec, PdpCurve};
use crate::error::{Error, Result};
use crate::explain::{
    beeswarm_export, global_importance, local_profiles, paired_importance, shap_interactions,
    write_beeswarm_csv, write_interactions_csv, ImportanceRanking, ShapMatrix,
};
use crate::gbt::{fit_gbt, grid_search, BoostedEnsemble, GbtParams, GridPoint, GridSearchResult};
use crate::indicators::{build_indicators, rates_table, write_indicator_report, IndicatorResult, Sar};
use crate::matrix::Matrix;
use crate::numeric::mix_seed;
use crate::svg::{render_svg, CurveScale, PlotData, PlotKind};

pub use artifacts::{sha256_hex, verify_manifest, ArtifactEntry, ArtifactWriter, Manifest, MANIFEST_FILE};
pub use config::{
    CompareOp, ExplainConfig, Filter, InputConfig, ModelsConfig, PipelineConfig, SubsampleConfig, SubsamplePair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Indicators,
    Summaries,
    GridSearch,
    FinalFit,
    Explain,
    Dependence,
    Subsample,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Indicators,
        Stage::Summaries,
        Stage::GridSearch,
        Stage::FinalFit,
        Stage::Explain,
        Stage::Dependence,
        Stage::Subsample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Indicators => "indicators",
            Stage::Summaries => "summaries",
            Stage::GridSearch => "grid-search",
            Stage::FinalFit => "final-fit",
            Stage::Explain => "explain",
            Stage::Dependence => "dependence",
            Stage::Subsample => "subsample",
        }
    }

    fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::Indicators => Some(Stage::Ingest),
            Stage::Summaries | Stage::GridSearch => Some(Stage::Indicators),
            Stage::FinalFit => Some(Stage::GridSearch),
            Stage::Explain | Stage::Dependence | Stage::Subsample => Some(Stage::FinalFit),
        }
    }

    /// This stage and everything it depends on, in execution order.
    pub fn with_prerequisites(self) -> Vec<Stage> {
        let mut v = vec![self];
        let mut s = self;
        while let Some(p) = s.prerequisite() {
            v.push(p);
            s = p;
        }
        v.reverse();
        v
    }
}

/// Counter scheme fanning the master seed out to independent streams.
#[derive(Debug, Clone, Copy)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub const SYNTH: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const GBT: u64 = 3;
    pub const FINAL_SAMPLE: u64 = 4;
    pub const SHAP_ROWS: u64 = 5;
    pub const SUBSAMPLE: u64 = 6;

    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn stage(&self, counter: u64) -> u64 {
        mix_seed(self.master, counter)
    }

    pub fn sub(&self, counter: u64, index: u64) -> u64 {
        mix_seed(self.stage(counter), index)
    }
}

fn target_index(t: Sar) -> u64 {
    Sar::ALL.iter().position(|&s| s == t).expect("listed") as u64
}

struct TargetState {
    target: Sar,
    /// Table row indices of the working sample.
    rows: Vec<usize>,
    labels: Vec<u8>,
    grid: Option<GridSearchResult>,
    model: Option<BoostedEnsemble>,
}

struct Run<'a> {
    config: &'a PipelineConfig,
    schema: Schema,
    seeds: SeedStream,
    out: ArtifactWriter,
    table: Option<FeatureTable>,
    indicators: Option<IndicatorResult>,
    targets: Vec<TargetState>,
}

fn write_svg(out: &mut ArtifactWriter, stage: Stage, rel: &str, kind: PlotKind, data: &PlotData) -> Result<()> {
    let s = render_svg(kind, data)?;
    out.write(stage.name(), rel, s.as_bytes())
}

fn csv_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

impl Run<'_> {
    fn table(&self) -> &FeatureTable {
        self.table.as_ref().expect("ingest ran")
    }

    fn feature_names(&self) -> Vec<String> {
        self.schema.names()
    }


    fn ingest(&mut self) -> Result<()> {
        let st = Stage::Ingest.name();
        let table = match (&self.config.input, &self.config.synth) {
            (Some(input), _) => {
                let f = std::fs::File::open(&input.data).map_err(|e| Error::io(&input.data, e))?;
                load_table(std::io::BufReader::new(f), &self.schema, &input.load)?
            }
            (None, Some(s)) => {
                let out = synth_generate(s, self.seeds.stage(SeedStream::SYNTH))?;
                self.out.write_with(st, "data/synth_table.csv", |b| write_table_csv(&out.table, b))?;
                out.table
            }
            (None, None) => unreachable!("validated"),
        };
        info!("ingest: {} rows, {} features", table.n_rows(), table.n_features());
        self.table = Some(table);
        Ok(())
    }

    fn indicators(&mut self) -> Result<()> {
        let st = Stage::Indicators.name();
        let res = build_indicators(self.table(), &self.config.indicators)?;
        let table = self.table.as_ref().expect("ingest ran");
        self.out
            .write_with(st, "indicators/indicator_report.csv", |b| write_indicator_report(table, &res.labels, b))?;
        let rates = rates_table(table, &res.labels);
        self.out.write_with(st, "indicators/sar_rates.csv", |b| rates.write_csv(b))?;
        self.out.write_json(st, "indicators/exclusions.json", &res.labels.exclusions)?;
        self.out.write(st, "indicators/multilevel_fit.json", res.fit.to_json()?.as_bytes())?;
        self.out.write_json(st, "indicators/school_inequality.json", &res.inequality)?;
        info!(
            "indicators: working sample {} rows, multilevel converged = {}",
            res.labels.working.iter().filter(|&&w| w).count(),
            res.fit.convergence.converged
        );
        let rows = res.labels.working_indices();
        self.targets = self
            .config
            .models
            .targets
            .iter()
            .map(|&t| TargetState {
                target: t,
                rows: rows.clone(),
                labels: res.labels.working_labels(t),
                grid: None,
                model: None,
            })
            .collect();
        self.indicators = Some(res);
        Ok(())
    }

    fn summaries(&mut self) -> Result<()> {
        let st = Stage::Summaries.name();
        for k in 0..self.targets.len() {
            let t = &self.targets[k];
            let sub = self.table().subset(&t.rows);
            let mask: Vec<bool> = t.labels.iter().map(|&l| l == 1).collect();
            let summary = summarize_groups(&sub, &mask)?;
            let rel = format!("summaries/summary_{}.csv", t.target.name());
            self.out.write_with(st, &rel, |b| summary.write_csv("NSAR", "SAR", b))?;
        }
        Ok(())
    }

    fn working_matrix(&self, rows: &[usize]) -> Matrix {
        self.table().subset(rows).matrix()
    }

    /// Grid points with GBT seeds derived from the master seed.
    fn seeded_grid(&self) -> Vec<GridPoint> {
        self.config
            .models
            .grid
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                GridPoint::Gbt(g) => GridPoint::Gbt(GbtParams {
                    seed: self.seeds.sub(SeedStream::GBT, i as u64),
                    ..g.clone()
                }),
                other => other.clone(),
            })
            .collect()
    }

    fn grid_search(&mut self) -> Result<()> {
        let st = Stage::GridSearch.name();
        let grid = self.seeded_grid();
        let mut table4 = Vec::new();
        for k in 0..self.targets.len() {
            let t = &self.targets[k];
            let x = self.working_matrix(&t.rows);
            let folds = stratified_undersampled_folds(
                &t.labels,
                self.config.models.folds,
                self.seeds.sub(SeedStream::FOLDS, target_index(t.target)),
            )?;
            let res = grid_search(&x, &t.labels, &grid, &folds)?;
            let rel = format!("models/grid_{}.csv", t.target.name());
            self.out.write_with(st, &rel, |b| res.write_csv(b))?;
            for r in &res.results {
                table4.push((t.target, r.label.clone(), r.mean_auroc, r.mean_auprc));
            }
            info!("grid search {}: winner {}", t.target.name(), res.best().label);
            self.targets[k].grid = Some(res);
        }
        self.out.write_with(st, "models/model_comparison.csv", |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["indicator", "model", "mean_auroc", "mean_auprc"])?;
            for (t, label, auroc, auprc) in &table4 {
                w.write_record([t.name().to_string(), label.clone(), auroc.to_string(), auprc.to_string()])?;
            }
            w.flush().map_err(|e| Error::io("model comparison", e))?;
            Ok(())
        })?;
        Ok(())
    }

    /// Best-ranked GBT point of a target's grid search.
    fn best_gbt(res: &GridSearchResult) -> GbtParams {
        res.ranking
            .iter()
            .find_map(|&i| match &res.results[i].point {
                GridPoint::Gbt(p) => Some(p.clone()),
                GridPoint::Linear(_) => None,
            })
            .expect("validated grid has a gbt point")
    }

    fn fit_balanced(&self, x: &Matrix, labels: &[u8], params: &GbtParams, seed: u64) -> Result<BoostedEnsemble> {
        let idx = undersample_balanced(labels, seed);
        let xs = x.select_rows(&idx);
        let ys: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        fit_gbt(&xs, &ys, params)
    }

    fn final_fit(&mut self) -> Result<()> {
        let st = Stage::FinalFit.name();
        for k in 0..self.targets.len() {
            let t = &self.targets[k];
            let params = Self::best_gbt(t.grid.as_ref().expect("grid search ran"));
            let x = self.working_matrix(&t.rows);
            let seed = self.seeds.sub(SeedStream::FINAL_SAMPLE, target_index(t.target));
            let model = self.fit_balanced(&x, &t.labels, &params, seed)?;
            let rel = format!("models/final_{}.json", t.target.name());
            self.out.write(st, &rel, model.to_json()?.as_bytes())?;
            self.targets[k].model = Some(model);
        }
        Ok(())
    }

    /// Rows explained for a target: all of them, or a seeded sample in row order.
    fn shap_rows(&self, n: usize, target: Sar) -> Vec<usize> {
        match self.config.explain.max_shap_rows {
            Some(cap) if cap < n => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(self.seeds.sub(SeedStream::SHAP_ROWS, target_index(target)));
                let mut v = sample(&mut rng, n, cap).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        }
    }

    fn explain(&mut self) -> Result<()> {
        let stage = Stage::Explain;
        let st = stage.name();
        let names = self.feature_names();
        let cfg = &self.config.explain;
        for k in 0..self.targets.len() {
            let t = &self.targets[k];
            let tag = t.target.name();
            let model = t.model.as_ref().expect("final fit ran");
            let local = self.shap_rows(t.rows.len(), t.target);
            let rows: Vec<usize> = local.iter().map(|&i| t.rows[i]).collect();
            let x = self.working_matrix(&rows);
            let keys: Vec<String> = rows.iter().map(|&i| self.table().student_ids()[i].clone()).collect();
            let shap = ShapMatrix::compute(model, &x, keys, names.clone())?;
            self.out.write_with(st, &format!("explain/shap_{tag}.csv"), |b| shap.write_csv(b))?;

            let ranking = global_importance(&shap)?;
            self.out
                .write_with(st, &format!("explain/importance_{tag}.csv"), |b| ranking.write_csv(Some(cfg.top_n), b))?;
            let plot = PlotData::ImportanceBar {
                title: format!("{tag}: ranked mean |SHAP|"),
                ranking: ranking.clone(),
                top_n: cfg.top_n,
            };
            write_svg(&mut self.out, stage, &format!("explain/importance_{tag}.svg"), PlotKind::ImportanceBar, &plot)?;

            let bee_features: Vec<String> =
                ranking.top(cfg.beeswarm_features).iter().map(|e| e.feature.clone()).collect();
            let records = beeswarm_export(&shap, &x, &bee_features)?;
            self.out
                .write_with(st, &format!("explain/beeswarm_{tag}.csv"), |b| write_beeswarm_csv(&records, b))?;
            let plot = PlotData::Beeswarm {
                title: format!("{tag}: SHAP values per student"),
                features: bee_features,
                records,
            };
            write_svg(&mut self.out, stage, &format!("explain/beeswarm_{tag}.svg"), PlotKind::Beeswarm, &plot)?;

            let profiles = local_profiles(&shap, &x, cfg.local_top_k)?;
            self.out
                .write_with(st, &format!("explain/local_profiles_{tag}.csv"), |b| profiles.write_csv(b))?;
            for (label, p) in [("max", &profiles.max), ("min", &profiles.min)] {
                let plot = PlotData::LocalProfile {
                    title: format!("{tag}: {label} profile, student {}", p.row_key),
                    profile: p.clone(),
                };
                write_svg(&mut self.out, stage, &format!("explain/local_{label}_{tag}.svg"), PlotKind::LocalProfile, &plot)?;
                let inter = shap_interactions(model, x.row(p.row))?;
                self.out.write_with(st, &format!("explain/interactions_{label}_{tag}.csv"), |b| {
                    write_interactions_csv(&inter, &names, b)
                })?;
            }
        }
        Ok(())
    }

    fn dependence(&mut self) -> Result<()> {
        let stage = Stage::Dependence;
        let st = stage.name();
        for k in 0..self.targets.len() {
            let t = &self.targets[k];
            let tag = t.target.name();
            let model = t.model.as_ref().expect("final fit ran");
            let x = self.working_matrix(&t.rows);
            let mut curves: Vec<PdpCurve> = Vec::new();
            for f in &self.config.explain.dependence_features {
                let j = self.schema.require(f)?;
                let c = partial_dependence(model, &x, j, f, &GridSpec::Auto)?;
                if !c.unbounded_points().is_empty() {
                    warn!("{tag}/{f}: odds unbounded at {} grid points", c.unbounded_points().len());
                }
                self.out
                    .write_with(st, &format!("dependence/pdp_{tag}_{}.csv", csv_name(f)), |b| c.write_csv(b))?;
                curves.push(c);
            }
            for (scale, suffix) in [(CurveScale::OddsRatio, "or"), (CurveScale::RelativeProbability, "rp")] {
                let plot = PlotData::PdpCurve {
                    title: format!("{tag}: partial dependence"),
                    curves: curves.clone(),
                    scale,
                };
                write_svg(&mut self.out, stage, &format!("dependence/pdp_{tag}_{suffix}.svg"), PlotKind::PdpCurve, &plot)?;
            }
        }
        Ok(())
    }

    fn arm_importance(
        &self,
        t: &TargetState,
        params: &GbtParams,
        filter: &Filter,
        seed: u64,
    ) -> std::result::Result<ImportanceRanking, String> {
        let rows = filter.select(self.table(), &t.rows).map_err(|e| e.to_string())?;
        let pos: Vec<usize> = (0..t.rows.len()).filter(|&i| rows.binary_search(&t.rows[i]).is_ok()).collect();
        let labels: Vec<u8> = pos.iter().map(|&i| t.labels[i]).collect();
        let n_pos = labels.iter().filter(|&&l| l == 1).count();
        if n_pos < 2 || labels.len() - n_pos < 2 {
            return Err(format!("{} rows with {n_pos} positives", labels.len()));
        }
        let x = self.working_matrix(&rows);
        let model = self.fit_balanced(&x, &labels, params, seed).map_err(|e| e.to_string())?;
        let keys = rows.iter().map(|&i| self.table().student_ids()[i].clone()).collect();
        let shap = ShapMatrix::compute(&model, &x, keys, self.feature_names()).map_err(|e| e.to_string())?;
        global_importance(&shap).map_err(|e| e.to_string())
    }

    fn subsample(&mut self) -> Result<()> {
        let stage = Stage::Subsample;
        let st = stage.name();
        let cfg = &self.config.subsample;
        let mut skipped: Vec<(String, String, String)> = Vec::new();
        for (pi, pair) in cfg.pairs.iter().enumerate() {
            for &target in &cfg.targets {
                let Some(t) = self.targets.iter().find(|t| t.target == target) else {
                    skipped.push((pair.name.clone(), target.name().into(), "target not modelled".into()));
                    continue;
                };
                let params = Self::best_gbt(t.grid.as_ref().expect("grid search ran"));
                let seed = |arm: u64| self.seeds.sub(SeedStream::SUBSAMPLE, (pi as u64) << 8 | target_index(target) << 1 | arm);
                let a = self.arm_importance(t, &params, &pair.filter_a, seed(0));
                let b = self.arm_importance(t, &params, &pair.filter_b, seed(1));
                let (a, b) = match (a, b) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => {
                        warn!("subsample {}/{}: skipped ({e})", pair.name, target.name());
                        skipped.push((pair.name.clone(), target.name().into(), e));
                        continue;
                    }
                };
                let paired = paired_importance(&a, &b, &pair.label_a, &pair.label_b, cfg.top_n)?;
                let tag = format!("{}_{}", csv_name(&pair.name), target.name());
                self.out
                    .write_with(st, &format!("subsample/paired_{tag}.csv"), |w| paired.write_csv(w))?;
                self.out.write_json(st, &format!("subsample/spearman_{tag}.json"), &paired.spearman)?;
                let plot = PlotData::PairedImportance {
                    title: format!("{}: {} vs {} ({})", target.name(), pair.label_a, pair.label_b, pair.name),
                    paired,
                };
                write_svg(&mut self.out, stage, &format!("subsample/paired_{tag}.svg"), PlotKind::PairedImportance, &plot)?;
            }
        }
        if !skipped.is_empty() {
            self.out.write_with(st, "subsample/skipped.csv", |b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["pair", "indicator", "reason"])?;
                for (p, t, r) in &skipped {
                    w.write_record([p, t, r])?;
                }
                w.flush().map_err(|e| Error::io("skipped", e))?;
                Ok(())
            })?;
        }
        Ok(())
    }

    fn run_stage(&mut self, s: Stage) -> Result<()> {
        match s {
            Stage::Ingest => self.ingest(),
            Stage::Indicators => self.indicators(),
            Stage::Summaries => self.summaries(),
            Stage::GridSearch => self.grid_search(),
            Stage::FinalFit => self.final_fit(),
            Stage::Explain => self.explain(),
            Stage::Dependence => self.dependence(),
            Stage::Subsample => self.subsample(),
        }
    }
}

/// Hash of the configuration with the output directory blanked, so the
/// same run written to two places produces the same manifest.
pub fn config_hash(config: &PipelineConfig) -> Result<String> {
    let mut c = config.clone();
    c.out_dir = Default::default();
    Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
}

/// Validates the config and runs the requested stages (plus prerequisites).
///
/// On a stage failure, artifacts already written stay on disk and the
/// manifest records the failed stage.
pub fn run_stages(config: &PipelineConfig, requested: &[Stage]) -> Result<Manifest> {
    let schema = config.validate()?;
    let mut stages: Vec<Stage> = requested.iter().flat_map(|s| s.with_prerequisites()).collect();
    stages.sort();
    stages.dedup();
    let mut run = Run {
        config,
        schema,
        seeds: SeedStream::new(config.seed),
        out: ArtifactWriter::new(&config.out_dir).map_err(|e| Error::Stage {
            stage: "output",
            source: Box::new(e),
        })?,
        table: None,
        indicators: None,
        targets: Vec::new(),
    };
    let hash = config_hash(config)?;
    let names: Vec<String> = stages.iter().map(|s| s.name().to_string()).collect();
    let mut effective = config.clone();
    effective.out_dir = Default::default();
    run.out.write_json("config", "config.json", &effective)?;
    for &s in &stages {
        info!("stage {}", s.name());
        if let Err(e) = run.run_stage(s) {
            run.out.finish(hash, config.seed, names, Some(s.name().into()))?;
            return Err(Error::Stage {
                stage: s.name(),
                source: Box::new(e),
            });
        }
    }
    run.out.finish(hash, config.seed, names, None)
}

/// Runs every stage.
pub fn run(config: &PipelineConfig) -> Result<Manifest> {
    run_stages(config, &Stage::ALL)
}

/// Human-readable summary of a finished output directory, after re-checking hashes.
pub fn report<W: std::io::Write>(out_dir: &std::path::Path, mut w: W) -> Result<bool> {
    let (m, bad) = verify_manifest(out_dir)?;
    let io = |e| Error::io(out_dir, e);
    writeln!(w, "status: {}", m.status).map_err(io)?;
    if let Some(s) = &m.failed_stage {
        writeln!(w, "failed stage: {s}").map_err(io)?;
    }
    writeln!(w, "seed: {}  config sha256: {}", m.seed, m.config_sha256).map_err(io)?;
    writeln!(w, "stages: {}", m.stages.join(", ")).map_err(io)?;
    let mut per_stage: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &m.artifacts {
        *per_stage.entry(a.stage.as_str()).or_default() += 1;
    }
    for (s, n) in per_stage {
        writeln!(w, "  {s}: {n} artifacts").map_err(io)?;
    }
    let rates = out_dir.join("indicators/sar_rates.csv");
    if let Ok(text) = std::fs::read_to_string(&rates) {
        writeln!(w, "resilience rates:\n{text}").map_err(io)?;
    }
    if bad.is_empty() {
        writeln!(w, "all {} artifact hashes verified", m.artifacts.len()).map_err(io)?;
    } else {
        for b in &bad {
            writeln!(w, "hash mismatch: {b}").map_err(io)?;
        }
    }
    Ok(bad.is_empty())
}
