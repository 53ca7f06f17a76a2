//! Experiment orchestration: seeded trial pipelines, benchmark schemes,
//! paired sweeps, and deterministic CSV/manifest reporting.
//!
//! A trial runs the full design pipeline on one channel drop: draw geometry
//! and fading, pick visibility regions under the initial random phases, set
//! the surface profile for the requested scheme, then allocate power and
//! evaluate every user's ergodic SE through the closed forms. Three schemes
//! are wired in:
//!
//! - `rps-epc`: random phases, equal power (the baseline)
//! - `hps-epc`: phases aligned to the first far-field user, equal power
//! - `ops-opc`: optimized phases and optimized power
//!
//! Every random stage draws from a substream keyed by `(seed, trial,
//! stage)`, so schemes compared at the same trial index see identical
//! channels, regions, and Monte-Carlo draws, and re-runs are byte-identical
//! regardless of thread count. Reports are CSV files with a manifest that
//! embeds the full configuration; [`rerun_from_manifest`] reproduces a run
//! from the manifest alone. Wall-clock times go to `timings.csv`, which is
//! deliberately left out of the manifest digests.

use crate::channel::{draw_geometry, ChannelSet};
use crate::config::{QosMode, SystemConfig};
use crate::error::Error;
use crate::phase::{heuristic_phases, optimize_phases, PhaseResult};
use crate::power::{optimize_power, PowerOutcome};
use crate::precoding::{equal_power, power_constants, PowerConstants, PrecoderKind, VrAssignment};
use crate::rng::{draw_substream, substream, uniform_phases, Stage};
use crate::se::report::se_report;
use crate::se::{scheme_sinrs, ExpectationCache, SeReport};
use crate::vr::{select_vrs, vr_efficiency, VrCriterion};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Phase/power design scheme of one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Optimized phase profile and optimized power allocation.
    OpsOpc,
    /// Random phase profile and equal power (baseline).
    RpsEpc,
    /// Surface aligned to the first far-field user, equal power.
    HpsEpc,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::OpsOpc => write!(f, "ops-opc"),
            Scheme::RpsEpc => write!(f, "rps-epc"),
            Scheme::HpsEpc => write!(f, "hps-epc"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ops-opc" => Ok(Scheme::OpsOpc),
            "rps-epc" => Ok(Scheme::RpsEpc),
            "hps-epc" => Ok(Scheme::HpsEpc),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme '{other}' (expected ops-opc, rps-epc, or hps-epc)"
            ))),
        }
    }
}

/// Configuration axis swept while trial seeds are held fixed, so every
/// sweep point sees the same user drops and fading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "axis", content = "values")]
pub enum SweepAxis {
    None,
    /// `(m_x, m_y)` pairs; total antenna count is their product.
    ArraySize(Vec<[usize; 2]>),
    /// Visibility-region retention factors.
    Retention(Vec<f64>),
    /// `(weight_nf, weight_ff)` pairs.
    Weights(Vec<[f64; 2]>),
    /// Transmit powers in dBm.
    TxPowerDbm(Vec<f64>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::None => 0,
            SweepAxis::ArraySize(v) => v.len(),
            SweepAxis::Retention(v) => v.len(),
            SweepAxis::Weights(v) => v.len(),
            SweepAxis::TxPowerDbm(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Apply point `i` to the configuration and return its label.
    pub fn apply(&self, i: usize, cfg: &mut SystemConfig) -> String {
        match self {
            SweepAxis::None => "base".into(),
            SweepAxis::ArraySize(v) => {
                cfg.m_x = v[i][0];
                cfg.m_y = v[i][1];
                format!("m{}x{}", v[i][0], v[i][1])
            }
            SweepAxis::Retention(v) => {
                cfg.vr_delta = v[i];
                format!("delta{}", v[i])
            }
            SweepAxis::Weights(v) => {
                cfg.weight_nf = v[i][0];
                cfg.weight_ff = v[i][1];
                format!("w{}-{}", v[i][0], v[i][1])
            }
            SweepAxis::TxPowerDbm(v) => {
                cfg.tx_power_dbm = v[i];
                format!("p{}dbm", v[i])
            }
        }
    }
}

/// What to run: scheme, precoder, trial count, seed, and optional sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub scheme: Scheme,
    pub precoder: PrecoderKind,
    pub trials: u64,
    pub seed: u64,
    pub sweep: SweepAxis,
    /// Default report directory for CLI runs; `emit_reports` takes an
    /// explicit path and ignores this.
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            scheme: Scheme::RpsEpc,
            precoder: PrecoderKind::Mrt,
            trials: 1,
            seed: 1,
            sweep: SweepAxis::None,
            out_dir: None,
        }
    }
}

impl ExperimentPlan {
    /// Check the plan against a configuration, including every sweep point.
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("at least one trial is required".into()));
        }
        for i in 0..self.sweep.len() {
            let mut point = cfg.clone();
            let label = self.sweep.apply(i, &mut point);
            point
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("sweep point {label}: {e}")))?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Everything recorded for one successful trial.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub report: SeReport,
    pub vr: VrAssignment,
    /// Fraction of retained (user, subarray) pairs.
    pub vr_efficiency: f64,
    /// Full-array scan metric per user the retention thresholds came from.
    pub vr_baseline: (Vec<f64>, Vec<f64>),
    /// Scan metric at each user's final region.
    pub vr_post: (Vec<f64>, Vec<f64>),
    /// Present only for the optimized-phase scheme.
    pub phase: Option<PhaseResult>,
    /// Present only for the optimized-power scheme.
    pub power: Option<PowerOutcome>,
    pub wall_ms: f64,
}

/// One trial slot: either a record or the reason the trial was skipped.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub trial: u64,
    pub result: std::result::Result<TrialRecord, String>,
}

/// All trials of one (config, plan) run plus the distribution summaries.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: SystemConfig,
    pub plan: ExperimentPlan,
    pub outcomes: Vec<TrialOutcome>,
    /// Sorted objective values over successful trials.
    pub cdf_objective: Vec<f64>,
    /// Sorted worst-rate values per group over successful trials.
    pub cdf_min_nf: Vec<f64>,
    pub cdf_min_ff: Vec<f64>,
    /// Mean retained-pair fraction over successful trials.
    pub omega_bar: f64,
    pub total_wall_ms: f64,
}

impl ExperimentResult {
    pub fn successes(&self) -> impl Iterator<Item = (u64, &TrialRecord)> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok().map(|r| (o.trial, r)))
    }

    pub fn failed_trials(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }
}

/// Lane index of each precoder inside the cache-draw substream space.
fn cache_lane(kind: PrecoderKind) -> u64 {
    match kind {
        PrecoderKind::Mrt => 0,
        PrecoderKind::Czf => 1,
        PrecoderKind::Lzf => 2,
    }
}

/// Expectation cache (ZF schemes) and power constants under the channel's
/// current phase profile. `lane_base` separates the pipeline stages that
/// need independent Monte-Carlo draws: 0 for region selection, 3 for the
/// scheme evaluation, 6 for the QoS baseline.
fn stage_constants(
    cfg: &SystemConfig,
    kind: PrecoderKind,
    ch: &ChannelSet,
    vr: &VrAssignment,
    seed: u64,
    trial: u64,
    lane_base: u64,
) -> Result<(Option<ExpectationCache>, PowerConstants)> {
    let mut rng = draw_substream(seed, trial, Stage::CacheDraws, lane_base + cache_lane(kind));
    match kind {
        PrecoderKind::Mrt => {
            let consts = power_constants(ch, kind, vr, cfg.cache_draws, &mut rng)?;
            Ok((None, consts))
        }
        _ => {
            let cache = ExpectationCache::estimate(ch, kind, vr, cfg.cache_draws, &mut rng)?;
            let consts = cache.power_constants(ch, vr)?;
            Ok((Some(cache), consts))
        }
    }
}

/// Per-user rate floors from the random-phase equal-power baseline: each
/// user's floor is the smallest of its rates across the three precoders, so
/// no precoder is held to a target another one cannot reach.
pub fn baseline_floor_rates(
    cfg: &SystemConfig,
    base: &ChannelSet,
    seed: u64,
    trial: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nf = vec![f64::INFINITY; cfg.k_nf];
    let mut ff = vec![f64::INFINITY; cfg.k_ff];
    for kind in [PrecoderKind::Mrt, PrecoderKind::Czf, PrecoderKind::Lzf] {
        let sel = select_vrs(
            base,
            kind,
            cfg.vr_delta,
            VrCriterion::Sinr,
            cfg.cache_draws,
            &mut draw_substream(seed, trial, Stage::CacheDraws, cache_lane(kind)),
        )?;
        let (cache, consts) = stage_constants(cfg, kind, base, &sel.vr, seed, trial, 6)?;
        let alloc = equal_power(&consts, &sel.vr)?;
        let (nf_t, ff_t) = scheme_sinrs(base, kind, &sel.vr, &alloc, cache.as_ref())?;
        for (k, t) in nf_t.iter().enumerate() {
            nf[k] = nf[k].min(t.se());
        }
        for (k, t) in ff_t.iter().enumerate() {
            ff[k] = ff[k].min(t.se());
        }
    }
    Ok((nf, ff))
}

fn run_trial(cfg: &SystemConfig, plan: &ExperimentPlan, trial: u64) -> Result<TrialRecord> {
    let started = Instant::now();
    let geo = draw_geometry(cfg, &mut substream(plan.seed, trial, Stage::Geometry));
    let mut ch = ChannelSet::new(cfg, &geo)?;
    ch.resample_fading(&mut substream(plan.seed, trial, Stage::FadingRealization));
    let theta0 = uniform_phases(&mut substream(plan.seed, trial, Stage::InitialPhases), cfg.n());
    let base = ch.with_theta(theta0);

    // regions are picked under the initial phases so every scheme of the
    // same trial works on the same assignment
    let sel = select_vrs(
        &base,
        plan.precoder,
        cfg.vr_delta,
        VrCriterion::Sinr,
        cfg.cache_draws,
        &mut draw_substream(plan.seed, trial, Stage::CacheDraws, cache_lane(plan.precoder)),
    )?;
    let omega = vr_efficiency(&sel.vr, cfg.num_subarrays);

    // near-field users never see the surface, so without far-field users
    // the phase profile is irrelevant and the stage is skipped
    let mut phase = None;
    let ch = match plan.scheme {
        Scheme::RpsEpc => base.clone(),
        Scheme::HpsEpc => {
            if cfg.k_ff == 0 {
                return Err(Error::InvalidConfig(
                    "surface alignment needs at least one far-field user".into(),
                ));
            }
            let theta = heuristic_phases(&base, 0);
            base.clone().with_theta(theta)
        }
        Scheme::OpsOpc if cfg.k_ff > 0 => {
            let res = optimize_phases(&base, &sel.vr, &cfg.solver)?;
            let theta = res.theta.clone();
            phase = Some(res);
            base.clone().with_theta(theta)
        }
        Scheme::OpsOpc => base.clone(),
    };

    let (cache, consts) = stage_constants(cfg, plan.precoder, &ch, &sel.vr, plan.seed, trial, 3)?;
    let (alloc, power) = match plan.scheme {
        Scheme::OpsOpc => {
            let floors = match &cfg.qos {
                QosMode::None => None,
                QosMode::Explicit { nf, ff } => Some((nf.clone(), ff.clone())),
                QosMode::Auto => Some(baseline_floor_rates(cfg, &base, plan.seed, trial)?),
            };
            let qos = floors.as_ref().map(|(nf, ff)| (nf.as_slice(), ff.as_slice()));
            let out = optimize_power(
                &ch,
                plan.precoder,
                &sel.vr,
                cache.as_ref(),
                &consts,
                qos,
                &cfg.solver,
            )?;
            (out.alloc.clone(), Some(out))
        }
        _ => (equal_power(&consts, &sel.vr)?, None),
    };

    let (nf_terms, ff_terms) = scheme_sinrs(&ch, plan.precoder, &sel.vr, &alloc, cache.as_ref())?;
    let report = se_report(cfg, nf_terms, ff_terms);
    Ok(TrialRecord {
        report,
        vr: sel.vr,
        vr_efficiency: omega,
        vr_baseline: (sel.baseline_nf, sel.baseline_ff),
        vr_post: (sel.post_nf, sel.post_ff),
        phase,
        power,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Run every trial of the plan against one configuration. Trials execute in
/// parallel; a failed trial is recorded with its reason and does not abort
/// the run.
pub fn run_pipeline(cfg: &SystemConfig, plan: &ExperimentPlan) -> Result<ExperimentResult> {
    cfg.validate()?;
    plan.validate(cfg)?;
    let started = Instant::now();
    let outcomes: Vec<TrialOutcome> = (0..plan.trials)
        .into_par_iter()
        .map(|trial| TrialOutcome {
            trial,
            result: run_trial(cfg, plan, trial).map_err(|e| e.to_string()),
        })
        .collect();

    let mut cdf_objective = Vec::new();
    let mut cdf_min_nf = Vec::new();
    let mut cdf_min_ff = Vec::new();
    let mut omega_sum = 0.0;
    let mut ok = 0usize;
    for o in &outcomes {
        if let Ok(r) = &o.result {
            cdf_objective.push(r.report.objective);
            if cfg.k_nf > 0 {
                cdf_min_nf.push(r.report.min_nf_se);
            }
            if cfg.k_ff > 0 {
                cdf_min_ff.push(r.report.min_ff_se);
            }
            omega_sum += r.vr_efficiency;
            ok += 1;
        }
    }
    for v in [&mut cdf_objective, &mut cdf_min_nf, &mut cdf_min_ff] {
        v.sort_by(f64::total_cmp);
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        plan: plan.clone(),
        outcomes,
        cdf_objective,
        cdf_min_nf,
        cdf_min_ff,
        omega_bar: if ok > 0 { omega_sum / ok as f64 } else { f64::NAN },
        total_wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// One sweep point: the label, the configuration it ran with, and its result.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub label: String,
    pub config: SystemConfig,
    pub result: ExperimentResult,
}

/// Run the plan once per sweep point with shared trial seeds, so per-trial
/// comparisons across points are paired.
pub fn sweep(cfg: &SystemConfig, plan: &ExperimentPlan) -> Result<Vec<SweepPoint>> {
    if plan.sweep.is_empty() {
        return Err(Error::InvalidConfig("the plan has no sweep axis".into()));
    }
    plan.validate(cfg)?;
    let mut out = Vec::with_capacity(plan.sweep.len());
    for i in 0..plan.sweep.len() {
        let mut point = cfg.clone();
        let label = plan.sweep.apply(i, &mut point);
        let result = run_pipeline(&point, plan)?;
        out.push(SweepPoint { label, config: point, result });
    }
    Ok(out)
}

// ---- reporting ----

/// Name and content digest of one emitted report file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
    pub rows: usize,
}

/// Run manifest: everything needed to reproduce the run plus digests of the
/// deterministic report files. `timings.csv` is intentionally not listed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub seed: u64,
    /// Digest over the embedded configuration and plan.
    pub config_hash: String,
    pub config_toml: String,
    pub plan_json: String,
    pub trials: u64,
    pub failed_trials: usize,
    pub files: Vec<FileDigest>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Reproduce a run from its manifest alone.
pub fn rerun_from_manifest(manifest: &RunManifest) -> Result<ExperimentResult> {
    let cfg = SystemConfig::from_toml_str(&manifest.config_toml)?;
    let plan: ExperimentPlan = serde_json::from_str(&manifest.plan_json)?;
    run_pipeline(&cfg, &plan)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let d = h.finalize();
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn fmt_e(x: f64) -> String {
    format!("{x:.12e}")
}

fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Build one CSV table in memory; deterministic by construction.
fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<(Vec<u8>, usize)> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    Ok((bytes, rows.len()))
}

fn summary_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for o in &result.outcomes {
        match &o.result {
            Ok(r) => {
                let (po, pi) = r
                    .phase
                    .as_ref()
                    .map(|p| (p.outer_scalings.to_string(), p.total_inner.to_string()))
                    .unwrap_or_default();
                let (wi, wd, wb) = r
                    .power
                    .as_ref()
                    .map(|p| {
                        (p.iterations.to_string(), p.qos_dropped.to_string(), fmt_e(p.budget_used))
                    })
                    .unwrap_or_default();
                rows.push(vec![
                    o.trial.to_string(),
                    "ok".into(),
                    String::new(),
                    fmt_e(r.report.objective),
                    fmt_e(r.report.min_nf_se),
                    fmt_e(r.report.min_ff_se),
                    fmt_e(r.report.sum_se),
                    fmt_e(r.vr_efficiency),
                    po,
                    pi,
                    wi,
                    wd,
                    wb,
                ]);
            }
            Err(reason) => {
                let mut row = vec![o.trial.to_string(), "failed".into(), reason.clone()];
                row.extend(std::iter::repeat_n(String::new(), 10));
                rows.push(row);
            }
        }
    }
    rows
}

fn cdf_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (metric, values) in [
        ("objective", &result.cdf_objective),
        ("min_nf_se", &result.cdf_min_nf),
        ("min_ff_se", &result.cdf_min_ff),
    ] {
        for (rank, &v) in values.iter().enumerate() {
            rows.push(vec![metric.into(), rank.to_string(), fmt_e(v)]);
        }
    }
    rows
}

fn vr_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (trial, r) in result.successes() {
        for (k, mask) in r.vr.nf.iter().enumerate() {
            rows.push(vec![
                trial.to_string(),
                "nf".into(),
                k.to_string(),
                mask_string(mask),
                fmt_e(r.vr_baseline.0[k]),
                fmt_e(r.vr_post.0[k]),
            ]);
        }
        for (k, mask) in r.vr.ff.iter().enumerate() {
            rows.push(vec![
                trial.to_string(),
                "ff".into(),
                k.to_string(),
                mask_string(mask),
                fmt_e(r.vr_baseline.1[k]),
                fmt_e(r.vr_post.1[k]),
            ]);
        }
    }
    rows
}

fn phase_trace_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (trial, r) in result.successes() {
        if let Some(p) = &r.phase {
            for t in &p.trace {
                rows.push(vec![
                    trial.to_string(),
                    t.outer.to_string(),
                    t.inner.to_string(),
                    fmt_e(t.penalty),
                    fmt_e(t.objective),
                    fmt_e(t.penalized),
                    fmt_e(t.lambda_max),
                    fmt_e(t.residual),
                ]);
            }
        }
    }
    rows
}

fn power_trace_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (trial, r) in result.successes() {
        if let Some(p) = &r.power {
            for t in &p.trace {
                rows.push(vec![
                    trial.to_string(),
                    t.iter.to_string(),
                    fmt_e(t.objective),
                    fmt_e(t.t_nf),
                    fmt_e(t.t_ff),
                    fmt_e(t.margin),
                    fmt_e(t.max_violation),
                ]);
            }
        }
    }
    rows
}

/// Write the report files and the manifest into `out_dir`, creating it if
/// needed. Emits `summary.csv`, `cdf.csv`, `vr.csv`, `phase_trace.csv`,
/// `power_trace.csv` (all digested in the manifest), `timings.csv`
/// (wall-clock, not digested), and `manifest.json`.
pub fn emit_reports(result: &ExperimentResult, out_dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir)?;

    let tables: [(&str, &[&str], Vec<Vec<String>>); 5] = [
        (
            "summary.csv",
            &[
                "trial",
                "status",
                "reason",
                "objective",
                "min_nf_se",
                "min_ff_se",
                "sum_se",
                "vr_efficiency",
                "phase_outer_scalings",
                "phase_total_inner",
                "power_iterations",
                "qos_dropped",
                "budget_used",
            ],
            summary_rows(result),
        ),
        ("cdf.csv", &["metric", "rank", "value"], cdf_rows(result)),
        (
            "vr.csv",
            &["trial", "group", "user", "region", "baseline", "post"],
            vr_rows(result),
        ),
        (
            "phase_trace.csv",
            &["trial", "outer", "inner", "penalty", "objective", "penalized", "lambda_max", "residual"],
            phase_trace_rows(result),
        ),
        (
            "power_trace.csv",
            &["trial", "iter", "objective", "t_nf", "t_ff", "budget_margin", "max_violation"],
            power_trace_rows(result),
        ),
    ];

    let mut files = Vec::new();
    for (name, header, rows) in &tables {
        let (bytes, n) = csv_table(header, rows)?;
        std::fs::write(out_dir.join(name), &bytes)?;
        files.push(FileDigest {
            name: (*name).into(),
            sha256: sha256_hex(&bytes),
            rows: n,
        });
    }

    let timing_rows: Vec<Vec<String>> = result
        .successes()
        .map(|(trial, r)| vec![trial.to_string(), format!("{:.3}", r.wall_ms)])
        .collect();
    let (timing_bytes, _) = csv_table(&["trial", "wall_ms"], &timing_rows)?;
    std::fs::write(out_dir.join("timings.csv"), &timing_bytes)?;

    let config_toml = result.config.to_toml_string()?;
    let plan_json = serde_json::to_string(&result.plan)?;
    let config_hash = sha256_hex(format!("{config_toml}\n{plan_json}").as_bytes());
    let manifest = RunManifest {
        schema_version: 1,
        seed: result.plan.seed,
        config_hash,
        config_toml,
        plan_json,
        trials: result.plan.trials,
        failed_trials: result.failed_trials(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out_dir.join("manifest.json"), text)?;
    Ok(manifest)
}
