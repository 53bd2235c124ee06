//! JSON persistence, shipping-cost construction, experiment orchestration
//! and CSV reports.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{
    apply_dc_policy, apply_scarcity, compare_approaches, AmbiguityFactors, Approach, ComparisonRow, DcPolicy,
    EvalError, PlanEvaluation, SolveOptions,
};
use crate::instance::{validate_instance, DcStatus, Instance, ValidationReport};
use crate::scenario::{
    moments_from_quantiles, penalty_schedule, sample_normal_scenarios, sample_uniform_scenarios, MomentEstimate,
    PenaltyCase, ScenarioError, ScenarioSet,
};

/// Mean Earth radius in statute miles.
const EARTH_RADIUS_MILES: f64 = 3958.8;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: at `{field}`: {message}")]
    Schema { path: PathBuf, field: String, message: String },
    #[error("{path}: instance is invalid:\n{report}")]
    Invalid { path: PathBuf, report: ValidationReport },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("units per truck must be positive, got {0}")]
    UnitsPerTruck(f64),
    #[error("phase {phase}: {stage}: {source}")]
    Stage { phase: String, stage: &'static str, source: EvalError },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IoError {
    /// True when the failure came from a solver limit rather than bad input.
    pub fn is_solver_limit(&self) -> bool {
        matches!(self, IoError::Stage { source: EvalError::NoSolution { .. } | EvalError::Milp(_), .. })
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Write { path: path.to_path_buf(), source })
}

/// Parse strict JSON, reporting the path of the offending field.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    parse_json(&read(path)?, path)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

/// Load and validate an instance.
pub fn load_instance(path: &Path) -> Result<Instance, IoError> {
    let inst: Instance = read_json(path)?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(IoError::Invalid { path: path.to_path_buf(), report });
    }
    Ok(inst)
}

pub fn save_instance(inst: &Instance, path: &Path) -> Result<(), IoError> {
    write_json(inst, path)
}

pub fn load_scenarios(path: &Path) -> Result<ScenarioSet, IoError> {
    read_json(path)
}

pub fn save_scenarios(set: &ScenarioSet, path: &Path) -> Result<(), IoError> {
    write_json(set, path)
}

pub fn save_results(evaluation: &PlanEvaluation, path: &Path) -> Result<(), IoError> {
    write_json(evaluation, path)
}

/// Cost of moving one unit: truck cost per mile spread over a full truck,
/// plus refrigeration.
pub fn shipping_cost_per_unit(
    distance_miles: f64,
    per_mile_cost: f64,
    units_per_truck: f64,
    refrigeration_per_unit: f64,
) -> Result<f64, IoError> {
    if !(units_per_truck.is_finite() && units_per_truck > 0.0) {
        return Err(IoError::UnitsPerTruck(units_per_truck));
    }
    Ok(per_mile_cost * distance_miles / units_per_truck + refrigeration_per_unit)
}

/// Great-circle distance in miles between two `[lat, lon]` points in degrees.
pub fn haversine_miles(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (la1, lo1) = (a[0].to_radians(), a[1].to_radians());
    let (la2, lo2) = (b[0].to_radians(), b[1].to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Uniform on `[(1 - f) mu, (1 + f) mu]`.
    Uniform { half_width: f64 },
    /// Normal with the phase standard deviation, clamped at zero.
    Normal,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Uniform { half_width: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseDemand {
    /// Phase totals per demand site, spread evenly over the periods.
    /// `cv` sets the standard deviation as a multiple of the mean.
    Totals {
        totals: Vec<f64>,
        #[serde(default)]
        cv: f64,
    },
    /// Per-period quantiles per demand site.
    Quantiles { q025: Vec<f64>, median: Vec<f64>, q975: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub name: String,
    pub start_date: NaiveDate,
    #[serde(default = "default_period_days")]
    pub period_days: u32,
    pub periods: usize,
    /// Daily throughput of one DC; sets `M_i` and the budget when present.
    #[serde(default)]
    pub daily_capacity: Option<f64>,
    pub demand: PhaseDemand,
    #[serde(default)]
    pub in_sample_count: Option<usize>,
}

impl PhaseSpec {
    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Duration::days(i64::from(self.period_days) * self.periods as i64)
    }
}

fn default_period_days() -> u32 {
    14
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    pub case: PenaltyCase,
    /// Median demand per site, used by `median_based`.
    #[serde(default)]
    pub medians: Option<Vec<f64>>,
    /// Elderly population per site, used by `elder_based`.
    #[serde(default)]
    pub elders: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Relative paths are resolved against the config file's directory.
    pub instance: PathBuf,
    #[serde(default = "all_approaches")]
    pub approaches: Vec<Approach>,
    pub in_sample: SampleSpec,
    pub out_of_sample: SampleSpec,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub ambiguity: AmbiguityFactors,
    #[serde(default = "one")]
    pub scarcity: f64,
    #[serde(default)]
    pub dc_policy: DcPolicy,
    /// Defaults to the sites marked preopened in the instance.
    #[serde(default)]
    pub preopened: Option<Vec<String>>,
    #[serde(default)]
    pub penalty: Option<PenaltySpec>,
    /// Divides demand, capacities and fixed costs. Reports are scaled back.
    #[serde(default = "one")]
    pub unit_scale: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
    #[serde(default = "default_gap")]
    pub gap_tol: f64,
    pub phases: Vec<PhaseSpec>,
}

fn all_approaches() -> Vec<Approach> {
    Approach::ALL.to_vec()
}

fn one() -> f64 {
    1.0
}

fn default_node_limit() -> usize {
    100_000
}

fn default_gap() -> f64 {
    1e-6
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        if cfg.instance.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.instance = dir.join(&cfg.instance);
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Config(m));
        if self.in_sample.count == 0 || self.out_of_sample.count == 0 {
            return bad("scenario counts must be at least 1".into());
        }
        if self.approaches.is_empty() {
            return bad("no approaches selected".into());
        }
        if self.phases.is_empty() {
            return bad("no phases defined".into());
        }
        if !(self.scarcity > 0.0 && self.scarcity <= 1.0) {
            return bad(format!("scarcity {} is outside (0, 1]", self.scarcity));
        }
        if !(self.unit_scale > 0.0 && self.unit_scale.is_finite()) {
            return bad(format!("unit_scale {} must be positive", self.unit_scale));
        }
        if let Sampling::Uniform { half_width } = self.sampling {
            if !(0.0..=1.0).contains(&half_width) {
                return bad(format!("half_width {half_width} is outside [0, 1]"));
            }
        }
        let f = self.ambiguity;
        if !(f.mean_slack >= 0.0 && (0.0..=1.0).contains(&f.second_moment_lo) && f.second_moment_hi >= 1.0) {
            return bad(format!("ambiguity factors {f:?} need mean_slack >= 0 and 0 <= lo <= 1 <= hi"));
        }
        for p in &self.phases {
            if p.periods == 0 || p.period_days == 0 {
                return bad(format!("phase {} has no periods", p.name));
            }
            if p.in_sample_count == Some(0) {
                return bad(format!("phase {} has an in-sample count of 0", p.name));
            }
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut opts = SolveOptions { ambiguity: self.ambiguity, ..SolveOptions::default() };
        opts.milp.node_limit = self.node_limit;
        opts.milp.gap_tol = self.gap_tol;
        opts
    }
}

fn stretch<T: Clone>(v: &[T], n: usize) -> Vec<T> {
    (0..n).map(|t| v[t.min(v.len() - 1)].clone()).collect()
}

/// Instance and demand moments for one phase. Time-indexed data of `base`
/// is truncated or extended by repeating its last period.
pub fn build_phase_instance(
    cfg: &ExperimentConfig,
    base: &Instance,
    phase: &PhaseSpec,
) -> Result<(Instance, MomentEstimate), IoError> {
    let (nj, nt) = (base.num_sites(), phase.periods);
    let scale = cfg.unit_scale;
    let (mean, std): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match &phase.demand {
        PhaseDemand::Totals { totals, cv } => {
            if totals.len() != nj {
                return Err(IoError::Config(format!(
                    "phase {}: {} demand totals for {nj} sites",
                    phase.name,
                    totals.len()
                )));
            }
            let mean: Vec<Vec<f64>> = totals.iter().map(|&d| vec![d / nt as f64 / scale; nt]).collect();
            let std = mean.iter().map(|r| r.iter().map(|m| cv * m).collect()).collect();
            (mean, std)
        }
        PhaseDemand::Quantiles { q025, median, q975 } => {
            if q025.len() != nj || median.len() != nj || q975.len() != nj {
                return Err(IoError::Config(format!("phase {}: quantiles must cover {nj} sites", phase.name)));
            }
            let mut mean = Vec::with_capacity(nj);
            let mut std = Vec::with_capacity(nj);
            for j in 0..nj {
                let (m, s) = moments_from_quantiles(q025[j], median[j], q975[j])?;
                mean.push(vec![m / scale; nt]);
                std.push(vec![s / scale; nt]);
            }
            (mean, std)
        }
    };

    let mut inst = base.clone();
    inst.periods = nt;
    inst.capacity_unit_cost = base.capacity_unit_cost.iter().map(|r| stretch(r, nt)).collect();
    inst.shipping_unit_cost =
        base.shipping_unit_cost.iter().map(|r| r.iter().map(|c| stretch(c, nt)).collect()).collect();
    inst.inventory_unit_cost = base.inventory_unit_cost.iter().map(|r| stretch(r, nt)).collect();
    inst.penalty_unit_cost = base.penalty_unit_cost.iter().map(|r| stretch(r, nt)).collect();
    inst.temporal_budget = stretch(&base.temporal_budget, nt);
    if let Some(d) = &mut inst.dc_inventory {
        d.unit_cost = d.unit_cost.iter().map(|r| stretch(r, nt)).collect();
    }
    if let Some(daily) = phase.daily_capacity {
        let m = daily * f64::from(phase.period_days);
        inst.dc_capacity_limit = vec![m; inst.num_dcs()];
        inst.temporal_budget = vec![m * inst.num_dcs() as f64; nt];
    }
    for v in inst.dc_capacity_limit.iter_mut().chain(&mut inst.temporal_budget) {
        *v /= scale;
    }
    for v in inst.operating_cost.iter_mut().chain(&mut inst.initial_inventory).chain(&mut inst.initial_backlog) {
        *v /= scale;
    }
    if let Some(d) = &mut inst.dc_inventory {
        for v in &mut d.initial {
            *v /= scale;
        }
    }
    if let Some(p) = &cfg.penalty {
        let medians = p.medians.as_ref().map(|m| m.iter().map(|&x| vec![x; nt]).collect::<Vec<_>>());
        inst.penalty_unit_cost = penalty_schedule(p.case, nj, nt, medians.as_deref(), p.elders.as_deref())?;
    }
    let preopened: Vec<String> = match &cfg.preopened {
        Some(ids) => ids.clone(),
        None => base.dc_sites.iter().filter(|s| s.status == DcStatus::Preopened).map(|s| s.id.clone()).collect(),
    };
    let stage = |source| IoError::Stage { phase: phase.name.clone(), stage: "instance", source };
    inst = apply_dc_policy(&inst, cfg.dc_policy, &preopened).map_err(stage)?;
    inst = apply_scarcity(&inst, cfg.scarcity).map_err(stage)?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(IoError::Invalid { path: cfg.instance.clone(), report });
    }
    Ok((inst, MomentEstimate::from_mean_std(mean, std)?))
}

pub fn sample(moments: &MomentEstimate, sampling: Sampling, spec: SampleSpec) -> Result<ScenarioSet, ScenarioError> {
    match sampling {
        Sampling::Uniform { half_width } => sample_uniform_scenarios(moments, half_width, spec.count, spec.seed),
        Sampling::Normal => sample_normal_scenarios(moments, spec.count, spec.seed),
    }
}

#[derive(Debug, Clone)]
pub struct PhaseResult {
    pub phase: PhaseSpec,
    pub instance: Instance,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub unit_scale: f64,
    pub phases: Vec<PhaseResult>,
}

/// Load, build each phase, sample, solve every approach and evaluate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, IoError> {
    cfg.check()?;
    let base = load_instance(&cfg.instance)?;
    let opts = cfg.solve_options();
    let mut phases = Vec::with_capacity(cfg.phases.len());
    for phase in &cfg.phases {
        let (inst, moments) = build_phase_instance(cfg, &base, phase)?;
        let in_spec =
            SampleSpec { count: phase.in_sample_count.unwrap_or(cfg.in_sample.count), seed: cfg.in_sample.seed };
        let in_sample = sample(&moments, cfg.sampling, in_spec)?;
        let out_sample = sample(&moments, cfg.sampling, cfg.out_of_sample)?;
        log::info!(
            "phase {} ({} to {}): {} periods, {} in-sample, {} out-of-sample scenarios",
            phase.name,
            phase.start_date,
            phase.end_date(),
            phase.periods,
            in_sample.len(),
            out_sample.len()
        );
        let rows = compare_approaches(&inst, &cfg.approaches, &in_sample, &moments, &out_sample, &opts)
            .map_err(|source| IoError::Stage { phase: phase.name.clone(), stage: "solve and evaluate", source })?;
        for r in &rows {
            log::info!(
                "phase {} {}: total {} unmet {} (+{:.2}%)",
                phase.name,
                r.solution.approach,
                human_currency(r.evaluation.breakdown.total * cfg.unit_scale),
                human_count(r.evaluation.unmet.mean * cfg.unit_scale),
                r.pct_over_best
            );
        }
        phases.push(PhaseResult { phase: phase.clone(), instance: inst, rows });
    }
    Ok(ExperimentResult { unit_scale: cfg.unit_scale, phases })
}

/// `$1.23M` style rendering for logs.
pub fn human_currency(v: f64) -> String {
    format!("${}", human_count(v))
}

pub fn human_count(v: f64) -> String {
    let a = v.abs();
    let (d, s) = if a >= 1e9 {
        (1e9, "B")
    } else if a >= 1e6 {
        (1e6, "M")
    } else if a >= 1e3 {
        (1e3, "K")
    } else {
        (1.0, "")
    };
    format!("{:.2}{s}", v / d)
}

pub const BREAKDOWN_HEADER: [&str; 14] = [
    "approach",
    "operating",
    "capacity",
    "shipping",
    "inventory",
    "penalty",
    "total",
    "unmet_mean",
    "unmet_std",
    "unmet_p75",
    "unmet_p80",
    "unmet_p85",
    "unmet_p90",
    "unmet_p95",
];

fn num(v: f64) -> String {
    // Display gives the shortest round-trip form, stable across runs.
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

fn csv_file(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    csv::Writer::from_path(path).map_err(IoError::from)
}

/// Directory name for a phase: lowercase alphanumerics and underscores.
pub fn phase_dir_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Write breakdown, comparison, regional and plan CSVs for every phase into
/// `out/<phase>/`. Quantities are reported in original units.
pub fn write_reports(result: &ExperimentResult, out: &Path) -> Result<Vec<PathBuf>, IoError> {
    let k = result.unit_scale;
    let mut written = Vec::new();
    for pr in &result.phases {
        let dir = out.join(phase_dir_name(&pr.phase.name));
        fs::create_dir_all(&dir).map_err(|source| IoError::Write { path: dir.clone(), source })?;

        let path = dir.join("breakdown.csv");
        let mut w = csv_file(&path)?;
        w.write_record(BREAKDOWN_HEADER)?;
        for r in &pr.rows {
            let b = &r.evaluation.breakdown;
            let u = &r.evaluation.unmet;
            let mut rec = vec![r.solution.approach.to_string()];
            rec.extend([b.operating, b.capacity, b.shipping, b.inventory, b.penalty, b.total].map(|v| num(v * k)));
            rec.push(num(u.mean * k));
            rec.push(num(u.std_dev * k));
            rec.extend(u.percentiles.iter().map(|v| num(v * k)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| IoError::Write { path: path.clone(), source })?;
        written.push(path);

        let path = dir.join("comparison.csv");
        let mut w = csv_file(&path)?;
        w.write_record([
            "approach",
            "in_sample_objective",
            "status",
            "nodes",
            "open_dcs",
            "total",
            "unmet_mean",
            "backlog_periods_mean",
            "pct_over_best",
        ])?;
        for r in &pr.rows {
            let s = &r.solution;
            w.write_record([
                s.approach.to_string(),
                num(s.objective * k),
                format!("{:?}", s.status),
                s.nodes.to_string(),
                s.plan.open.iter().filter(|&&o| o).count().to_string(),
                num(r.evaluation.breakdown.total * k),
                num(r.evaluation.unmet.mean * k),
                num(r.evaluation.backlog_periods_mean * k),
                num(r.pct_over_best),
            ])?;
        }
        w.flush().map_err(|source| IoError::Write { path: path.clone(), source })?;
        written.push(path);

        let path = dir.join("regional_unmet.csv");
        let mut w = csv_file(&path)?;
        w.write_record(["approach", "site", "unmet_pct"])?;
        for r in &pr.rows {
            for (site, pct) in pr.instance.demand_sites.iter().zip(&r.evaluation.regional_unmet_pct) {
                w.write_record([r.solution.approach.to_string(), site.id.clone(), num(*pct)])?;
            }
        }
        w.flush().map_err(|source| IoError::Write { path: path.clone(), source })?;
        written.push(path);

        let path = dir.join("plan.csv");
        let mut w = csv_file(&path)?;
        w.write_record(["approach", "dc", "period", "open", "capacity"])?;
        for r in &pr.rows {
            let plan = &r.solution.plan;
            for (i, site) in pr.instance.dc_sites.iter().enumerate() {
                for t in 0..pr.instance.periods {
                    w.write_record([
                        r.solution.approach.to_string(),
                        site.id.clone(),
                        (t + 1).to_string(),
                        u8::from(plan.open[i]).to_string(),
                        num(plan.capacity[i][t] * k),
                    ])?;
                }
            }
        }
        w.flush().map_err(|source| IoError::Write { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipping_cost_examples() {
        assert!((shipping_cost_per_unit(1000.0, 3.0, 230_400.0, 0.0).unwrap() - 0.013_020_833).abs() < 1e-8);
        assert_eq!(shipping_cost_per_unit(0.0, 3.0, 230_400.0, 0.25).unwrap(), 0.25);
        assert!((shipping_cost_per_unit(230_400.0, 3.0, 230_400.0, 0.0).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(shipping_cost_per_unit(1.0, 3.0, 0.0, 0.0), Err(IoError::UnitsPerTruck(_))));
    }

    #[test]
    fn haversine_known_distance() {
        // New York to Los Angeles is about 2445 miles along the great circle.
        let d = haversine_miles([40.7128, -74.0060], [34.0522, -118.2437]);
        assert!((d - 2445.0).abs() < 10.0, "{d}");
        assert_eq!(haversine_miles([10.0, 20.0], [10.0, 20.0]), 0.0);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = r#"{"dc_sites": [], "demand_sites": [], "periods": "two"}"#;
        let err = parse_json::<Instance>(text, Path::new("x.json")).unwrap_err().to_string();
        assert!(err.contains("periods"), "{err}");
        let text = r#"{"count": 1, "seed": 2, "colour": 3}"#;
        let err = parse_json::<SampleSpec>(text, Path::new("s.json")).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn human_rendering() {
        assert_eq!(human_currency(1_234_000.0), "$1.23M");
        assert_eq!(human_count(372_000.0), "372.00K");
        assert_eq!(human_count(12.0), "12.00");
    }

    #[test]
    fn phase_names_are_path_safe() {
        assert_eq!(phase_dir_name("Phase 1 (Dec)"), "phase_1__dec_");
    }
}
