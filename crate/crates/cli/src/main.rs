//! `resdist`: validate instances, sample scenarios, solve and compare
//! facility-location plans, and export models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use resdist_core::evaluation::{out_of_sample_evaluate, solve_plan, Approach, DcPolicy, EvalError, PlanSolution};
use resdist_core::formulations::{build_deterministic, build_dro_milp, build_extensive_smip, BuildError, Plan};
use resdist_core::instance::{validate_instance, Instance};
use resdist_core::io::{
    build_phase_instance, load_instance, parse_json, read_json, run_experiment, sample, save_results, save_scenarios,
    write_json, write_reports, ExperimentConfig, IoError, PenaltySpec, PhaseSpec, SampleSpec,
};
use resdist_core::scenario::{build_ambiguity_bounds, empirical_moments, MomentEstimate, PenaltyCase, ScenarioSet};

#[derive(Parser)]
#[command(name = "resdist", version, about = "Plan distribution centers and shipments under uncertain demand")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and report every problem found.
    Validate { instance: PathBuf },
    /// Draw in-sample (or out-of-sample) scenarios for a phase.
    Sample {
        #[command(flatten)]
        exp: Experiment,
        /// Draw the out-of-sample set instead.
        #[arg(long)]
        out_of_sample: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one approach for a phase and write the plan.
    Solve {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        approach: Approach,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved plan on out-of-sample scenarios.
    Evaluate {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        plan: PathBuf,
        /// Scenario file; sampled from the config when omitted.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every configured approach, evaluate and write CSV reports.
    Compare {
        #[command(flatten)]
        exp: Experiment,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the optimization model of one approach in LP format.
    ExportLp {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        approach: Approach,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Experiment config plus command-line overrides.
#[derive(Args)]
struct Experiment {
    #[arg(long)]
    config: PathBuf,
    /// Phase name; the first phase when omitted (`compare` runs all).
    #[arg(long)]
    phase: Option<String>,
    #[arg(long)]
    in_sample_count: Option<usize>,
    #[arg(long)]
    in_sample_seed: Option<u64>,
    #[arg(long)]
    out_of_sample_count: Option<usize>,
    #[arg(long)]
    out_of_sample_seed: Option<u64>,
    /// Fraction of the normal temporal budget, in (0, 1].
    #[arg(long)]
    scarcity: Option<f64>,
    #[arg(long)]
    dc_policy: Option<DcPolicy>,
    /// constant, median_based or elder_based.
    #[arg(long, value_parser = parse_penalty)]
    penalty_case: Option<PenaltyCase>,
    #[arg(long)]
    mean_slack: Option<f64>,
    #[arg(long)]
    second_moment_lo: Option<f64>,
    #[arg(long)]
    second_moment_hi: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
}

fn parse_penalty(s: &str) -> Result<PenaltyCase, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown penalty case {s:?} (expected constant, median_based or elder_based)"))
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("unknown phase {0:?}")]
    UnknownPhase(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    SolverLimit(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let limit = match self {
            CliError::SolverLimit(_) => true,
            CliError::Io(e) => e.is_solver_limit(),
            CliError::Eval(e) => matches!(e, EvalError::NoSolution { .. } | EvalError::Milp(_)),
            _ => false,
        };
        if limit {
            2
        } else {
            1
        }
    }
}

/// Plan file written by `solve` and read by `evaluate`. Quantities are in
/// model units (after `unit_scale`).
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    approach: Approach,
    phase: String,
    objective: f64,
    status: String,
    plan: Plan,
}

impl Experiment {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(n) = self.in_sample_count {
            cfg.in_sample.count = n;
            for p in &mut cfg.phases {
                p.in_sample_count = None;
            }
        }
        if let Some(s) = self.in_sample_seed {
            cfg.in_sample.seed = s;
        }
        if let Some(n) = self.out_of_sample_count {
            cfg.out_of_sample.count = n;
        }
        if let Some(s) = self.out_of_sample_seed {
            cfg.out_of_sample.seed = s;
        }
        if let Some(f) = self.scarcity {
            cfg.scarcity = f;
        }
        if let Some(p) = self.dc_policy {
            cfg.dc_policy = p;
        }
        if let Some(case) = self.penalty_case {
            match &mut cfg.penalty {
                Some(p) => p.case = case,
                None => cfg.penalty = Some(PenaltySpec { case, medians: None, elders: None }),
            }
        }
        if let Some(v) = self.mean_slack {
            cfg.ambiguity.mean_slack = v;
        }
        if let Some(v) = self.second_moment_lo {
            cfg.ambiguity.second_moment_lo = v;
        }
        if let Some(v) = self.second_moment_hi {
            cfg.ambiguity.second_moment_hi = v;
        }
        if let Some(n) = self.node_limit {
            cfg.node_limit = n;
        }
        if let Some(name) = &self.phase {
            if !cfg.phases.iter().any(|p| &p.name == name) {
                return Err(CliError::UnknownPhase(name.clone()));
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn phase<'a>(&self, cfg: &'a ExperimentConfig) -> &'a PhaseSpec {
        match &self.phase {
            Some(name) => cfg.phases.iter().find(|p| &p.name == name).expect("checked in load"),
            None => &cfg.phases[0],
        }
    }
}

struct PhaseData {
    inst: Instance,
    moments: MomentEstimate,
    in_sample: ScenarioSet,
}

fn phase_data(cfg: &ExperimentConfig, phase: &PhaseSpec) -> Result<PhaseData, CliError> {
    let base = load_instance(&cfg.instance)?;
    let (inst, moments) = build_phase_instance(cfg, &base, phase)?;
    let spec = SampleSpec { count: phase.in_sample_count.unwrap_or(cfg.in_sample.count), seed: cfg.in_sample.seed };
    let in_sample = sample(&moments, cfg.sampling, spec).map_err(IoError::from)?;
    Ok(PhaseData { inst, moments, in_sample })
}

fn validate(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    let inst: Instance = parse_json(&text, path)?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(CliError::Invalid(format!("{}: {} problem(s)\n{report}", path.display(), report.violations.len())));
    }
    println!(
        "{}: ok ({} DCs, {} demand sites, {} periods)",
        path.display(),
        inst.num_dcs(),
        inst.num_sites(),
        inst.periods
    );
    Ok(())
}

fn finish_solve(sol: &PlanSolution) -> Result<(), CliError> {
    if sol.hit_limit() {
        return Err(CliError::SolverLimit(format!(
            "{}: node limit reached after {} nodes; incumbent {} with bound {}",
            sol.approach, sol.nodes, sol.objective, sol.best_bound
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { instance } => validate(&instance),
        Command::Sample { exp, out_of_sample, out } => {
            let cfg = exp.load()?;
            let phase = exp.phase(&cfg);
            let base = load_instance(&cfg.instance)?;
            let (_, moments) = build_phase_instance(&cfg, &base, phase)?;
            let spec = if out_of_sample {
                cfg.out_of_sample
            } else {
                SampleSpec { count: phase.in_sample_count.unwrap_or(cfg.in_sample.count), seed: cfg.in_sample.seed }
            };
            let set = sample(&moments, cfg.sampling, spec).map_err(IoError::from)?;
            save_scenarios(&set, &out)?;
            println!("wrote {} scenarios to {}", set.len(), out.display());
            Ok(())
        }
        Command::Solve { exp, approach, out } => {
            let cfg = exp.load()?;
            let phase = exp.phase(&cfg);
            let d = phase_data(&cfg, phase)?;
            let sol = solve_plan(&d.inst, approach, &d.in_sample, &d.moments, &cfg.solve_options())?;
            let file = PlanFile {
                approach,
                phase: phase.name.clone(),
                objective: sol.objective,
                status: format!("{:?}", sol.status),
                plan: sol.plan.clone(),
            };
            write_json(&file, &out)?;
            println!(
                "{approach}: objective {} ({} variables, {} rows, {} nodes); plan written to {}",
                sol.objective * cfg.unit_scale,
                sol.num_vars,
                sol.num_constraints,
                sol.nodes,
                out.display()
            );
            finish_solve(&sol)
        }
        Command::Evaluate { exp, plan, scenarios, out } => {
            let cfg = exp.load()?;
            let phase = exp.phase(&cfg);
            let d = phase_data(&cfg, phase)?;
            let file: PlanFile = read_json(&plan)?;
            let set = match scenarios {
                Some(p) => read_json(&p)?,
                None => sample(&d.moments, cfg.sampling, cfg.out_of_sample).map_err(IoError::from)?,
            };
            let eval = out_of_sample_evaluate(&d.inst, &file.plan, &set)?;
            save_results(&eval, &out)?;
            println!(
                "{}: total {} unmet mean {} over {} scenarios",
                file.approach,
                eval.breakdown.total * cfg.unit_scale,
                eval.unmet.mean * cfg.unit_scale,
                set.len()
            );
            Ok(())
        }
        Command::Compare { exp, out } => {
            let mut cfg = exp.load()?;
            if let Some(name) = &exp.phase {
                cfg.phases.retain(|p| &p.name == name);
            }
            let result = run_experiment(&cfg)?;
            for path in write_reports(&result, &out)? {
                println!("wrote {}", path.display());
            }
            let limited: Vec<String> = result
                .phases
                .iter()
                .flat_map(|p| {
                    p.rows
                        .iter()
                        .filter(|r| r.solution.hit_limit())
                        .map(move |r| format!("{}/{}", p.phase.name, r.solution.approach))
                })
                .collect();
            if !limited.is_empty() {
                return Err(CliError::SolverLimit(format!("node limit reached for {}", limited.join(", "))));
            }
            Ok(())
        }
        Command::ExportLp { exp, approach, out } => {
            let cfg = exp.load()?;
            let phase = exp.phase(&cfg);
            let d = phase_data(&cfg, phase)?;
            let ir = match approach {
                Approach::Dt => build_deterministic(&d.inst, &d.moments)?,
                Approach::Sp => build_extensive_smip(&d.inst, &d.in_sample)?,
                Approach::Dro => {
                    let f = cfg.ambiguity;
                    let amb = build_ambiguity_bounds(
                        &empirical_moments(&d.in_sample),
                        f.mean_slack,
                        f.second_moment_lo,
                        f.second_moment_hi,
                        &d.in_sample,
                    )
                    .map_err(IoError::from)?;
                    build_dro_milp(&d.inst, &amb)?
                }
            };
            std::fs::write(&out, ir.to_lp()).map_err(|source| IoError::Write { path: out.clone(), source })?;
            println!(
                "wrote {} ({} variables, {} rows)",
                out.display(),
                ir.model().num_vars(),
                ir.model().num_constraints()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
