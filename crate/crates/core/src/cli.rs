//! Command-line front end shared by the `privdac` binary and the tests.
//!
//! Every subcommand writes `summary.json` and `manifest.json` (plus
//! `trace.csv` when it simulates) into `--out-dir`, prints the summary, and
//! maps the outcome to an exit code: [`EXIT_PASS`], [`EXIT_CHECK_FAILED`]
//! or [`EXIT_CONFIG`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::adversary::attack_metrics;
use crate::error::{Error, Result};
use crate::graph::{
    algebraic_connectivity, decomposed_laplacian, predicted_decomposed_lambda2, NetworkGraph,
};
use crate::privacy::run_audit;
use crate::sim::engine::run_scenario;
use crate::sim::scenario::{AttackSection, Mode, ScenarioConfig};
use crate::sim::summary::{consensus_summary, formation_summary};
use crate::sim::trace::Trace;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest accepted gap between the eigensolver and the closed-form
/// decomposed `λ₂`.
pub const SPECTRAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "privdac",
    version,
    about = "Privacy-preserving dynamic average consensus simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Laplacian spectrum of a graph and of its decomposed network.
    Spectral {
        /// `cycle(n)`, `path(n)` or `complete(n)`.
        #[arg(default_value = "cycle(4)")]
        graph: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a consensus scenario and check tracking.
    Consensus(RunArgs),
    /// Run the eavesdropping observer against a scenario.
    Attack(RunArgs),
    /// Check that an alternate world is invisible to the eavesdropper.
    PrivacyAudit(RunArgs),
    /// Run consensus-driven formation control.
    Formation(RunArgs),
    /// Run one scenario over consecutive seeds in parallel.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds, starting at the scenario seed.
        #[arg(long, default_value_t = 8)]
        seeds: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Built-in scenario name or path to a TOML scenario file.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `conventional` or `decomposed`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    /// Loads the scenario (built-in `default` unless `--config` is given)
    /// and applies the command-line overrides.
    pub fn scenario(&self, default: &str) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(self.config.as_deref().unwrap_or(default))?;
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub scenario_id: String,
    pub config_hash: Option<String>,
    pub outputs: Vec<String>,
    pub verdicts: BTreeMap<String, bool>,
}

/// Summary, verdicts and optional trace of one evaluated command.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub command: &'static str,
    pub scenario_id: String,
    pub config_hash: Option<String>,
    pub summary: Value,
    pub verdicts: BTreeMap<String, bool>,
    pub trace: Option<Trace>,
}

impl Evaluation {
    pub fn pass(&self) -> bool {
        self.verdicts.values().all(|v| *v)
    }

    fn summary_json(&self) -> Value {
        let mut v = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "scenario": self.scenario_id,
            "pass": self.pass(),
            "verdicts": self.verdicts,
        });
        if let (Value::Object(dst), Value::Object(src)) = (&mut v, &self.summary) {
            for (k, val) in src {
                dst.insert(k.clone(), val.clone());
            }
        }
        v
    }

    /// Writes `trace.csv` (if any), `summary.json` and `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<RunManifest> {
        fs::create_dir_all(dir)?;
        let mut outputs = Vec::new();
        if let Some(trace) = &self.trace {
            let p = dir.join("trace.csv");
            trace.write_csv(&p)?;
            outputs.push(p.display().to_string());
        }
        let p = dir.join("summary.json");
        fs::write(
            &p,
            serde_json::to_string_pretty(&self.summary_json())? + "\n",
        )?;
        outputs.push(p.display().to_string());
        let manifest_path = dir.join("manifest.json");
        outputs.push(manifest_path.display().to_string());
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            scenario_id: self.scenario_id.clone(),
            config_hash: self.config_hash.clone(),
            outputs,
            verdicts: self.verdicts.clone(),
        };
        fs::write(
            &manifest_path,
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(manifest)
    }
}

fn evaluation(command: &'static str, cfg: &ScenarioConfig) -> Evaluation {
    Evaluation {
        command,
        scenario_id: cfg.id.clone(),
        config_hash: Some(cfg.config_hash()),
        summary: json!({}),
        verdicts: BTreeMap::new(),
        trace: None,
    }
}

pub fn eval_spectral(graph: &str) -> Result<Evaluation> {
    let g: NetworkGraph = graph.parse()?;
    g.ensure_connected()?;
    let l = g.laplacian();
    let lambda2 = algebraic_connectivity(&l)?;
    let decomposed = algebraic_connectivity(&decomposed_laplacian(&l))?;
    let predicted = predicted_decomposed_lambda2(lambda2);
    let difference = (decomposed - predicted).abs();
    let mut verdicts = BTreeMap::new();
    verdicts.insert("formula_matches".into(), difference <= SPECTRAL_TOLERANCE);
    Ok(Evaluation {
        command: "spectral",
        scenario_id: graph.trim().to_string(),
        config_hash: None,
        summary: json!({
            "graph": graph.trim(),
            "n": g.n(),
            "lambda2": lambda2,
            "lambda2_decomposed": decomposed,
            "lambda2_predicted": predicted,
            "difference": difference,
        }),
        verdicts,
        trace: None,
    })
}

pub fn eval_consensus(cfg: &ScenarioConfig) -> Result<Evaluation> {
    let sc = cfg.resolve()?;
    let trace = run_scenario(&sc)?.trace;
    let s = consensus_summary(&trace, &sc, None)?;
    let mut ev = evaluation("consensus", cfg);
    ev.verdicts.insert(
        "tracking".into(),
        s.tracking_error_final <= cfg.checks.tracking_error,
    );
    if let Some(c) = s.conservation_max {
        ev.verdicts
            .insert("conservation".into(), c <= cfg.checks.conservation);
    }
    ev.summary = json!({ "mode": sc.mode, "consensus": s });
    ev.trace = Some(trace);
    Ok(ev)
}

/// The attack is expected to succeed on the conventional protocol and to
/// fail on the decomposed one; the verdict checks that expectation.
pub fn eval_attack(cfg: &ScenarioConfig) -> Result<Evaluation> {
    let mut cfg = cfg.clone();
    let section = cfg
        .attack
        .get_or_insert_with(AttackSection::default)
        .clone();
    let sc = cfg.resolve()?;
    let trace = run_scenario(&sc)?.trace;
    let metrics = attack_metrics(&trace, section.transient_fraction)?;
    let success = metrics.bounded && metrics.sup_error_after_transient <= section.success_threshold;
    let mut ev = evaluation("attack", &cfg);
    let expected = sc.mode == Mode::Conventional;
    ev.verdicts
        .insert("expected_outcome".into(), success == expected);
    ev.verdicts.insert("bounded".into(), metrics.bounded);
    ev.summary = json!({
        "mode": sc.mode,
        "victim": section.victim,
        "attack_success": success,
        "metrics": metrics,
    });
    ev.trace = Some(trace);
    Ok(ev)
}

pub fn eval_audit(cfg: &ScenarioConfig) -> Result<Evaluation> {
    let mut cfg = cfg.clone();
    cfg.audit.get_or_insert_with(Default::default);
    if cfg.mode != Mode::Decomposed {
        return Err(Error::Config(
            "privacy-audit needs --mode decomposed".into(),
        ));
    }
    let report = run_audit(&cfg)?;
    let mut ev = evaluation("privacy-audit", &cfg);
    ev.verdicts.insert(
        "indistinguishable".into(),
        report.max_deviation <= report.tolerance,
    );
    ev.verdicts.insert(
        "beta_offset".into(),
        report.beta_offset_residual <= report.tolerance,
    );
    if let Some(d) = report.negative_control_deviation {
        ev.verdicts.insert(
            "negative_control".into(),
            d > crate::privacy::NEGATIVE_CONTROL_MIN,
        );
    }
    ev.summary = serde_json::to_value(&report)?;
    Ok(ev)
}

pub fn eval_formation(cfg: &ScenarioConfig) -> Result<Evaluation> {
    let mut cfg = cfg.clone();
    let section = cfg.formation.get_or_insert_with(Default::default).clone();
    let sc = cfg.resolve()?;
    let trace = run_scenario(&sc)?.trace;
    let m = formation_summary(&trace, &section)?;
    let mut ev = evaluation("formation", &cfg);
    ev.verdicts.insert("final_errors".into(), m.errors_pass);
    ev.verdicts.insert("dissipation".into(), m.dissipation_pass);
    ev.verdicts.insert("lyapunov_bound".into(), m.lyapunov_pass);
    ev.summary = json!({ "mode": sc.mode, "final_errors": m.final_errors, "formation": m });
    ev.trace = Some(trace);
    Ok(ev)
}

/// Runs whichever layer the scenario enables, most specific first.
pub fn eval_auto(cfg: &ScenarioConfig) -> Result<Evaluation> {
    if cfg.formation.is_some() {
        eval_formation(cfg)
    } else if cfg.audit.is_some() {
        eval_audit(cfg)
    } else if cfg.attack.is_some() {
        eval_attack(cfg)
    } else {
        eval_consensus(cfg)
    }
}

fn run_single(
    args: &RunArgs,
    default: &str,
    f: fn(&ScenarioConfig) -> Result<Evaluation>,
) -> Result<bool> {
    let cfg = args.scenario(default)?;
    let ev = f(&cfg)?;
    ev.write(&args.out_dir)?;
    println!("{}", serde_json::to_string_pretty(&ev.summary_json())?);
    Ok(ev.pass())
}

fn run_sweep(args: &RunArgs, seeds: u64) -> Result<bool> {
    let base = args.scenario("moving-targets")?;
    let results: Vec<Result<Evaluation>> = (0..seeds)
        .into_par_iter()
        .map(|k| {
            let seed = base.seed + k;
            let cfg = ScenarioConfig {
                seed,
                id: format!("{}-seed{seed}", base.id),
                ..base.clone()
            };
            eval_auto(&cfg)
        })
        .collect();
    let mut runs = Vec::new();
    let mut all_pass = true;
    for r in results {
        let ev = r?;
        ev.write(&args.out_dir.join(&ev.scenario_id))?;
        all_pass &= ev.pass();
        runs.push(
            json!({ "scenario": ev.scenario_id, "pass": ev.pass(), "verdicts": ev.verdicts }),
        );
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "sweep",
        "scenario": base.id,
        "config_hash": base.config_hash(),
        "pass": all_pass,
        "runs": runs,
    });
    fs::create_dir_all(&args.out_dir)?;
    fs::write(
        args.out_dir.join("sweep.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(all_pass)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Spectral { graph, out_dir } => {
            let ev = eval_spectral(graph)?;
            ev.write(out_dir)?;
            println!("{}", serde_json::to_string_pretty(&ev.summary_json())?);
            Ok(ev.pass())
        }
        Command::Consensus(a) => run_single(a, "moving-targets", eval_consensus),
        Command::Attack(a) => run_single(a, "attack-conventional", eval_attack),
        Command::PrivacyAudit(a) => run_single(a, "privacy-audit", eval_audit),
        Command::Formation(a) => run_single(a, "formation-square", eval_formation),
        Command::Sweep { run, seeds } => run_sweep(run, *seeds),
    }
}

fn jobs(cli: &Cli) -> Option<usize> {
    match &cli.command {
        Command::Spectral { .. } => None,
        Command::Consensus(a)
        | Command::Attack(a)
        | Command::PrivacyAudit(a)
        | Command::Formation(a) => a.jobs,
        Command::Sweep { run, .. } => run.jobs,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs(&cli) {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_CONFIG;
        }
        pool = pool.num_threads(j);
    }
    let outcome = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(&cli)),
        Err(e) => Err(Error::Config(format!("cannot start worker pool: {e}"))),
    };
    match outcome {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_CHECK_FAILED
            }
        }
    }
}
