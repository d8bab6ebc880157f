//! Command-line frontend.
//!
//! Exit codes: 0 success, 1 usage, IO or validation error, 2 infeasible (or
//! no placement found by the heuristic), 3 budget exhausted without any
//! feasible placement.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use layerplace_core::fixtures::{self, builtin_fixture, Fixture, FIXTURE_NAMES};
use layerplace_core::linearize::{linearize, LinearizeOptions, SharingMode};
use layerplace_core::scenario::{generate, paper_transmission_profile, DeviceMix, ScenarioParams};
use layerplace_core::solver::{solve, SolveError, SolverConfig};
use layerplace_core::{EvalConventions, Method, PayloadUnit, PlacementProblem, ProcessingWeight};
use serde::Serialize;
use serde_json::Value;

use crate::files::{
    self, evaluation_doc, parse_placement, read_problem, read_text, solution_doc, ProblemFile, TopologySection,
};
use crate::harness::{parse_l_values, run_experiment, CnnSet, ExperimentConfig, LValue, Mix};
use crate::lp::write_lp;

#[derive(Debug, Parser)]
#[command(
    name = "layerplace",
    version,
    about = "Latency-optimal placement of CNN layers on multi-hop networks of constrained devices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file and print the placement document as JSON.
    Solve(SolveArgs),
    /// Check and evaluate a given placement of a problem.
    Evaluate(EvaluateArgs),
    /// Draw a random connected instance and print it as a problem file.
    Generate(GenerateArgs),
    /// Run a Monte-Carlo experiment and print the aggregated report.
    Bench(BenchArgs),
    /// List built-in fixtures, or print one as JSON.
    Fixtures(FixturesArgs),
    /// Write the linearized model in LP format.
    ExportLp(ExportLpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Exhaustive,
    BranchAndBound,
    LocalSearch,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exhaustive => Method::Exhaustive,
            MethodArg::BranchAndBound => Method::BranchAndBound,
            MethodArg::LocalSearch => Method::LocalSearch,
        }
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Exhaustive => "exhaustive",
        Method::BranchAndBound => "branch-and-bound",
        Method::LocalSearch => "local-search",
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    /// Layer j weighted by its own reach probability, all layers.
    AsWritten,
    /// Layer j weighted by the reach probability of layer j+1, last layer excluded.
    NextLayerCompat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PayloadArg {
    /// 1 KB = 8000 bits.
    BitsExact,
    /// 1 KB = 1000 bits.
    BytesAsBitsCompat,
}

#[derive(Debug, Clone, Args)]
pub struct ConventionArgs {
    /// Shorthand for the compat conventions:
    /// next-layer-compat weighting and bytes-as-bits-compat payloads.
    #[arg(long)]
    pub paper_compat: bool,
    /// Drop the processing term from the objective.
    #[arg(long)]
    pub no_processing: bool,
    /// Processing weight convention (overrides --paper-compat and the file).
    #[arg(long, value_enum)]
    pub processing_weight: Option<WeightArg>,
    /// Payload unit convention (overrides --paper-compat and the file).
    #[arg(long, value_enum)]
    pub payload_unit: Option<PayloadArg>,
}

impl ConventionArgs {
    pub fn apply(&self, base: EvalConventions) -> EvalConventions {
        let mut c = if self.paper_compat {
            EvalConventions::compat()
        } else {
            base
        };
        if let Some(w) = self.processing_weight {
            c.processing_weight = match w {
                WeightArg::AsWritten => ProcessingWeight::AsWritten,
                WeightArg::NextLayerCompat => ProcessingWeight::NextLayerCompat,
            };
        }
        if let Some(p) = self.payload_unit {
            c.payload_unit = match p {
                PayloadArg::BitsExact => PayloadUnit::BitsExact,
                PayloadArg::BytesAsBitsCompat => PayloadUnit::BytesAsBitsCompat,
            };
        }
        if self.no_processing {
            c.include_processing = false;
        }
        c
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Search method.
    #[arg(long, value_enum, default_value = "branch-and-bound")]
    pub method: MethodArg,
    /// Seed for unit ordering (tie-breaking) and local-search restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    /// Maximum number of search nodes for the exact methods.
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Local-search restarts (also the branch-and-bound warm start).
    #[arg(long, default_value_t = 16)]
    pub restarts: u32,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            method: self.method.into(),
            seed: self.seed,
            time_budget_s: self.time_budget,
            node_limit: self.node_limit,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem file (JSON).
    pub problem: PathBuf,
    /// Per-unit layer cap; overrides the file.
    #[arg(long = "L")]
    pub layers_per_unit: Option<u32>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub conventions: ConventionArgs,
    /// Write the document here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Problem file (JSON).
    pub problem: PathBuf,
    /// Placement document (JSON with a `placements` list, as printed by `solve`).
    pub placement: PathBuf,
    /// Per-unit layer cap; overrides the file.
    #[arg(long = "L")]
    pub layers_per_unit: Option<u32>,
    #[command(flatten)]
    pub conventions: ConventionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Comma-separated CNN fixtures deployed together, one source each.
    #[arg(long, default_value = "cnn5")]
    pub cnn: String,
    /// Share the first K layers among all CNNs of the set.
    #[arg(long, default_value_t = 0)]
    pub share_first: usize,
    /// STM32H7-Raspberry percentage split.
    #[arg(long, default_value = "50-50")]
    pub mix: String,
    /// Radio profile: wifi4 or halow.
    #[arg(long, default_value = "wifi4")]
    pub profile: String,
    /// Per-unit layer cap, a number or C for the deepest CNN's layer count.
    #[arg(long = "L", default_value = "1")]
    pub layers_per_unit: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of compute units.
    #[arg(long, default_value_t = 30)]
    pub units: usize,
    /// Side of the square area, in meters.
    #[arg(long, default_value_t = 30.0)]
    pub area: f64,
    #[command(flatten)]
    pub conventions: ConventionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// CNN set; repeat for several sets. Comma-separated fixtures form one
    /// multi-CNN set (e.g. cnn5,cnn5).
    #[arg(long, default_value = "cnn5")]
    pub cnn: Vec<String>,
    /// Share the first K layers among the CNNs of every multi-CNN set.
    #[arg(long, default_value_t = 0)]
    pub share_first: usize,
    /// STM32H7-Raspberry splits, comma-separated (e.g. 10-90,50-50,90-10).
    #[arg(long, default_value = "50-50")]
    pub mix: String,
    /// Radio profiles, comma-separated.
    #[arg(long, default_value = "wifi4")]
    pub profile: String,
    /// Layer caps to sweep, e.g. 1..4,C.
    #[arg(long = "L", default_value = "1..4,C")]
    pub layers_per_unit: String,
    /// Random layouts per row.
    #[arg(long, default_value_t = 100)]
    pub trials: u32,
    /// Master seed; per-trial seeds derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report format: csv, json or markdown.
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Search method per trial.
    #[arg(long, value_enum, default_value = "local-search")]
    pub method: MethodArg,
    /// Local-search restarts per trial.
    #[arg(long, default_value_t = 8)]
    pub restarts: u32,
    /// Wall-clock budget per trial, in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[arg(long, default_value_t = 30)]
    pub units: usize,
    #[arg(long, default_value_t = 30.0)]
    pub area: f64,
    #[command(flatten)]
    pub conventions: ConventionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Fixture or example problem name; omit to list them.
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SharingArg {
    /// One variable per shared layer and unit.
    Substitute,
    /// Per-member variables tied by equality rows.
    EqualityRows,
}

#[derive(Debug, Args)]
pub struct ExportLpArgs {
    /// Problem file (JSON).
    pub problem: PathBuf,
    #[arg(long = "L")]
    pub layers_per_unit: Option<u32>,
    #[arg(long, value_enum, default_value = "substitute")]
    pub sharing_mode: SharingArg,
    /// Keep product variables whose objective coefficient is zero.
    #[arg(long)]
    pub keep_zero_products: bool,
    #[command(flatten)]
    pub conventions: ConventionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub message: String,
}

impl Exit {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn invalid(message: impl std::fmt::Display) -> Self {
        Self::new(1, message.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            e.code
        }
    }
}

fn dispatch(command: Command) -> Result<(), Exit> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Fixtures(a) => cmd_fixtures(a),
        Command::ExportLp(a) => cmd_export_lp(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Exit> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Exit::invalid(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Exit::invalid(format!("cannot write output: {e}")))
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, Exit> {
    let mut s = serde_json::to_string_pretty(value).map_err(Exit::invalid)?;
    s.push('\n');
    Ok(s)
}

fn load_problem(path: &Path, l: Option<u32>, conventions: &ConventionArgs) -> Result<PlacementProblem, Exit> {
    let (mut problem, _) = read_problem(path).map_err(Exit::invalid)?;
    if let Some(l) = l {
        problem.layers_per_unit_cap = l;
    }
    problem.conventions = conventions.apply(problem.conventions);
    problem.validate().map_err(Exit::invalid)?;
    Ok(problem)
}

fn cmd_solve(a: SolveArgs) -> Result<(), Exit> {
    let problem = load_problem(&a.problem, a.layers_per_unit, &a.conventions)?;
    let config = a.solver.config();
    let started = Instant::now();
    let result = solve(&problem, &config);
    let elapsed = started.elapsed().as_secs_f64();
    let solution = match result {
        Ok(s) => s,
        Err(SolveError::BudgetExceeded { incumbent: Some(s) }) => {
            eprintln!("warning: search budget exhausted; returning the best placement found (not proven optimal)");
            *s
        }
        Err(SolveError::BudgetExceeded { incumbent: None }) => {
            return Err(Exit::new(
                3,
                "search budget exhausted before any feasible placement was found",
            ))
        }
        Err(SolveError::Infeasible) => return Err(Exit::new(2, "infeasible: no placement satisfies the constraints")),
        Err(SolveError::NoPlacementFound) => {
            return Err(Exit::new(
                2,
                "no placement found (heuristic search; the instance may still be feasible)",
            ))
        }
        Err(e) => return Err(Exit::invalid(e)),
    };
    eprintln!("solved in {elapsed:.3} s ({} nodes)", solution.stats.nodes);
    let doc = solution_doc(&solution, &problem, method_name(config.method), config.seed).map_err(Exit::invalid)?;
    emit(a.out.as_deref(), &json(&doc)?)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Exit> {
    let problem = load_problem(&a.problem, a.layers_per_unit, &a.conventions)?;
    let text = read_text(&a.placement).map_err(Exit::invalid)?;
    let placement = parse_placement(&text, &problem).map_err(Exit::invalid)?;
    let doc = evaluation_doc(&placement, &problem).map_err(Exit::invalid)?;
    emit(a.out.as_deref(), &json(&doc)?)?;
    if doc.feasible {
        Ok(())
    } else {
        for v in &doc.violations {
            eprintln!("violation: {v}");
        }
        Err(Exit::new(
            2,
            format!("infeasible placement ({} violation(s))", doc.violations.len()),
        ))
    }
}

fn cnn_set(spec: &str, share_first: usize) -> Result<CnnSet, Exit> {
    let cnns = spec
        .split(',')
        .map(|n| fixtures::builtin_cnn(n.trim()).map_err(Exit::invalid))
        .collect::<Result<Vec<_>, _>>()?;
    if cnns.len() > 1 && share_first > 0 {
        Ok(CnnSet::with_shared_prefix(
            format!("{spec}/shared{share_first}"),
            cnns,
            share_first,
        ))
    } else if cnns.len() == 1 {
        Ok(CnnSet::single(cnns.into_iter().next().expect("one CNN")))
    } else {
        Ok(CnnSet::with_shared_prefix(spec, cnns, 0))
    }
}

fn single_l(text: &str) -> Result<LValue, Exit> {
    match parse_l_values(text).map_err(Exit::invalid)?.as_slice() {
        [l] => Ok(*l),
        _ => Err(Exit::invalid(format!("expected a single L value, got {text:?}"))),
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Exit> {
    let set = cnn_set(&a.cnn, a.share_first)?;
    let mix: Mix = a.mix.parse().map_err(Exit::invalid)?;
    let profile = paper_transmission_profile(&a.profile).map_err(Exit::invalid)?;
    let l = single_l(&a.layers_per_unit)?;
    let params = ScenarioParams {
        n_units: a.units,
        area_side: a.area,
        ..ScenarioParams::standard(
            DeviceMix::stm_raspberry(mix.stm_percent).map_err(Exit::invalid)?,
            profile,
            set.cnns.len(),
        )
    };
    let mut problem = generate(&params, &set.cnns, l.resolve(&set.cnns), a.seed).map_err(Exit::invalid)?;
    problem.sharing = set.sharing.clone();
    problem.conventions = a.conventions.apply(EvalConventions::default());
    problem.validate().map_err(Exit::invalid)?;
    let mut file = ProblemFile::from_problem(&problem);
    file.meta = BTreeMap::from([
        ("seed".to_string(), Value::from(a.seed)),
        ("mix".to_string(), Value::from(mix.label())),
        ("profile".to_string(), Value::from(a.profile.clone())),
        ("L".to_string(), Value::from(l.label())),
    ]);
    emit(a.out.as_deref(), &json(&file)?)
}

fn split_list(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Exit> {
    let sets = a
        .cnn
        .iter()
        .map(|s| cnn_set(s, a.share_first))
        .collect::<Result<Vec<_>, _>>()?;
    let mixes = split_list(&a.mix)
        .map(|m| m.parse::<Mix>().map_err(Exit::invalid))
        .collect::<Result<Vec<_>, _>>()?;
    let profiles: Vec<String> = split_list(&a.profile).map(String::from).collect();
    let l_values = parse_l_values(&a.layers_per_unit).map_err(Exit::invalid)?;
    let mut config = ExperimentConfig::new(sets, mixes, l_values, profiles);
    config.trials = a.trials;
    config.master_seed = a.seed;
    config.conventions = a.conventions.apply(EvalConventions::default());
    config.solver = SolverConfig {
        method: a.method.into(),
        seed: a.seed,
        time_budget_s: a.time_budget,
        node_limit: None,
        restarts: a.restarts,
    };
    config.n_units = a.units;
    config.area_side = a.area;
    // Reject a bad format before spending time on trials.
    a.format
        .parse::<crate::harness::ReportFormat>()
        .map_err(Exit::invalid)?;
    let started = Instant::now();
    let rows = run_experiment(&config).map_err(Exit::invalid)?;
    eprintln!("{} row(s) in {:.1} s", rows.len(), started.elapsed().as_secs_f64());
    let report = crate::harness::emit_report(&rows, &a.format).map_err(Exit::invalid)?;
    emit(a.out.as_deref(), &report)
}

fn cmd_fixtures(a: FixturesArgs) -> Result<(), Exit> {
    let Some(name) = a.name else {
        let mut text = String::new();
        for n in FIXTURE_NAMES.iter().chain(files::EXAMPLE_NAMES.iter()) {
            text.push_str(n);
            text.push('\n');
        }
        return emit(None, &text);
    };
    if let Some(problem) = files::example_problem(&name) {
        return emit(None, &json(&ProblemFile::from_problem(&problem))?);
    }
    let text = match builtin_fixture(&name).map_err(Exit::invalid)? {
        Fixture::Cnn(c) => json(&c)?,
        Fixture::Device(d) => json(&d)?,
        Fixture::Topology(t) => json(&TopologySection::from_topology(&t))?,
    };
    emit(None, &text)
}

fn cmd_export_lp(a: ExportLpArgs) -> Result<(), Exit> {
    let problem = load_problem(&a.problem, a.layers_per_unit, &a.conventions)?;
    let options = LinearizeOptions {
        sharing_mode: match a.sharing_mode {
            SharingArg::Substitute => SharingMode::Substitute,
            SharingArg::EqualityRows => SharingMode::EqualityRows,
        },
        prune_zero_products: !a.keep_zero_products,
    };
    let model = linearize(&problem, options).map_err(Exit::invalid)?;
    emit(a.out.as_deref(), &write_lp(&model))
}
