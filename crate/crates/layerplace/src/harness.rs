//! Monte-Carlo experiments over random layouts, aggregated per
//! (CNN set, profile, device mix, L).
//!
//! Trial `k` of mix `m` draws its layout from
//! `derive_seed(master, (m << 32) | k)`, where `m` is the STM32H7 percentage.
//! The layout therefore does not depend on L or the radio profile, and every
//! row of one mix sees the same topologies.

use std::fmt::Write as _;
use std::str::FromStr;

use layerplace_core::latency::{evaluate, EvalConventions, LatencyBreakdown};
use layerplace_core::model::{CnnSpec, LayerRef, PlacementProblem, SharingGroup};
use layerplace_core::scenario::{
    derive_seed, generate, paper_transmission_profile, DeviceMix, ScenarioError, ScenarioParams,
};
use layerplace_core::solver::{solve, SolveError, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("unsupported report format {0:?} (expected csv, json or markdown)")]
    UnsupportedFormat(String),
    #[error("cannot render report: {0}")]
    Render(String),
}

/// Per-unit layer cap of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LValue {
    Fixed(u32),
    /// As many layers as the deepest CNN of the set, so a whole CNN fits on one unit.
    Whole,
}

impl LValue {
    pub fn resolve(self, cnns: &[CnnSpec]) -> u32 {
        match self {
            LValue::Fixed(l) => l,
            LValue::Whole => cnns.iter().map(|c| c.depth()).max().unwrap_or(1) as u32,
        }
    }

    pub fn label(self) -> String {
        match self {
            LValue::Fixed(l) => l.to_string(),
            LValue::Whole => "C".into(),
        }
    }
}

/// Parses `1..4,C` style lists.
pub fn parse_l_values(text: &str) -> Result<Vec<LValue>, HarnessError> {
    let bad = || HarnessError::Invalid(format!("bad L list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        if part.eq_ignore_ascii_case("c") {
            out.push(LValue::Whole);
        } else if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u32, u32) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a == 0 || b < a {
                return Err(bad());
            }
            out.extend((a..=b).map(LValue::Fixed));
        } else {
            let l: u32 = part.parse().map_err(|_| bad())?;
            if l == 0 {
                return Err(bad());
            }
            out.push(LValue::Fixed(l));
        }
    }
    Ok(out)
}

/// STM32H7-Raspberry split such as `50-50`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mix {
    pub stm_percent: u32,
}

impl Mix {
    pub fn label(self) -> String {
        format!("{}-{}", self.stm_percent, 100 - self.stm_percent)
    }
}

impl FromStr for Mix {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Invalid(format!("bad mix {s:?}, expected e.g. 50-50"));
        let (a, b) = s.trim().split_once('-').ok_or_else(bad)?;
        let (a, b): (u32, u32) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        if a + b != 100 {
            return Err(bad());
        }
        Ok(Self { stm_percent: a })
    }
}

/// CNNs deployed together, one source each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSet {
    pub name: String,
    pub cnns: Vec<CnnSpec>,
    pub sharing: Vec<SharingGroup>,
}

impl CnnSet {
    pub fn single(cnn: CnnSpec) -> Self {
        Self {
            name: cnn.name.clone(),
            cnns: vec![cnn],
            sharing: Vec::new(),
        }
    }

    /// All CNNs share their first `k` layers.
    pub fn with_shared_prefix(name: impl Into<String>, cnns: Vec<CnnSpec>, k: usize) -> Self {
        let sharing = (0..k)
            .map(|j| SharingGroup::new((0..cnns.len()).map(|u| LayerRef::new(u, j)).collect()))
            .collect();
        Self {
            name: name.into(),
            cnns,
            sharing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cnn_sets: Vec<CnnSet>,
    pub mixes: Vec<Mix>,
    pub l_values: Vec<LValue>,
    pub profiles: Vec<String>,
    pub conventions: EvalConventions,
    pub trials: u32,
    pub master_seed: u64,
    pub solver: SolverConfig,
    pub n_units: usize,
    pub area_side: f64,
}

impl ExperimentConfig {
    pub fn new(cnn_sets: Vec<CnnSet>, mixes: Vec<Mix>, l_values: Vec<LValue>, profiles: Vec<String>) -> Self {
        Self {
            cnn_sets,
            mixes,
            l_values,
            profiles,
            conventions: EvalConventions::default(),
            trials: 100,
            master_seed: 0,
            solver: SolverConfig {
                method: layerplace_core::Method::LocalSearch,
                restarts: 8,
                ..SolverConfig::default()
            },
            n_units: 30,
            area_side: 30.0,
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Invalid(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.cnn_sets.is_empty() || self.mixes.is_empty() || self.l_values.is_empty() || self.profiles.is_empty() {
            return bad("need at least one CNN set, mix, L value and profile");
        }
        if self.cnn_sets.iter().any(|s| s.cnns.is_empty()) {
            return bad("a CNN set is empty");
        }
        for p in &self.profiles {
            paper_transmission_profile(p)?;
        }
        Ok(())
    }
}

pub fn trial_seed(master: u64, mix: Mix, trial: u32) -> u64 {
    derive_seed(master, (u64::from(mix.stm_percent) << 32) | u64::from(trial))
}

/// Short label of a convention set.
pub fn conventions_label(c: &EvalConventions) -> String {
    use layerplace_core::{PayloadUnit, ProcessingWeight};
    let mut s = String::from(match (c.processing_weight, c.payload_unit) {
        (ProcessingWeight::NextLayerCompat, PayloadUnit::BytesAsBitsCompat) => "compat",
        (ProcessingWeight::AsWritten, PayloadUnit::BitsExact) => "as_written",
        (ProcessingWeight::NextLayerCompat, PayloadUnit::BitsExact) => "next_layer_compat+bits_exact",
        (ProcessingWeight::AsWritten, PayloadUnit::BytesAsBitsCompat) => "as_written+bytes_as_bits_compat",
    });
    if !c.include_processing {
        s.push_str("+no_processing");
    }
    s
}

/// The problem solved in one trial.
pub fn trial_problem(
    config: &ExperimentConfig,
    set: &CnnSet,
    mix: Mix,
    l: LValue,
    profile: &str,
    trial: u32,
) -> Result<PlacementProblem, HarnessError> {
    let params = ScenarioParams {
        n_units: config.n_units,
        area_side: config.area_side,
        ..ScenarioParams::standard(
            DeviceMix::stm_raspberry(mix.stm_percent)?,
            paper_transmission_profile(profile)?,
            set.cnns.len(),
        )
    };
    let mut problem = generate(
        &params,
        &set.cnns,
        l.resolve(&set.cnns),
        trial_seed(config.master_seed, mix, trial),
    )?;
    problem.sharing = set.sharing.clone();
    problem.conventions = config.conventions;
    Ok(problem)
}

/// Outcome of one trial.
pub fn run_trial(
    config: &ExperimentConfig,
    set: &CnnSet,
    mix: Mix,
    l: LValue,
    profile: &str,
    trial: u32,
) -> Result<LatencyBreakdown, String> {
    let problem = trial_problem(config, set, mix, l, profile, trial).map_err(|e| e.to_string())?;
    let solver = SolverConfig {
        seed: trial_seed(config.master_seed, mix, trial),
        ..config.solver.clone()
    };
    let solution = match solve(&problem, &solver) {
        Ok(s) => s,
        Err(SolveError::BudgetExceeded { incumbent: Some(s) }) => *s,
        Err(e) => return Err(e.to_string()),
    };
    evaluate(&solution.placement, &problem).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mix: String,
    #[serde(rename = "L")]
    pub l: String,
    pub profile: String,
    pub mode: String,
    /// Milliseconds; `None` when every trial failed.
    pub t_t_mean: Option<f64>,
    pub t_t_std: Option<f64>,
    pub t_p_mean: Option<f64>,
    pub t_p_std: Option<f64>,
    pub t_mean: Option<f64>,
    pub t_std: Option<f64>,
    pub trials: u32,
    pub failures: u32,
}

/// Mean and sample standard deviation; zero deviation for a single value.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

pub fn aggregate(
    mix: Mix,
    l: LValue,
    profile: &str,
    mode: &str,
    outcomes: &[Result<LatencyBreakdown, String>],
) -> AggregateRow {
    let ok: Vec<&LatencyBreakdown> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let column = |f: fn(&LatencyBreakdown) -> f64| {
        let xs: Vec<f64> = ok.iter().map(|b| f(b) * 1e3).collect();
        mean_std(&xs)
    };
    let t_t = column(|b| b.t_t);
    let t_p = column(|b| b.t_p);
    let t = column(|b| b.t);
    AggregateRow {
        mix: mix.label(),
        l: l.label(),
        profile: profile.into(),
        mode: mode.into(),
        t_t_mean: t_t.map(|v| v.0),
        t_t_std: t_t.map(|v| v.1),
        t_p_mean: t_p.map(|v| v.0),
        t_p_std: t_p.map(|v| v.1),
        t_mean: t.map(|v| v.0),
        t_std: t.map(|v| v.1),
        trials: outcomes.len() as u32,
        failures: (outcomes.len() - ok.len()) as u32,
    }
}

/// One row per (CNN set, profile, mix, L), in that nesting order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<AggregateRow>, HarnessError> {
    config.check()?;
    let mut rows = Vec::new();
    for set in &config.cnn_sets {
        let mode = format!("{}:{}", set.name, conventions_label(&config.conventions));
        for profile in &config.profiles {
            for &mix in &config.mixes {
                for &l in &config.l_values {
                    // Collecting an indexed parallel iterator keeps trial order.
                    let outcomes: Vec<_> = (0..config.trials)
                        .into_par_iter()
                        .map(|k| run_trial(config, set, mix, l, profile, k))
                        .collect();
                    rows.push(aggregate(mix, l, profile, &mode, &outcomes));
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" | "markdown-table" => Ok(Self::Markdown),
            other => Err(HarnessError::UnsupportedFormat(other.into())),
        }
    }
}

fn fixed2(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2}")).unwrap_or_default()
}

pub fn emit_report(rows: &[AggregateRow], format: &str) -> Result<String, HarnessError> {
    let format: ReportFormat = format.parse()?;
    if rows.is_empty() {
        return Err(HarnessError::Invalid("no rows to report".into()));
    }
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(rows)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| HarnessError::Render(e.to_string())),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let render = |e: csv::Error| HarnessError::Render(e.to_string());
            w.write_record([
                "mix", "L", "profile", "mode", "t_t_mean", "t_t_std", "t_p_mean", "t_p_std", "t_mean", "t_std",
                "trials", "failures",
            ])
            .map_err(render)?;
            for r in rows {
                w.write_record([
                    r.mix.clone(),
                    r.l.clone(),
                    r.profile.clone(),
                    r.mode.clone(),
                    fixed2(r.t_t_mean),
                    fixed2(r.t_t_std),
                    fixed2(r.t_p_mean),
                    fixed2(r.t_p_std),
                    fixed2(r.t_mean),
                    fixed2(r.t_std),
                    r.trials.to_string(),
                    r.failures.to_string(),
                ])
                .map_err(render)?;
            }
            let bytes = w.into_inner().map_err(|e| HarnessError::Render(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| HarnessError::Render(e.to_string()))
        }
        ReportFormat::Markdown => Ok(markdown(rows)),
    }
}

/// One table per (mode, profile): L down the side, a t_t / t_p / t column
/// group per mix, cells `mean ± std` in ms.
fn markdown(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let mut groups: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !groups.contains(&(r.mode.as_str(), r.profile.as_str())) {
            groups.push((&r.mode, &r.profile));
        }
    }
    let cell = |m: Option<f64>, s: Option<f64>| match (m, s) {
        (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
        _ => "n/a".into(),
    };
    for (gi, &(mode, profile)) in groups.iter().enumerate() {
        let in_group: Vec<&AggregateRow> = rows.iter().filter(|r| r.mode == mode && r.profile == profile).collect();
        let mut mixes: Vec<&str> = Vec::new();
        let mut ls: Vec<&str> = Vec::new();
        for r in &in_group {
            if !mixes.contains(&r.mix.as_str()) {
                mixes.push(&r.mix);
            }
            if !ls.contains(&r.l.as_str()) {
                ls.push(&r.l);
            }
        }
        if gi > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "### {mode}, {profile} (ms)\n");
        out.push_str("| L |");
        for m in &mixes {
            let _ = write!(out, " {m} t_t | {m} t_p | {m} t |");
        }
        out.push_str("\n|---|");
        for _ in &mixes {
            out.push_str("---|---|---|");
        }
        out.push('\n');
        for l in &ls {
            let _ = write!(out, "| {l} |");
            for m in &mixes {
                match in_group.iter().find(|r| r.l == *l && r.mix == *m) {
                    Some(r) => {
                        let _ = write!(
                            out,
                            " {} | {} | {} |",
                            cell(r.t_t_mean, r.t_t_std),
                            cell(r.t_p_mean, r.t_p_std),
                            cell(r.t_mean, r.t_std)
                        );
                    }
                    None => out.push_str(" | | |"),
                }
            }
            out.push('\n');
        }
        let failed: u32 = in_group.iter().map(|r| r.failures).sum();
        if failed > 0 {
            let _ = writeln!(out, "\n{failed} failed trial(s) excluded.");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use layerplace_core::fixtures;

    #[test]
    fn l_lists() {
        assert_eq!(
            parse_l_values("1..4,C").unwrap(),
            vec![
                LValue::Fixed(1),
                LValue::Fixed(2),
                LValue::Fixed(3),
                LValue::Fixed(4),
                LValue::Whole
            ]
        );
        assert_eq!(parse_l_values("2").unwrap(), vec![LValue::Fixed(2)]);
        assert!(parse_l_values("0").is_err());
        assert!(parse_l_values("3..1").is_err());
        assert!(parse_l_values("x").is_err());
        assert_eq!(LValue::Whole.resolve(&[fixtures::cnn5(), fixtures::gc6()]), 6);
    }

    #[test]
    fn mixes() {
        assert_eq!("10-90".parse::<Mix>().unwrap().stm_percent, 10);
        assert!("10-80".parse::<Mix>().is_err());
        assert_eq!(Mix { stm_percent: 90 }.label(), "90-10");
    }

    #[test]
    fn moments() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[3.0]), Some((3.0, 0.0)));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-15);
    }

    fn row() -> AggregateRow {
        let b = LatencyBreakdown {
            t_t: 0.001,
            t_p: 0.002,
            t: 0.003,
            ..Default::default()
        };
        aggregate(
            Mix { stm_percent: 50 },
            LValue::Whole,
            "wifi4",
            "cnn5:compat",
            &[Ok(b), Err("x".into())],
        )
    }

    #[test]
    fn single_row_reports() {
        let rows = vec![row()];
        assert_eq!(rows[0].failures, 1);
        assert_eq!(rows[0].t_std, Some(0.0));
        let csv = emit_report(&rows, "csv").unwrap();
        assert_eq!(
            csv,
            "mix,L,profile,mode,t_t_mean,t_t_std,t_p_mean,t_p_std,t_mean,t_std,trials,failures\n\
             50-50,C,wifi4,cnn5:compat,1.00,0.00,2.00,0.00,3.00,0.00,2,1\n"
        );
        let json = emit_report(&rows, "json").unwrap();
        let back: Vec<AggregateRow> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rows);
        let md = emit_report(&rows, "markdown").unwrap();
        assert!(md.contains("| C | 1.00 ± 0.00 | 2.00 ± 0.00 | 3.00 ± 0.00 |"), "{md}");
        assert!(matches!(
            emit_report(&rows, "xml"),
            Err(HarnessError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn zero_trials_rejected() {
        let mut cfg = ExperimentConfig::new(
            vec![CnnSet::single(fixtures::cnn5())],
            vec![Mix { stm_percent: 50 }],
            vec![LValue::Whole],
            vec!["wifi4".into()],
        );
        cfg.trials = 0;
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Invalid(_))));
        cfg.trials = 1;
        cfg.profiles = vec!["lte".into()];
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Scenario(_))));
    }
}
