//! End-to-end runs: the guarantee loop, repeated experiments and budget sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{estimate_violation, min_k_for, GuaranteeCertificate, GuaranteeMode, Margin, RiskEstimate};
use crate::error::{CoreError, Result};
use crate::grid::{load_case, NetworkCase};
use crate::rng::derive_seed;
use crate::rsp::{ccg_solve, default_equality_tol, find_essential, CcgOptions, EssentialSet, FormulationKind, RobustSolution, StoragePlan};
use crate::scenarios::{
    load_profiles, sample_iid, synthetic_load_year, LoadNoiseModel, Replacement, ScenarioGenerator, ScenarioSet, Source, WindModel,
};

/// Stream index reserved for test-set draws.
const TEST_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseProfiles {
    /// Generated yearly load shape.
    Synthetic { days: usize, seed: u64 },
    /// Load rows of a time-series file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioSourceConfig {
    /// Uniform i.i.d. draws from the days of a time-series file.
    File {
        path: PathBuf,
        #[serde(default)]
        replacement: Replacement,
    },
    /// Weibull wind and noisy base load days.
    Generator {
        #[serde(default)]
        wind: WindModel,
        sigma_rel: f64,
        base: BaseProfiles,
    },
}

fn default_one() -> usize {
    1
}

fn default_k() -> u64 {
    1
}

fn default_guesses() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: PathBuf,
    pub scenarios: ScenarioSourceConfig,
    pub kind: FormulationKind,
    pub eps_bar: f64,
    pub beta: f64,
    pub mode: GuaranteeMode,
    #[serde(default = "default_k")]
    pub initial_k_guess: u64,
    /// Cardinality cap for the improved bound; defaults to the initial guess.
    #[serde(default)]
    pub s_bar: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub experiments: usize,
    /// Out-of-sample test scenarios per experiment; 0 skips estimation.
    #[serde(default)]
    pub test_size: usize,
    /// Fixed training size instead of the one implied by the guarantee.
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default)]
    pub budget_grid: Vec<f64>,
    #[serde(default = "default_guesses")]
    pub max_guesses: usize,
    #[serde(default)]
    pub margin: Margin,
    #[serde(default)]
    pub ccg: CcgOptions,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Validation(m));
        for (name, v) in [("eps_bar", self.eps_bar), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.experiments < 1 {
            return bad("experiments must be at least 1".into());
        }
        if self.max_guesses < 1 {
            return bad("max_guesses must be at least 1".into());
        }
        if self.mode.is_posterior() && self.mode != GuaranteeMode::PosteriorConvex && self.kind.is_convex() {
            log::warn!("non-convex guarantee requested for a convex formulation; the claim is valid but loose");
        }
        if self.mode == GuaranteeMode::PosteriorConvex && !self.kind.is_convex() {
            return bad("the convex posterior guarantee does not apply to non-convex formulations".into());
        }
        if self.mode == GuaranteeMode::PriorConvex && !self.kind.is_convex() {
            return bad("the a-priori guarantee needs a convex formulation".into());
        }
        if self.train_size == Some(0) {
            return bad("train_size must be at least 1".into());
        }
        if self.budget_grid.windows(2).any(|w| w[1] <= w[0]) || self.budget_grid.iter().any(|b| !(*b >= 0.0)) {
            return bad("budget_grid must be nonnegative and strictly increasing".into());
        }
        Ok(())
    }
}

/// Reads a config and resolves its relative paths against the file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CoreError::Parse(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    fix(&mut cfg.case);
    fix(&mut cfg.out);
    match &mut cfg.scenarios {
        ScenarioSourceConfig::File { path, .. } => fix(path),
        ScenarioSourceConfig::Generator { base: BaseProfiles::File { path }, .. } => fix(path),
        ScenarioSourceConfig::Generator { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub enum LoadedSource {
    Finite(ScenarioSet, Replacement),
    Models(ScenarioGenerator),
}

/// Case and scenario source ready for sampling.
pub struct RunContext {
    pub case: NetworkCase,
    pub source: LoadedSource,
}

impl RunContext {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let case = load_case(&cfg.case)?;
        let source = match &cfg.scenarios {
            ScenarioSourceConfig::File { path, replacement } => LoadedSource::Finite(load_profiles(path, &case)?, *replacement),
            ScenarioSourceConfig::Generator { wind, sigma_rel, base } => {
                wind.validate()?;
                let base_profiles = match base {
                    BaseProfiles::Synthetic { days, seed } => synthetic_load_year(*days, case.num_buses(), case.horizon, *seed),
                    BaseProfiles::File { path } => load_profiles(path, &case)?.scenarios.into_iter().map(|s| s.load_factor).collect(),
                };
                LoadedSource::Models(generator(&case, wind.clone(), *sigma_rel, base_profiles)?)
            }
        };
        Ok(Self { case, source })
    }

    pub fn draw(&self, k: usize, seed: u64) -> Result<ScenarioSet> {
        match &self.source {
            LoadedSource::Finite(set, rep) => sample_iid(Source::Finite(set), k, seed, *rep),
            LoadedSource::Models(g) => sample_iid(Source::Models(g), k, seed, Replacement::With),
        }
    }

    /// Independent test draw for experiment seed `seed`, always with replacement.
    pub fn draw_test(&self, k: usize, seed: u64) -> Result<ScenarioSet> {
        let s = derive_seed(seed, TEST_STREAM);
        match &self.source {
            LoadedSource::Finite(set, _) => sample_iid(Source::Finite(set), k, s, Replacement::With),
            LoadedSource::Models(g) => sample_iid(Source::Models(g), k, s, Replacement::With),
        }
    }
}

/// Scenario generator for `case` after checking the base profiles' shape.
pub fn generator(case: &NetworkCase, wind: WindModel, sigma_rel: f64, base_profiles: Vec<Vec<Vec<f64>>>) -> Result<ScenarioGenerator> {
    if base_profiles.is_empty() {
        return Err(CoreError::Validation("no base load days".into()));
    }
    if !(sigma_rel >= 0.0) {
        return Err(CoreError::Validation("sigma_rel must be >= 0".into()));
    }
    for d in &base_profiles {
        if d.len() != case.num_buses() || d.iter().any(|r| r.len() != case.horizon) {
            return Err(CoreError::Dimension("base load day does not match case buses and horizon".into()));
        }
    }
    Ok(ScenarioGenerator {
        wind,
        load: LoadNoiseModel { base_profiles, sigma_rel },
        farms: case.wind_farms.len(),
        horizon: case.horizon,
    })
}

/// Decision dimension of the convex formulation: energy and power per candidate plus the epigraph variable.
pub fn decision_dimension(case: &NetworkCase) -> u64 {
    2 * case.num_candidates() as u64 + 1
}

/// Training size of a first pass: the override, or the size implied by the initial guess.
pub fn training_size(cfg: &RunConfig, case: &NetworkCase) -> Result<usize> {
    if let Some(n) = cfg.train_size {
        return Ok(n);
    }
    let k = if cfg.mode == GuaranteeMode::PriorConvex {
        decision_dimension(case)
    } else {
        cfg.initial_k_guess
    };
    let s_bar = (cfg.mode == GuaranteeMode::ImprovedNonconvex).then(|| cfg.s_bar.unwrap_or(k).max(1));
    Ok(min_k_for(cfg.mode, k, cfg.eps_bar, cfg.beta, s_bar)? as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub k_guess: u64,
    pub sample_size: u64,
    pub train_seed: u64,
    pub cardinality: usize,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuaranteedRun {
    pub solution: RobustSolution,
    pub certificate: GuaranteeCertificate,
    pub essential: EssentialSet,
    pub passes: Vec<PassRecord>,
}

/// The guarantee loop: guess a cardinality, size the sample, solve, measure
/// the essential set and re-guess on a fresh draw until the certificate meets `eps_bar`.
pub fn run_with_guarantee(cfg: &RunConfig, ctx: &RunContext, seed: u64) -> Result<GuaranteedRun> {
    cfg.validate()?;
    let case = &ctx.case;
    let prior = cfg.mode == GuaranteeMode::PriorConvex;
    let mut k = if prior { decision_dimension(case) } else { cfg.initial_k_guess };
    let mut s_bar = (cfg.mode == GuaranteeMode::ImprovedNonconvex).then(|| cfg.s_bar.unwrap_or(cfg.initial_k_guess).max(1));
    let mut passes = Vec::new();
    let single = cfg.train_size.is_some() || prior;
    let guesses = if single { 1 } else { cfg.max_guesses };
    for pass in 0..guesses {
        let size = match cfg.train_size {
            Some(n) => n as u64,
            None => min_k_for(cfg.mode, k, cfg.eps_bar, cfg.beta, s_bar)?,
        };
        let train_seed = derive_seed(seed, pass as u64);
        let train = ctx.draw(size as usize, train_seed)?;
        let solution = ccg_solve(case, &train, cfg.kind, &cfg.ccg)?;
        let essential = find_essential(
            case,
            &train,
            cfg.kind,
            &solution.critical_set,
            solution.objective,
            default_equality_tol(solution.objective),
            &cfg.ccg,
        )?;
        let card = essential.cardinality as u64;
        let param = if prior { k } else { card };
        if let Some(s) = s_bar.as_mut() {
            *s = (*s).max(card).min(size);
        }
        let certificate = GuaranteeCertificate::issue(cfg.mode, param, cfg.beta, size, s_bar)?;
        log::info!(
            "pass {pass}: guess {k}, K = {size}, |I| = {card}, epsilon = {:.6}",
            certificate.epsilon
        );
        passes.push(PassRecord {
            k_guess: k,
            sample_size: size,
            train_seed,
            cardinality: essential.cardinality,
            epsilon: certificate.epsilon,
        });
        if certificate.meets(cfg.eps_bar) || single {
            return Ok(GuaranteedRun {
                solution,
                certificate,
                essential,
                passes,
            });
        }
        k = card.max(k + 1);
    }
    Err(CoreError::GuessCapExceeded {
        guesses,
        history: passes.iter().map(|p| p.cardinality).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub solution: RobustSolution,
    pub essential: EssentialSet,
    pub certificate: GuaranteeCertificate,
    pub certified: bool,
    pub passes: Vec<PassRecord>,
    pub risk: Option<RiskEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub index: usize,
    pub seed: u64,
    pub outcome: std::result::Result<ExperimentOutcome, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub selected: Option<usize>,
    pub selection_rule: String,
}

fn experiment(cfg: &RunConfig, ctx: &RunContext, seed: u64) -> Result<ExperimentOutcome> {
    let run = run_with_guarantee(cfg, ctx, seed)?;
    let risk = if cfg.test_size > 0 {
        let test = ctx.draw_test(cfg.test_size, seed)?;
        Some(estimate_violation(
            &ctx.case,
            &run.solution.plan,
            run.solution.gamma,
            &test,
            cfg.kind,
            cfg.margin,
            &cfg.ccg,
        )?)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        certified: run.certificate.meets(cfg.eps_bar),
        solution: run.solution,
        essential: run.essential,
        certificate: run.certificate,
        passes: run.passes,
        risk,
    })
}

/// Independent seeded runs of the guarantee loop plus the least-investment selection.
pub fn run_experiments(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rows: Vec<ExperimentRow> = (0..cfg.experiments)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, i as u64);
            let outcome = experiment(cfg, ctx, seed).map_err(|e| {
                log::warn!("experiment {i} failed: {e}");
                e.to_string()
            });
            ExperimentRow { index: i, seed, outcome }
        })
        .collect();
    if rows.iter().all(|r| r.outcome.is_err()) {
        let first = rows[0].outcome.as_ref().err().cloned().unwrap_or_default();
        return Err(CoreError::SolveFailed(format!("every experiment failed; first error: {first}")));
    }
    let (selected, selection_rule) = select(&rows, cfg.kind.is_cost(), cfg.margin.abs);
    Ok(ExperimentReport {
        rows,
        selected,
        selection_rule,
    })
}

/// Least investment among certified rows; the curtailment kind first restricts
/// to rows whose worst-case shed is zero when any exist. Ties go to the lowest index.
pub fn select(rows: &[ExperimentRow], cost: bool, zero_tol: f64) -> (Option<usize>, String) {
    let ok: Vec<(usize, &ExperimentOutcome)> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().filter(|o| o.certified).map(|o| (r.index, o)))
        .collect();
    let (pool, rule): (Vec<_>, &str) = if cost {
        (ok, "least investment among certified experiments")
    } else {
        let zero: Vec<_> = ok.iter().copied().filter(|(_, o)| o.solution.gamma <= zero_tol).collect();
        if zero.is_empty() {
            (ok, "least investment among certified experiments (none reached zero curtailment)")
        } else {
            (zero, "least investment among certified experiments with zero worst-case curtailment")
        }
    };
    let best = pool.iter().fold(None::<(usize, f64)>, |acc, (i, o)| match acc {
        Some((_, v)) if v <= o.solution.investment => acc,
        _ => Some((*i, o.solution.investment)),
    });
    (best.map(|b| b.0), rule.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub budget: f64,
    pub gamma: f64,
    pub investment: f64,
    pub plan: StoragePlan,
    pub risk: Option<RiskEstimate>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sample_size: usize,
    pub points: Vec<SweepPoint>,
    /// First grid point whose worst-case curtailment is zero.
    pub first_zero: Option<usize>,
}

/// Curtailment planning at every budget of the grid on one shared training draw.
pub fn sweep_budget(cfg: &RunConfig, ctx: &RunContext) -> Result<SweepReport> {
    cfg.validate()?;
    if cfg.kind.is_cost() {
        return Err(CoreError::Validation("budget sweeps need a curtailment formulation".into()));
    }
    if cfg.budget_grid.is_empty() {
        return Err(CoreError::Validation("budget_grid is empty".into()));
    }
    let size = training_size(cfg, &ctx.case)?;
    let seed = derive_seed(cfg.seed, 0);
    let train = ctx.draw(size, derive_seed(seed, 0))?;
    let test = if cfg.test_size > 0 { Some(ctx.draw_test(cfg.test_size, seed)?) } else { None };
    let points: Vec<SweepPoint> = cfg
        .budget_grid
        .par_iter()
        .map(|&budget| {
            let mut case = ctx.case.clone();
            case.storage.budget = budget;
            let sol = ccg_solve(&case, &train, cfg.kind, &cfg.ccg)?;
            let risk = match &test {
                Some(t) => Some(estimate_violation(&case, &sol.plan, sol.gamma, t, cfg.kind, cfg.margin, &cfg.ccg)?),
                None => None,
            };
            Ok(SweepPoint {
                budget,
                gamma: sol.gamma,
                investment: sol.investment,
                plan: sol.plan,
                risk,
            })
        })
        .collect::<Result<_>>()?;
    let first_zero = points.iter().position(|p| p.gamma <= cfg.margin.abs);
    if first_zero.is_none() {
        log::warn!("budget grid exhausted without reaching zero worst-case curtailment");
    }
    Ok(SweepReport {
        sample_size: size,
        points,
        first_zero,
    })
}
