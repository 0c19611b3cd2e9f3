mod common;

use common::{case, models, peak_day, repo_path, twin_set};
use proptest::prelude::*;
use rsp_core::pipeline::{
    run_experiments, run_with_guarantee, select, sweep_budget, ExperimentOutcome, ExperimentReport, ExperimentRow, LoadedSource,
    RunConfig, RunContext, SweepReport,
};
use rsp_core::report::{emit_reports, experiments_csv, Artifacts, EXPERIMENT_HEADER};
use rsp_core::scenarios::{Replacement, ScenarioSet};
use rsp_core::{CoreError, NetworkCase};
use serde_json::json;

fn config(kind: &str, mode: &str, eps_bar: f64, extra: serde_json::Value) -> RunConfig {
    let mut v = json!({
        "case": repo_path("cases/demo3.json"),
        "scenarios": { "type": "generator", "sigma_rel": 0.01, "base": { "type": "synthetic", "days": 365, "seed": 7 } },
        "kind": kind,
        "eps_bar": eps_bar,
        "beta": 1e-3,
        "mode": mode,
        "seed": 1,
    });
    for (k, x) in extra.as_object().unwrap() {
        v[k] = x.clone();
    }
    serde_json::from_value(v).unwrap()
}

fn finite(case: NetworkCase, set: ScenarioSet) -> RunContext {
    RunContext { case, source: LoadedSource::Finite(set, Replacement::With) }
}

fn generated(name: &str) -> RunContext {
    let c = case(name);
    let g = models(&c, 7);
    RunContext { case: c, source: LoadedSource::Models(g) }
}

#[test]
fn dominant_day_certifies_in_one_pass() {
    let c = case("demo3");
    let g = models(&c, 7);
    let mut days: Vec<_> = (0..3).map(|i| g.scenario(5, i)).collect();
    days.push(peak_day(&c));
    let ctx = finite(c, ScenarioSet::new(days, "three ordinary days and a peak"));
    let cfg = config("c-cost", "posterior_convex", 0.3, json!({}));
    let run = run_with_guarantee(&cfg, &ctx, 3).unwrap();
    assert_eq!(run.passes.len(), 1);
    assert_eq!(run.essential.cardinality, 1);
    assert!(run.certificate.meets(0.3));
    run.certificate.verify().unwrap();
}

#[test]
fn jointly_binding_peaks_trigger_a_second_pass() {
    let ctx = finite(case("twin2"), twin_set());
    let cfg = config("nc-cost", "posterior_nonconvex", 0.5, json!({}));
    let run = run_with_guarantee(&cfg, &ctx, 4).unwrap();
    assert_eq!(run.passes.len(), 2);
    assert_eq!(run.passes[0].cardinality, 2);
    assert!(run.passes[0].epsilon > 0.5);
    assert_eq!(run.passes[1].k_guess, 2);
    assert!(run.passes[1].sample_size > run.passes[0].sample_size);
    assert_ne!(run.passes[1].train_seed, run.passes[0].train_seed);
    assert_eq!(run.essential.cardinality, 2);
    assert!(run.certificate.meets(0.5));
}

#[test]
fn exhausted_guesses_report_the_history() {
    let ctx = finite(case("twin2"), twin_set());
    let cfg = config("nc-cost", "posterior_nonconvex", 0.5, json!({ "max_guesses": 1 }));
    match run_with_guarantee(&cfg, &ctx, 4) {
        Err(CoreError::GuessCapExceeded { guesses, history }) => {
            assert_eq!(guesses, 1);
            assert_eq!(history, vec![2]);
        }
        other => panic!("expected the guess cap, got {other:?}"),
    }
}

#[test]
fn loose_target_needs_few_scenarios() {
    let ctx = generated("demo3");
    let cfg = config("c-cost", "posterior_convex", 0.5, json!({}));
    let run = run_with_guarantee(&cfg, &ctx, 5).unwrap();
    assert!(run.certificate.sample_size < 100);
    assert!(run.certificate.meets(0.5));
}

#[test]
fn single_experiment_is_selected() {
    let ctx = generated("demo3");
    let cfg = config("c-cost", "posterior_convex", 0.5, json!({ "test_size": 20 }));
    let rep = run_experiments(&cfg, &ctx).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.selected, Some(0));
    let risk = rep.rows[0].outcome.as_ref().unwrap().risk.as_ref().unwrap();
    assert_eq!(risk.trials, 20);
}

#[test]
fn zero_budget_experiments_tie_to_the_first() {
    let mut c = case("demo3");
    c.storage.budget = 0.0;
    let g = models(&c, 7);
    let ctx = RunContext { case: c, source: LoadedSource::Models(g) };
    let cfg = config("c-cost", "posterior_convex", 0.5, json!({ "experiments": 3 }));
    let rep = run_experiments(&cfg, &ctx).unwrap();
    let plans: Vec<_> = rep.rows.iter().map(|r| r.outcome.as_ref().unwrap().solution.plan.clone()).collect();
    assert!(plans.iter().all(|p| p.energy.iter().chain(&p.power).all(|v| v.abs() < 1e-9)));
    assert_eq!(rep.selected, Some(0));
}

fn sample_outcome() -> ExperimentOutcome {
    let ctx = generated("demo3");
    let cfg = config("c-cost", "posterior_convex", 0.5, json!({}));
    run_experiments(&cfg, &ctx).unwrap().rows.remove(0).outcome.unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_is_the_certified_argmin(
        spec in prop::collection::vec((0u8..4, any::<bool>(), any::<bool>(), any::<bool>()), 0..12),
        cost in any::<bool>(),
    ) {
        let base = sample_outcome_cached();
        let rows: Vec<ExperimentRow> = spec
            .iter()
            .enumerate()
            .map(|(i, &(inv, certified, zero, failed))| {
                let mut o = base.clone();
                o.solution.investment = inv as f64;
                o.solution.gamma = if zero { 0.0 } else { 5.0 };
                o.certified = certified;
                ExperimentRow { index: i, seed: i as u64, outcome: if failed { Err("failed".into()) } else { Ok(o) } }
            })
            .collect();
        let (sel, _) = select(&rows, cost, 1e-3);
        let ok: Vec<(usize, &ExperimentOutcome)> =
            rows.iter().filter_map(|r| r.outcome.as_ref().ok().filter(|o| o.certified).map(|o| (r.index, o))).collect();
        let any_zero = ok.iter().any(|(_, o)| o.solution.gamma <= 1e-3);
        let pool: Vec<_> = ok.into_iter().filter(|(_, o)| cost || !any_zero || o.solution.gamma <= 1e-3).collect();
        match sel {
            None => prop_assert!(pool.is_empty()),
            Some(s) => {
                let pick = pool.iter().find(|(i, _)| *i == s).expect("selected row is eligible");
                for (i, o) in &pool {
                    prop_assert!(pick.1.solution.investment < o.solution.investment || (pick.1.solution.investment == o.solution.investment && s <= *i));
                }
            }
        }
    }
}

fn sample_outcome_cached() -> ExperimentOutcome {
    use std::sync::OnceLock;
    static CELL: OnceLock<ExperimentOutcome> = OnceLock::new();
    CELL.get_or_init(sample_outcome).clone()
}

fn read(dir: &std::path::Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn empty_experiment_table_has_only_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let art = Artifacts { experiments: Some(ExperimentReport::default()), ..Artifacts::default() };
    let files = emit_reports(&art, 0.05, dir.path()).unwrap();
    assert!(!files.iter().any(|f| f.ends_with(".svg")));
    assert_eq!(read(dir.path(), "experiments.csv"), EXPERIMENT_HEADER.join(",") + "\n");
}

#[test]
fn ten_experiments_give_ten_rows_and_a_summary() {
    let base = sample_outcome_cached();
    let rows: Vec<ExperimentRow> =
        (0..10).map(|i| ExperimentRow { index: i, seed: i as u64, outcome: Ok(base.clone()) }).collect();
    let (selected, selection_rule) = select(&rows, true, 1e-3);
    let rep = ExperimentReport { rows, selected, selection_rule };
    let text = String::from_utf8(experiments_csv(&rep).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[11].starts_with("summary,"));
    assert!(lines[1].ends_with(",true"));
}

#[test]
fn twin_sweep_reaches_zero_and_reports_deterministically() {
    let ctx = finite(case("twin2"), twin_set());
    let cfg = config(
        "c-curtailment",
        "posterior_convex",
        0.05,
        json!({ "train_size": 12, "test_size": 30, "budget_grid": [0.0, 1e6, 2e6, 4e6, 1e7] }),
    );
    let sw = sweep_budget(&cfg, &ctx).unwrap();
    assert_eq!(sw.points.len(), 5);
    for w in sw.points.windows(2) {
        assert!(w[1].gamma <= w[0].gamma + 1e-6);
    }
    assert!(sw.points[0].gamma > 1.0);
    assert_eq!(sw.first_zero, Some(4));
    assert!(sw.points[4].risk.as_ref().unwrap().epsilon_hat <= 0.05);

    let art = Artifacts { sweep: Some(sw), ..Artifacts::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files = emit_reports(&art, 0.05, a.path()).unwrap();
    emit_reports(&art, 0.05, b.path()).unwrap();
    for f in &files {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let svg = read(a.path(), "sweep.svg");
    assert_eq!(svg.matches(r#"class="xtick""#).count(), 5);
    assert_eq!(svg.matches(r#"class="ref-line""#).count(), 1);
    assert_eq!(read(a.path(), "sweep.csv").lines().count(), 6);
}

#[test]
fn light_days_need_no_budget() {
    let c = case("twin2");
    let light = ScenarioSet::new(vec![common::twin_day(None)], "light");
    let ctx = finite(c, light);
    let cfg = config("c-curtailment", "posterior_convex", 0.05, json!({ "train_size": 3, "budget_grid": [0.0, 1e6] }));
    let sw: SweepReport = sweep_budget(&cfg, &ctx).unwrap();
    assert_eq!(sw.first_zero, Some(0));
}
