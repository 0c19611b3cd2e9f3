mod common;

use common::{case, close, draw, peak_day, twin_set};
use rsp_core::rsp::{
    build_master, ccg_solve, default_equality_tol, extensive_solve, find_essential, operation_value, restricted_objective,
    worst_case_response, CcgOptions, FormulationKind, ModelOptions, StoragePlan,
};
use rsp_core::scenarios::ScenarioSet;
use rsp_core::CoreError;
use rsp_solver::{solve, SolveOptions};

fn opts() -> CcgOptions {
    CcgOptions::default()
}

#[test]
fn ccg_agrees_with_extensive_form_for_every_kind() {
    let c = case("demo3");
    for (kind, k, seed) in [
        (FormulationKind::C_COST, 20, 1),
        (FormulationKind::C_CURTAIL, 12, 2),
        (FormulationKind::NC_COST, 6, 3),
        (FormulationKind::NC_CURTAIL, 6, 4),
    ] {
        let set = draw(&c, k, seed);
        let a = ccg_solve(&c, &set, kind, &opts()).unwrap();
        let b = extensive_solve(&c, &set, kind, &opts()).unwrap();
        assert!(a.converged, "{kind}");
        assert!(close(a.objective, b.objective), "{kind}: ccg {} vs extensive {}", a.objective, b.objective);
        let r = restricted_objective(&c, &set, &a.critical_set, kind, &opts().model, &opts().solve).unwrap();
        assert!(close(r, b.objective), "{kind}: critical set re-solve {r}");
    }
}

#[test]
fn bounds_are_sandwiched() {
    let c = case("demo6");
    let set = draw(&c, 15, 5);
    let o = opts();
    let s = ccg_solve(&c, &set, FormulationKind::C_COST, &o).unwrap();
    for w in s.history.windows(2) {
        assert!(w[1].lb >= w[0].lb);
        assert!(w[1].ub <= w[0].ub);
    }
    for h in &s.history {
        assert!(h.lb <= h.ub + o.gap_abs + o.gap_rel * h.ub.abs());
    }
    let mut dedup = s.critical_set.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), s.critical_set.len());
    assert!(s.critical_set.iter().all(|&i| i < set.len()));
}

#[test]
fn single_scenario_is_the_deterministic_plan() {
    let c = case("demo3");
    let set = draw(&c, 1, 8);
    let a = ccg_solve(&c, &set, FormulationKind::C_COST, &opts()).unwrap();
    let b = extensive_solve(&c, &set, FormulationKind::C_COST, &opts()).unwrap();
    assert_eq!(a.iterations, 1);
    assert_eq!(a.critical_set, vec![0]);
    assert!(close(a.objective, b.objective));
}

#[test]
fn duplicated_scenario_adds_nothing() {
    let c = case("demo3");
    let one = draw(&c, 1, 9);
    let two = one.subset(&[0, 0]);
    let a = extensive_solve(&c, &one, FormulationKind::C_COST, &opts()).unwrap();
    let b = extensive_solve(&c, &two, FormulationKind::C_COST, &opts()).unwrap();
    assert!(close(a.objective, b.objective));
}

#[test]
fn zero_budget_forces_an_empty_plan() {
    let mut c = case("demo3");
    c.storage.budget = 0.0;
    let set = draw(&c, 4, 10);
    for kind in [FormulationKind::C_COST, FormulationKind::NC_COST] {
        let s = ccg_solve(&c, &set, kind, &opts()).unwrap();
        assert!(s.plan.energy.iter().chain(&s.plan.power).all(|&v| v.abs() < 1e-6), "{kind}");
        let zero = StoragePlan::zero(c.num_candidates());
        let worst = (0..set.len())
            .map(|i| operation_value(&c, &zero, set.get(i), kind, &ModelOptions::default(), &SolveOptions::default()).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(close(s.gamma, worst), "{kind}: {} vs {worst}", s.gamma);
    }
}

#[test]
fn two_scenario_master_matches_extensive_form() {
    let c = case("demo3");
    let set = draw(&c, 2, 11);
    let active: Vec<_> = set.scenarios.iter().collect();
    let (m, _) = build_master(&c, &active, FormulationKind::C_COST, &ModelOptions::default()).unwrap();
    let r = solve(&m, &SolveOptions::default()).unwrap();
    let e = extensive_solve(&c, &set, FormulationKind::C_COST, &opts()).unwrap();
    assert!(close(r.objective, e.objective));
}

#[test]
fn extensive_form_beats_random_feasible_plans() {
    let c = case("demo3");
    let set = draw(&c, 10, 12);
    let kind = FormulationKind::C_COST;
    let best = extensive_solve(&c, &set, kind, &opts()).unwrap();
    let st = &c.storage;
    let mut seed = 0x9e37_79b9_u64;
    let mut unit = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..20 {
        let energy: Vec<f64> = (0..c.num_candidates()).map(|_| 60.0 * unit()).collect();
        let power: Vec<f64> = energy.iter().map(|e| e * (st.rho_min + (st.rho_max - st.rho_min) * unit())).collect();
        let mut plan = StoragePlan { energy, power, units: None };
        let spend = plan.investment(&c);
        if spend > st.budget {
            let f = st.budget / spend;
            plan.energy.iter_mut().chain(plan.power.iter_mut()).for_each(|v| *v *= f);
        }
        plan.check(&c, kind, 1e-6).unwrap();
        let (_, worst) = worst_case_response(&c, &plan, &set, kind, &ModelOptions::default(), &SolveOptions::default()).unwrap();
        let obj = plan.investment(&c) + c.day_weight * worst;
        assert!(best.objective <= obj + 1e-6 * obj.abs());
    }
}

#[test]
fn worst_case_matches_enumeration_and_breaks_ties_low() {
    let c = case("demo3");
    let set = draw(&c, 5, 13);
    let plan = StoragePlan::zero(c.num_candidates());
    let (mo, so) = (ModelOptions::default(), SolveOptions::default());
    let kind = FormulationKind::C_COST;
    let values: Vec<f64> = set.scenarios.iter().map(|s| operation_value(&c, &plan, s, kind, &mo, &so).unwrap()).collect();
    let (i, v) = worst_case_response(&c, &plan, &set, kind, &mo, &so).unwrap();
    assert!(values.iter().all(|&x| x <= v));
    assert_eq!(values[i], v);
    let dup = set.subset(&[2, 2, 2]);
    assert_eq!(worst_case_response(&c, &plan, &dup, kind, &mo, &so).unwrap().0, 0);
    let single = set.subset(&[3]);
    let (j, w) = worst_case_response(&c, &plan, &single, kind, &mo, &so).unwrap();
    assert_eq!(j, 0);
    assert_eq!(w, values[3]);
}

#[test]
fn dominant_scenario_is_the_whole_essential_set() {
    for name in ["demo3", "demo6"] {
        let c = case(name);
        let mut set = draw(&c, 8, 14);
        set.scenarios[5] = peak_day(&c);
        for kind in [FormulationKind::C_COST, FormulationKind::NC_COST] {
            let s = ccg_solve(&c, &set, kind, &opts()).unwrap();
            assert!(s.critical_set.contains(&5), "{name} {kind}");
            let e = find_essential(&c, &set, kind, &s.critical_set, s.objective, default_equality_tol(s.objective), &opts()).unwrap();
            assert_eq!(e.indices, vec![5], "{name} {kind}");
            assert_eq!(e.cardinality, 1);
        }
    }
}

#[test]
fn jointly_binding_peaks_are_both_essential() {
    let c = case("twin2");
    let set = twin_set();
    for kind in [FormulationKind::NC_COST, FormulationKind::C_COST] {
        let full = extensive_solve(&c, &set, kind, &opts()).unwrap();
        let tol = default_equality_tol(full.objective);
        let e = find_essential(&c, &set, kind, &[0, 1, 2], full.objective, tol, &opts()).unwrap();
        assert_eq!(e.indices, vec![1, 2], "{kind}");
        let (mo, so) = (&opts().model, &opts().solve);
        let without_mild = restricted_objective(&c, &set, &[1, 2], kind, mo, so).unwrap();
        assert!((without_mild - full.objective).abs() <= tol);
        for drop in [1, 2] {
            let rest: Vec<usize> = [0, 1, 2].into_iter().filter(|&i| i != drop).collect();
            let o = restricted_objective(&c, &set, &rest, kind, mo, so).unwrap();
            assert!((o - full.objective).abs() > tol, "{kind}: dropping {drop} kept the objective");
        }
    }
}

#[test]
fn convex_essential_sets_stay_small() {
    let c = case("demo3");
    let bound = 2 * c.num_candidates() + 1;
    for seed in 0..10 {
        let set = draw(&c, 12, 100 + seed);
        for kind in [FormulationKind::C_COST, FormulationKind::C_CURTAIL] {
            let s = ccg_solve(&c, &set, kind, &opts()).unwrap();
            let e = find_essential(&c, &set, kind, &s.critical_set, s.objective, default_equality_tol(s.objective), &opts()).unwrap();
            assert!(e.cardinality <= bound, "{kind} seed {seed}: {}", e.cardinality);
        }
    }
}

#[test]
fn essential_search_rejects_a_non_invariant_start() {
    let c = case("demo3");
    let mut set = draw(&c, 4, 15);
    set.scenarios[3] = peak_day(&c);
    let kind = FormulationKind::C_COST;
    let s = ccg_solve(&c, &set, kind, &opts()).unwrap();
    let err = find_essential(&c, &set, kind, &[0], s.objective, default_equality_tol(s.objective), &opts()).unwrap_err();
    assert!(matches!(err, CoreError::NotInvariant { .. }), "{err}");
}

#[test]
fn extensive_form_respects_the_size_cap() {
    let c = case("demo3");
    let set = draw(&c, 3, 16);
    let o = CcgOptions { extensive_var_cap: 100, ..opts() };
    assert!(matches!(extensive_solve(&c, &set, FormulationKind::C_COST, &o), Err(CoreError::SizeCap { .. })));
}

#[test]
fn convex_relaxation_is_never_worse() {
    let c = case("demo3");
    let ratio = c.storage.unit_power / c.storage.unit_energy;
    assert!(ratio >= c.storage.rho_min && ratio <= c.storage.rho_max);
    for seed in 0..3 {
        let set = draw(&c, 5, 200 + seed);
        let conv = ccg_solve(&c, &set, FormulationKind::C_COST, &opts()).unwrap();
        let nonc = ccg_solve(&c, &set, FormulationKind::NC_COST, &opts()).unwrap();
        assert!(conv.objective <= nonc.objective + 1e-6 * nonc.objective.abs());
    }
}

#[test]
fn more_budget_never_raises_worst_case_curtailment() {
    let base = case("demo3");
    let set: ScenarioSet = draw(&base, 10, 17);
    let mut last = f64::INFINITY;
    for budget in [0.0, 5e5, 1e6, 2e6, 4e6] {
        let mut c = base.clone();
        c.storage.budget = budget;
        let s = ccg_solve(&c, &set, FormulationKind::C_CURTAIL, &opts()).unwrap();
        assert!(s.gamma <= last + 1e-6, "budget {budget}: {} after {last}", s.gamma);
        last = s.gamma;
    }
}
