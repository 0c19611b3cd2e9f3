mod common;

use common::{case, models};
use proptest::prelude::*;
use rsp_core::rsp::{
    evaluate_operation, max_balance_residual, operation_value, simultaneous_charge_count, FormulationKind, ModelOptions,
    OperationOutcome, StoragePlan,
};
use rsp_core::{DailyScenario, NetworkCase};
use rsp_solver::SolveOptions;

const TOL: f64 = 1e-7;

fn convex_plan(c: &NetworkCase, energy: &[f64], ratio: &[f64]) -> StoragePlan {
    let st = &c.storage;
    StoragePlan {
        energy: energy.to_vec(),
        power: energy.iter().zip(ratio).map(|(e, r)| e * (st.rho_min + (st.rho_max - st.rho_min) * r)).collect(),
        units: None,
    }
}

fn assert_schedule(c: &NetworkCase, plan: &StoragePlan, scen: &DailyScenario, out: &OperationOutcome) {
    let s = &out.schedule;
    assert!(max_balance_residual(c, scen, out) <= TOL);
    for (ci, e) in plan.energy.iter().enumerate() {
        for t in 0..c.horizon {
            assert!(s.soc[ci][t] >= -TOL && s.soc[ci][t] <= e + TOL);
            assert!(s.charge[ci][t] >= -TOL && s.charge[ci][t] <= plan.power[ci] + TOL);
            assert!(s.discharge[ci][t] >= -TOL && s.discharge[ci][t] <= plan.power[ci] + TOL);
        }
    }
    for (k, l) in c.lines.iter().enumerate() {
        assert!(s.flows[k].iter().all(|f| *f >= l.flow_min - TOL && *f <= l.flow_max + TOL));
    }
    for (gi, g) in c.generators.iter().enumerate() {
        assert!(s.generation[gi].iter().all(|p| *p >= g.p_min - TOL && *p <= g.p_max + TOL));
    }
    for (li, l) in c.loads.iter().enumerate() {
        for t in 0..c.horizon {
            let d = scen.load_factor[l.bus][t] * l.peak;
            assert!(s.shed[li][t] >= -TOL && s.shed[li][t] <= d + TOL);
        }
    }
    for (wi, w) in c.wind_farms.iter().enumerate() {
        for t in 0..c.horizon {
            let avail = scen.wind_factor[wi][t] * w.capacity;
            assert!((s.wind[wi][t] + s.spill[wi][t] - avail).abs() <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convex_schedules_satisfy_the_network(
        seed in any::<u64>(),
        energy in prop::collection::vec(0.0..150.0f64, 3),
        ratio in prop::collection::vec(0.0..=1.0f64, 3),
        six in any::<bool>(),
        cost in any::<bool>(),
    ) {
        let c = case(if six { "demo6" } else { "demo3" });
        let n = c.num_candidates();
        let plan = convex_plan(&c, &energy[..n], &ratio[..n]);
        let scen = models(&c, 7).scenario(seed, 0);
        let kind = if cost { FormulationKind::C_COST } else { FormulationKind::C_CURTAIL };
        let out = evaluate_operation(&c, &plan, &scen, kind, &ModelOptions::default(), &SolveOptions::default()).unwrap();
        assert_schedule(&c, &plan, &scen, &out);
        prop_assert_eq!(simultaneous_charge_count(&plan, &out), 0);
    }

    #[test]
    fn quantized_schedules_never_charge_and_discharge_together(
        seed in any::<u64>(),
        units in prop::collection::vec(0u32..=4, 2),
    ) {
        let c = case("demo3");
        let plan = StoragePlan::from_units(&c, units);
        let scen = models(&c, 7).scenario(seed, 1);
        let out = evaluate_operation(&c, &plan, &scen, FormulationKind::NC_COST, &ModelOptions::default(), &SolveOptions::default()).unwrap();
        assert_schedule(&c, &plan, &scen, &out);
        prop_assert_eq!(simultaneous_charge_count(&plan, &out), 0);
    }

    #[test]
    fn more_load_everywhere_never_costs_less(seed in any::<u64>(), bump in 1.0..1.5f64) {
        let c = case("demo3");
        let plan = StoragePlan::from_units(&c, vec![1, 1]);
        let a = models(&c, 7).scenario(seed, 2);
        let b = a.with_load_scaled(bump);
        let v = |s: &DailyScenario| operation_value(&c, &plan, s, FormulationKind::C_COST, &ModelOptions::default(), &SolveOptions::default()).unwrap();
        prop_assert!(v(&b) >= v(&a) - 1e-6);
    }
}

fn one_bus() -> NetworkCase {
    let mut c = case("demo3");
    c.buses.truncate(1);
    c.lines.clear();
    c.generators.truncate(1);
    c.generators[0].p_max = 1000.0;
    c.generators[0].ramp_up = 1000.0;
    c.generators[0].ramp_down = 1000.0;
    c.wind_farms.clear();
    c.loads = vec![rsp_core::grid::LoadPoint { bus: 0, peak: 50.0, shed_cost: 1000.0 }];
    c.storage.candidates = vec![0];
    c
}

fn flat_day() -> DailyScenario {
    DailyScenario {
        load_factor: vec![vec![0.8; 24]],
        wind_factor: vec![],
    }
}

#[test]
fn zero_plan_matches_a_case_without_storage() {
    let c = case("demo6");
    let mut bare = c.clone();
    bare.storage.candidates.clear();
    let scen = models(&c, 7).scenario(3, 0);
    let (mo, so) = (ModelOptions::default(), SolveOptions::default());
    for kind in FormulationKind::ALL {
        let a = operation_value(&c, &StoragePlan::zero(c.num_candidates()), &scen, kind, &mo, &so).unwrap();
        let b = operation_value(&bare, &StoragePlan::zero(0), &scen, kind, &mo, &so).unwrap();
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{kind}: {a} vs {b}");
    }
}

#[test]
fn idle_storage_on_a_flat_price_system() {
    let c = one_bus();
    let (mo, so) = (ModelOptions::default(), SolveOptions::default());
    let none = operation_value(&c, &StoragePlan::zero(1), &flat_day(), FormulationKind::C_COST, &mo, &so).unwrap();
    let big = StoragePlan { energy: vec![1e4], power: vec![2e3], units: None };
    let out = evaluate_operation(&c, &big, &flat_day(), FormulationKind::C_COST, &mo, &so).unwrap();
    assert!(out.objective <= none + 1e-6);
    assert!(out.schedule.charge[0].iter().chain(&out.schedule.discharge[0]).all(|&p| p.abs() < 1e-9));
}

#[test]
fn cyclic_state_of_charge_wraps_around() {
    let c = case("demo3");
    let plan = StoragePlan::from_units(&c, vec![2, 2]);
    let scen = models(&c, 7).scenario(4, 0);
    let mo = ModelOptions { cyclic_soc: true };
    let out = evaluate_operation(&c, &plan, &scen, FormulationKind::C_COST, &mo, &SolveOptions::default()).unwrap();
    let st = &c.storage;
    let s = &out.schedule;
    for ci in 0..c.num_candidates() {
        let last = s.soc[ci][c.horizon - 1];
        let first = last + st.eta_ch * s.charge[ci][0] - s.discharge[ci][0] / st.eta_dis;
        assert!((first - s.soc[ci][0]).abs() < 1e-6);
    }
    assert_schedule(&c, &plan, &scen, &out);
}

#[test]
fn curtailment_schedule_is_the_cheapest_at_minimal_shed() {
    let c = case("demo3");
    let plan = StoragePlan::from_units(&c, vec![1, 0]);
    let scen = common::peak_day(&c);
    let (mo, so) = (ModelOptions::default(), SolveOptions::default());
    let out = evaluate_operation(&c, &plan, &scen, FormulationKind::C_CURTAIL, &mo, &so).unwrap();
    assert!(out.objective > 0.0);
    assert!((out.total_shed - out.objective).abs() <= 1e-6 * out.objective.max(1.0));
    let cost = evaluate_operation(&c, &plan, &scen, FormulationKind::C_COST, &mo, &so).unwrap();
    assert!(out.total_cost >= cost.total_cost - 1e-6 * cost.total_cost);
    assert!(cost.total_shed >= out.total_shed - 1e-6);
}
