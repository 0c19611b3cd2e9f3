//! Robust storage planning: the four formulations, second-stage operation,
//! column-and-constraint generation, the extensive form and essential sets.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rsp_solver::{solve, LinExpr, LinearModel, ObjectiveSense, Sense, SolveOptions, SolveResult, Status, VarKind, VarRef};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::NetworkCase;
use crate::scenarios::{DailyScenario, ScenarioSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Investment plus weighted worst-case operating cost.
    Cost,
    /// Worst-case total load shed.
    Curtailment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    /// Continuous sizing, relaxed charging status.
    Convex,
    /// Unit counts and binary charging status.
    Nonconvex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FormulationKind {
    pub objective: Objective,
    pub convexity: Convexity,
}

impl FormulationKind {
    pub const C_COST: Self = Self::new(Objective::Cost, Convexity::Convex);
    pub const NC_COST: Self = Self::new(Objective::Cost, Convexity::Nonconvex);
    pub const C_CURTAIL: Self = Self::new(Objective::Curtailment, Convexity::Convex);
    pub const NC_CURTAIL: Self = Self::new(Objective::Curtailment, Convexity::Nonconvex);
    pub const ALL: [Self; 4] = [Self::C_COST, Self::NC_COST, Self::C_CURTAIL, Self::NC_CURTAIL];

    pub const fn new(objective: Objective, convexity: Convexity) -> Self {
        Self { objective, convexity }
    }

    pub fn is_convex(self) -> bool {
        self.convexity == Convexity::Convex
    }

    pub fn is_cost(self) -> bool {
        self.objective == Objective::Cost
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = if self.is_convex() { "c" } else { "nc" };
        let o = if self.is_cost() { "cost" } else { "curtailment" };
        write!(f, "{c}-{o}")
    }
}

impl From<FormulationKind> for String {
    fn from(k: FormulationKind) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for FormulationKind {
    type Error = CoreError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for FormulationKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c-cost" => Ok(Self::C_COST),
            "nc-cost" => Ok(Self::NC_COST),
            "c-curtailment" | "c-curt" => Ok(Self::C_CURTAIL),
            "nc-curtailment" | "nc-curt" => Ok(Self::NC_CURTAIL),
            other => Err(CoreError::Parse(format!(
                "unknown formulation {other:?}; expected c-cost, nc-cost, c-curtailment or nc-curtailment"
            ))),
        }
    }
}

/// Modelling switches that the source formulation leaves open.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    /// Wrap the first state-of-charge update around to the last hour instead of starting empty.
    pub cyclic_soc: bool,
}

/// First-stage decision, one entry per storage candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoragePlan {
    pub energy: Vec<f64>,
    pub power: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Vec<u32>>,
}

impl StoragePlan {
    pub fn zero(candidates: usize) -> Self {
        Self {
            energy: vec![0.0; candidates],
            power: vec![0.0; candidates],
            units: None,
        }
    }

    /// Plan built from integer unit counts.
    pub fn from_units(case: &NetworkCase, units: Vec<u32>) -> Self {
        let s = &case.storage;
        Self {
            energy: units.iter().map(|&z| s.unit_energy * z as f64).collect(),
            power: units.iter().map(|&z| s.unit_power * z as f64).collect(),
            units: Some(units),
        }
    }

    /// Annualized investment cost.
    pub fn investment(&self, case: &NetworkCase) -> f64 {
        self.energy
            .iter()
            .zip(&self.power)
            .map(|(&e, &p)| case.storage.investment(e, p))
            .sum()
    }

    /// Checks the first-stage constraints of `kind` with absolute tolerance `tol`.
    pub fn check(&self, case: &NetworkCase, kind: FormulationKind, tol: f64) -> Result<()> {
        let s = &case.storage;
        let n = case.num_candidates();
        if self.energy.len() != n || self.power.len() != n {
            return Err(CoreError::Dimension(format!("plan has {} entries, case has {n} candidates", self.energy.len())));
        }
        let bad = |m: String| Err(CoreError::Validation(m));
        for (i, (&e, &p)) in self.energy.iter().zip(&self.power).enumerate() {
            if e < -tol || p < -tol {
                return bad(format!("candidate {i}: negative capacity"));
            }
            if kind.is_convex() && (p > s.rho_max * e + tol || p < s.rho_min * e - tol) {
                return bad(format!("candidate {i}: power/energy ratio outside [rho_min, rho_max]"));
            }
        }
        if !kind.is_convex() {
            let Some(units) = &self.units else {
                return bad("non-convex plan without unit counts".into());
            };
            if units.len() != n {
                return Err(CoreError::Dimension("unit vector length".into()));
            }
            for (i, &z) in units.iter().enumerate() {
                if z > s.max_units_per_bus
                    || (self.energy[i] - s.unit_energy * z as f64).abs() > tol
                    || (self.power[i] - s.unit_power * z as f64).abs() > tol
                {
                    return bad(format!("candidate {i}: capacity does not match {z} units"));
                }
            }
            if units.iter().map(|&z| z as u64).sum::<u64>() > s.max_units_total as u64 {
                return bad("total unit count above max_units_total".into());
            }
        }
        if self.investment(case) > s.budget + tol.max(1e-9 * s.budget) {
            return bad("investment above budget".into());
        }
        Ok(())
    }
}

/// Hourly operating schedule of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub generation: Vec<Vec<f64>>,
    pub wind: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
    pub charge: Vec<Vec<f64>>,
    pub discharge: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
    pub angles: Vec<Vec<f64>>,
    pub shed: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationOutcome {
    /// Second-stage optimum of the requested kind.
    pub objective: f64,
    /// Operating cost of the schedule.
    pub total_cost: f64,
    /// Total shed energy of the schedule.
    pub total_shed: f64,
    pub schedule: Schedule,
}

/// How storage capacity enters a recourse copy.
enum Capacity<'a> {
    Fixed(&'a StoragePlan),
    Master { energy: &'a [VarRef], power: &'a [VarRef] },
}

struct StorageVars {
    ch: Vec<VarRef>,
    dis: Vec<VarRef>,
    soc: Vec<VarRef>,
}

struct Recourse {
    gen: Vec<Vec<VarRef>>,
    wind: Vec<Vec<VarRef>>,
    shed: Vec<Vec<VarRef>>,
    theta: Vec<Option<Vec<VarRef>>>,
    storage: Vec<Option<StorageVars>>,
    cost: LinExpr,
    shed_total: LinExpr,
}

impl Recourse {
    fn objective(&self, kind: FormulationKind) -> &LinExpr {
        match kind.objective {
            Objective::Cost => &self.cost,
            Objective::Curtailment => &self.shed_total,
        }
    }
}

fn add_recourse(
    m: &mut LinearModel,
    case: &NetworkCase,
    scen: &DailyScenario,
    kind: FormulationKind,
    cap: &Capacity<'_>,
    mopts: &ModelOptions,
    tag: &str,
) -> Recourse {
    let t_len = case.horizon;
    let s = &case.storage;
    let nb = case.num_buses();
    let mut cost = LinExpr::new();
    let mut shed_total = LinExpr::new();
    // Terms of each nodal balance row, filled in as devices are added.
    let mut balance: Vec<Vec<LinExpr>> = vec![vec![LinExpr::new(); t_len]; nb];

    let gen: Vec<Vec<VarRef>> = case
        .generators
        .iter()
        .map(|g| {
            (0..t_len)
                .map(|t| {
                    let v = m.add_continuous(format!("pg{}_{t}{tag}", g.id), g.p_min, g.p_max);
                    balance[g.bus][t].push(v, 1.0);
                    cost.push(v, g.marginal_cost);
                    v
                })
                .collect()
        })
        .collect();
    for (gi, g) in case.generators.iter().enumerate() {
        let span = g.p_max - g.p_min;
        let up = if g.ramp_up < span { g.ramp_up } else { f64::INFINITY };
        let down = if g.ramp_down < span { g.ramp_down } else { f64::INFINITY };
        if up.is_finite() || down.is_finite() {
            for t in 1..t_len {
                let e = LinExpr::new().term(gen[gi][t], 1.0).term(gen[gi][t - 1], -1.0);
                m.add_range(format!("ramp{}_{t}{tag}", g.id), e, -down, up);
            }
        }
    }
    let wind: Vec<Vec<VarRef>> = case
        .wind_farms
        .iter()
        .enumerate()
        .map(|(wi, w)| {
            (0..t_len)
                .map(|t| {
                    let avail = scen.wind_factor[wi][t] * w.capacity;
                    let v = m.add_continuous(format!("pw{}_{t}{tag}", w.id), 0.0, avail);
                    balance[w.bus][t].push(v, 1.0);
                    v
                })
                .collect()
        })
        .collect();
    let shed: Vec<Vec<VarRef>> = case
        .loads
        .iter()
        .enumerate()
        .map(|(li, l)| {
            (0..t_len)
                .map(|t| {
                    let demand = scen.load_factor[l.bus][t] * l.peak;
                    let v = m.add_continuous(format!("shed{li}_{t}{tag}"), 0.0, demand);
                    balance[l.bus][t].push(v, 1.0);
                    cost.push(v, l.shed_cost);
                    shed_total.push(v, 1.0);
                    v
                })
                .collect()
        })
        .collect();
    let theta: Vec<Option<Vec<VarRef>>> = (0..nb)
        .map(|b| {
            (b != case.slack_bus).then(|| {
                (0..t_len)
                    .map(|t| m.add_continuous(format!("th{b}_{t}{tag}"), f64::NEG_INFINITY, f64::INFINITY))
                    .collect()
            })
        })
        .collect();
    for line in &case.lines {
        let b = 1.0 / line.reactance;
        for t in 0..t_len {
            let mut flow = LinExpr::new();
            if let Some(th) = &theta[line.from_bus] {
                flow.push(th[t], b);
            }
            if let Some(th) = &theta[line.to_bus] {
                flow.push(th[t], -b);
            }
            balance[line.from_bus][t].extend(&flow, -1.0);
            balance[line.to_bus][t].extend(&flow, 1.0);
            if line.flow_min.is_finite() || line.flow_max.is_finite() {
                m.add_range(format!("flow{}_{t}{tag}", line.id), flow, line.flow_min, line.flow_max);
            }
        }
    }

    let storage: Vec<Option<StorageVars>> = s
        .candidates
        .iter()
        .enumerate()
        .map(|(ci, &bus)| {
            let (p_hi, e_hi) = match cap {
                Capacity::Fixed(plan) => {
                    if plan.power[ci] <= 0.0 {
                        return None;
                    }
                    (plan.power[ci], plan.energy[ci].max(0.0))
                }
                Capacity::Master { .. } => {
                    if !kind.is_convex() && s.max_units_per_bus == 0 {
                        return None;
                    }
                    (f64::INFINITY, f64::INFINITY)
                }
            };
            let mut sv = StorageVars {
                ch: Vec::with_capacity(t_len),
                dis: Vec::with_capacity(t_len),
                soc: Vec::with_capacity(t_len),
            };
            #[allow(clippy::needless_range_loop)]
            for t in 0..t_len {
                let ch = m.add_continuous(format!("ch{ci}_{t}{tag}"), 0.0, p_hi);
                let dis = m.add_continuous(format!("dis{ci}_{t}{tag}"), 0.0, p_hi);
                let soc = m.add_continuous(format!("soc{ci}_{t}{tag}"), 0.0, e_hi);
                balance[bus][t].push(dis, 1.0);
                balance[bus][t].push(ch, -1.0);
                cost.push(ch, s.marginal_charge);
                cost.push(dis, s.marginal_discharge);
                sv.ch.push(ch);
                sv.dis.push(dis);
                sv.soc.push(soc);
            }
            for t in 0..t_len {
                let mut e = LinExpr::new()
                    .term(sv.soc[t], 1.0)
                    .term(sv.ch[t], -s.eta_ch)
                    .term(sv.dis[t], 1.0 / s.eta_dis);
                if t > 0 {
                    e.push(sv.soc[t - 1], -1.0);
                } else if mopts.cyclic_soc && t_len > 1 {
                    e.push(sv.soc[t_len - 1], -1.0);
                }
                m.add_constraint(format!("socdyn{ci}_{t}{tag}"), e, Sense::Eq, 0.0);
            }
            match cap {
                Capacity::Fixed(plan) => {
                    let p = plan.power[ci];
                    let kind_v = if kind.is_convex() { VarKind::Continuous } else { VarKind::Binary };
                    for t in 0..t_len {
                        let v = m.add_var(format!("v{ci}_{t}{tag}"), 0.0, 1.0, kind_v);
                        m.add_constraint(format!("chon{ci}_{t}{tag}"), LinExpr::new().term(sv.ch[t], 1.0).term(v, -p), Sense::Le, 0.0);
                        m.add_constraint(format!("disoff{ci}_{t}{tag}"), LinExpr::new().term(sv.dis[t], 1.0).term(v, p), Sense::Le, p);
                    }
                }
                Capacity::Master { energy, power } => {
                    let big_m = s.max_units_per_bus as f64 * s.unit_power;
                    for t in 0..t_len {
                        m.add_constraint(
                            format!("soccap{ci}_{t}{tag}"),
                            LinExpr::new().term(sv.soc[t], 1.0).term(energy[ci], -1.0),
                            Sense::Le,
                            0.0,
                        );
                        m.add_constraint(
                            format!("pcap{ci}_{t}{tag}"),
                            LinExpr::new().term(sv.ch[t], 1.0).term(sv.dis[t], 1.0).term(power[ci], -1.0),
                            Sense::Le,
                            0.0,
                        );
                        if !kind.is_convex() {
                            let v = m.add_binary(format!("v{ci}_{t}{tag}"));
                            m.add_constraint(format!("chon{ci}_{t}{tag}"), LinExpr::new().term(sv.ch[t], 1.0).term(v, -big_m), Sense::Le, 0.0);
                            m.add_constraint(format!("disoff{ci}_{t}{tag}"), LinExpr::new().term(sv.dis[t], 1.0).term(v, big_m), Sense::Le, big_m);
                        }
                    }
                }
            }
            Some(sv)
        })
        .collect();

    for (b, rows) in balance.into_iter().enumerate() {
        for (t, e) in rows.into_iter().enumerate() {
            let demand: f64 = case
                .loads
                .iter()
                .filter(|l| l.bus == b)
                .map(|l| scen.load_factor[b][t] * l.peak)
                .sum();
            m.add_constraint(format!("bal{b}_{t}{tag}"), e, Sense::Eq, demand);
        }
    }

    Recourse {
        gen,
        wind,
        shed,
        theta,
        storage,
        cost,
        shed_total,
    }
}

fn check_scenario(case: &NetworkCase, scen: &DailyScenario) -> Result<()> {
    scen.check(case)
}

/// Second-stage model for a fixed plan and one scenario.
pub fn build_second_stage(
    case: &NetworkCase,
    plan: &StoragePlan,
    scen: &DailyScenario,
    kind: FormulationKind,
    mopts: &ModelOptions,
) -> Result<LinearModel> {
    Ok(second_stage(case, plan, scen, kind, mopts)?.0)
}

fn second_stage(
    case: &NetworkCase,
    plan: &StoragePlan,
    scen: &DailyScenario,
    kind: FormulationKind,
    mopts: &ModelOptions,
) -> Result<(LinearModel, Recourse)> {
    check_scenario(case, scen)?;
    if plan.energy.len() != case.num_candidates() || plan.power.len() != case.num_candidates() {
        return Err(CoreError::Dimension("plan length differs from candidate count".into()));
    }
    let mut m = LinearModel::new(ObjectiveSense::Minimize);
    let r = add_recourse(&mut m, case, scen, kind, &Capacity::Fixed(plan), mopts, "");
    m.set_objective(r.objective(kind).clone(), ObjectiveSense::Minimize);
    Ok((m, r))
}

fn solve_checked(model: &LinearModel, opts: &SolveOptions, what: &str) -> Result<SolveResult> {
    let r = solve(model, opts)?;
    match r.status {
        Status::Optimal => Ok(r),
        Status::Infeasible => Err(CoreError::SolveFailed(format!("{what} reported infeasible"))),
        Status::Unbounded => Err(CoreError::SolveFailed(format!("{what} reported unbounded"))),
        Status::Limit => Err(CoreError::SolveFailed(format!("{what} hit a solver limit"))),
    }
}

/// Optimal second-stage value only.
pub fn operation_value(
    case: &NetworkCase,
    plan: &StoragePlan,
    scen: &DailyScenario,
    kind: FormulationKind,
    mopts: &ModelOptions,
    sopts: &SolveOptions,
) -> Result<f64> {
    let (m, _) = second_stage(case, plan, scen, kind, mopts)?;
    Ok(solve_checked(&m, sopts, "second stage")?.objective)
}

/// Optimal second-stage value and schedule. Under the curtailment kind the
/// schedule is the cheapest among those attaining the minimal shed.
pub fn evaluate_operation(
    case: &NetworkCase,
    plan: &StoragePlan,
    scen: &DailyScenario,
    kind: FormulationKind,
    mopts: &ModelOptions,
    sopts: &SolveOptions,
) -> Result<OperationOutcome> {
    let (mut m, r) = second_stage(case, plan, scen, kind, mopts)?;
    let mut res = solve_checked(&m, sopts, "second stage")?;
    let objective = res.objective;
    if !kind.is_cost() {
        m.add_constraint("shed_cap", r.shed_total.clone(), Sense::Le, objective + 1e-7 * objective.abs().max(1.0));
        m.set_objective(r.cost.clone(), ObjectiveSense::Minimize);
        res = solve_checked(&m, sopts, "second stage (cost tie-break)")?;
    }
    let x = &res.values;
    let val = |v: &VarRef| x[v.index()];
    let t_len = case.horizon;
    let rows = |vs: &Vec<Vec<VarRef>>| -> Vec<Vec<f64>> { vs.iter().map(|r| r.iter().map(val).collect()).collect() };
    let angles: Vec<Vec<f64>> = r
        .theta
        .iter()
        .map(|o| o.as_ref().map_or(vec![0.0; t_len], |vs| vs.iter().map(val).collect()))
        .collect();
    let flows = case
        .lines
        .iter()
        .map(|l| (0..t_len).map(|t| (angles[l.from_bus][t] - angles[l.to_bus][t]) / l.reactance).collect())
        .collect();
    let wind = rows(&r.wind);
    let spill = case
        .wind_farms
        .iter()
        .enumerate()
        .map(|(wi, w)| (0..t_len).map(|t| (scen.wind_factor[wi][t] * w.capacity - wind[wi][t]).max(0.0)).collect())
        .collect();
    let pick = |f: fn(&StorageVars) -> &Vec<VarRef>| -> Vec<Vec<f64>> {
        r.storage
            .iter()
            .map(|o| o.as_ref().map_or(vec![0.0; t_len], |sv| f(sv).iter().map(val).collect()))
            .collect()
    };
    let schedule = Schedule {
        generation: rows(&r.gen),
        wind,
        spill,
        charge: pick(|s| &s.ch),
        discharge: pick(|s| &s.dis),
        soc: pick(|s| &s.soc),
        flows,
        angles,
        shed: rows(&r.shed),
    };
    Ok(OperationOutcome {
        objective,
        total_cost: r.cost.eval(x),
        total_shed: r.shed_total.eval(x),
        schedule,
    })
}

/// Largest nodal power-balance residual of a schedule, in MW.
pub fn max_balance_residual(case: &NetworkCase, scen: &DailyScenario, out: &OperationOutcome) -> f64 {
    let s = &out.schedule;
    let mut worst = 0.0f64;
    for t in 0..case.horizon {
        let mut net = vec![0.0; case.num_buses()];
        for (gi, g) in case.generators.iter().enumerate() {
            net[g.bus] += s.generation[gi][t];
        }
        for (wi, w) in case.wind_farms.iter().enumerate() {
            net[w.bus] += s.wind[wi][t];
        }
        for (li, l) in case.loads.iter().enumerate() {
            net[l.bus] += s.shed[li][t] - scen.load_factor[l.bus][t] * l.peak;
        }
        for (ci, &b) in case.storage.candidates.iter().enumerate() {
            net[b] += s.discharge[ci][t] - s.charge[ci][t];
        }
        for (k, l) in case.lines.iter().enumerate() {
            net[l.from_bus] -= s.flows[k][t];
            net[l.to_bus] += s.flows[k][t];
        }
        worst = net.iter().fold(worst, |a, v| a.max(v.abs()));
    }
    worst
}

/// Count of (candidate, hour) pairs charging and discharging at once.
pub fn simultaneous_charge_count(plan: &StoragePlan, out: &OperationOutcome) -> usize {
    let s = &out.schedule;
    let mut n = 0;
    for (ci, &p) in plan.power.iter().enumerate() {
        for (c, d) in s.charge[ci].iter().zip(&s.discharge[ci]) {
            if c.min(*d) > 1e-6 * p.max(1e-12) {
                n += 1;
            }
        }
    }
    n
}

/// Scenario with the largest second-stage value; ties go to the lowest index.
pub fn worst_case_response(
    case: &NetworkCase,
    plan: &StoragePlan,
    set: &ScenarioSet,
    kind: FormulationKind,
    mopts: &ModelOptions,
    sopts: &SolveOptions,
) -> Result<(usize, f64)> {
    if set.is_empty() {
        return Err(CoreError::Domain("worst-case response over an empty set".into()));
    }
    let values: Vec<f64> = set
        .scenarios
        .par_iter()
        .map(|s| operation_value(case, plan, s, kind, mopts, sopts))
        .collect::<Result<_>>()?;
    Ok(argmax_lowest(&values))
}

pub(crate) fn argmax_lowest(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Handles to first-stage variables of a master model.
#[derive(Clone, Debug)]
pub struct MasterHandles {
    pub energy: Vec<VarRef>,
    pub power: Vec<VarRef>,
    pub units: Option<Vec<VarRef>>,
    pub gamma: VarRef,
}

/// Master problem over the scenarios `active`: first stage, epigraph variable
/// and one recourse copy per scenario.
pub fn build_master(
    case: &NetworkCase,
    active: &[&DailyScenario],
    kind: FormulationKind,
    mopts: &ModelOptions,
) -> Result<(LinearModel, MasterHandles)> {
    for s in active {
        check_scenario(case, s)?;
    }
    let st = &case.storage;
    let nc = case.num_candidates();
    let mut m = LinearModel::new(ObjectiveSense::Minimize);
    let energy: Vec<VarRef> = (0..nc).map(|i| m.add_continuous(format!("E{i}"), 0.0, f64::INFINITY)).collect();
    let power: Vec<VarRef> = (0..nc).map(|i| m.add_continuous(format!("P{i}"), 0.0, f64::INFINITY)).collect();
    let units = if kind.is_convex() {
        for i in 0..nc {
            m.add_constraint(format!("rhomax{i}"), LinExpr::new().term(power[i], 1.0).term(energy[i], -st.rho_max), Sense::Le, 0.0);
            m.add_constraint(format!("rhomin{i}"), LinExpr::new().term(power[i], 1.0).term(energy[i], -st.rho_min), Sense::Ge, 0.0);
        }
        None
    } else {
        let z: Vec<VarRef> = (0..nc)
            .map(|i| {
                let v = m.add_integer(format!("z{i}"), 0.0, st.max_units_per_bus as f64);
                m.set_priority(v, 1);
                v
            })
            .collect();
        for i in 0..nc {
            m.add_constraint(format!("equant{i}"), LinExpr::new().term(energy[i], 1.0).term(z[i], -st.unit_energy), Sense::Eq, 0.0);
            m.add_constraint(format!("pquant{i}"), LinExpr::new().term(power[i], 1.0).term(z[i], -st.unit_power), Sense::Eq, 0.0);
        }
        let total: LinExpr = z.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().into();
        m.add_constraint("units_total", total, Sense::Le, st.max_units_total as f64);
        Some(z)
    };
    let mut invest = LinExpr::new();
    for i in 0..nc {
        invest.push(energy[i], st.cost_energy_annual);
        invest.push(power[i], st.cost_power_per_mw());
    }
    m.add_constraint("budget", invest.clone(), Sense::Le, st.budget);
    let gamma = m.add_continuous("gamma", 0.0, f64::INFINITY);
    let cap = Capacity::Master {
        energy: &energy,
        power: &power,
    };
    for (l, s) in active.iter().enumerate() {
        let r = add_recourse(&mut m, case, s, kind, &cap, mopts, &format!("_s{l}"));
        let mut e = r.objective(kind).clone();
        e.push(gamma, -1.0);
        m.add_constraint(format!("epi{l}"), e, Sense::Le, 0.0);
    }
    let objective = match kind.objective {
        Objective::Cost => {
            let mut o = invest;
            o.push(gamma, case.day_weight);
            o
        }
        Objective::Curtailment => LinExpr::new().term(gamma, 1.0),
    };
    m.set_objective(objective, ObjectiveSense::Minimize);
    Ok((
        m,
        MasterHandles {
            energy,
            power,
            units,
            gamma,
        },
    ))
}

/// Number of variables the master over `k` scenarios would have.
pub fn master_size(case: &NetworkCase, k: usize, kind: FormulationKind) -> usize {
    let per_t = case.generators.len()
        + case.wind_farms.len()
        + case.loads.len()
        + case.num_buses().saturating_sub(1)
        + case.num_candidates() * if kind.is_convex() { 3 } else { 4 };
    let first = 2 * case.num_candidates() + if kind.is_convex() { 0 } else { case.num_candidates() } + 1;
    first + k * per_t * case.horizon
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterSolution {
    pub plan: StoragePlan,
    pub gamma: f64,
    pub objective: f64,
}

fn solve_master(
    case: &NetworkCase,
    active: &[&DailyScenario],
    kind: FormulationKind,
    mopts: &ModelOptions,
    sopts: &SolveOptions,
) -> Result<MasterSolution> {
    let (m, h) = build_master(case, active, kind, mopts)?;
    let r = solve_checked(&m, sopts, "master problem")?;
    let plan = match &h.units {
        Some(z) => StoragePlan::from_units(case, z.iter().map(|&v| r.value(v).round().max(0.0) as u32).collect()),
        None => StoragePlan {
            energy: h.energy.iter().map(|&v| r.value(v).max(0.0)).collect(),
            power: h.power.iter().map(|&v| r.value(v).max(0.0)).collect(),
            units: None,
        },
    };
    Ok(MasterSolution {
        plan,
        gamma: r.value(h.gamma),
        objective: r.objective,
    })
}

/// Optimal objective of the master restricted to `indices` of `set`.
pub fn restricted_objective(
    case: &NetworkCase,
    set: &ScenarioSet,
    indices: &[usize],
    kind: FormulationKind,
    mopts: &ModelOptions,
    sopts: &SolveOptions,
) -> Result<f64> {
    let active: Vec<&DailyScenario> = indices.iter().map(|&i| set.get(i)).collect();
    Ok(solve_master(case, &active, kind, mopts, sopts)?.objective)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcgOptions {
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub max_iter: usize,
    pub extensive_var_cap: usize,
    pub solve: SolveOptions,
    pub model: ModelOptions,
}

impl Default for CcgOptions {
    fn default() -> Self {
        Self {
            gap_abs: 1e-6,
            gap_rel: 1e-7,
            max_iter: 100,
            extensive_var_cap: 400_000,
            solve: SolveOptions::default(),
            model: ModelOptions::default(),
        }
    }
}

impl CcgOptions {
    fn gap_ok(&self, lb: f64, ub: f64) -> bool {
        ub - lb <= self.gap_abs + self.gap_rel * ub.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcgIteration {
    pub lb: f64,
    pub ub: f64,
    pub worst_index: usize,
    pub worst_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustSolution {
    pub kind: FormulationKind,
    pub plan: StoragePlan,
    /// Worst-case second-stage value over the scenario set.
    pub gamma: f64,
    pub objective: f64,
    pub investment: f64,
    pub lb: f64,
    pub ub: f64,
    /// Scenario indices the decomposition activated, in activation order.
    pub critical_set: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<CcgIteration>,
}

fn total_objective(case: &NetworkCase, kind: FormulationKind, plan: &StoragePlan, gamma: f64) -> f64 {
    match kind.objective {
        Objective::Cost => plan.investment(case) + case.day_weight * gamma,
        Objective::Curtailment => gamma,
    }
}

/// Column-and-constraint generation over a finite scenario set, seeded with scenario 0.
pub fn ccg_solve(case: &NetworkCase, set: &ScenarioSet, kind: FormulationKind, opts: &CcgOptions) -> Result<RobustSolution> {
    if set.is_empty() {
        return Err(CoreError::Domain("scenario set is empty".into()));
    }
    if !(opts.gap_abs > 0.0 || opts.gap_rel > 0.0) {
        return Err(CoreError::Domain("gap tolerance must be positive".into()));
    }
    set.check(case)?;
    let mut active = vec![0usize];
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut history = Vec::new();
    let mut incumbent: Option<(StoragePlan, f64)> = None;
    let mut last: Option<(MasterSolution, f64)> = None;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        let scen: Vec<&DailyScenario> = active.iter().map(|&i| set.get(i)).collect();
        let master = solve_master(case, &scen, kind, &opts.model, &opts.solve)?;
        lb = lb.max(master.objective);
        let (wi, wv) = worst_case_response(case, &master.plan, set, kind, &opts.model, &opts.solve)?;
        let cand = total_objective(case, kind, &master.plan, wv);
        if cand < ub {
            ub = cand;
            incumbent = Some((master.plan.clone(), wv));
        }
        history.push(CcgIteration {
            lb,
            ub,
            worst_index: wi,
            worst_value: wv,
        });
        log::debug!("ccg {kind} iter {it}: lb {lb:.6} ub {ub:.6} worst #{wi} = {wv:.6}");
        let already = active.contains(&wi);
        last = Some((master, wv));
        if opts.gap_ok(lb, ub) || already {
            converged = true;
            break;
        }
        active.push(wi);
    }
    let (master, worst) = last.expect("at least one iteration");
    let (plan, gamma) = if converged {
        let g = master.gamma.max(worst);
        (master.plan, g)
    } else {
        incumbent.expect("incumbent after one iteration")
    };
    let objective = total_objective(case, kind, &plan, gamma);
    Ok(RobustSolution {
        kind,
        investment: plan.investment(case),
        plan,
        gamma,
        objective,
        lb,
        ub,
        iterations: history.len(),
        critical_set: active,
        converged,
        history,
    })
}

/// Monolithic model with a recourse copy for every scenario.
pub fn extensive_solve(case: &NetworkCase, set: &ScenarioSet, kind: FormulationKind, opts: &CcgOptions) -> Result<RobustSolution> {
    if set.is_empty() {
        return Err(CoreError::Domain("scenario set is empty".into()));
    }
    let vars = master_size(case, set.len(), kind);
    if vars > opts.extensive_var_cap {
        return Err(CoreError::SizeCap {
            vars,
            cap: opts.extensive_var_cap,
        });
    }
    let all: Vec<&DailyScenario> = set.scenarios.iter().collect();
    let ms = solve_master(case, &all, kind, &opts.model, &opts.solve)?;
    Ok(RobustSolution {
        kind,
        investment: ms.plan.investment(case),
        gamma: ms.gamma,
        plan: ms.plan,
        objective: ms.objective,
        lb: ms.objective,
        ub: ms.objective,
        critical_set: (0..set.len()).collect(),
        iterations: 1,
        converged: true,
        history: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssentialSet {
    pub indices: Vec<usize>,
    pub cardinality: usize,
}

/// Tolerance for deciding two optimal objectives are equal.
pub fn default_equality_tol(objective: f64) -> f64 {
    (1e-6 * objective.abs()).max(1e-3)
}

/// Greedy reduction of an invariant set: scenarios are dropped in ascending
/// index order whenever the restricted optimum stays equal to `full_objective`.
pub fn find_essential(
    case: &NetworkCase,
    set: &ScenarioSet,
    kind: FormulationKind,
    critical_set: &[usize],
    full_objective: f64,
    equality_tol: f64,
    opts: &CcgOptions,
) -> Result<EssentialSet> {
    let mut current: Vec<usize> = critical_set.to_vec();
    current.sort_unstable();
    current.dedup();
    if let Some(&bad) = current.iter().find(|&&i| i >= set.len()) {
        return Err(CoreError::Domain(format!("critical index {bad} outside the scenario set")));
    }
    let obj = restricted_objective(case, set, &current, kind, &opts.model, &opts.solve)?;
    if (obj - full_objective).abs() > equality_tol {
        return Err(CoreError::NotInvariant {
            got: obj,
            expected: full_objective,
            tol: equality_tol,
        });
    }
    for idx in current.clone() {
        let trial: Vec<usize> = current.iter().copied().filter(|&i| i != idx).collect();
        let o = restricted_objective(case, set, &trial, kind, &opts.model, &opts.solve)?;
        if (o - full_objective).abs() <= equality_tol {
            current = trial;
        }
    }
    Ok(EssentialSet {
        cardinality: current.len(),
        indices: current,
    })
}
