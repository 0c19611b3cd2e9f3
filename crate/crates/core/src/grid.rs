//! Static network data, case-file IO and investment annualization.
//!
//! Units are MW, MWh, hours and dollars. Line reactances are per unit on an
//! implicit base of 1.0, so a line carries `(θ_from − θ_to) / x` MW.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::report::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub reactance: f64,
    pub flow_min: f64,
    pub flow_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub marginal_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindFarm {
    pub id: usize,
    pub bus: usize,
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub bus: usize,
    pub peak: f64,
    pub shed_cost: f64,
}

/// Candidate sites and technology data shared by every candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageCatalog {
    pub candidates: Vec<usize>,
    /// $/MWh-yr.
    pub cost_energy_annual: f64,
    /// $/kW-yr.
    pub cost_power_annual: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub unit_energy: f64,
    pub unit_power: f64,
    pub max_units_per_bus: u32,
    pub max_units_total: u32,
    pub marginal_charge: f64,
    pub marginal_discharge: f64,
    /// Annual investment budget in $.
    pub budget: f64,
}

impl StorageCatalog {
    /// Annualized cost of `energy` MWh and `power` MW of capacity.
    pub fn investment(&self, energy: f64, power: f64) -> f64 {
        self.cost_energy_annual * energy + 1000.0 * self.cost_power_annual * power
    }

    /// Power cost in $/MW-yr.
    pub fn cost_power_per_mw(&self) -> f64 {
        1000.0 * self.cost_power_annual
    }
}

fn default_horizon() -> usize {
    24
}

fn default_day_weight() -> f64 {
    365.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub wind_farms: Vec<WindFarm>,
    #[serde(default)]
    pub loads: Vec<LoadPoint>,
    pub storage: StorageCatalog,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_day_weight")]
    pub day_weight: f64,
    pub slack_bus: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    fn error(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

impl NetworkCase {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.storage.candidates.len()
    }

    pub fn max_marginal_cost(&self) -> f64 {
        self.generators.iter().map(|g| g.marginal_cost).fold(0.0, f64::max)
    }

    /// Total peak demand at each bus.
    pub fn peak_by_bus(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.buses.len()];
        for l in &self.loads {
            out[l.bus] += l.peak;
        }
        out
    }
}

/// Checks every invariant of the case. Errors make the case unusable;
/// warnings flag questionable but solvable data.
pub fn validate_case(case: &NetworkCase) -> Vec<Violation> {
    let mut out = Vec::new();
    let nb = case.buses.len();
    let bus_ok = |b: usize| b < nb;
    if nb == 0 {
        out.push(Violation::error("case has no buses"));
    }
    for (i, b) in case.buses.iter().enumerate() {
        if b.id != i {
            out.push(Violation::error(format!("bus ids must be dense 0..N-1: bus at position {i} has id {}", b.id)));
        }
    }
    if !bus_ok(case.slack_bus) {
        out.push(Violation::error(format!("slack_bus {}: unknown bus", case.slack_bus)));
    }
    if case.horizon < 1 {
        out.push(Violation::error("horizon must be at least 1"));
    }
    if !(case.day_weight > 0.0 && case.day_weight.is_finite()) {
        out.push(Violation::error("day_weight must be positive"));
    }
    for l in &case.lines {
        for b in [l.from_bus, l.to_bus] {
            if !bus_ok(b) {
                out.push(Violation::error(format!("line {} references unknown bus {b}", l.id)));
            }
        }
        if l.from_bus == l.to_bus {
            out.push(Violation::error(format!("line {} connects bus {} to itself", l.id, l.from_bus)));
        }
        if !(l.reactance > 0.0 && l.reactance.is_finite()) {
            out.push(Violation::error(format!("line {} reactance must be > 0", l.id)));
        }
        if !(l.flow_min <= 0.0 && l.flow_max >= 0.0) {
            out.push(Violation::error(format!("line {} limits must satisfy flow_min <= 0 <= flow_max", l.id)));
        }
    }
    for g in &case.generators {
        if !bus_ok(g.bus) {
            out.push(Violation::error(format!("generator {} references unknown bus {}", g.id, g.bus)));
        }
        if !(g.p_min >= 0.0 && g.p_min <= g.p_max) {
            out.push(Violation::error(format!("generator {} needs 0 <= p_min <= p_max", g.id)));
        }
        if !(g.ramp_up >= 0.0 && g.ramp_down >= 0.0) {
            out.push(Violation::error(format!("generator {} ramp limits must be >= 0", g.id)));
        }
        if !(g.marginal_cost >= 0.0) {
            out.push(Violation::error(format!("generator {} marginal_cost must be >= 0", g.id)));
        }
    }
    for w in &case.wind_farms {
        if !bus_ok(w.bus) {
            out.push(Violation::error(format!("wind farm {} references unknown bus {}", w.id, w.bus)));
        }
        if !(w.capacity >= 0.0) {
            out.push(Violation::error(format!("wind farm {} capacity must be >= 0", w.id)));
        }
    }
    let max_mc = case.max_marginal_cost();
    for (i, l) in case.loads.iter().enumerate() {
        if !bus_ok(l.bus) {
            out.push(Violation::error(format!("load {i} references unknown bus {}", l.bus)));
        }
        if !(l.peak >= 0.0) {
            out.push(Violation::error(format!("load {i} peak must be >= 0")));
        }
        if !(l.shed_cost > max_mc) {
            out.push(Violation::warning(format!(
                "load {i} shed_cost {} does not exceed the largest generator marginal cost {max_mc}",
                l.shed_cost
            )));
        }
    }
    let s = &case.storage;
    let mut seen = vec![false; nb];
    for &c in &s.candidates {
        if !bus_ok(c) {
            out.push(Violation::error(format!("storage candidate references unknown bus {c}")));
        } else if std::mem::replace(&mut seen[c], true) {
            out.push(Violation::error(format!("storage candidate bus {c} listed twice")));
        }
    }
    if !(s.eta_ch > 0.0 && s.eta_ch <= 1.0) {
        out.push(Violation::error("eta_ch out of (0,1]"));
    }
    if !(s.eta_dis > 0.0 && s.eta_dis <= 1.0) {
        out.push(Violation::error("eta_dis out of (0,1]"));
    }
    if !(s.rho_min > 0.0 && s.rho_min <= s.rho_max) {
        out.push(Violation::error("storage ratios must satisfy 0 < rho_min <= rho_max"));
    }
    if !(s.unit_energy > 0.0 && s.unit_power > 0.0) {
        out.push(Violation::error("unit_energy and unit_power must be > 0"));
    }
    if !(s.budget >= 0.0) {
        out.push(Violation::error("budget must be >= 0"));
    }
    for (name, v) in [
        ("cost_energy_annual", s.cost_energy_annual),
        ("cost_power_annual", s.cost_power_annual),
        ("marginal_charge", s.marginal_charge),
        ("marginal_discharge", s.marginal_discharge),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            out.push(Violation::error(format!("{name} must be finite and >= 0")));
        }
    }
    out
}

/// Returns the first fatal violation as an error.
pub fn ensure_valid(case: &NetworkCase) -> Result<()> {
    let v = validate_case(case);
    for w in v.iter().filter(|v| v.severity == Severity::Warning) {
        log::warn!("{}", w.message);
    }
    match v.into_iter().find(|v| v.severity == Severity::Error) {
        Some(e) => Err(CoreError::Validation(e.message)),
        None => Ok(()),
    }
}

pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let case: NetworkCase = serde_json::from_str(text).map_err(|e| CoreError::Parse(e.to_string()))?;
    ensure_valid(&case)?;
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    parse_case(&text)
}

pub fn save_case(case: &NetworkCase, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(case).map_err(|e| CoreError::Parse(e.to_string()))?;
    write_atomic(path.as_ref(), text.as_bytes())
}

/// Equal annual payment that repays `total_cost` over `years` at interest `interest`.
pub fn annualize(total_cost: f64, interest: f64, years: u32) -> Result<f64> {
    if !(interest > 0.0) || years < 1 {
        return Err(CoreError::Domain(format!(
            "annualize needs interest > 0 and years >= 1 (got {interest}, {years})"
        )));
    }
    let g = (1.0 + interest).powi(years as i32);
    Ok(total_cost * interest * g / (g - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_bus() -> NetworkCase {
        NetworkCase {
            buses: vec![Bus { id: 0, name: "b0".into() }],
            lines: vec![],
            generators: vec![Generator {
                id: 0,
                bus: 0,
                p_min: 0.0,
                p_max: 100.0,
                ramp_up: 100.0,
                ramp_down: 100.0,
                marginal_cost: 10.0,
            }],
            wind_farms: vec![],
            loads: vec![LoadPoint { bus: 0, peak: 50.0, shed_cost: 1000.0 }],
            storage: StorageCatalog {
                candidates: vec![0],
                cost_energy_annual: 3254.9,
                cost_power_annual: 81.37,
                eta_ch: 0.9,
                eta_dis: 0.9,
                rho_min: 0.2,
                rho_max: 0.8,
                unit_energy: 32.0,
                unit_power: 8.0,
                max_units_per_bus: 4,
                max_units_total: 20,
                marginal_charge: 1.0,
                marginal_discharge: 18.0,
                budget: 1e7,
            },
            horizon: 24,
            day_weight: 365.0,
            slack_bus: 0,
        }
    }

    #[test]
    fn minimal_case_parses() {
        let text = serde_json::to_string(&one_bus()).unwrap();
        let c = parse_case(&text).unwrap();
        assert_eq!(c.buses.len(), 1);
        assert!(c.lines.is_empty());
    }

    #[test]
    fn unknown_bus_is_rejected() {
        let mut c = one_bus();
        c.buses.push(Bus { id: 1, name: "b1".into() });
        c.lines.push(Line { id: 0, from_bus: 0, to_bus: 99, reactance: 0.1, flow_min: -10.0, flow_max: 10.0 });
        let text = serde_json::to_string(&c).unwrap();
        let err = parse_case(&text).unwrap_err().to_string();
        assert!(err.contains("unknown bus"), "{err}");
    }

    #[test]
    fn efficiency_above_one_is_reported() {
        let mut c = one_bus();
        c.storage.eta_ch = 1.2;
        let v = validate_case(&c);
        assert_eq!(v, vec![Violation::error("eta_ch out of (0,1]")]);
    }

    #[test]
    fn cheap_shedding_is_only_a_warning() {
        let mut c = one_bus();
        c.loads[0].shed_cost = 5.0;
        let v = validate_case(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].severity, Severity::Warning);
        assert!(ensure_valid(&c).is_ok());
    }

    #[test]
    fn annualize_examples() {
        assert!((annualize(500.0, 0.10, 10).unwrap() - 81.372_697_441_255_8).abs() < 1e-9);
        assert!((annualize(250.0, 0.07, 1).unwrap() - 267.5).abs() < 1e-12);
        assert_eq!(annualize(0.0, 0.1, 10).unwrap(), 0.0);
        assert!(annualize(1.0, 0.0, 10).is_err());
        assert!(annualize(1.0, 0.1, 0).is_err());
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("case.json");
        let c = one_bus();
        save_case(&c, &p).unwrap();
        assert_eq!(load_case(&p).unwrap(), c);
    }
}
