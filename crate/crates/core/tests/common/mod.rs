#![allow(dead_code)]

use std::path::PathBuf;

use rsp_core::grid::load_case;
use rsp_core::pipeline::generator;
use rsp_core::scenarios::{sample_iid, synthetic_load_year, Replacement, ScenarioGenerator, Source, WindModel};
use rsp_core::{DailyScenario, NetworkCase, ScenarioSet};

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn case(name: &str) -> NetworkCase {
    load_case(repo_path(&format!("cases/{name}.json"))).unwrap()
}

pub fn models(case: &NetworkCase, base_seed: u64) -> ScenarioGenerator {
    let base = synthetic_load_year(365, case.num_buses(), case.horizon, base_seed);
    generator(case, WindModel::default(), 0.01, base).unwrap()
}

pub fn draw(case: &NetworkCase, k: usize, seed: u64) -> ScenarioSet {
    sample_iid(Source::Models(&models(case, 7)), k, seed, Replacement::With).unwrap()
}

/// Every load at its peak and no wind, so no other day can cost more.
pub fn peak_day(case: &NetworkCase) -> DailyScenario {
    DailyScenario {
        load_factor: vec![vec![1.0; case.horizon]; case.num_buses()],
        wind_factor: vec![vec![0.0; case.horizon]; case.wind_farms.len()],
    }
}

/// Two-bus day with an afternoon peak at `bus` and light load elsewhere.
pub fn twin_day(peak_bus: Option<usize>) -> DailyScenario {
    let row = |hot: bool| (0..24).map(|t| if hot && (12..18).contains(&t) { 1.0 } else { 0.3 }).collect();
    DailyScenario {
        load_factor: (0..2).map(|b| row(peak_bus == Some(b))).collect(),
        wind_factor: vec![],
    }
}

/// Mild day, west peak, east peak: the two peaks are jointly binding.
pub fn twin_set() -> ScenarioSet {
    ScenarioSet::new(vec![twin_day(None), twin_day(Some(0)), twin_day(Some(1))], "twin")
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= (1e-6 * b.abs()).max(1e-4)
}
