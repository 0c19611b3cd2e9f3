//! Daily uncertainty scenarios: historical profiles, synthetic generators,
//! i.i.d. sampling and train/test splits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::NetworkCase;
use crate::rng::{self, StreamRng};

/// Slack allowed above 1.0 when reading factors from disk.
const RANGE_SLACK: f64 = 1e-9;

/// One day of load factors (`[bus][t]`) and wind capacity factors (`[farm][t]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyScenario {
    pub load_factor: Vec<Vec<f64>>,
    pub wind_factor: Vec<Vec<f64>>,
}

impl DailyScenario {
    pub fn horizon(&self) -> usize {
        self.load_factor
            .first()
            .or(self.wind_factor.first())
            .map_or(0, Vec::len)
    }

    /// Checks shape against `case` and that every factor lies in [0, 1].
    pub fn check(&self, case: &NetworkCase) -> Result<()> {
        let t = case.horizon;
        if self.load_factor.len() != case.num_buses() || self.wind_factor.len() != case.wind_farms.len() {
            return Err(CoreError::Dimension(format!(
                "scenario has {} load rows and {} wind rows; case has {} buses and {} farms",
                self.load_factor.len(),
                self.wind_factor.len(),
                case.num_buses(),
                case.wind_farms.len()
            )));
        }
        for row in self.load_factor.iter().chain(&self.wind_factor) {
            if row.len() != t {
                return Err(CoreError::Dimension(format!("scenario row has {} hours; case horizon is {t}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(CoreError::OutOfRange(format!("factor {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Entry-wise scaling of load factors, clamped to [0, 1].
    pub fn with_load_scaled(&self, factor: f64) -> Self {
        Self {
            load_factor: self
                .load_factor
                .iter()
                .map(|r| r.iter().map(|v| (v * factor).clamp(0.0, 1.0)).collect())
                .collect(),
            wind_factor: self.wind_factor.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<DailyScenario>,
    pub provenance: String,
    pub seed: Option<u64>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<DailyScenario>, provenance: impl Into<String>) -> Self {
        Self {
            scenarios,
            provenance: provenance.into(),
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn get(&self, i: usize) -> &DailyScenario {
        &self.scenarios[i]
    }

    /// Subset in the order given by `indices`.
    pub fn subset(&self, indices: &[usize]) -> ScenarioSet {
        ScenarioSet {
            scenarios: indices.iter().map(|&i| self.scenarios[i].clone()).collect(),
            provenance: format!("{} [subset of {}]", self.provenance, indices.len()),
            seed: self.seed,
        }
    }

    pub fn check(&self, case: &NetworkCase) -> Result<()> {
        self.scenarios.iter().try_for_each(|s| s.check(case))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindModel {
    pub weibull_scale: f64,
    pub weibull_shape: f64,
    pub v_cut_in: f64,
    pub v_rated: f64,
    pub v_cut_out: f64,
}

impl Default for WindModel {
    fn default() -> Self {
        Self {
            weibull_scale: 11.0086,
            weibull_shape: 1.9622,
            v_cut_in: 4.0,
            v_rated: 13.61,
            v_cut_out: 25.0,
        }
    }
}

impl WindModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.weibull_scale > 0.0 && self.weibull_shape > 0.0) {
            return Err(CoreError::Validation("Weibull scale and shape must be > 0".into()));
        }
        if !(0.0 < self.v_cut_in && self.v_cut_in < self.v_rated && self.v_rated < self.v_cut_out) {
            return Err(CoreError::Validation("wind speeds need 0 < cut-in < rated < cut-out".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadNoiseModel {
    /// Base days, each `[bus][t]`.
    pub base_profiles: Vec<Vec<Vec<f64>>>,
    pub sigma_rel: f64,
}

/// Cubic power curve normalized to rated output.
pub fn wind_capacity_factor(speed: f64, model: &WindModel) -> f64 {
    if speed < model.v_cut_in || speed >= model.v_cut_out {
        0.0
    } else if speed >= model.v_rated {
        1.0
    } else {
        let ci3 = model.v_cut_in.powi(3);
        (speed.powi(3) - ci3) / (model.v_rated.powi(3) - ci3)
    }
}

fn wind_day_with(model: &WindModel, rng: &mut StreamRng, farms: usize, horizon: usize) -> Vec<Vec<f64>> {
    let dist = Weibull::new(model.weibull_scale, model.weibull_shape).expect("validated Weibull parameters");
    (0..farms)
        .map(|_| (0..horizon).map(|_| wind_capacity_factor(dist.sample(rng), model)).collect())
        .collect()
}

fn load_day_with(model: &LoadNoiseModel, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let day = rng.random_range(0..model.base_profiles.len());
    model.base_profiles[day]
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(rng);
                    (v + model.sigma_rel * v * z).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

/// `n` independent Weibull wind speeds in m/s.
pub fn sample_wind_speeds(model: &WindModel, seed: u64, n: usize) -> Vec<f64> {
    let dist = Weibull::new(model.weibull_scale, model.weibull_shape).expect("validated Weibull parameters");
    let mut r = rng::from_seed(seed);
    (0..n).map(|_| dist.sample(&mut r)).collect()
}

/// Hour-by-hour independent Weibull speeds mapped through the power curve.
pub fn generate_wind_day(model: &WindModel, seed: u64, farms: usize, horizon: usize) -> Vec<Vec<f64>> {
    wind_day_with(model, &mut rng::from_seed(seed), farms, horizon)
}

/// A uniformly chosen base day with relative Gaussian noise, clamped to [0, 1].
pub fn generate_load_day(model: &LoadNoiseModel, seed: u64) -> Vec<Vec<f64>> {
    load_day_with(model, &mut rng::from_seed(seed))
}

/// Wind and load generators for one case.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioGenerator {
    pub wind: WindModel,
    pub load: LoadNoiseModel,
    pub farms: usize,
    pub horizon: usize,
}

impl ScenarioGenerator {
    /// Scenario `index` of the stream keyed by `seed`; independent of how many are drawn.
    pub fn scenario(&self, seed: u64, index: u64) -> DailyScenario {
        let mut r = rng::stream(seed, index);
        let wind_factor = wind_day_with(&self.wind, &mut r, self.farms, self.horizon);
        let load_factor = load_day_with(&self.load, &mut r);
        DailyScenario { load_factor, wind_factor }
    }

    pub fn describe(&self) -> String {
        format!(
            "generator:weibull({},{})+gauss_rel({})x{}days",
            self.wind.weibull_scale,
            self.wind.weibull_shape,
            self.load.sigma_rel,
            self.load.base_profiles.len()
        )
    }
}

/// Where i.i.d. scenarios come from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    /// Uniform draws from a finite set.
    Finite(&'a ScenarioSet),
    Models(&'a ScenarioGenerator),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    /// I.i.d. draws from the empirical distribution.
    #[default]
    With,
    /// Distinct elements; breaks the i.i.d. premise of the risk certificates.
    Without,
}

/// Draws `k` scenarios; deterministic in `seed`.
pub fn sample_iid(source: Source<'_>, k: usize, seed: u64, replacement: Replacement) -> Result<ScenarioSet> {
    if k == 0 {
        return Err(CoreError::Domain("sample size must be at least 1".into()));
    }
    let (scenarios, desc) = match source {
        Source::Finite(set) => {
            if set.is_empty() {
                return Err(CoreError::Domain("cannot sample from an empty set".into()));
            }
            let mut r = rng::from_seed(seed);
            let idx: Vec<usize> = match replacement {
                Replacement::With => (0..k).map(|_| r.random_range(0..set.len())).collect(),
                Replacement::Without => {
                    if k > set.len() {
                        return Err(CoreError::Domain(format!(
                            "cannot draw {k} distinct scenarios from {}",
                            set.len()
                        )));
                    }
                    let mut all: Vec<usize> = (0..set.len()).collect();
                    all.shuffle(&mut r);
                    all.truncate(k);
                    all
                }
            };
            let mode = match replacement {
                Replacement::With => "with replacement",
                Replacement::Without => "without replacement",
            };
            (
                idx.iter().map(|&i| set.scenarios[i].clone()).collect(),
                format!("{} ({mode})", set.provenance),
            )
        }
        Source::Models(g) => ((0..k as u64).map(|i| g.scenario(seed, i)).collect(), g.describe()),
    };
    Ok(ScenarioSet {
        scenarios,
        provenance: format!("{desc}; k={k}; seed={seed}; rng={}", rng::RNG_ALGORITHM),
        seed: Some(seed),
    })
}

/// Random disjoint partition of indices into `train` and the rest.
pub fn split_indices(n: usize, train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if train > n {
        return Err(CoreError::Domain(format!("train size {train} exceeds set size {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::from_seed(seed));
    let test = idx.split_off(train);
    Ok((idx, test))
}

pub fn split(set: &ScenarioSet, train: usize, seed: u64) -> Result<(ScenarioSet, ScenarioSet)> {
    let (a, b) = split_indices(set.len(), train, seed)?;
    Ok((set.subset(&a), set.subset(&b)))
}

/// One synthetic year of base load-factor days with daily and seasonal shape.
///
/// Each bus gets a slightly shifted evening peak; values are normalized so
/// the yearly maximum at every bus is 1.
pub fn synthetic_load_year(days: usize, buses: usize, horizon: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut r = rng::from_seed(seed);
    let mut year: Vec<Vec<Vec<f64>>> = (0..days)
        .map(|d| {
            let season = 0.82 + 0.18 * (2.0 * PI * (d as f64 - 200.0) / 365.0).cos();
            let weekday = if d % 7 >= 5 { 0.92 } else { 1.0 };
            let day_noise = 1.0 + 0.04 * (r.random::<f64>() - 0.5);
            (0..buses)
                .map(|b| {
                    let shift = 0.5 * b as f64;
                    (0..horizon)
                        .map(|t| {
                            let h = t as f64 * 24.0 / horizon as f64;
                            let evening = (-((h - 19.0 - shift) / 2.5).powi(2)).exp();
                            let morning = (-((h - 9.0) / 3.0).powi(2)).exp();
                            season * weekday * day_noise * (0.55 + 0.3 * evening + 0.15 * morning)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    for b in 0..buses {
        let peak = year.iter().flat_map(|d| d[b].iter()).fold(0.0f64, |a, &v| a.max(v));
        if peak > 0.0 {
            for d in &mut year {
                for v in &mut d[b] {
                    *v = (*v / peak).min(1.0);
                }
            }
        }
    }
    year
}

#[derive(Debug, Deserialize, Serialize)]
struct ProfileRow {
    day: usize,
    hour: usize,
    kind: String,
    entity: usize,
    value: f64,
}

/// Reads a `day,hour,kind,entity,value` time-series file into one scenario per day.
pub fn load_profiles(path: impl AsRef<Path>, case: &NetworkCase) -> Result<ScenarioSet> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CoreError::Parse(format!("{}: {e}", path.display())))?;
    let (nb, nf, t) = (case.num_buses(), case.wind_farms.len(), case.horizon);
    let mut days: BTreeMap<usize, (DailyScenario, usize)> = BTreeMap::new();
    for (line, row) in rdr.deserialize::<ProfileRow>().enumerate() {
        let row = row.map_err(|e| CoreError::Parse(format!("{}: {e}", path.display())))?;
        if !(row.value >= 0.0 && row.value <= 1.0 + RANGE_SLACK) {
            return Err(CoreError::OutOfRange(format!(
                "{} record {}: {} value {} outside [0, 1]",
                path.display(),
                line + 1,
                row.kind,
                row.value
            )));
        }
        if row.hour >= t {
            return Err(CoreError::Dimension(format!("hour {} outside horizon {t}", row.hour)));
        }
        let entry = days.entry(row.day).or_insert_with(|| {
            (
                DailyScenario {
                    load_factor: vec![vec![f64::NAN; t]; nb],
                    wind_factor: vec![vec![f64::NAN; t]; nf],
                },
                0,
            )
        });
        let target = match row.kind.as_str() {
            "load" if row.entity < nb => &mut entry.0.load_factor[row.entity][row.hour],
            "wind" if row.entity < nf => &mut entry.0.wind_factor[row.entity][row.hour],
            "load" | "wind" => {
                return Err(CoreError::Dimension(format!("{} entity {} not in case", row.kind, row.entity)));
            }
            other => return Err(CoreError::Parse(format!("unknown kind {other:?}"))),
        };
        *target = row.value.min(1.0);
        entry.1 += 1;
    }
    let mut out = Vec::with_capacity(days.len());
    for (day, (s, _)) in days {
        if s.load_factor.iter().chain(&s.wind_factor).flatten().any(|v| v.is_nan()) {
            return Err(CoreError::Dimension(format!(
                "day {day} does not cover every bus and farm for {t} hours"
            )));
        }
        out.push(s);
    }
    Ok(ScenarioSet::new(out, format!("file:{}", path.display())))
}

/// Writes scenarios in the time-series CSV layout, one day per scenario.
pub fn save_profiles(set: &ScenarioSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (d, s) in set.scenarios.iter().enumerate() {
        for (kind, rows) in [("load", &s.load_factor), ("wind", &s.wind_factor)] {
            for (e, row) in rows.iter().enumerate() {
                for (h, &v) in row.iter().enumerate() {
                    w.serialize(ProfileRow {
                        day: d,
                        hour: h,
                        kind: kind.into(),
                        entity: e,
                        value: v,
                    })
                    .map_err(|e| CoreError::Parse(e.to_string()))?;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CoreError::Parse(e.to_string()))?;
    crate::report::write_atomic(path.as_ref(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_curve_examples() {
        let m = WindModel::default();
        assert_eq!(wind_capacity_factor(0.0, &m), 0.0);
        assert_eq!(wind_capacity_factor(13.61, &m), 1.0);
        assert_eq!(wind_capacity_factor(25.0, &m), 0.0);
        assert_eq!(wind_capacity_factor(20.0, &m), 1.0);
        // (1000 − 64) / (13.61³ − 64) evaluated independently.
        let oracle = 936.0 / (13.61f64 * 13.61 * 13.61 - 64.0);
        assert!((wind_capacity_factor(10.0, &m) - oracle).abs() < 1e-15);
        assert!((oracle - 0.380_951_003_978_076).abs() < 1e-12);
    }

    #[test]
    fn wind_draws_are_seeded() {
        let m = WindModel::default();
        assert_eq!(generate_wind_day(&m, 3, 2, 24), generate_wind_day(&m, 3, 2, 24));
        assert_ne!(generate_wind_day(&m, 3, 2, 24), generate_wind_day(&m, 4, 2, 24));
    }

    #[test]
    fn sharp_weibull_concentrates_at_scale() {
        let m = WindModel {
            weibull_shape: 200.0,
            ..WindModel::default()
        };
        let target = wind_capacity_factor(m.weibull_scale, &m);
        for row in generate_wind_day(&m, 11, 3, 24) {
            for v in row {
                assert!((v - target).abs() < 0.05);
            }
        }
    }

    #[test]
    fn zero_noise_returns_base_day() {
        let base = vec![vec![vec![0.3, 0.7], vec![1.0, 0.0]]];
        let m = LoadNoiseModel {
            base_profiles: base.clone(),
            sigma_rel: 0.0,
        };
        assert_eq!(generate_load_day(&m, 5), base[0]);
    }

    #[test]
    fn full_load_never_exceeds_one() {
        let m = LoadNoiseModel {
            base_profiles: vec![vec![vec![1.0; 24]]],
            sigma_rel: 0.05,
        };
        for s in 0..200 {
            assert!(generate_load_day(&m, s)[0].iter().all(|&v| v <= 1.0));
        }
    }

    #[test]
    fn split_partitions_indices() {
        let (a, b) = split_indices(10, 10, 1).unwrap();
        assert_eq!(a.len(), 10);
        assert!(b.is_empty());
        let (a, b) = split_indices(7300, 920, 2).unwrap();
        assert_eq!(b.len(), 6380);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..7300).collect::<Vec<_>>());
        assert!(split_indices(3, 4, 0).is_err());
    }

    #[test]
    fn synthetic_year_is_normalized() {
        let y = synthetic_load_year(365, 3, 24, 9);
        assert_eq!(y.len(), 365);
        for b in 0..3 {
            let peak = y.iter().flat_map(|d| d[b].iter()).fold(0.0f64, |a, &v| a.max(v));
            assert!((peak - 1.0).abs() < 1e-12);
        }
        assert!(y.iter().flatten().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
