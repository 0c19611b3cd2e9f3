mod common;

use common::{case, draw, models, repo_path};
use proptest::prelude::*;
use rsp_core::grid::{annualize, load_case, parse_case, validate_case, Severity};
use rsp_core::scenarios::{
    generate_load_day, generate_wind_day, load_profiles, sample_iid, sample_wind_speeds, save_profiles, split, split_indices,
    wind_capacity_factor, LoadNoiseModel, Replacement, Source, WindModel,
};
use rsp_core::{CoreError, ScenarioSet};
use statrs::function::gamma::gamma;

fn in_unit(set: &ScenarioSet) -> bool {
    set.scenarios
        .iter()
        .flat_map(|s| s.load_factor.iter().chain(&s.wind_factor).flatten())
        .all(|v| (0.0..=1.0).contains(v))
}

#[test]
fn shipped_cases_are_valid() {
    for name in ["demo3", "demo6", "twin2"] {
        let c = case(name);
        assert!(validate_case(&c).iter().all(|v| v.severity != Severity::Error), "{name}");
    }
}

#[test]
fn six_bus_demo_has_two_wind_farms_at_buses_five_and_six() {
    let c = case("demo6");
    assert_eq!(c.wind_farms.len(), 2);
    let names: Vec<&str> = c.wind_farms.iter().map(|w| c.buses[w.bus].name.as_str()).collect();
    assert_eq!(names, ["bus5", "bus6"]);
    assert!(c.wind_farms.iter().all(|w| w.capacity == 100.0));
}

#[test]
fn unknown_bus_reference_is_named() {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(repo_path("cases/demo3.json")).unwrap()).unwrap();
    v["lines"][0]["to_bus"] = 99.into();
    let err = parse_case(&v.to_string()).unwrap_err();
    assert!(err.to_string().contains("unknown bus"), "{err}");
}

#[test]
fn shipped_profiles_load_within_range() {
    let c = case("demo3");
    let set = load_profiles(repo_path("data/demo3_days.csv"), &c).unwrap();
    assert_eq!(set.len(), 30);
    assert!(in_unit(&set));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("again.csv");
    save_profiles(&set, &path).unwrap();
    assert_eq!(load_profiles(&path, &c).unwrap().scenarios, set.scenarios);
}

#[test]
fn out_of_range_wind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(repo_path("cases/demo3.json")).unwrap()).unwrap();
    v["buses"] = serde_json::json!([{ "id": 0, "name": "b" }]);
    v["lines"] = serde_json::json!([]);
    v["generators"] = serde_json::json!([v["generators"][0]]);
    v["wind_farms"][0]["bus"] = 0.into();
    v["loads"] = serde_json::json!([{ "bus": 0, "peak": 50.0, "shed_cost": 1000.0 }]);
    v["storage"]["candidates"] = serde_json::json!([0]);
    std::fs::write(&one, v.to_string()).unwrap();
    let c = load_case(&one).unwrap();
    let mut text = String::from("day,hour,kind,entity,value\n");
    for d in 0..2 {
        for h in 0..24 {
            text += &format!("{d},{h},load,0,0.5\n{d},{h},wind,0,0.25\n");
        }
    }
    let good = dir.path().join("good.csv");
    std::fs::write(&good, &text).unwrap();
    assert_eq!(load_profiles(&good, &c).unwrap().len(), 2);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, text.replacen("wind,0,0.25", "wind,0,1.2", 1)).unwrap();
    assert!(matches!(load_profiles(&bad, &c), Err(CoreError::OutOfRange(_))));
}

#[test]
fn power_curve_at_ten_metres_per_second() {
    let m = WindModel { v_cut_in: 4.0, v_rated: 13.61, v_cut_out: 25.0, ..WindModel::default() };
    assert!((wind_capacity_factor(10.0, &m) - 0.380_951_003_978_076).abs() < 1e-12);
}

#[test]
fn weibull_mean_speed_matches_the_gamma_function() {
    let m = WindModel::default();
    let v = sample_wind_speeds(&m, 42, 100_000);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let expect = m.weibull_scale * gamma(1.0 + 1.0 / m.weibull_shape);
    assert!((mean / expect - 1.0).abs() < 0.01, "{mean} vs {expect}");
}

#[test]
fn relative_load_noise_has_the_requested_spread() {
    let model = LoadNoiseModel { base_profiles: vec![vec![vec![0.5]]], sigma_rel: 0.01 };
    let xs: Vec<f64> = (0..100_000).map(|s| generate_load_day(&model, s)[0][0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    assert!((sd / 0.005 - 1.0).abs() < 0.1, "{sd}");
}

#[test]
fn large_generated_sample_stays_in_range() {
    let c = case("demo6");
    let set = draw(&c, 920, 3);
    assert_eq!(set.len(), 920);
    assert!(in_unit(&set));
    assert!(set.provenance.contains("seed=3"));
}

#[test]
fn neighbouring_seeds_give_different_draws() {
    let c = case("demo3");
    assert_ne!(draw(&c, 100, 10).scenarios, draw(&c, 100, 11).scenarios);
    assert_eq!(draw(&c, 100, 10).scenarios, draw(&c, 100, 10).scenarios);
    assert_eq!(generate_wind_day(&WindModel::default(), 5, 2, 24), generate_wind_day(&WindModel::default(), 5, 2, 24));
}

#[test]
fn finite_sampling_modes() {
    let c = case("demo3");
    let g = models(&c, 7);
    let single = ScenarioSet::new(vec![g.scenario(1, 0)], "one");
    let s = sample_iid(Source::Finite(&single), 1, 0, Replacement::With).unwrap();
    assert_eq!(s.scenarios, single.scenarios);
    let ten = draw(&c, 10, 4);
    let w = sample_iid(Source::Finite(&ten), 10, 9, Replacement::Without).unwrap();
    assert!(ten.scenarios.iter().all(|x| w.scenarios.contains(x)));
    assert!(sample_iid(Source::Finite(&ten), 11, 9, Replacement::Without).is_err());
    assert!(sample_iid(Source::Finite(&ten), 0, 9, Replacement::With).is_err());
}

#[test]
fn twenty_years_split_into_train_and_test() {
    let (a, b) = split_indices(7300, 920, 1).unwrap();
    assert_eq!((a.len(), b.len()), (920, 6380));
    let ten = draw(&case("demo3"), 10, 6);
    let (tr, te) = split(&ten, 10, 2).unwrap();
    assert_eq!((tr.len(), te.len()), (10, 0));
    assert!(split_indices(5, 6, 0).is_err());
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 1usize..300, frac in 0.0..=1.0f64, seed in any::<u64>()) {
        let train = (n as f64 * frac) as usize;
        let (a, b) = split_indices(n, train, seed).unwrap();
        prop_assert_eq!(a.len(), train);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, train, seed).unwrap(), (a, b));
    }

    #[test]
    fn power_curve_is_monotone_up_to_rated(a in 0.0..13.61f64, b in 0.0..13.61f64) {
        let m = WindModel::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(wind_capacity_factor(lo, &m) <= wind_capacity_factor(hi, &m));
        prop_assert!((0.0..=1.0).contains(&wind_capacity_factor(hi, &m)));
    }

    #[test]
    fn power_curve_is_zero_past_cut_out(v in 25.0..200.0f64) {
        prop_assert_eq!(wind_capacity_factor(v, &WindModel::default()), 0.0);
    }

    #[test]
    fn annualize_is_linear(a in 0.0..1e7f64, b in 0.0..1e7f64, r in 0.001..0.3f64, y in 1u32..40) {
        let sum = annualize(a + b, r, y).unwrap();
        let parts = annualize(a, r, y).unwrap() + annualize(b, r, y).unwrap();
        prop_assert!((sum - parts).abs() <= 1e-9 * sum.abs().max(1e-300));
        prop_assert!(annualize(a, r, y).unwrap() * y as f64 >= a);
    }
}
