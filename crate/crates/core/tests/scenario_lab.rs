mod common;

use std::path::PathBuf;

use common::*;
use ricci_lab::config::{load_scenario, parse_scenario};
use ricci_lab::inequality::{run_suite, TestFunctionBank};
use ricci_lab::scenario::{
    concave_weight, reparametrize_k, reparametrized_time, shrink_horizon, shrink_too_fast, static_scenario,
    Expectation, Scenario,
};
use ricci_lab::{Error, TimeGrid};

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(s: &Scenario) -> ricci_lab::inequality::SuiteResult {
    let bank = TestFunctionBank::for_flow(&s.flow, s.bank_seed, s.bank_size);
    run_suite(&s.flow, &bank, &s.suite).unwrap()
}

const MINIMAL: &str = r#"
schema = 1
name = "tiny"

[grid]
t_start = 0.1
t_end = 0.6
n_steps = 20

[space]
backend = "graph"
base_measure = [1.0, 2.0, 1.0]
edges = [[0, 1], [1, 2]]
conductance = ["1 + 0.5 * t", "1"]
log_density = ["0", "0.2 * t", "0"]
"#;

#[test]
fn every_shipped_scenario_loads() {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let s = load_scenario(&path).unwrap();
            assert_eq!(path.file_stem().unwrap().to_str().unwrap(), s.name);
            assert!(s.graded().count() > 0, "{}", s.name);
            names.push(s.name);
        }
    }
    assert!(names.len() >= 9, "{names:?}");
}

#[test]
fn minimal_custom_scenario() {
    let s = parse_scenario(MINIMAL).unwrap().build().unwrap();
    assert_eq!(s.flow.n(), 3);
    assert!(!s.flow.is_static());
    // conductance on edge 0 grows linearly
    let c0 = s.flow.conductance_at(0)[0];
    let c1 = s.flow.conductance_at(20)[0];
    assert!((c0 - 1.05).abs() < 1e-12 && (c1 - 1.3).abs() < 1e-12);
    // the declared Lipschitz constant defaults to the measured one
    let rep = ricci_lab::validate_a1(&s.flow).unwrap();
    assert!(rep.pass && rep.ellipticity_pass);
}

#[test]
fn malformed_files_are_parse_errors() {
    let cases = [
        MINIMAL.replace("schema = 1", "schema = 2"),
        MINIMAL.replace("backend = \"graph\"", "backend = \"torus\""),
        MINIMAL.replace("\"1 + 0.5 * t\"", "\"1 + * t\""),
        MINIMAL.replace("t_end = 0.6\n", ""),
        format!("{MINIMAL}\n[check]\nalphas = [1.0, 2.0]\n"),
        format!("{MINIMAL}\n[check]\ntransport_p = 3\n"),
    ];
    for text in &cases {
        let r = parse_scenario(text).and_then(|f| f.build());
        assert!(matches!(r, Err(Error::Parse(_))), "{text}\n{r:?}");
    }
}

#[test]
fn graded_chain_rule_checks_are_refused_on_graphs() {
    let text = format!("{MINIMAL}\n[expect]\nE9 = \"pass\"\n");
    assert!(parse_scenario(&text).unwrap().build().is_err());
    let text = format!("{MINIMAL}\n[expect]\nE9 = \"informational\"\nE3 = \"fail\"\n");
    let s = parse_scenario(&text).unwrap().build().unwrap();
    assert_eq!(s.expected["E3"], Expectation::Fail);
}

#[test]
fn reparametrized_clock() {
    assert_eq!(reparametrized_time(2.0, 1.0, 0.0), 0.0);
    // τ' = 1 / (C - 2Kt)
    let (k, c, t, h) = (-0.5, 1.0, 0.7, 1e-6);
    let d = (reparametrized_time(k, c, t + h) - reparametrized_time(k, c, t - h)) / (2.0 * h);
    assert!((d - 1.0 / (c - 2.0 * k * t)).abs() < 1e-8);
}

#[test]
fn reparametrization_window_is_enforced() {
    let base = two_point(0.1, 0.2, 0.01);
    let grid = TimeGrid::new(0.1, 0.6, 10).unwrap();
    let r = reparametrize_k("r", &base, Some(2.0), 1.0, grid);
    assert!(matches!(r, Err(Error::Domain(_))));
    let grid = TimeGrid::new(0.1, 0.2, 10).unwrap();
    assert!(reparametrize_k("r", &base, Some(2.0), 1.0, grid).is_ok());
}

#[test]
fn two_point_reparametrization_meets_its_expectations() {
    let base = two_point(0.01, 0.2, 0.01);
    let grid = TimeGrid::new(0.01, 0.2, 100).unwrap();
    let s = reparametrize_k("r", &base, None, 1.0, grid).unwrap();
    let res = run(&s);
    assert!(s.compare(&res).is_empty(), "{:?}", s.compare(&res));
    assert_eq!(res.verdict("E3"), Some(true));
}

#[test]
fn static_two_point_meets_its_expectations() {
    let s = static_scenario("s", two_point(0.1, 0.6, 0.005)).unwrap();
    assert!((s.curvature.unwrap() - 2.0).abs() < 1e-9);
    let res = run(&s);
    assert!(s.compare(&res).is_empty(), "{:?}", s.compare(&res));
}

#[test]
fn inverted_expectation_is_reported() {
    let mut s = static_scenario("s", two_point(0.1, 0.6, 0.005)).unwrap();
    s.expected.insert("E3".into(), Expectation::Fail);
    let res = run(&s);
    let m = s.compare(&res);
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].id, "E3");
}

#[test]
fn shrink_too_fast_refutes_and_reverts() {
    let base = two_point(0.01, 0.2, 0.01);
    let h = shrink_horizon(2.0, 3.0);
    assert!((h - 3.0f64.ln() / 24.0).abs() < 1e-15);
    let grid = TimeGrid::new(0.01, 0.01 + h, 60).unwrap();
    let bad = shrink_too_fast("v", &base, 3.0, grid).unwrap();
    let res = run(&bad);
    assert!(res.report("E2").unwrap().margin < -1e-3);
    assert!(res.report("E3").unwrap().margin < -1e-3);
    assert!(bad.compare(&res).is_empty());

    let good = shrink_too_fast("r", &base, 0.0, grid).unwrap();
    let res = run(&good);
    assert_eq!(res.verdict("E2"), Some(true));
    assert_eq!(res.verdict("E3"), Some(true));
    assert!(good.compare(&res).is_empty());
}

#[test]
fn concave_weight_expectations_follow_the_sign_of_a() {
    let grid = TimeGrid::new(0.01, 1.01, 20).unwrap();
    let s = concave_weight("c", 32, 0.8, grid).unwrap();
    assert_eq!(s.expected["E3"], Expectation::Fail);
    assert!(s.curvature.unwrap() < -0.7);
    let flat = concave_weight("f", 32, 0.0, grid).unwrap();
    assert_eq!(flat.expected["E3"], Expectation::Pass);
}
