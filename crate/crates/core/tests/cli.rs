use std::fs;
use std::path::{Path, PathBuf};

use levy_volterra::cli::run_args;
use levy_volterra::config::{parse_nu, parse_override, Mode, Scenario};
use levy_volterra::levy::{JumpLaw, JumpSpec, LevyModel};
use proptest::prelude::*;
use serde_json::Value;

fn out_dir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&d);
    d
}

fn lvito(out: &Path, args: &[&str]) -> (i32, Option<PathBuf>) {
    let mut all = vec!["lvito", "--out-dir", out.to_str().unwrap()];
    all.extend_from_slice(args);
    let o = run_args(all);
    (o.exit, o.run_dir)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn default_scenario_round_trips() {
    let sc = Scenario::default();
    let text = sc.to_toml().unwrap();
    assert_eq!(Scenario::from_toml(&text).unwrap(), sc);
    assert_eq!(Scenario::from_toml(&text).unwrap().to_toml().unwrap(), text);
}

#[test]
fn partial_files_keep_defaults() {
    let dir = out_dir("partial");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("s.toml");
    fs::write(&path, "n_paths = 300\n[model]\nsigma = 0.5\n").unwrap();
    let sc = Scenario::load(Some(&path), &[parse_override("kernel=\"indicator\"").unwrap()]).unwrap();
    assert_eq!(sc.n_paths, 300);
    assert_eq!(sc.model.sigma(), 0.5);
    assert_eq!(sc.model.jumps(), Scenario::default().model.jumps());
    assert_eq!(String::from(sc.kernel.clone()), "indicator");
    assert!(Scenario::from_toml("n_pathz = 3").is_err());
}

#[test]
fn hash_ignores_the_seed() {
    let a = Scenario::default();
    let b = Scenario { seed: 99, ..Scenario::default() };
    let c = Scenario { n_paths: 17, ..Scenario::default() };
    assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
    assert_ne!(a.config_hash().unwrap(), c.config_hash().unwrap());
    assert_eq!(a.config_hash().unwrap().len(), 12);
}

#[test]
fn jump_shorthands() {
    assert_eq!(parse_nu("none").unwrap(), JumpSpec::None);
    assert_eq!(parse_nu("cp:rate=2,atom=2").unwrap(), JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0)));
    assert_eq!(
        parse_nu("cp:rate=2,uniform=-1:1").unwrap(),
        JumpSpec::compound_poisson(2.0, JumpLaw::Uniform { low: -1.0, high: 1.0 })
    );
    assert_eq!(parse_nu("ts:alpha=0.5,lambda=1,c=1").unwrap(), JumpSpec::tempered_stable(0.5, 1.0, 1.0));
    assert!(parse_nu("stable:alpha=1.5").is_err());
}

#[test]
fn pathwise_mode_needs_the_increment_kernel() {
    let sc = Scenario { modes: vec![Mode::Pathwise], ..Scenario::default() };
    assert!(sc.validate().is_err());
    let out = out_dir("pathwise");
    let (code, _) = lvito(&out, &["verify-ito", "--set", "modes=[\"pathwise\"]"]);
    assert_eq!(code, 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let out = out_dir("usage");
    assert_eq!(lvito(&out, &["charfn", "--kernel", "cauchy"]).0, 2);
    assert_eq!(lvito(&out, &["simulate", "--set", "nonsense=1"]).0, 2);
    assert_eq!(lvito(&out, &["frobnicate"]).0, 2);
}

#[test]
fn verify_ito_smoke() {
    let out = out_dir("verify");
    let (code, dir) = lvito(&out, &["verify-ito", "--set", "n_paths=500", "--set", "g_battery=[\"middle\"]"]);
    assert_eq!(code, 0);
    let dir = dir.unwrap();
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("verify-ito-"));
    for f in ["config.snapshot", "report.json", "log.txt", "tables/terms.csv", "tables/residuals.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let r = report(&dir);
    assert_eq!(r["passed"], Value::Bool(true));
    assert_eq!(r["result"]["verdict"], "pass");
    let snap = Scenario::from_toml(&fs::read_to_string(dir.join("config.snapshot")).unwrap()).unwrap();
    assert_eq!(snap.n_paths, 500);
}

#[test]
fn injected_fault_fails_and_names_the_term() {
    let out = out_dir("fault");
    let (code, dir) = lvito(
        &out,
        &["verify-ito", "--set", "n_paths=300", "--set", "modes=[\"expectation\"]", "--inject-fault", "term_sigma=1.0"],
    );
    assert_eq!(code, 1);
    let r = report(&dir.unwrap());
    let failures = r["result"]["failures"].as_array().unwrap();
    assert!(!failures.is_empty());
    assert!(failures.iter().all(|f| f.as_str().unwrap().contains("term_sigma")), "{failures:?}");
}

#[test]
fn validate_kernel_reports_fitted_exponent() {
    let out = out_dir("validate");
    let (code, dir) = lvito(&out, &["validate-kernel", "--kernel", "frac:d=0.25"]);
    assert_eq!(code, 0);
    let r = report(&dir.unwrap());
    let gamma = r["result"]["gamma"].as_f64().unwrap();
    assert!((gamma - 0.75).abs() <= 0.05, "{gamma}");
}

#[test]
fn charfn_brownian_lattice() {
    let out = out_dir("charfn");
    let (code, dir) = lvito(&out, &["charfn", "--kernel", "indicator", "--sigma", "1", "--nu", "none", "--t", "1"]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(dir.unwrap().join("tables/cf.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let mut n = 0;
    for row in rows.records() {
        let row = row.unwrap();
        let u: f64 = row[1].parse().unwrap();
        let re: f64 = row[2].parse().unwrap();
        let im: f64 = row[3].parse().unwrap();
        let err: f64 = row[4].parse().unwrap();
        assert!((re - (-0.5 * u * u).exp()).abs() <= err + 1e-12 && im.abs() <= err + 1e-12, "u={u}");
        n += 1;
    }
    assert_eq!(n, 21);
}

#[test]
fn simulate_and_s_transform_write_tables() {
    let out = out_dir("tables");
    let (code, dir) = lvito(&out, &["simulate", "--set", "n_paths=200", "--set", "past=100"]);
    assert_eq!(code, 0);
    let dir = dir.unwrap();
    assert!(dir.join("tables/levy_0.csv").exists() && dir.join("tables/volterra_0.csv").exists());
    let (code, dir) = lvito(&out, &["s-transform", "--set", "n_paths=2000", "--set", "past=100"]);
    assert_eq!(code, 0);
    assert!(dir.unwrap().join("tables/s_transform.csv").exists());
}

#[test]
fn deterministic_reports_are_byte_identical() {
    let args = ["verify-ito", "--deterministic", "--seed", "5", "--set", "n_paths=300", "--set", "g_battery=[\"late\"]"];
    let a = out_dir("det_a");
    let b = out_dir("det_b");
    let da = lvito(&a, &args).1.unwrap();
    let db = lvito(&b, &args).1.unwrap();
    assert_eq!(da.file_name(), db.file_name());
    assert_eq!(fs::read(da.join("report.json")).unwrap(), fs::read(db.join("report.json")).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scenarios_round_trip(
        seed in 0u64..1_000_000,
        n_paths in 1usize..100_000,
        sigma in 0.0f64..3.0,
        rate in 0.1f64..10.0,
        atom in 0.1f64..4.0,
        d in 0.05f64..0.45,
    ) {
        let model = LevyModel::new(sigma, JumpSpec::compound_poisson(rate, JumpLaw::atom(atom))).unwrap();
        let sc = Scenario {
            seed,
            n_paths,
            model,
            kernel: format!("frac:d={d}").parse().unwrap(),
            ..Scenario::default()
        };
        let text = sc.to_toml().unwrap();
        let back = Scenario::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &sc);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}
