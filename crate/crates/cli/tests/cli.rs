use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{Days, NaiveDate};
use serde_json::Value;

use epicontrol::{commands, CliError, Mode, Overrides, RunConfig, EXIT_INPUT};

const HEADER: &str = "country_region_code,country_region,sub_region_1,sub_region_2,metro_area,date,\
retail_and_recreation_percent_change_from_baseline,grocery_and_pharmacy_percent_change_from_baseline,\
parks_percent_change_from_baseline,transit_stations_percent_change_from_baseline,\
workplaces_percent_change_from_baseline,residential_percent_change_from_baseline";

/// Intercept (percent), five activity slopes (percent per percent) and the
/// closure coefficient (fraction per unit SU) of the residential series.
const TRUTH: [f64; 7] = [2.0, -0.12, -0.05, -0.02, -0.08, -0.15, 0.04];

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Google-format CSV for Lombardy with `days` rows from Feb 15, residential
/// exactly linear in the other activities, plus rows that must be skipped.
fn synthetic_csv(days: u64) -> String {
    let mut out = format!("{HEADER}\n");
    let start = ymd(2020, 2, 15);
    for k in 0..days {
        let date = start + Days::new(k);
        let t = k as f64;
        let ramp = (t / 25.0).min(1.0);
        let acts = [
            -80.0 * ramp + 3.0 * (t / 3.0).sin(),
            -30.0 * ramp + 6.0 * (t / 5.0).cos(),
            -60.0 * ramp + 10.0 * (t / 7.0).sin(),
            -70.0 * ramp + 2.0 * (t / 2.0).cos(),
            -55.0 * ramp + 12.0 * (t / 3.5).sin().powi(2),
        ];
        let su = if date >= ymd(2020, 3, 4) { 1.0 } else { 0.0 };
        let res = TRUTH[0] + acts.iter().zip(&TRUTH[1..6]).map(|(a, c)| a * c).sum::<f64>() + TRUTH[6] * su * 100.0;
        let _ = write!(out, "IT,Italy,Lombardy,,,{date}");
        for a in acts {
            let _ = write!(out, ",{a}");
        }
        let _ = writeln!(out, ",{res}");
        let _ = writeln!(out, "IT,Italy,Lombardy,Province of Milan,,{date},1,2,3,4,5,6");
        let _ = writeln!(out, "IT,Italy,Veneto,,,{date},-1,-2,-3,-4,-5,6");
    }
    out
}

struct Setup {
    dir: tempfile::TempDir,
}

impl Setup {
    fn new(csv_days: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("mobility.csv"), synthetic_csv(csv_days)).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes `body` under a header pointing at the synthetic CSV and an output directory.
    fn config(&self, name: &str, body: &str) -> PathBuf {
        let text = format!("[paths]\nmobility_csv = \"mobility.csv\"\nout_dir = \"{}\"\n{body}", name);
        let path = self.path(&format!("{name}.toml"));
        fs::write(&path, text).unwrap();
        path
    }

    fn run(&self, mode: Mode, name: &str, body: &str) -> Result<commands::Outcome, CliError> {
        let cfg = RunConfig::load(&self.config(name, body), mode, &Overrides::default())?;
        let mut cfg = cfg;
        cfg.paths.out_dir = self.path(name);
        commands::run(mode, &cfg)
    }

    fn json(&self, name: &str, file: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(name).join(file)).unwrap()).unwrap()
    }
}

fn binary(args: &[&str], cwd: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_epicontrol"))
        .args(args)
        .arg("--quiet")
        .current_dir(cwd)
        .env("EPICONTROL_THREADS", "1")
        .status()
        .unwrap();
    status.code().unwrap()
}

#[test]
fn shipped_fixtures_parse_for_their_modes() {
    let s = Setup::new(110);
    let cases = [
        ("lombardy_historical.toml", Mode::SimulateHistorical),
        ("lombardy_fit.toml", Mode::FitMobility),
        ("lombardy_stability.toml", Mode::StabilityReport),
        ("lombardy_pmpc.toml", Mode::MpcClosedLoop),
        ("lombardy_dmpc.toml", Mode::MpcClosedLoop),
        ("lombardy_rmpc.toml", Mode::MpcClosedLoop),
    ];
    for (name, mode) in cases {
        let path = fixture(name);
        let mut cfg = RunConfig::parse(&fs::read_to_string(&path).unwrap(), &path).unwrap();
        assert_eq!(cfg.mode, Some(mode), "{name}");
        if cfg.paths.mobility_csv.is_some() {
            cfg.paths.mobility_csv = Some(s.path("mobility.csv"));
        }
        cfg.validate(mode).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn non_dividing_action_horizon_exits_with_input_error() {
    let s = Setup::new(110);
    let cfg = s.config("bad", "[mpc]\ntc = 15\nta = 7\n");
    let err = RunConfig::load(&cfg, Mode::MpcClosedLoop, &Overrides::default()).unwrap_err();
    assert!(matches!(&err, CliError::ConfigValidation(p) if p.iter().any(|m| m.contains("divide"))), "{err}");
    assert_eq!(binary(&["mpc-closed-loop", "--config", cfg.to_str().unwrap()], s.dir.path()), EXIT_INPUT);
}

#[test]
fn fit_without_mobility_csv_exits_with_input_error() {
    let s = Setup::new(110);
    let cfg = s.path("nocsv.toml");
    fs::write(&cfg, "mode = \"fit-mobility\"\n").unwrap();
    assert_eq!(binary(&["fit-mobility", "--config", cfg.to_str().unwrap()], s.dir.path()), EXIT_INPUT);
}

#[test]
fn truncated_csv_exits_with_input_error() {
    let s = Setup::new(110);
    let full = fs::read_to_string(s.path("mobility.csv")).unwrap();
    let cut = full.len() - 40;
    fs::write(s.path("mobility.csv"), &full[..cut]).unwrap();
    let cfg = s.config("trunc", "[ensemble]\nn_scenarios = 2\n");
    let err = RunConfig::load(&cfg, Mode::SimulateHistorical, &Overrides::default())
        .and_then(|c| commands::run(Mode::SimulateHistorical, &c))
        .unwrap_err();
    assert!(err.to_string().contains("malformed mobility CSV"), "{err}");
    assert_eq!(binary(&["simulate-historical", "--config", cfg.to_str().unwrap()], s.dir.path()), EXIT_INPUT);
}

#[test]
fn noiseless_regression_recovers_the_truth() {
    let s = Setup::new(110);
    s.run(Mode::FitMobility, "fit", "").unwrap();
    let fit = s.json("fit", "regression.json");
    assert!((fit["r2"].as_f64().unwrap() - 1.0).abs() < 1e-9, "{}", fit["r2"]);
    let coef: Vec<f64> = fit["coefficients"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let truth = [TRUTH[0] / 100.0, TRUTH[1], TRUTH[2], TRUTH[3], TRUTH[4], TRUTH[5], TRUTH[6]];
    for (c, t) in coef.iter().zip(truth) {
        assert!((c - t).abs() < 1e-8, "{coef:?}");
    }
    let table = fs::read_to_string(s.path("fit").join("table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.starts_with("activity,mean_percent,std_percent\nRR,"));
}

#[test]
fn five_rows_are_not_enough_to_fit() {
    let s = Setup::new(5);
    let err = s.run(Mode::FitMobility, "short", "").unwrap_err();
    assert!(err.to_string().contains("at least"), "{err}");
    assert_eq!(err.exit_code(), EXIT_INPUT);
}

#[test]
fn small_transmission_rate_is_stable_in_every_period() {
    let s = Setup::new(110);
    s.run(Mode::StabilityReport, "stab", "[stability]\nbeta = 0.1\n").unwrap();
    let report = s.json("stab", "stability.json");
    let segments = report["segments"].as_array().unwrap();
    assert!(!segments.is_empty());
    for seg in segments {
        assert_eq!(seg["jury"]["stable"], Value::Bool(true), "{seg}");
        assert!(seg["r0"].as_f64().unwrap() < 1.0);
    }
}

#[test]
fn zero_epsilon_reports_the_sir_reduction() {
    let s = Setup::new(110);
    s.run(Mode::StabilityReport, "sir", "[stability]\nepsilon = 0.0\n").unwrap();
    let report = s.json("sir", "stability.json");
    for seg in report["segments"].as_array().unwrap() {
        let expected = seg["beta"].as_f64().unwrap() / seg["params"]["delta_a"].as_f64().unwrap();
        assert!((seg["r0_sir_reduction"].as_f64().unwrap() - expected).abs() < 1e-12);
        assert!((seg["r0"].as_f64().unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn nominal_stability_report_exits_cleanly() {
    let s = Setup::new(110);
    let cfg = s.config("nominal", "");
    assert_eq!(binary(&["stability-report", "--config", cfg.to_str().unwrap()], s.dir.path()), 0);
    let report = s.json("nominal", "stability.json");
    assert!((report["segments"][0]["r0"].as_f64().unwrap() - 4.52064).abs() < 1e-5);
    let reff = fs::read_to_string(s.path("nominal").join("r_eff.csv")).unwrap();
    assert!(reff.starts_with("date,R_eff,S,H,Q,D\n2020-01-16,"));
}

fn scenario_rows(csv: &str) -> Vec<Vec<String>> {
    let mut by_scenario: Vec<Vec<String>> = Vec::new();
    for line in csv.lines().skip(1) {
        let (s, rest) = line.split_once(',').unwrap();
        let s: usize = s.parse().unwrap();
        if by_scenario.len() <= s {
            by_scenario.resize(s + 1, Vec::new());
        }
        by_scenario[s].push(rest.to_string());
    }
    by_scenario
}

#[test]
fn zero_adherence_spread_gives_identical_scenarios() {
    let s = Setup::new(110);
    let body = "[ensemble]\nn_scenarios = 6\n[ensemble.adherence]\nsigma_u = 0.0\n";
    s.run(Mode::SimulateHistorical, "flat", body).unwrap();
    let rows = scenario_rows(&fs::read_to_string(s.path("flat").join("trajectories.csv")).unwrap());
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].len(), 71);
    assert!(rows.iter().all(|r| *r == rows[0]));

    let summary = s.json("flat", "summary.json");
    let dead = &summary["terminal"]["dead"];
    assert_eq!(dead["min"], dead["max"]);
    assert!(summary["conservation_max_rel_error"].as_f64().unwrap() < 1e-12);
}

#[test]
fn historical_panels_cover_the_episode() {
    let s = Setup::new(110);
    s.run(Mode::SimulateHistorical, "hist", "[ensemble]\nn_scenarios = 8\n").unwrap();
    let dir = s.path("hist");
    for (name, rows) in [
        ("panel_a_reported_infected.csv", 71),
        ("panel_b_hospitalized.csv", 71),
        ("panel_c_quarantined.csv", 71),
        ("panel_d_dead.csv", 71),
        ("panel_f_r_eff.csv", 70),
        ("policy.csv", 70),
    ] {
        let text = fs::read_to_string(dir.join(name)).unwrap();
        assert_eq!(text.lines().count(), rows + 1, "{name}");
    }
    let policy = fs::read_to_string(dir.join("policy.csv")).unwrap();
    assert!(policy.starts_with("date,RR,G,P,T,W,SU,u\n2020-02-25,"));
    let panel = fs::read_to_string(dir.join("panel_b_hospitalized.csv")).unwrap();
    assert!(panel.starts_with("date,mean,q2.5,q50,q97.5,min,max\n2020-02-24,"));
    assert!(panel.lines().last().unwrap().starts_with("2020-05-04,"));
}

#[test]
fn reruns_produce_identical_files() {
    let s = Setup::new(110);
    let body = "[ensemble]\nn_scenarios = 10\n";
    let a = s.run(Mode::SimulateHistorical, "run_a", body).unwrap();
    s.run(Mode::SimulateHistorical, "run_b", body).unwrap();
    assert!(!a.files.is_empty());
    for f in &a.files {
        let name = f.file_name().unwrap();
        let other = s.path("run_b").join(name);
        assert_eq!(fs::read(f).unwrap(), fs::read(&other).unwrap(), "{}", name.to_string_lossy());
    }
}

#[test]
fn seed_override_changes_the_draws() {
    let s = Setup::new(110);
    let cfg = s.config("seeded", "[ensemble]\nn_scenarios = 4\n");
    let load = |seed| {
        let o = Overrides {
            seed: Some(seed),
            ..Overrides::default()
        };
        RunConfig::load(&cfg, Mode::SimulateHistorical, &o).unwrap()
    };
    let mut a = load(1);
    a.paths.out_dir = s.path("seed1");
    let mut b = load(2);
    b.paths.out_dir = s.path("seed2");
    commands::run(Mode::SimulateHistorical, &a).unwrap();
    commands::run(Mode::SimulateHistorical, &b).unwrap();
    let read = |d: &str| fs::read(s.path(d).join("trajectories.csv")).unwrap();
    assert_ne!(read("seed1"), read("seed2"));
}

const QUICK_MPC: &str = r#"
[period]
start = "2020-02-24"
end = "2020-03-09"
[mpc]
n_cases = 4
[mpc.solver]
max_evals = 60
random_starts = 0
trace = true
"#;

#[test]
fn quick_closed_loop_writes_every_output() {
    let s = Setup::new(110);
    let out = s.run(Mode::MpcClosedLoop, "pmpc", QUICK_MPC).unwrap();
    let dir = s.path("pmpc");
    let policy = fs::read_to_string(dir.join("policy.csv")).unwrap();
    assert_eq!(policy.lines().count(), 15);
    let trace = fs::read_to_string(dir.join("solver_trace.csv")).unwrap();
    assert!(trace.lines().count() > 1);

    let summary = s.json("pmpc", "summary.json");
    let windows = summary["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 2);
    assert_eq!(windows[0]["diagnostics"]["starts"].as_array().unwrap().len(), 5);
    let infeasible: Vec<usize> = summary["infeasible_windows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    assert_eq!(infeasible, out.infeasible_windows);
    assert_eq!(out.exit_code(), if infeasible.is_empty() { 0 } else { 1 });
    assert!(windows.iter().all(|w| w["pmpc_chance_check"].is_null()));
}

#[test]
fn deterministic_formulation_runs_to_completion() {
    let s = Setup::new(110);
    let body = QUICK_MPC.replacen("[mpc]\n", "[mpc]\nformulation = \"DMPC\"\n", 1);
    s.run(Mode::MpcClosedLoop, "dmpc", &body).unwrap();
    assert_eq!(s.json("dmpc", "summary.json")["formulation"], "DMPC");
    assert!(s.path("dmpc").join("policy.csv").is_file());
}

#[test]
fn robust_plans_are_checked_against_the_chance_constraints() {
    let s = Setup::new(110);
    let body = QUICK_MPC.replacen("[mpc]\n", "[mpc]\nformulation = \"RMPC\"\n", 1);
    s.run(Mode::MpcClosedLoop, "rmpc", &body).unwrap();
    let summary = s.json("rmpc", "summary.json");
    for w in summary["windows"].as_array().unwrap() {
        let check = &w["pmpc_chance_check"];
        assert!(check.is_object(), "{w}");
        if w["feasibility"]["feasible"] == Value::Bool(true) {
            assert_eq!(check["feasible"], Value::Bool(true));
        }
    }
}
