use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn elecast(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elecast"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) {
    let o = elecast(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn cfg(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn forecast_is_reproducible_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let c = cfg("forecast.toml");
    let runs = [("a", "1"), ("b", "1"), ("c", "4")];
    for (name, threads) in runs {
        ok(
            &["forecast", "--config", &c, "--paths", "3000", "--threads", threads],
            &dir.path().join(name),
        );
    }
    for file in ["forecast.json", "timeseries.csv", "ev_histogram.csv"] {
        let a = digest(&dir.path().join("a").join(file));
        assert_eq!(a, digest(&dir.path().join("b").join(file)), "{file} differs between runs");
        assert_eq!(a, digest(&dir.path().join("c").join(file)), "{file} differs across thread counts");
    }
    // a different seed changes the output
    ok(&["forecast", "--config", &c, "--paths", "3000", "--seed", "1"], &dir.path().join("d"));
    assert_ne!(
        digest(&dir.path().join("a/forecast.json")),
        digest(&dir.path().join("d/forecast.json"))
    );
}

#[test]
fn forecast_outputs_are_consistent() {
    let dir = TempDir::new().unwrap();
    ok(&["forecast", "--config", &cfg("forecast.toml"), "--paths", "2000"], dir.path());
    let f = json(&dir.path().join("forecast.json"));
    assert_eq!(f["n_paths"], 2000);
    assert_eq!(f["p_state"].as_object().unwrap().len(), 51);
    let hist: Vec<f64> = f["ev_histogram"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(hist.len(), 539);
    let tail: f64 = hist[270..].iter().sum();
    assert!((tail - f["p_national"].as_f64().unwrap()).abs() < 1e-12);

    let ts = read_csv(&dir.path().join("timeseries.csv"));
    assert_eq!(ts.len(), 5, "28-day span at 7-day steps");
    let days: Vec<f64> = ts.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(days, vec![29.0, 22.0, 15.0, 8.0, 1.0]);
    // last point is the headline forecast
    let last_p: f64 = ts.last().unwrap()[2].parse().unwrap();
    assert_eq!(last_p, f["p_national"].as_f64().unwrap());
}

#[test]
fn forecast_blowout_is_certain() {
    let dir = TempDir::new().unwrap();
    ok(&["forecast", "--config", &cfg("blowout.toml")], dir.path());
    let f = json(&dir.path().join("forecast.json"));
    assert_eq!(f["p_national"].as_f64(), Some(1.0));
    assert_eq!(f["mean_ev"].as_f64(), Some(538.0));
}

#[test]
fn forecast_names_state_without_fallback() {
    let dir = TempDir::new().unwrap();
    let o = elecast(&["forecast", "--config", &cfg("missing_state.toml")], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("OH"), "{err}");
    assert!(err.contains("calibration"), "{err}");
    assert!(!dir.path().join("forecast.json").exists());
}

#[test]
fn forecast_requires_a_seed() {
    let dir = TempDir::new().unwrap();
    let src = std::fs::read_to_string(fixture("blowout.toml")).unwrap();
    let no_seed: String = src.lines().filter(|l| !l.starts_with("seed")).collect::<Vec<_>>().join("\n");
    let c = dir.path().join("noseed.toml");
    std::fs::write(&c, no_seed.replace("\"polls", &format!("\"{}/polls", fixture("").display())).replace("\"historical", &format!("\"{}/historical", fixture("").display()))).unwrap();
    let o = elecast(&["forecast", "--config", c.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    ok(&["forecast", "--config", c.to_str().unwrap(), "--seed", "3"], &dir.path().join("out"));
}

#[test]
fn forecast_10k_paths_is_fast() {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    ok(
        &["forecast", "--config", &cfg("forecast.toml"), "--paths", "10000"],
        dir.path(),
    );
    let elapsed = start.elapsed().as_secs_f64();
    // generous in debug builds; release runs well under a second
    let limit = if cfg!(debug_assertions) { 60.0 } else { 10.0 };
    assert!(elapsed < limit, "took {elapsed:.1}s");
}

#[test]
fn calibrate_dumps_parameters() {
    let dir = TempDir::new().unwrap();
    ok(&["calibrate", "--config", &cfg("forecast.toml")], dir.path());
    let c = json(&dir.path().join("calibration.json"));
    let states = c["states"].as_object().unwrap();
    assert_eq!(states.len(), 51);
    assert_eq!(states["OH"]["source"], "Polls");
    assert_eq!(states["WY"]["source"], "Historical");
    assert_eq!(c["market"]["horizon"].as_f64(), Some(1.0));
    assert!(c["market"]["sigma_m"].as_f64().unwrap() > 0.0);
}

fn scores(dir: &Path, metric: &str, weighting: &str) -> Vec<(String, String)> {
    read_csv(&dir.join(format!("scores_{metric}_{weighting}.csv")))
        .into_iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect()
}

#[test]
fn score_tables() {
    let dir = TempDir::new().unwrap();
    ok(&["score", "--config", &cfg("score.toml")], dir.path());
    let d = dir.path();

    let brier = scores(d, "brier", "overall");
    assert!(brier.contains(&("perfect".into(), "0".into())));
    assert!(brier.contains(&("hedger".into(), "0.5".into())));

    // hand-computed: FL (29 EV) scores 0.3² + 0.1², WY (3 EV) scores 0.1² + 0
    let ev_w: f64 = scores(d, "brier", "ev_weighted")
        .iter()
        .find(|(f, _)| f == "certain")
        .unwrap()
        .1
        .parse()
        .unwrap();
    let fl = 0.3f64.powi(2) + 0.1f64.powi(2);
    let wy = 0.1f64.powi(2);
    assert!((ev_w - (29.0 * fl + 3.0 * wy) / 32.0).abs() < 1e-12);
    let avg: f64 = scores(d, "brier", "state_average")
        .iter()
        .find(|(f, _)| f == "certain")
        .unwrap()
        .1
        .parse()
        .unwrap();
    assert!((avg - (fl + wy) / 2.0).abs() < 1e-12);

    let log = scores(d, "log", "overall");
    assert!(log.contains(&("certain".into(), "-inf".into())));

    let selten = scores(d, "selten", "overall");
    assert_eq!(selten[0].1, selten[1].1);
    let cdf = scores(d, "cdf", "overall");
    assert!(cdf.contains(&("low".into(), "1".into())));
    assert!(cdf.contains(&("high".into(), "311".into())));

    assert!(!d.join("scores_selten_ev_weighted.csv").exists());
    let all = json(&d.join("scores.json"));
    assert!(all
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["value"] == "-inf" && r["forecaster"] == "certain"));
}

#[test]
fn score_rejects_unknown_metric() {
    let dir = TempDir::new().unwrap();
    let o = elecast(&["score", "--config", &cfg("score.toml"), "--metrics", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = elecast(&["score", "--config", &cfg("score.toml"), "--metrics", "cdf"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("scores_cdf_overall.csv").exists());
    assert!(!dir.path().join("scores_brier_overall.csv").exists());
}

fn summary(dir: &Path) -> Vec<(String, f64, f64, f64)> {
    read_csv(&dir.join("pnl_summary.csv"))
        .into_iter()
        .map(|r| (r[0].clone(), r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap()))
        .collect()
}

#[test]
fn trade_against_market() {
    let dir = TempDir::new().unwrap();
    ok(&["trade", "--config", &cfg("trade.toml")], dir.path());
    let s = summary(dir.path());

    // telescoping oracle for alpha: Σ (a_k − s_k)(s_{k+1} − s_k) + (a_3 − s_3)(ω − s_3)
    let a = [0.6, 0.7, 0.8];
    let p = [0.5, 0.6, 0.4];
    let oracle = (a[0] - p[0]) * (p[1] - p[0]) + (a[1] - p[1]) * (p[2] - p[1]) + (a[2] - p[2]) * (1.0 - p[2]);
    let alpha = s.iter().find(|r| r.0 == "alpha").unwrap();
    assert!((alpha.3 - oracle).abs() < 1e-12);

    // an expert equal to the reference never trades
    let market = s.iter().find(|r| r.0 == "market").unwrap();
    assert_eq!((market.1, market.2, market.3), (0.0, 0.0, 0.0));
    for row in read_csv(&dir.path().join("pnl_market.csv")) {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    }

    let full = read_csv(&dir.path().join("pnl_alpha.csv"));
    let nolast = read_csv(&dir.path().join("pnl_alpha_nolast.csv"));
    assert_eq!(full.len(), nolast.len() + 1);
    assert_eq!(full.last().unwrap()[0], "settlement");
}

#[test]
fn trade_pair_mean_is_zero_sum() {
    let dir = TempDir::new().unwrap();
    let series = dir.path().join("pair.csv");
    std::fs::write(
        &series,
        "forecaster,event,date,p\n\
         a,US,2016-10-01,0.7\na,US,2016-10-02,0.9\na,US,2016-10-03,0.6\n\
         b,US,2016-10-01,0.3\nb,US,2016-10-02,0.4\nb,US,2016-10-03,0.5\n",
    )
    .unwrap();
    let config = dir.path().join("pair.toml");
    std::fs::write(
        &config,
        format!(
            "experts = \"pair.csv\"\nrealizations = \"{}\"\nreference_kind = \"pairmean\"\n",
            fixture("realizations.csv").display()
        ),
    )
    .unwrap();
    ok(&["trade", "--config", config.to_str().unwrap()], &dir.path().join("out"));
    let s = summary(&dir.path().join("out"));
    assert_eq!(s.len(), 2);
    assert!((s[0].3 + s[1].3).abs() < 1e-12);
}

#[test]
fn trade_lists_missing_dates() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("gap.toml");
    std::fs::write(
        &config,
        format!(
            "experts = \"{}\"\nreference = \"{}\"\n",
            fixture("trade_series.csv").display(),
            fixture("reference_gap.csv").display()
        ),
    )
    .unwrap();
    let o = elecast(&["trade", "--config", config.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("2016-10-02"), "{err}");
    assert!(err.contains("alpha"), "{err}");
}

#[test]
fn aggregate_quadratic_report() {
    let dir = TempDir::new().unwrap();
    ok(&["aggregate", "--config", &cfg("aggregate.toml")], dir.path());
    let rows = read_csv(&dir.path().join("aggregate.csv"));
    let report = json(&dir.path().join("aggregate.json"));
    let rounds = report["rounds"].as_u64().unwrap() as usize;
    assert_eq!(rows.len(), rounds + 1, "trailing prediction for the final date");

    // recompute MSE from the emitted series
    let sq: Vec<f64> = rows
        .iter()
        .filter(|r| !r[3].is_empty())
        .map(|r| {
            let y: f64 = r[1].parse().unwrap();
            let t: f64 = r[3].parse().unwrap();
            (y - t) * (y - t)
        })
        .collect();
    let mse = sq.iter().sum::<f64>() / sq.len() as f64;
    assert!((mse - report["mse"].as_f64().unwrap()).abs() < 1e-12);

    let regret = report["regret"].as_f64().unwrap();
    let bound = report["regret_bound"].as_f64().unwrap();
    assert!(regret <= bound);
    assert!((bound - (rounds as f64 / 2.0 * 5f64.ln()).sqrt()).abs() < 1e-12);
    assert!((report["eta"].as_f64().unwrap() - (8.0 * 5f64.ln() / rounds as f64).sqrt()).abs() < 1e-12);

    // weights in every row form a distribution
    for r in &rows {
        let w: f64 = r[4..].iter().map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }
}

#[test]
fn aggregate_trading_loss() {
    let dir = TempDir::new().unwrap();
    ok(
        &["aggregate", "--config", &cfg("aggregate.toml"), "--loss", "trading"],
        dir.path(),
    );
    let report = json(&dir.path().join("aggregate.json"));
    assert_eq!(report["loss"], "trading");
    assert!(report["regret"].as_f64().unwrap() <= report["regret_bound"].as_f64().unwrap());
}

#[test]
fn aggregate_single_expert_follows_it() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("panel.csv"),
        "date,solo\n2016-10-01,0.3\n2016-10-02,0.45\n2016-10-03,0.5\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "panel = \"panel.csv\"\nreference_kind = \"pairmean\"\n").unwrap();
    ok(
        &["aggregate", "--config", dir.path().join("cfg.toml").to_str().unwrap()],
        &dir.path().join("out"),
    );
    let rows = read_csv(&dir.path().join("out/aggregate.csv"));
    let preds: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(preds, vec!["0.3", "0.45", "0.5"]);
    let report = json(&dir.path().join("out/aggregate.json"));
    assert_eq!(report["eta"].as_f64(), Some(0.0));
    assert_eq!(report["regret"].as_f64(), Some(0.0));
}

#[test]
fn aggregate_single_date_with_outcome_uses_one_round() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("panel.csv"), "date,a,b\n2016-11-07,0.8,0.4\n").unwrap();
    std::fs::write(dir.path().join("real.csv"), "event,outcome\nUS,1\n").unwrap();
    std::fs::write(
        dir.path().join("cfg.toml"),
        "panel = \"panel.csv\"\nrealizations = \"real.csv\"\nreference_kind = \"pairmean\"\nhorizon = 30\n",
    )
    .unwrap();
    ok(
        &["aggregate", "--config", dir.path().join("cfg.toml").to_str().unwrap()],
        &dir.path().join("out"),
    );
    let report = json(&dir.path().join("out/aggregate.json"));
    assert_eq!(report["rounds"], 1);
    assert!((report["eta"].as_f64().unwrap() - (8.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
}

#[test]
fn curves_have_expected_tails() {
    let dir = TempDir::new().unwrap();
    ok(&["curves", "--config", &cfg("curves.toml")], dir.path());
    let load = |m: &str| -> Vec<(f64, u32, f64)> {
        read_csv(&dir.path().join(format!("curves_{m}.csv")))
            .into_iter()
            .map(|r| (r[0].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap()))
            .collect()
    };
    let at = |rows: &[(f64, u32, f64)], mean: f64, r: u32| {
        rows.iter().find(|x| x.0 == mean && x.1 == r).unwrap().2
    };
    let selten = load("selten");
    assert!((at(&selten, 270.0, 450) - at(&selten, 270.0, 538)).abs() < 1e-9);
    let log = load("log");
    // second difference of a parabola in the realization is constant
    let d2 = |r: u32| at(&log, 270.0, r + 1) - 2.0 * at(&log, 270.0, r) + at(&log, 270.0, r - 1);
    assert!((d2(450) - d2(500)).abs() < 1e-9);
    assert!((d2(450) + 1.0 / 900.0).abs() < 1e-9);
    let cdf = load("cdf");
    let d1 = |r: u32| at(&cdf, 270.0, r + 1) - at(&cdf, 270.0, r);
    assert!((d1(480) - d1(520)).abs() < 1e-9);
    assert!(d1(480) < 0.0);
    assert_eq!(load("spherical").len(), 3 * 539);
}
