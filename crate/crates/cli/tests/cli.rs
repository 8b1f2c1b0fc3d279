use std::path::Path;
use std::process::Command;

use ddlink_cli::{
    load_config, run_ber, run_optimizer, run_sumrate_cfo, run_sumrate_oma, ExperimentReport,
    ScenarioConfig,
};

fn value(report: &ExperimentReport, row: &[String], name: &str) -> f64 {
    row[report.column(name).unwrap()].parse().unwrap()
}

fn ddlink(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ddlink"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

/// A grid small enough for quick runs, with the reference subcarrier spacing.
fn small() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.frame.m = 16;
    cfg.frame.n = 8;
    cfg.realizations = 2;
    cfg.snr_db = vec![0.0, 10.0, 20.0];
    cfg.epsilon = vec![0.25, 0.5];
    cfg
}

#[test]
fn defaults_reproduce_the_reference_scenario() {
    let cfg = ScenarioConfig::default();
    let p = cfg.frame_params().unwrap();
    assert_eq!((p.m(), p.n(), cfg.users), (64, 16, 4));
    assert_eq!(cfg.frame.delta_f_hz, 15e3);
    assert_eq!(cfg.scenario.carrier_hz, 2e9);
    assert_eq!(cfg.scenario.earth_radius_km, 6371.0);
    assert_eq!(cfg.scenario.satellite_height_km, 1500.0);
    assert_eq!(cfg.scenario.elevation_deg, 50.0);
    assert_eq!(cfg.scenario.satellite_speed_km_s, 7.11);
    assert_eq!(cfg.scenario.terminal_speed_km_h, 500.0);
    assert!(cfg.epsilon.iter().all(|e| (0.25..=0.5).contains(e)));
    assert_eq!(cfg.epsilon.first(), Some(&0.25));
    assert_eq!(cfg.epsilon.last(), Some(&0.5));
    // v f_c / c with v = 500 km/h.
    let doppler = 500.0 / 3.6 * 2e9 / 299_792_458.0;
    assert!((cfg.max_doppler_hz() - doppler).abs() < 1e-9 * doppler);
    cfg.validate().unwrap();
}

#[test]
fn empty_file_is_the_default_and_toml_round_trips() {
    assert_eq!(
        ScenarioConfig::from_toml_str("").unwrap(),
        ScenarioConfig::default()
    );
    let cfg = small();
    let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(other.hash(), cfg.hash());
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    for text in [
        "foo = 1\n",
        "[frame]\nm = 8\nfoo = 2\n",
        "[optimizer]\nfoo = true\n",
    ] {
        let err = ScenarioConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
        assert!(err.contains("line"), "{err}");
    }
}

#[test]
fn bad_values_are_configuration_errors() {
    let mut cfg = small();
    cfg.sumrate_oma.schemes = vec!["TDMA".into()];
    assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    let mut cfg = small();
    cfg.epsilon = vec![];
    assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    let mut cfg = small();
    cfg.profile = "/nonexistent/profile.toml".into();
    assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    let missing = load_config(Some(Path::new("/nonexistent/config.toml"))).unwrap_err();
    assert_eq!(missing.exit_code(), 3);
}

#[test]
fn exit_codes_follow_the_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 3\nfoo = 1\n").unwrap();
    let out = ddlink(
        &["sumrate-oma", "--config", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let out = ddlink(
        &["sumrate-oma", "--config", "/nonexistent/x.toml"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));

    // 0.3 N = 2.4 Doppler bins cannot be placed on the OTFS grid.
    let frac = dir.path().join("frac.toml");
    std::fs::write(
        &frac,
        "realizations = 1\nsnr_db = [10.0]\nepsilon = [0.3]\n[frame]\nm = 16\nn = 8\n",
    )
    .unwrap();
    let out = ddlink(
        &["sumrate-cfo", "--config", frac.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn cli_writes_csv_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(
        &config,
        "realizations = 1\nsnr_db = [5.0, 15.0]\n[frame]\nm = 16\nn = 8\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = ddlink(
        &[
            "sumrate-oma",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "11",
        ],
        &out_dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("sumrate-oma.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    assert!(csv.starts_with("snr_db,scheme,sum_rate_bits,realizations,seed"));
    let meta = std::fs::read_to_string(out_dir.join("sumrate-oma.meta")).unwrap();
    assert!(meta.contains("seed = 11"));
    assert!(meta.contains("config_sha256"));
    assert!(meta.contains("rows = 8"));
}

#[test]
fn report_row_counts_match_the_sweep() {
    let cfg = small();
    let oma = run_sumrate_oma(&cfg).unwrap();
    assert_eq!(oma.rows.len(), 3 * 4);
    let cfo = run_sumrate_cfo(&cfg).unwrap();
    assert_eq!(cfo.rows.len(), 3 * 2 * 3);

    let mut ber = small();
    ber.ber.realizations = 1;
    ber.ber.frames_per_realization = 1;
    ber.ber.snr_db = vec![5.0, 10.0, 15.0];
    let report = run_ber(&ber).unwrap();
    assert_eq!(report.rows.len(), 3 * 3 * 2);
    for row in &report.rows {
        let bits = value(&report, row, "bits");
        let errors = value(&report, row, "errors");
        assert!((value(&report, row, "ber") - errors / bits).abs() < 1e-15);
    }

    let mut opt = small();
    opt.optimizer.users = 2;
    opt.optimizer.realizations = 2;
    opt.optimizer.snr_db = vec![10.0];
    opt.sumrate_oma.schemes = vec!["DDMA".into(), "DoDMA".into()];
    let (rows, trace) = run_optimizer(&opt).unwrap();
    assert_eq!(rows.rows.len(), 2);
    let iterations: f64 = rows
        .rows
        .iter()
        .map(|r| value(&rows, r, "iterations"))
        .sum();
    assert_eq!(trace.rows.len(), iterations as usize);
}

#[test]
fn library_runs_are_deterministic() {
    let cfg = small();
    let a = run_sumrate_cfo(&cfg).unwrap();
    let b = run_sumrate_cfo(&cfg).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    let mut other = cfg.clone();
    other.seed = 99;
    assert_ne!(
        run_sumrate_cfo(&other).unwrap().to_csv().unwrap(),
        a.to_csv().unwrap()
    );
}

#[test]
fn uniform_oma_partitions_share_one_sum_rate() {
    // Interference at each user is the total occupancy seen through that
    // user's channel, which is flat for any full partition at uniform power.
    let report = run_sumrate_oma(&small()).unwrap();
    for snr in ["0", "10", "20"] {
        let rates: Vec<f64> = report
            .filter("snr_db", snr)
            .map(|r| value(&report, r, "sum_rate_bits"))
            .collect();
        assert_eq!(rates.len(), 4);
        for r in &rates {
            assert!((r - rates[0]).abs() <= 1e-12 * rates[0], "{rates:?}");
        }
    }
}

#[test]
fn flat_static_channel_gives_equal_otfs_ofdm_and_ideal_rates() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("flat.toml");
    std::fs::write(
        &profile,
        "name = \"flat\"\n[[tap]]\ntap = 1\nnormalized_delay = 0.0\npower_db = 0.0\nfading = \"los\"\n",
    )
    .unwrap();
    let mut cfg = small();
    cfg.profile = profile.to_str().unwrap().into();
    cfg.channel.max_doppler_hz = Some(0.0);
    cfg.epsilon = vec![0.0];
    let report = run_sumrate_cfo(&cfg).unwrap();
    for snr in ["0", "10", "20"] {
        let get = |m: &str| {
            let row = report.filter("snr_db", snr).find(|r| r[2] == m).unwrap();
            value(&report, row, "sum_rate_bits")
        };
        let (otfs, ofdm, ideal) = (get("otfs"), get("ofdm"), get("ideal"));
        assert!((otfs - ideal).abs() < 1e-9 * ideal, "{otfs} vs {ideal}");
        assert!((ofdm - ideal).abs() < 1e-9 * ideal, "{ofdm} vs {ideal}");
    }
}

#[test]
fn ofdm_rate_falls_with_cfo_while_otfs_holds() {
    let mut cfg = ScenarioConfig::default();
    cfg.profile = "ntn-tdl-b".into();
    cfg.frame.m = 32;
    cfg.realizations = 3;
    cfg.snr_db = vec![20.0];
    cfg.epsilon = vec![0.125, 0.25, 0.375, 0.5];
    let report = run_sumrate_cfo(&cfg).unwrap();
    let series = |m: &str| -> Vec<f64> {
        report
            .filter("modulation", m)
            .map(|r| value(&report, r, "sum_rate_bits"))
            .collect()
    };
    let (otfs, ofdm) = (series("otfs"), series("ofdm"));
    assert_eq!(ofdm.len(), 4);
    assert!(ofdm.windows(2).all(|w| w[1] < w[0]), "{ofdm:?}");
    let spread = otfs.iter().cloned().fold(f64::MIN, f64::max)
        - otfs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 0.01 * otfs[0], "{otfs:?}");
}

#[test]
fn otfs_rate_grows_with_snr_and_favours_the_los_profile() {
    let mut series = Vec::new();
    for profile in ["ntn-tdl-b", "ntn-tdl-d"] {
        let mut cfg = small();
        // TDL-B needs Doppler bins finer than its maximum Doppler.
        cfg.frame.n = 16;
        cfg.profile = profile.into();
        cfg.snr_db = vec![0.0, 10.0, 20.0, 30.0];
        let report = run_sumrate_oma(&cfg).unwrap();
        let ddma: Vec<f64> = report
            .filter("scheme", "DDMA")
            .map(|r| value(&report, r, "sum_rate_bits"))
            .collect();
        assert!(ddma.windows(2).all(|w| w[1] > w[0]), "{profile}: {ddma:?}");
        series.push(ddma);
    }
    // The dominant LOS tap of TDL-D leaves less self-interference than the
    // four comparable Rayleigh taps of TDL-B.
    for (b, d) in series[0].iter().zip(&series[1]) {
        assert!(d > b, "{series:?}");
    }
}
