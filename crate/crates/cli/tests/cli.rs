use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ruelle(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ruelle"));
    cmd.current_dir(dir)
        .env_remove("RUELLE_CONFIG")
        .env_remove("RUELLE_OUT")
        .env_remove("RUELLE_SEED")
        .env_remove("RUELLE_THREADS");
    if let Some(text) = config {
        let p = dir.join("run.toml");
        fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const CONSTANT: &str = "[model.time_change]\nc0 = 1.0\ncos = []\n";

#[test]
fn model_info_prints_the_golden_ratio_square() {
    let d = tempfile::tempdir().unwrap();
    let o = ruelle(d.path(), Some(CONSTANT), &["model-info"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("lambda_u")).unwrap();
    let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((v - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("ruelle-out/model-info.json")).unwrap()).unwrap();
    assert_eq!(json["mean_return_time"].as_f64().unwrap(), 1.0);
    assert_eq!(json["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn neutral_spectrum_with_constant_speed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{CONSTANT}[solver]\nj_max = 12\n");
    let o = ruelle(d.path(), Some(&cfg), &["--out", "res", "spectrum", "--neutral-only"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.path().join("res/spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    assert_eq!(lines.next().unwrap(), "sector_key,re,im,residual,multiplicity");
    let mut re: Vec<f64> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[0], "neutral");
            assert!(f[2].parse::<f64>().unwrap().abs() < 1e-9);
            f[1].parse().unwrap()
        })
        .collect();
    re.sort_by(f64::total_cmp);
    assert_eq!(re.len(), 25);
    for (j, x) in (-12..=12).zip(re) {
        assert!((x - TAU * j as f64).abs() < 1e-8, "{j}: {x}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let o = ruelle(d.path(), Some("[solver]\nkmax = 3\n"), &["model-info"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ruelle(d.path(), Some("[solver]\nresidual_tolerance = -1.0\n"), &["spectrum"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ruelle(d.path(), None, &["--config", "missing.toml", "model-info"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ruelle(d.path(), Some("[campaign]\nalphas = [10.0, 20.0]\n"), &["plotdata"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn environment_mirrors_flags() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("env.toml"), CONSTANT).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ruelle"))
        .current_dir(d.path())
        .env("RUELLE_CONFIG", "env.toml")
        .env("RUELLE_OUT", "from-env")
        .env("RUELLE_THREADS", "2")
        .arg("model-info")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(d.path().join("from-env/model-info.json").exists());
}

#[test]
fn exit_status_tracks_checks() {
    let d = tempfile::tempdir().unwrap();
    // An impossible residual tolerance makes `spectrum` fail its check.
    let o = ruelle(d.path(), Some("[solver]\nresidual_tolerance = 1e-300\nj_max = 8\n"), &["spectrum", "--neutral-only"]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = "[campaign]\nchecks = [\"algebraic_oracle\"]\n";
    let o = ruelle(d.path(), Some(cfg), &["campaign"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("ruelle-out/campaign.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], "ruelle-report/1");
    assert_eq!(json["passed"], true);
    assert_eq!(json["checks"].as_array().unwrap().len(), 1);
}

#[test]
fn campaign_is_idempotent_and_seeded() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[campaign]\nchecks = [\"symmetry\", \"garding\"]\n[solver]\nk_max = 4\nj_max = 12\n";
    let run = |seed: &str| {
        let o = ruelle(d.path(), Some(cfg), &["--seed", seed, "campaign"]);
        assert!(o.status.success(), "{}", stdout(&o));
        fs::read_to_string(d.path().join("ruelle-out/campaign.json")).unwrap()
    };
    let a = run("7");
    let b = run("7");
    assert_eq!(a, b);
    let c = run("8");
    assert_ne!(a, c);
}

#[test]
fn verify_escape_and_plotdata_write_hashed_csv() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[campaign]\nescape_samples = 500\nalphas = [2.0, 4.0, 8.0, 16.0, 32.0]\n[solver]\nk_max = 4\nj_max = 12\n";
    assert!(ruelle(d.path(), Some(cfg), &["verify-escape"]).status.success());
    assert!(ruelle(d.path(), Some(cfg), &["plotdata"]).status.success());
    let mut hashes = vec![];
    for name in ["escape.csv", "spectrum.csv", "counts.csv", "boxes.csv"] {
        let text = fs::read_to_string(d.path().join("ruelle-out").join(name)).unwrap();
        let first = text.lines().next().unwrap();
        hashes.push(first.strip_prefix("# config_sha256=").unwrap().to_string());
        assert!(text.lines().count() > 2, "{name}");
    }
    assert!(hashes.windows(2).all(|w| w[0] == w[1]));
}
