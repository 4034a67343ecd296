//! `ruelle`: model summaries, escape-function surveys, resonance spectra
//! and the acceptance campaign, driven by a TOML configuration.

mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ruelle::escape::ESCAPE_CSV_HEADER;
use ruelle::harness::campaign::CheckOutcome;
use ruelle::harness::{
    compute_resonances, lattice_scaling_study, resonances, scaling_study, weighted_sectors,
    ResonanceSet, ScalingSetup,
};
use ruelle::operator::SectorKey;
use serde::Serialize;

use config::{ConfigError, RunConfig};

/// Version of the JSON report layout.
const SCHEMA: &str = "ruelle-report/1";

#[derive(Parser, Debug)]
#[command(name = "ruelle", version, about = "Ruelle resonances of a time-changed cat-map suspension")]
struct Cli {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, global = true, env = "RUELLE_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, env = "RUELLE_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, env = "RUELLE_THREADS", default_value_t = 0)]
    threads: usize,
    /// Seed for every randomized check (overrides `campaign.seed`).
    #[arg(long, global = true, env = "RUELLE_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigen-data of the matrix, mean return time, hyperbolicity fit.
    ModelInfo,
    /// Escape-function survey written as CSV; fails on estimate violations.
    VerifyEscape,
    /// Resonances of the weighted generator as CSV.
    Spectrum {
        /// Only the neutral (k = 0) sector.
        #[arg(long)]
        neutral_only: bool,
    },
    /// Runs the enabled checks and writes a JSON report.
    Campaign,
    /// Spectrum and box counts in plot-ready CSV.
    Plotdata,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Writes files under the output directory, each stamped with the config
/// hash.
struct Out {
    dir: PathBuf,
    hash: String,
}

impl Out {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let io = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(&path, bytes).map_err(io)?;
        Ok(path)
    }

    /// CSV with a `# config_sha256=...` comment line above the header.
    fn csv(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<PathBuf, CliError> {
        let mut s = format!("# config_sha256={}\n{header}\n", self.hash);
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    fn json<T: Serialize>(&self, name: &str, config: &RunConfig, kind: &str, body: &T) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Report<'a, T> {
            schema: &'a str,
            kind: &'a str,
            config_sha256: &'a str,
            config: &'a RunConfig,
            #[serde(flatten)]
            body: &'a T,
        }
        let r = Report {
            schema: SCHEMA,
            kind,
            config_sha256: &self.hash,
            config,
            body,
        };
        let mut text = serde_json::to_string_pretty(&r).map_err(run_err)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.campaign.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn spectrum_rows(res: &ResonanceSet) -> Vec<String> {
    res.entries
        .iter()
        .map(|e| {
            format!(
                "{},{:.17e},{:.17e},{:.3e},{}",
                e.sector, e.value.re, e.value.im, e.residual, e.multiplicity
            )
        })
        .collect()
}

fn model_info(cfg: &RunConfig, out: &Out) -> Result<bool, CliError> {
    let flow = cfg.flow()?;
    let cat = &flow.cat;
    let points: Vec<_> = [[0.1, 0.2, 0.0], [0.5, 0.7, 0.3], [0.9, 0.4, 0.7]]
        .iter()
        .map(|p| flow.point([p[0], p[1]], p[2]))
        .collect();
    let fit = flow.fit_hyperbolicity(&points, 4.0, 16).map_err(run_err)?;
    #[derive(Serialize)]
    struct Info {
        matrix: [[i64; 2]; 2],
        lambda_u: f64,
        lambda_s: f64,
        e_u: [f64; 2],
        e_s: [f64; 2],
        mean_return_time: f64,
        theta: f64,
        c_hyp: f64,
    }
    let info = Info {
        matrix: cat.matrix(),
        lambda_u: cat.lambda_u,
        lambda_s: cat.lambda_s,
        e_u: cat.e_u,
        e_s: cat.e_s,
        mean_return_time: flow.mean_return_time(),
        theta: fit.theta,
        c_hyp: fit.c_hyp,
    };
    println!("lambda_u = {:.15}", info.lambda_u);
    println!("lambda_s = {:.15}", info.lambda_s);
    println!("e_u = ({:.12}, {:.12})", info.e_u[0], info.e_u[1]);
    println!("e_s = ({:.12}, {:.12})", info.e_s[0], info.e_s[1]);
    println!("mean return time = {:.15}", info.mean_return_time);
    println!("hyperbolicity fit: theta = {:.6}, c_hyp = {:.6}", info.theta, info.c_hyp);
    let p = out.json("model-info.json", cfg, "model-info", &info)?;
    eprintln!("wrote {}", p.display());
    Ok(true)
}

fn verify_escape(cfg: &RunConfig, out: &Out) -> Result<bool, CliError> {
    let e = cfg.escape()?;
    let r = e
        .escape_survey(cfg.campaign.escape_samples, cfg.campaign.seed)
        .map_err(run_err)?;
    let p = out.csv("escape.csv", ESCAPE_CSV_HEADER, r.samples.iter().map(|s| s.csv()))?;
    println!(
        "samples = {}, outside neutral cone = {}, C_m = {:.6}, c = {:.6}, max X(G) = {:.3e}, violations = {}",
        r.samples.len(),
        r.outside_neutral(),
        r.c_m,
        r.c_fit,
        r.max_xg,
        r.violations.len()
    );
    eprintln!("wrote {}", p.display());
    Ok(r.violations.is_empty())
}

fn spectrum(cfg: &RunConfig, out: &Out, neutral_only: bool) -> Result<bool, CliError> {
    let e = cfg.escape()?;
    let t = cfg.truncation();
    let h = cfg.solver.h;
    let b = cfg.campaign.base;
    let base = e.flow.point([b[0], b[1]], b[2]);
    let mut wgs = weighted_sectors(&e, &t, h, &base).map_err(run_err)?;
    if neutral_only {
        wgs.retain(|w| w.key() == SectorKey::Neutral);
    }
    let res = resonances(&wgs, None).map_err(run_err)?;
    if cfg.output.dump_matrices {
        for w in &wgs {
            // Hash line first, then the raw dump.
            let mut buf = format!("# config_sha256={}\n", out.hash).into_bytes();
            w.weighted.write_dense(&mut buf).map_err(run_err)?;
            let name = match w.key() {
                SectorKey::Neutral => "matrices/neutral.bin".to_string(),
                SectorKey::Orbit(k) => format!("matrices/orbit_{}_{}.bin", k[0], k[1]),
            };
            out.write(&name, &buf)?;
        }
    }
    let p = out.csv(
        "spectrum.csv",
        "sector_key,re,im,residual,multiplicity",
        spectrum_rows(&res),
    )?;
    let bad = res
        .entries
        .iter()
        .filter(|x| x.residual > cfg.solver.residual_tolerance)
        .count();
    println!(
        "{} distinct eigenvalues, total multiplicity {}, max residual {:.3e}, above tolerance {}",
        res.entries.len(),
        res.total_multiplicity(),
        res.max_residual(),
        bad
    );
    eprintln!("wrote {}", p.display());
    Ok(bad == 0)
}

fn campaign(cfg: &RunConfig, out: &Out) -> Result<bool, CliError> {
    let c = cfg.campaign()?;
    let report = c.run_enabled();
    for o in &report.checks {
        println!("{}", o.line());
    }
    #[derive(Serialize)]
    struct Body<'a> {
        passed: bool,
        checks: &'a [CheckOutcome],
    }
    let p = out.json(
        "campaign.json",
        cfg,
        "campaign",
        &Body {
            passed: report.passed(),
            checks: &report.checks,
        },
    )?;
    eprintln!("wrote {}", p.display());
    if !report.passed() {
        #[derive(Serialize)]
        struct Failure<'a> {
            check: &'a str,
            reasons: &'a [String],
        }
        let failures: Vec<Failure> = report
            .checks
            .iter()
            .filter(|o| !o.passed)
            .map(|o| Failure {
                check: o.id.as_str(),
                reasons: &o.failures,
            })
            .collect();
        eprintln!("{}", serde_json::to_string(&failures).map_err(run_err)?);
    }
    Ok(report.passed())
}

fn plotdata(cfg: &RunConfig, out: &Out) -> Result<bool, CliError> {
    let e = cfg.escape()?;
    let s = &cfg.campaign;
    let b = s.base;
    let base = e.flow.point([b[0], b[1]], b[2]);
    let res = compute_resonances(&e, &cfg.truncation(), cfg.solver.h, &base).map_err(run_err)?;
    let p1 = out.csv(
        "spectrum.csv",
        "sector_key,re,im,residual,multiplicity",
        spectrum_rows(&res),
    )?;
    let setup = ScalingSetup {
        e: s.e,
        alphas: s.alphas.clone(),
        beta: s.beta,
        k_max: cfg.solver.k_max,
        p_max: cfg.solver.p_max,
        j_cap: s.j_cap,
    };
    let study = scaling_study(&e, &setup, &base).map_err(run_err)?;
    let lattice = lattice_scaling_study(s.e, &s.alphas, s.beta).map_err(run_err)?;
    let rows = study.rows.iter().zip(&lattice.rows).map(|(r, l)| {
        format!("{},{},{},{}", r.alpha, r.count, r.j_max, l.count)
    });
    let p2 = out.csv("counts.csv", "alpha,count,j_max,lattice_count", rows)?;
    // Box edges per alpha, for drawing.
    let boxes = s.alphas.iter().map(|&a| {
        let c = a * s.e;
        format!("{a},{},{},{}", c - a.sqrt(), c + a.sqrt(), -s.beta)
    });
    let p3 = out.csv("boxes.csv", "alpha,re_min,re_max,im_min", boxes)?;
    println!(
        "exponent = {}, lattice exponent = {}",
        study.fit.exponent.map_or("undefined".into(), |x| format!("{x:.4}")),
        lattice.fit.exponent.map_or("undefined".into(), |x| format!("{x:.4}"))
    );
    for p in [p1, p2, p3] {
        eprintln!("wrote {}", p.display());
    }
    Ok(true)
}

fn dispatch(cli: &Cli) -> Result<bool, CliError> {
    let cfg = load(cli)?;
    if cli.threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let out = Out {
        dir: cfg.output.dir.clone(),
        hash: cfg.hash(),
    };
    match &cli.command {
        Command::ModelInfo => model_info(&cfg, &out),
        Command::VerifyEscape => verify_escape(&cfg, &out),
        Command::Spectrum { neutral_only } => spectrum(&cfg, &out, *neutral_only),
        Command::Campaign => campaign(&cfg, &out),
        Command::Plotdata => plotdata(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.code())
        }
    }
}
