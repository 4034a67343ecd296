//! The acceptance campaign: one check per property, each returning a
//! verdict with its measured numbers.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::*;
use crate::escape::{EscapeError, EscapeReport};
use crate::model::{CatMap, TimeChange};
use crate::operator::semiclassical::{
    coherent_expectation, coherent_state, coherent_truncation, garding_upper_check,
    partition_ims_check, random_phase_point, symbol_with_weight,
};
use crate::operator::neutral_generator;
use crate::quad::gauss_kronrod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    EscapeEstimates,
    AlgebraicOracle,
    TimeChangeOracle,
    UpperHalfPlane,
    Symmetry,
    IntrinsicSpectrum,
    WeylInequalities,
    ImsScaling,
    CoherentSymbol,
    CountingStudy,
    Garding,
    DiskInclusion,
}

impl CheckId {
    pub const ALL: [CheckId; 12] = [
        CheckId::EscapeEstimates,
        CheckId::AlgebraicOracle,
        CheckId::TimeChangeOracle,
        CheckId::UpperHalfPlane,
        CheckId::Symmetry,
        CheckId::IntrinsicSpectrum,
        CheckId::WeylInequalities,
        CheckId::ImsScaling,
        CheckId::CoherentSymbol,
        CheckId::CountingStudy,
        CheckId::Garding,
        CheckId::DiskInclusion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::EscapeEstimates => "escape_estimates",
            CheckId::AlgebraicOracle => "algebraic_oracle",
            CheckId::TimeChangeOracle => "time_change_oracle",
            CheckId::UpperHalfPlane => "upper_half_plane",
            CheckId::Symmetry => "symmetry",
            CheckId::IntrinsicSpectrum => "intrinsic_spectrum",
            CheckId::WeylInequalities => "weyl_inequalities",
            CheckId::ImsScaling => "ims_scaling",
            CheckId::CoherentSymbol => "coherent_symbol",
            CheckId::CountingStudy => "counting_study",
            CheckId::Garding => "garding",
            CheckId::DiskInclusion => "disk_inclusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: CheckId,
    pub passed: bool,
    /// Wall time; left out of serialized reports so reruns are identical.
    #[serde(skip)]
    pub seconds: f64,
    pub metrics: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
    pub failures: Vec<String>,
}

impl CheckOutcome {
    fn new(id: CheckId) -> Self {
        CheckOutcome {
            id,
            passed: true,
            seconds: 0.0,
            metrics: BTreeMap::new(),
            tables: BTreeMap::new(),
            failures: vec![],
        }
    }

    fn metric(&mut self, k: &str, v: f64) {
        self.metrics.insert(k.to_string(), v);
    }

    fn require(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.failures.push(msg.into());
        }
    }

    /// Records a harness error as a failure.
    fn fail(&mut self, e: impl std::fmt::Display) {
        self.require(false, e.to_string());
    }

    /// One-line summary: `PASS name (1.23 s) k=v ...`.
    pub fn line(&self) -> String {
        format!(
            "{} {} ({:.2} s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id.as_str(),
            self.seconds,
            self.details()
        )
    }

    /// Metrics as ` k=v` pairs followed by bracketed failures.
    pub fn details(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metrics {
            s.push_str(&format!(" {k}={v:.4e}"));
        }
        for f in &self.failures {
            s.push_str(&format!(" [{f}]"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSettings {
    /// Checks run by [`Campaign::run_enabled`].
    pub checks: Vec<CheckId>,
    /// Second escape parameter set for the intrinsic comparison.
    pub alt_escape: OrderParams,
    pub escape_samples: usize,
    pub seed: u64,
    /// `h` of the spectral runs.
    pub h: f64,
    /// Base point `(x1, x2, tau)` at which weights are evaluated.
    pub base: [f64; 3],
    /// `j_max` of the `c = 1` oracle run.
    pub oracle_j_max: u32,
    /// Intrinsic comparison only above this imaginary part.
    pub floor: f64,
    pub weyl_dim_cap: usize,
    pub weyl_j_max: u32,
    pub weyl_random: usize,
    pub e: f64,
    pub beta: f64,
    pub alphas: Vec<f64>,
    pub j_cap: u32,
    pub ims_h: Vec<f64>,
    pub ims_trials: usize,
    pub ims_z: [f64; 2],
    pub coherent_h: Vec<f64>,
    pub coherent_points: usize,
    pub coherent_tau: f64,
    pub garding_j_max: u32,
    pub disk_b: f64,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        CampaignSettings {
            checks: CheckId::ALL.to_vec(),
            alt_escape: OrderParams {
                u: -6.0,
                n0: 0.0,
                s: 12.0,
                t_avg: 6.0,
                aperture: 0.15,
                radius: 50.0,
                symmetric: true,
            },
            escape_samples: 10_000,
            seed: 20240,
            h: 0.1,
            base: [0.1, 0.2, 0.5],
            oracle_j_max: 32,
            floor: -1.0,
            weyl_dim_cap: 500,
            weyl_j_max: 16,
            weyl_random: 20,
            e: 1.0,
            beta: 1.0,
            alphas: vec![10.0, 20.0, 40.0, 80.0, 160.0],
            j_cap: 256,
            ims_h: vec![0.1, 0.05, 0.025],
            ims_trials: 20,
            ims_z: [1.0, 1.0],
            coherent_h: vec![0.1, 0.05, 0.025, 0.0125],
            coherent_points: 10,
            coherent_tau: 0.5,
            garding_j_max: 8,
            disk_b: 3.0,
        }
    }
}

/// Everything a campaign needs.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub escape: EscapeFunction,
    pub truncation: Truncation,
    pub settings: CampaignSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub checks: Vec<CheckOutcome>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn timed(id: CheckId, f: impl FnOnce(&mut CheckOutcome)) -> CheckOutcome {
    let t0 = Instant::now();
    let mut out = CheckOutcome::new(id);
    f(&mut out);
    out.seconds = t0.elapsed().as_secs_f64();
    out
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

impl Campaign {
    pub fn new(escape: EscapeFunction, truncation: Truncation, settings: CampaignSettings) -> Self {
        Campaign {
            escape,
            truncation,
            settings,
        }
    }

    fn flow(&self) -> &MappingTorusFlow {
        &self.escape.flow
    }

    fn base(&self) -> BasePoint {
        let b = self.settings.base;
        self.flow().point([b[0], b[1]], b[2])
    }

    fn resonances_with(&self, e: &EscapeFunction, t: &Truncation) -> Result<ResonanceSet, HarnessError> {
        compute_resonances(e, t, self.settings.h, &self.base())
    }

    pub fn run_enabled(&self) -> CampaignReport {
        self.run(&self.settings.checks)
    }

    pub fn run(&self, which: &[CheckId]) -> CampaignReport {
        CampaignReport {
            checks: which.iter().map(|&id| self.check(id)).collect(),
        }
    }

    pub fn check(&self, id: CheckId) -> CheckOutcome {
        match id {
            CheckId::EscapeEstimates => self.escape_estimates(),
            CheckId::AlgebraicOracle => self.algebraic_oracle(),
            CheckId::TimeChangeOracle => self.time_change_oracle(),
            CheckId::UpperHalfPlane => self.upper_half_plane(),
            CheckId::Symmetry => self.symmetry(),
            CheckId::IntrinsicSpectrum => self.intrinsic(),
            CheckId::WeylInequalities => self.weyl(),
            CheckId::ImsScaling => self.ims(),
            CheckId::CoherentSymbol => self.coherent(),
            CheckId::CountingStudy => self.counting(),
            CheckId::Garding => self.garding(),
            CheckId::DiskInclusion => self.disk(),
        }
    }

    pub fn escape_estimates(&self) -> CheckOutcome {
        timed(CheckId::EscapeEstimates, |out| {
            let n = self.settings.escape_samples;
            let run = |e: &EscapeFunction| -> Result<EscapeReport, EscapeError> {
                e.escape_survey(n, self.settings.seed)
            };
            let p = &self.escape.params;
            let doubled = OrderParams {
                u: 2.0 * p.u,
                n0: 2.0 * p.n0,
                s: 2.0 * p.s,
                ..p.clone()
            };
            let r = EscapeFunction::new(self.flow().clone(), doubled)
                .and_then(|d| Ok((run(&self.escape)?, run(&d)?)));
            let (a, b) = match r {
                Ok(x) => x,
                Err(e) => return out.fail(e),
            };
            let outside = a.outside_neutral();
            out.metric("samples_outside_neutral", outside as f64);
            out.metric("c_m", a.c_m);
            out.metric("c_fit", a.c_fit);
            out.metric("max_xg", a.max_xg);
            out.metric("doubling_ratio", b.c_m / a.c_m);
            out.require(outside >= 10_000, format!("only {outside} samples outside the neutral cone"));
            out.require(a.c_m > 0.0, format!("C_m = {} is not positive", a.c_m));
            out.require(a.max_xg <= 1e-9, format!("X(G) reaches {}", a.max_xg));
            out.require(a.violations.is_empty(), format!("{} violations", a.violations.len()));
            let ratio = b.c_m / a.c_m;
            out.require((ratio - 2.0).abs() <= 0.2, format!("doubling ratio {ratio}"));
        })
    }

    pub fn algebraic_oracle(&self) -> CheckOutcome {
        timed(CheckId::AlgebraicOracle, |out| {
            let flow = match MappingTorusFlow::new(self.flow().cat.clone(), TimeChange::constant(1.0)) {
                Ok(f) => f,
                Err(e) => return out.fail(e),
            };
            let j = self.settings.oracle_j_max;
            let exact: Vec<f64> = (-(j as i64)..=j as i64).map(|k| TAU * k as f64).collect();
            let mut worst: f64 = 0.0;
            for params in [self.escape.params.clone(), self.settings.alt_escape.clone()] {
                let e = match EscapeFunction::new(flow.clone(), params) {
                    Ok(e) => e,
                    Err(err) => return out.fail(err),
                };
                let base = flow.point([self.settings.base[0], self.settings.base[1]], self.settings.base[2]);
                let spec = apply_weight(&neutral_generator(&flow, j), &e, self.settings.h, &base)
                    .and_then(|w| sector_spectrum(&w));
                let spec = match spec {
                    Ok(s) => s,
                    Err(err) => return out.fail(err),
                };
                let mut got: Vec<Complex64> = spec
                    .iter()
                    .flat_map(|s| std::iter::repeat_n(s.value, s.multiplicity))
                    .collect();
                got.sort_by(|a, b| a.re.total_cmp(&b.re));
                if got.len() != exact.len() {
                    return out.fail(format!("{} eigenvalues, expected {}", got.len(), exact.len()));
                }
                for (g, x) in got.iter().zip(&exact) {
                    worst = worst.max((g - x).norm());
                }
            }
            out.metric("max_error", worst);
            out.require(worst < 1e-8, format!("error {worst}"));
        })
    }

    pub fn time_change_oracle(&self) -> CheckOutcome {
        timed(CheckId::TimeChangeOracle, |out| {
            let tc = &self.flow().time_change;
            let period = match gauss_kronrod(|t| 1.0 / tc.eval(t), 0.0, 1.0, 1e-15, 40) {
                Some(v) => v,
                None => return out.fail("quadrature of 1/c failed"),
            };
            let j = self.truncation.j_max;
            let w = neutral_generator(self.flow(), j);
            let spec = apply_weight(&w, &self.escape, self.settings.h, &self.base())
                .and_then(|w| sector_spectrum(&w));
            let spec = match spec {
                Ok(s) => s,
                Err(e) => return out.fail(e),
            };
            let half = (j / 2) as i64;
            let mut worst: f64 = 0.0;
            for k in -half..=half {
                let target = TAU * k as f64 / period;
                let d = spec
                    .iter()
                    .map(|s| (s.value - target).norm())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
            out.metric("mean_return_time", period);
            out.metric("trusted_modes", (2 * half + 1) as f64);
            out.metric("max_error", worst);
            out.require(worst < 1e-7, format!("error {worst}"));
        })
    }

    pub fn upper_half_plane(&self) -> CheckOutcome {
        timed(CheckId::UpperHalfPlane, |out| {
            let res = match self.resonances_with(&self.escape, &self.truncation) {
                Ok(r) => r,
                Err(e) => return out.fail(e),
            };
            let good = ResonanceSet {
                entries: res
                    .entries
                    .iter()
                    .filter(|e| e.residual <= RESIDUAL_BOUND)
                    .copied()
                    .collect(),
                meta: None,
            };
            let top = upper_half_check(&good);
            out.metric("max_im", top);
            out.metric("entries", res.entries.len() as f64);
            out.metric("high_residual", (res.entries.len() - good.entries.len()) as f64);
            out.metric("max_residual", res.max_residual());
            out.require(top <= 1e-6, format!("max Im = {top}"));
        })
    }

    pub fn symmetry(&self) -> CheckOutcome {
        timed(CheckId::Symmetry, |out| {
            out.require(self.escape.params.symmetric, "order function is not symmetric");
            let r = self
                .resonances_with(&self.escape, &self.truncation)
                .and_then(|res| symmetry_check(&res, MATCH_CUTOFF));
            match r {
                Ok(m) => {
                    out.metric("pairs", m.pairs.len() as f64);
                    out.metric("max_distance", m.max_distance);
                    out.require(m.max_distance < 1e-6, format!("distance {}", m.max_distance));
                }
                Err(e) => out.fail(e),
            }
        })
    }

    pub fn intrinsic(&self) -> CheckOutcome {
        timed(CheckId::IntrinsicSpectrum, |out| {
            let floor = self.settings.floor;
            let t = self.truncation;
            let grown = Truncation {
                k_max: t.k_max + 4,
                p_max: t.p_max + 2,
                ..t
            };
            let alt = match EscapeFunction::new(self.flow().clone(), self.settings.alt_escape.clone()) {
                Ok(e) => e,
                Err(e) => return out.fail(e),
            };
            let runs = (|| -> Result<_, HarnessError> {
                Ok((
                    self.resonances_with(&self.escape, &t)?,
                    self.resonances_with(&alt, &t)?,
                    self.resonances_with(&self.escape, &grown)?,
                ))
            })();
            let (a, b, g) = match runs {
                Ok(x) => x,
                Err(e) => return out.fail(e),
            };
            out.metric("floor", floor);
            match intrinsic_check(&a.trusted(), &b.trusted(), floor, 1e-4) {
                Ok(m) => {
                    out.metric("matched", m.pairs.len() as f64);
                    out.metric("max_distance", m.max_distance);
                    out.require(m.max_distance < 1e-4, format!("distance {}", m.max_distance));
                }
                Err(e) => out.fail(e),
            }
            // Growth adds sectors, hence multiplicity; compare distinct values.
            let distinct = |r: &ResonanceSet| -> Vec<(Complex64, usize)> {
                r.trusted()
                    .above(floor)
                    .merged(CLUSTER_RADIUS)
                    .into_iter()
                    .map(|(v, _)| (v, 1))
                    .collect()
            };
            match match_spectra(&distinct(&a), &distinct(&g), 1e-4) {
                Ok(m) => {
                    out.metric("truncation_drift", m.max_distance);
                    out.require(m.max_distance < 1e-4, format!("drift {}", m.max_distance));
                }
                Err(e) => out.fail(format!("truncation growth: {e}")),
            }
            // Below the floor too, for information.
            if let Ok(m) = intrinsic_check(&a.trusted(), &b.trusted(), f64::NEG_INFINITY, 1e-4) {
                out.metric("max_distance_all_depths", m.max_distance);
            }
        })
    }

    pub fn weyl(&self) -> CheckOutcome {
        timed(CheckId::WeylInequalities, |out| {
            let s = &self.settings;
            let h = s.h;
            let t = Truncation {
                j_max: s.weyl_j_max,
                ..self.truncation
            };
            let c_m = match self.escape.escape_survey(1000, s.seed) {
                Ok(r) => r.c_m,
                Err(e) => return out.fail(e),
            };
            let radius = 1.0 + 0.5 * c_m * h;
            let z = Complex64::new(s.e, 1.0);
            let wgs = match weighted_sectors(&self.escape, &t, h, &self.base()) {
                Ok(w) => w,
                Err(e) => return out.fail(e),
            };
            let reports: Vec<Result<WeylReport, OperatorError>> = wgs
                .par_iter()
                .filter(|w| w.weighted.dim() <= s.weyl_dim_cap)
                .map(|w| {
                    let ev: Vec<(Complex64, usize)> = sector_spectrum(w)?
                        .iter()
                        .map(|e| (e.value * h, e.multiplicity))
                        .collect();
                    Ok(weyl_audit_with(&w.weighted.to_dense(), &ev, z, radius))
                })
                .collect();
            let (mut audited, mut worst, mut small, mut disk) = (0, f64::NEG_INFINITY, 0, 0);
            for r in reports {
                match r {
                    Ok(r) => {
                        audited += 1;
                        worst = worst.max(r.worst_margin);
                        small += r.small_singular;
                        disk += r.disk_eigen;
                        out.require(r.verdict, format!("violation of margin {}", r.worst_margin));
                    }
                    Err(e) => out.fail(e),
                }
            }
            out.metric("audited", audited as f64);
            out.metric("skipped", (wgs.len() - audited) as f64);
            out.metric("worst_margin", worst);
            out.metric("disk_radius", radius);
            out.metric("small_singular", small as f64);
            out.metric("disk_eigenvalues", disk as f64);
            out.require(audited > 0, "no sector small enough to audit");
            let (agree, err) = weyl_random_crosscheck(s.weyl_random, s.seed);
            out.metric("random_agreement", agree as f64);
            out.metric("random_singular_error", err);
            out.require(agree == s.weyl_random, format!("{agree}/{} random matrices agree", s.weyl_random));
        })
    }

    pub fn ims(&self) -> CheckOutcome {
        timed(CheckId::ImsScaling, |out| {
            let s = &self.settings;
            let z = Complex64::new(s.ims_z[0], s.ims_z[1]);
            let rows = partition_ims_check(self.flow(), z, &s.ims_h, s.ims_trials, s.seed);
            let mut tab = Table::new(&["h", "residual"]);
            for r in &rows {
                tab.rows.push(vec![r.h, r.residual]);
            }
            for (i, w) in rows.windows(2).enumerate() {
                let ratio = w[0].residual / w[1].residual;
                out.metric(&format!("ratio_{i}"), ratio);
                out.require((3.0..=5.0).contains(&ratio), format!("ratio {ratio} at h={}", w[0].h));
            }
            out.tables.insert("residuals".into(), tab);
        })
    }

    pub fn coherent(&self) -> CheckOutcome {
        timed(CheckId::CoherentSymbol, |out| {
            let s = &self.settings;
            let flow = self.flow();
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let points: Vec<_> = (0..s.coherent_points)
                .map(|_| random_phase_point(flow, &mut rng, s.coherent_tau))
                .collect();
            let errs: Vec<Result<Vec<f64>, OperatorError>> = points
                .par_iter()
                .map(|a| {
                    s.coherent_h
                        .iter()
                        .map(|&h| {
                            let st = coherent_state(flow, a, h, &coherent_truncation(a, h))?;
                            let ex = coherent_expectation(&self.escape, &st)?;
                            Ok((ex - symbol_with_weight(&self.escape, a, h)?).norm())
                        })
                        .collect()
                })
                .collect();
            let mut tab = Table::new(&["point", "h", "error"]);
            let mut min_slope = f64::INFINITY;
            for (i, e) in errs.into_iter().enumerate() {
                match e {
                    Ok(e) => {
                        for (h, v) in s.coherent_h.iter().zip(&e) {
                            tab.rows.push(vec![i as f64, *h, *v]);
                        }
                        let slope = log_slope(&s.coherent_h, &e);
                        min_slope = min_slope.min(slope);
                        out.require(slope >= 0.5, format!("point {i}: power {slope}"));
                    }
                    Err(err) => out.fail(err),
                }
            }
            out.metric("min_power", min_slope);
            out.tables.insert("errors".into(), tab);
        })
    }

    pub fn counting(&self) -> CheckOutcome {
        timed(CheckId::CountingStudy, |out| {
            let s = &self.settings;
            let setup = ScalingSetup {
                e: s.e,
                alphas: s.alphas.clone(),
                beta: s.beta,
                k_max: self.truncation.k_max,
                p_max: self.truncation.p_max,
                j_cap: s.j_cap,
            };
            match scaling_study(&self.escape, &setup, &self.base()) {
                Ok(r) => {
                    let mut tab = Table::new(&["alpha", "count", "j_max"]);
                    for row in &r.rows {
                        tab.rows.push(vec![row.alpha, row.count as f64, row.j_max as f64]);
                    }
                    out.tables.insert("counts".into(), tab);
                    out.metric("zero_counts", r.fit.zero_counts as u8 as f64);
                    match r.fit.exponent {
                        Some(x) => {
                            out.metric("exponent", x);
                            out.require(x <= 3.0, format!("exponent {x} above 3"));
                        }
                        None => out.metric("exponent", f64::NAN),
                    }
                }
                Err(e) => out.fail(e),
            }
            match lattice_scaling_study(s.e, &s.alphas, s.beta) {
                Ok(r) => {
                    let x = r.fit.exponent.unwrap_or(f64::NAN);
                    out.metric("lattice_exponent", x);
                    out.require((x - 2.5).abs() <= 0.1, format!("lattice control exponent {x}"));
                    let mut tab = Table::new(&["alpha", "count"]);
                    for row in &r.rows {
                        tab.rows.push(vec![row.alpha, row.count as f64]);
                    }
                    out.tables.insert("lattice_counts".into(), tab);
                }
                Err(e) => out.fail(e),
            }
        })
    }

    /// Upper bound of the imaginary part of the quadratic form of the
    /// weighted generator, across three `k_max`.
    pub fn garding(&self) -> CheckOutcome {
        timed(CheckId::Garding, |out| {
            let mut bounds = vec![];
            for dk in [0, 4, 8] {
                let t = Truncation {
                    k_max: self.truncation.k_max + dk,
                    j_max: self.settings.garding_j_max,
                    ..self.truncation
                };
                match weighted_sectors(&self.escape, &t, self.settings.h, &self.base()) {
                    Ok(w) => {
                        let b = w
                            .par_iter()
                            .map(|w| garding_upper_check(&w.weighted.to_dense(), 0, 0).exact)
                            .reduce(|| f64::NEG_INFINITY, f64::max);
                        out.metric(&format!("bound_k{}", t.k_max), b);
                        bounds.push(b);
                    }
                    Err(e) => return out.fail(e),
                }
            }
            let (lo, hi) = bounds
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let spread = (hi - lo) / lo.abs().max(hi.abs());
            out.metric("relative_spread", spread);
            out.require(spread <= 0.2, format!("bound moves by {spread}"));
        })
    }

    pub fn disk(&self) -> CheckOutcome {
        timed(CheckId::DiskInclusion, |out| {
            let s = &self.settings;
            let r = self
                .resonances_with(&self.escape, &self.truncation)
                .and_then(|res| disk_box_check(&res.trusted(), s.e, s.beta, s.disk_b, s.h));
            match r {
                Ok(rep) => {
                    out.metric("in_box", rep.in_box as f64);
                    out.metric("outside_disk", rep.outside.len() as f64);
                    out.require(rep.holds(), format!("{} eigenvalues outside the disk", rep.outside.len()));
                }
                Err(e) => out.fail(e),
            }
        })
    }
}

/// Weyl audit on random `Q T Q*` (known eigenvalues) against singular
/// values from the Hermitian dilation `[[0, M], [M*, 0]]`. Returns the
/// number of matrices where both verdicts hold and the largest relative
/// singular-value discrepancy.
pub fn weyl_random_crosscheck(count: usize, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let mut agree = 0;
    let mut err: f64 = 0.0;
    let mut c = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    for _ in 0..count {
        let q = CMat::from_fn(n, n, |_, _| c()).qr().q();
        let t = CMat::from_fn(n, n, |r, col| if r <= col { c() * 4.0 } else { Complex64::new(0.0, 0.0) });
        let m = &q * &t * q.adjoint();
        let z = Complex64::new(0.1, 0.7);
        let ev: Vec<(Complex64, usize)> = (0..n).map(|i| (t[(i, i)], 1)).collect();
        let shifted = &m - CMat::identity(n, n) * z;
        let mut dil = CMat::zeros(2 * n, 2 * n);
        dil.view_mut((0, n), (n, n)).copy_from(&shifted);
        dil.view_mut((n, 0), (n, n)).copy_from(&shifted.adjoint());
        let mut sv: Vec<f64> = dil.symmetric_eigenvalues().iter().filter(|&&x| x > 0.0).copied().collect();
        sv.sort_by(f64::total_cmp);
        let svd = singular_values(&m, z);
        if sv.len() != n {
            continue;
        }
        for (a, b) in sv.iter().zip(&svd) {
            err = err.max((a - b).abs() / b.max(f64::MIN_POSITIVE));
        }
        let mut d: Vec<f64> = ev.iter().map(|(v, _)| (v - z).norm()).collect();
        d.sort_by(f64::total_cmp);
        let (mut a, mut b, mut oracle) = (0.0, 0.0, true);
        for k in 0..n {
            a += sv[k].ln();
            b += d[k].ln();
            oracle &= a <= b + 1e-8 * (k + 1) as f64;
        }
        if oracle && weyl_audit_with(&m, &ev, z, 1.0).verdict {
            agree += 1;
        }
    }
    (agree, err)
}

/// The default model: the standard cat map with `c = 1 + 0.2 cos 2 pi tau`.
pub fn default_campaign() -> Campaign {
    let flow = MappingTorusFlow::new(CatMap::standard(), TimeChange::cosine(1.0, 0.2))
        .expect("standard model is valid");
    let escape = EscapeFunction::new(flow, OrderParams::default()).expect("default parameters are valid");
    Campaign::new(
        escape,
        Truncation {
            k_max: 8,
            p_max: 2,
            j_max: 32,
        },
        CampaignSettings::default(),
    )
}
