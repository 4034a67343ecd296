//! Phase-space checks on the truncated operators: coherent-state symbols,
//! the IMS localisation formula and the upper Garding bound.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::generator::{neutral_block, UPWIND_PENALTY};
use super::modes::{sector_of, SectorKey, Truncation};
use super::weight::cell_log_weights;
use super::OperatorError;
use crate::cotangent::CotangentPoint;
use crate::escape::{smoothstep, EscapeFunction};
use crate::linalg::{CMat, CVec};
use crate::model::{MappingTorusFlow, TimeChange};

/// Relative amplitude below which coherent-state coefficients are dropped.
const AMPLITUDE_CUT: f64 = 1e-16;
/// Largest admissible fraction of the state's mass outside the window.
pub const MAX_OUTSIDE_MASS: f64 = 0.01;

/// Coefficients of a coherent state, grouped by sector and cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentState {
    pub h: f64,
    pub alpha: CotangentPoint,
    /// `sector -> p -> [(j, coefficient)]`, sorted by `j`.
    pub parts: BTreeMap<SectorKey, BTreeMap<i64, Vec<(i64, Complex64)>>>,
    /// Fraction of the squared norm outside the truncation window.
    pub outside: f64,
}

impl CoherentState {
    pub fn norm_sqr(&self) -> f64 {
        self.parts
            .values()
            .flat_map(|cells| cells.values())
            .flatten()
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    /// `<e, e'>` over the shared modes.
    pub fn inner(&self, other: &CoherentState) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (key, cells) in &self.parts {
            let Some(oc) = other.parts.get(key) else {
                continue;
            };
            for (p, coeffs) in cells {
                let Some(o) = oc.get(p) else { continue };
                let om: BTreeMap<i64, Complex64> = o.iter().copied().collect();
                for (j, c) in coeffs {
                    if let Some(d) = om.get(j) {
                        acc += c.conj() * d;
                    }
                }
            }
        }
        acc
    }
}

fn japanese(xi: &[f64; 3]) -> f64 {
    (1.0 + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
}

/// Radius in frequency units beyond which the Gaussian profile is below
/// [`AMPLITUDE_CUT`].
fn gaussian_radius(jx: f64, h: f64) -> f64 {
    (2.0 * jx / h * -AMPLITUDE_CUT.ln()).sqrt() / TAU
}

/// A truncation that resolves the coherent state at `alpha`.
pub fn coherent_truncation(alpha: &CotangentPoint, h: f64) -> Truncation {
    let xi = alpha.covector();
    let r = gaussian_radius(japanese(&xi), h);
    let kx = xi[0].hypot(xi[1]) / (TAU * h);
    Truncation {
        k_max: (kx + r).ceil() as u32 + 1,
        p_max: 2,
        j_max: (xi[2].abs() / (TAU * h) + r).ceil() as u32 + 1,
    }
}

/// Mode coefficients of `e_alpha(y) = exp((i/h) xi (y - x) - <xi>|y - x|^2 / 2h)`:
/// a Gaussian of width `sqrt(<xi>/h)` around `xi / h` in frequency, with
/// the phase of the base point.
pub fn coherent_state(
    flow: &MappingTorusFlow,
    alpha: &CotangentPoint,
    h: f64,
    t: &Truncation,
) -> Result<CoherentState, OperatorError> {
    let xi = alpha.covector();
    let jx = japanese(&xi);
    let r = gaussian_radius(jx, h);
    let center = [xi[0] / (TAU * h), xi[1] / (TAU * h), xi[2] / (TAU * h)];
    let range = |c: f64| ((c - r).floor() as i64)..=((c + r).ceil() as i64);
    let (x0, tau0) = (alpha.base.x, alpha.base.tau);
    let km2 = (t.k_max as i64).pow(2);
    let jm = t.j_max as i64;
    let mut parts: BTreeMap<SectorKey, BTreeMap<i64, Vec<(i64, Complex64)>>> = BTreeMap::new();
    let (mut total, mut outside) = (0.0, 0.0);
    for k1 in range(center[0]) {
        for k2 in range(center[1]) {
            let dk = (k1 as f64 - center[0]).powi(2) + (k2 as f64 - center[1]).powi(2);
            let in_k = k1 * k1 + k2 * k2 <= km2;
            let (key, p) = sector_of(&flow.cat, [k1, k2]);
            for j in range(center[2]) {
                let dj = (j as f64 - center[2]).powi(2);
                let a = (-(h / (2.0 * jx)) * TAU * TAU * (dk + dj)).exp();
                if a < AMPLITUDE_CUT {
                    continue;
                }
                let phase = -TAU * (k1 as f64 * x0[0] + k2 as f64 * x0[1] + j as f64 * tau0);
                let c = Complex64::from_polar(a, phase);
                total += a * a;
                if in_k && j.abs() <= jm {
                    parts.entry(key).or_default().entry(p).or_default().push((j, c));
                } else {
                    outside += a * a;
                }
            }
        }
    }
    let outside = if total > 0.0 { outside / total } else { 1.0 };
    if outside > MAX_OUTSIDE_MASS {
        return Err(OperatorError::UnresolvedState { outside });
    }
    Ok(CoherentState {
        h,
        alpha: *alpha,
        parts,
        outside,
    })
}

/// Entry `(r, l)` of the diagonal block of `H` in a cell (indices are
/// frequencies `j`).
fn block_entry(tc: &TimeChange, key: SectorKey, r: i64, l: i64) -> Complex64 {
    let mut v = tc.fourier(r - l) * (TAU * l as f64);
    if key != SectorKey::Neutral {
        v -= Complex64::new(0.0, UPWIND_PENALTY * tc.eval(0.0));
    }
    v
}

/// `<e, P_h e> / |e|^2` with `P_h = h W H W^{-1}` and weights from
/// `escape` at the state's base point. Only modes in the support of the
/// state are touched.
pub fn coherent_expectation(
    escape: &EscapeFunction,
    state: &CoherentState,
) -> Result<Complex64, OperatorError> {
    let tc = &escape.flow.time_change;
    let h = state.h;
    let base = state.alpha.base;
    let inflow = Complex64::new(0.0, UPWIND_PENALTY * tc.eval(0.0));
    let mut num = Complex64::new(0.0, 0.0);
    for (key, cells) in &state.parts {
        let k0 = match key {
            SectorKey::Neutral => [0, 0],
            SectorKey::Orbit(k) => *k,
        };
        let mut weighted: BTreeMap<i64, Vec<(i64, Complex64, f64)>> = BTreeMap::new();
        for (p, coeffs) in cells {
            let js: Vec<i64> = coeffs.iter().map(|c| c.0).collect();
            let lw = cell_log_weights(escape, *key, k0, *p, &js, h, &base)?;
            weighted.insert(
                *p,
                coeffs.iter().zip(lw).map(|(&(j, c), g)| (j, c, g)).collect(),
            );
        }
        for (p, row) in &weighted {
            for &(r, er, gr) in row {
                for &(l, el, gl) in row {
                    num += er.conj() * block_entry(tc, *key, r, l) * el * (gr - gl).exp();
                }
                if let Some(up) = weighted.get(&(p + 1)) {
                    for &(_, el, gl) in up {
                        num += er.conj() * inflow * el * (gr - gl).exp();
                    }
                }
            }
        }
    }
    Ok(num * h / state.norm_sqr())
}

/// Principal symbol plus the weight correction, `c(tau) eta + i h X(G_m)`.
pub fn symbol_with_weight(
    escape: &EscapeFunction,
    alpha: &CotangentPoint,
    h: f64,
) -> Result<Complex64, OperatorError> {
    let v = escape.flow.c(alpha.base.tau) * alpha.eta;
    Ok(Complex64::new(v, h * escape.escape_derivative(alpha)?))
}

/// `chi0 = cos(pi/2 S((|x| - 1) / 4))`, `chi1 = sin(...)`, so that
/// `chi0^2 + chi1^2 = 1`.
pub fn ims_multipliers(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .map(|&v| {
            let a = FRAC_PI_2 * smoothstep(0.25 * (v.abs() - 1.0));
            (a.cos(), a.sin())
        })
        .unzip()
}

/// `| |Au|^2 - |A chi0 u|^2 - |A chi1 u|^2 | / |u|^2` with `A = P - z`.
pub fn ims_residual(p: &CMat, z: Complex64, chi0: &[f64], chi1: &[f64], u: &CVec) -> f64 {
    let a = |v: &CVec| p * v - v * z;
    let mul = |chi: &[f64]| CVec::from_fn(u.len(), |i, _| u[i] * chi[i]);
    let lhs = a(u).norm_squared();
    let rhs = a(&mul(chi0)).norm_squared() + a(&mul(chi1)).norm_squared();
    (lhs - rhs).abs() / u.norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ImsRow {
    pub h: f64,
    /// Mean residual over the trials.
    pub residual: f64,
}

/// Random vector smooth in the rescaled frequency `x = 2 pi h j`: a
/// Gaussian combination of fixed bumps.
fn smooth_random(rng: &mut ChaCha8Rng, x: &[f64]) -> CVec {
    let centers: Vec<f64> = (0..13).map(|m| -6.0 + m as f64).collect();
    let g: Vec<Complex64> = centers
        .iter()
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    CVec::from_fn(x.len(), |i, _| {
        centers
            .iter()
            .zip(&g)
            .map(|(c, gm)| gm * (-(x[i] - c).powi(2) / (2.0 * 1.2 * 1.2)).exp())
            .sum()
    })
}

/// IMS residuals for the neutral sector `P_h = h H` over `hs`. Truncation
/// scales as `1/h` so that `|x| <= 10` is resolved.
pub fn partition_ims_check(
    flow: &MappingTorusFlow,
    z: Complex64,
    hs: &[f64],
    trials: usize,
    seed: u64,
) -> Vec<ImsRow> {
    hs.iter()
        .map(|&h| {
            let j_max = (10.0 / (TAU * h)).ceil() as u32;
            let p = neutral_block(&flow.time_change, j_max) * Complex64::new(h, 0.0);
            let x: Vec<f64> = (-(j_max as i64)..=j_max as i64)
                .map(|j| TAU * h * j as f64)
                .collect();
            let (c0, c1) = ims_multipliers(&x);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let total: f64 = (0..trials)
                .map(|_| ims_residual(&p, z, &c0, &c1, &smooth_random(&mut rng, &x)))
                .sum();
            ImsRow {
                h,
                residual: total / trials as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GardingReport {
    /// `max spec (P - P^*) / 2i`, the supremum of the quadratic form.
    pub exact: f64,
    /// Largest `Im <u, P u> / |u|^2` over random trials.
    pub sampled: f64,
}

/// Upper bound of `Im <u, P u> / |u|^2`.
pub fn garding_upper_check(p: &CMat, trials: usize, seed: u64) -> GardingReport {
    let n = p.nrows();
    let im_part = (p - p.adjoint()) * Complex64::new(0.0, -0.5);
    let exact = im_part
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = f64::NEG_INFINITY;
    for _ in 0..trials {
        let u = CVec::from_fn(n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let q = u.dotc(&(p * &u)).im / u.norm_squared();
        sampled = sampled.max(q);
    }
    GardingReport { exact, sampled }
}

/// Uniform random phase point with `tau` near `tau0`, `|xi_x|` in
/// `[1, 2]` and `eta` in `[-1, 1]`.
pub fn random_phase_point(
    flow: &MappingTorusFlow,
    rng: &mut ChaCha8Rng,
    tau0: f64,
) -> CotangentPoint {
    let base = flow.point(
        [rng.random(), rng.random()],
        tau0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0),
    );
    let r = 1.0 + rng.random::<f64>();
    let phi = TAU * rng.random::<f64>();
    CotangentPoint {
        base,
        xi_x: [r * phi.cos(), r * phi.sin()],
        eta: 2.0 * rng.random::<f64>() - 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escape::OrderParams;
    use crate::model::CatMap;

    fn flow(tc: TimeChange) -> MappingTorusFlow {
        MappingTorusFlow::new(CatMap::standard(), tc).unwrap()
    }

    fn alpha(f: &MappingTorusFlow, xi: [f64; 2], eta: f64) -> CotangentPoint {
        CotangentPoint {
            base: f.point([0.3, 0.7], 0.5),
            xi_x: xi,
            eta,
        }
    }

    #[test]
    fn multipliers_form_a_quadratic_partition() {
        let x: Vec<f64> = (-120..=120).map(|i| i as f64 * 0.05).collect();
        let (a, b) = ims_multipliers(&x);
        for (p, q) in a.iter().zip(&b) {
            assert!((p * p + q * q - 1.0).abs() < 1e-15);
        }
        assert_eq!(a[120], 1.0);
        assert!(a[0].abs() < 1e-15);
    }

    #[test]
    fn ims_trivial_cases() {
        let p = CMat::from_fn(5, 5, |r, c| Complex64::new((r * c) as f64, r as f64 - c as f64));
        let u = CVec::from_fn(5, |i, _| Complex64::new(1.0, i as f64));
        assert_eq!(ims_residual(&p, Complex64::new(1.0, 1.0), &[1.0; 5], &[0.0; 5], &u), 0.0);
        let d = CMat::from_diagonal(&CVec::from_fn(5, |i, _| Complex64::new(i as f64, 0.0)));
        let (c0, c1) = ims_multipliers(&[0.0, 1.2, 2.9, 4.4, 6.0]);
        assert!(ims_residual(&d, Complex64::new(0.5, 1.0), &c0, &c1, &u) < 1e-12);
    }

    #[test]
    fn ims_residual_scales_like_h_squared() {
        let f = flow(TimeChange::cosine(1.0, 0.2));
        let rows = partition_ims_check(&f, Complex64::new(1.0, 1.0), &[0.1, 0.05, 0.025], 20, 7);
        for w in rows.windows(2) {
            let ratio = w[0].residual / w[1].residual;
            assert!((3.0..=5.0).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn garding_examples() {
        let f = flow(TimeChange::constant(1.0));
        let h = neutral_block(&f.time_change, 5);
        let g = garding_upper_check(&h, 50, 1);
        assert!(g.exact.abs() < 1e-12 && g.sampled.abs() < 1e-12);
        let gamma = 0.7;
        let shifted = &h - CMat::identity(11, 11) * Complex64::new(0.0, gamma);
        let g2 = garding_upper_check(&shifted, 50, 1);
        assert!((g2.exact - (g.exact - gamma)).abs() < 1e-12);
        assert!(g2.sampled <= g2.exact + 1e-12);
    }

    #[test]
    fn coherent_states_overlap_decays_with_distance() {
        let f = flow(TimeChange::constant(1.0));
        // Small enough that lattice sums match Gaussian integrals.
        let h = 0.02;
        let a = alpha(&f, [1.0, 0.5], 0.3);
        let t = coherent_truncation(&a, h);
        let ea = coherent_state(&f, &a, h, &t).unwrap();
        let beta = |x: &CotangentPoint| h * TAU * TAU / (2.0 * japanese(&x.covector()));
        for d in [0.2, 0.4, 0.8] {
            let b = alpha(&f, [1.0 + d, 0.5], 0.3);
            let eb = coherent_state(&f, &b, h, &t).unwrap();
            let ov = ea.inner(&eb).norm() / (ea.norm_sqr() * eb.norm_sqr()).sqrt();
            // Continuum overlap of exp(-ba |n - ca|^2) and exp(-bb |n - cb|^2).
            let (ba, bb) = (beta(&a), beta(&b));
            let (xa, xb) = (a.covector(), b.covector());
            let gap = (0..3).map(|i| (xa[i] - xb[i]).powi(2)).sum::<f64>().sqrt() / (TAU * h);
            let expect = -ba * bb / (ba + bb) * gap * gap
                + 1.5 * (2.0 * (ba * bb).sqrt() / (ba + bb)).ln();
            assert!((ov.ln() - expect).abs() < 1e-6, "{d} {ov}");
        }
    }

    #[test]
    fn unresolved_state_is_rejected() {
        let f = flow(TimeChange::constant(1.0));
        let a = alpha(&f, [1.0, 0.5], 0.3);
        let t = Truncation {
            k_max: 1,
            p_max: 2,
            j_max: 1,
        };
        assert!(matches!(
            coherent_state(&f, &a, 0.05, &t),
            Err(OperatorError::UnresolvedState { .. })
        ));
    }

    #[test]
    fn expectation_approaches_the_symbol() {
        let f = flow(TimeChange::cosine(1.0, 0.2));
        let e = EscapeFunction::new(f.clone(), OrderParams::default()).unwrap();
        let a = alpha(&f, [1.2, -0.6], 0.7);
        let mut errs = vec![];
        for h in [0.1, 0.05, 0.025] {
            let s = coherent_state(&f, &a, h, &coherent_truncation(&a, h)).unwrap();
            let ex = coherent_expectation(&e, &s).unwrap();
            errs.push((ex - symbol_with_weight(&e, &a, h).unwrap()).norm());
        }
        assert!(errs[2] < errs[0] * 0.5, "{errs:?}");
    }
}
