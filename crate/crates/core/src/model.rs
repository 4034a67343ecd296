//! The concrete Anosov flow: a time-changed suspension of a hyperbolic toral
//! automorphism, living on the mapping torus of `A`.
//!
//! Coordinates are `(x1, x2, tau)` with `x` on the torus and `tau` in the
//! fundamental domain `[0, 1)`. The seam identification is
//! `(x, 1) ~ (A x, 0)`: a trajectory crossing `tau = 1` upwards has `A`
//! applied to its horizontal coordinate.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::quad::gauss_kronrod;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("matrix {0:?} has determinant {1}, expected 1")]
    NotUnimodular([[i64; 2]; 2], i64),
    #[error("matrix {0:?} is not hyperbolic: |trace| = {1} <= 2")]
    NotHyperbolic([[i64; 2]; 2], i64),
    #[error("time change is not positive: min c = {0}")]
    NonPositiveTimeChange(f64),
    #[error("time change coefficient lists are inconsistent: {0}")]
    BadTimeChange(String),
    #[error("integrator did not converge: {0}")]
    NonConvergence(String),
    #[error("matrix {0:?} has negative trace; the suspension needs an orientation-preserving splitting")]
    NegativeTrace([[i64; 2]; 2]),
    #[error("seed direction lies within {0:e} rad of E_0 + E_s")]
    DegenerateSeed(f64),
}

/// A hyperbolic element of SL(2, Z) acting on the two-torus.
#[derive(Debug, Clone, PartialEq)]
pub struct CatMap {
    a: [[i64; 2]; 2],
    pub lambda_u: f64,
    pub lambda_s: f64,
    /// Unit expanding direction, `A e_u = lambda_u e_u`.
    pub e_u: [f64; 2],
    /// Unit contracting direction, `A e_s = lambda_s e_s`.
    pub e_s: [f64; 2],
    /// Unit covector annihilating `e_u`; expanded by `A^{-T}` (the cotangent
    /// unstable direction).
    pub cov_u: [f64; 2],
    /// Unit covector annihilating `e_s`; contracted by `A^{-T}`.
    pub cov_s: [f64; 2],
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    let v = [v[0] / n, v[1] / n];
    // Fix the sign so that the first nonzero component is positive.
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Eigenvector of a real 2x2 matrix for a real eigenvalue.
fn eigvec(m: [[f64; 2]; 2], lam: f64) -> [f64; 2] {
    let r0 = [m[0][0] - lam, m[0][1]];
    let r1 = [m[1][0], m[1][1] - lam];
    // Null vector of the row with the larger norm is the more accurate one.
    let r = if r0[0].hypot(r0[1]) >= r1[0].hypot(r1[1]) {
        r0
    } else {
        r1
    };
    unit([-r[1], r[0]])
}

impl CatMap {
    pub fn new(a11: i64, a12: i64, a21: i64, a22: i64) -> Result<Self, ModelError> {
        let a = [[a11, a12], [a21, a22]];
        let det = a11 * a22 - a12 * a21;
        if det != 1 {
            return Err(ModelError::NotUnimodular(a, det));
        }
        let tr = a11 + a22;
        if tr.abs() <= 2 {
            return Err(ModelError::NotHyperbolic(a, tr));
        }
        let trf = tr as f64;
        let disc = (trf * trf - 4.0).sqrt();
        // Larger-modulus root first; for negative trace both roots are negative.
        let (lu, ls) = if tr > 0 {
            ((trf + disc) / 2.0, (trf - disc) / 2.0)
        } else {
            ((trf - disc) / 2.0, (trf + disc) / 2.0)
        };
        let af = [[a11 as f64, a12 as f64], [a21 as f64, a22 as f64]];
        let at = [[af[0][0], af[1][0]], [af[0][1], af[1][1]]];
        let e_u = eigvec(af, lu);
        let e_s = eigvec(af, ls);
        // A^T cov_u = lambda_s cov_u  <=>  A^{-T} cov_u = lambda_u cov_u.
        let cov_u = eigvec(at, ls);
        let cov_s = eigvec(at, lu);
        Ok(CatMap {
            a,
            lambda_u: lu.abs(),
            lambda_s: ls.abs(),
            e_u,
            e_s,
            cov_u,
            cov_s,
        })
    }

    /// The map used throughout the examples, `[[2, 1], [1, 1]]`.
    pub fn standard() -> Self {
        CatMap::new(2, 1, 1, 1).expect("standard cat map is hyperbolic")
    }

    pub fn matrix(&self) -> [[i64; 2]; 2] {
        self.a
    }

    pub fn trace(&self) -> i64 {
        self.a[0][0] + self.a[1][1]
    }

    /// `A^n` as a real matrix, `n` may be negative.
    pub fn power(&self, n: i64) -> [[f64; 2]; 2] {
        let base = if n >= 0 { self.a } else { self.inverse() };
        let mut acc = [[1i64, 0], [0, 1]];
        for _ in 0..n.unsigned_abs() {
            acc = mul_i(acc, base);
        }
        [
            [acc[0][0] as f64, acc[0][1] as f64],
            [acc[1][0] as f64, acc[1][1] as f64],
        ]
    }

    pub fn inverse(&self) -> [[i64; 2]; 2] {
        let a = self.a;
        [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]
    }

    /// `A x mod 1` applied `n` times (inverse for negative `n`).
    pub fn act_torus(&self, x: [f64; 2], n: i64) -> [f64; 2] {
        let m = if n >= 0 { self.a } else { self.inverse() };
        let mut y = x;
        for _ in 0..n.unsigned_abs() {
            let y0 = m[0][0] as f64 * y[0] + m[0][1] as f64 * y[1];
            let y1 = m[1][0] as f64 * y[0] + m[1][1] as f64 * y[1];
            y = [y0.rem_euclid(1.0), y1.rem_euclid(1.0)];
        }
        y
    }

    /// `A^T k` on integer frequencies.
    pub fn transpose_apply(&self, k: [i64; 2]) -> [i64; 2] {
        let a = self.a;
        [a[0][0] * k[0] + a[1][0] * k[1], a[0][1] * k[0] + a[1][1] * k[1]]
    }

    /// `A^{-T} k` on integer frequencies.
    pub fn transpose_inverse_apply(&self, k: [i64; 2]) -> [i64; 2] {
        let b = self.inverse();
        [b[0][0] * k[0] + b[1][0] * k[1], b[0][1] * k[0] + b[1][1] * k[1]]
    }

    /// `(A^{-T})^n xi` on real covectors.
    pub fn covector_push(&self, xi: [f64; 2], n: i64) -> [f64; 2] {
        let m = self.power(-n);
        [
            m[0][0] * xi[0] + m[1][0] * xi[1],
            m[0][1] * xi[0] + m[1][1] * xi[1],
        ]
    }

    /// Coordinates `(a, b)` of a horizontal covector in the basis
    /// `(cov_u, cov_s)`.
    pub fn covector_coords(&self, xi: [f64; 2]) -> [f64; 2] {
        let (u, s) = (self.cov_u, self.cov_s);
        let det = u[0] * s[1] - u[1] * s[0];
        [
            (xi[0] * s[1] - xi[1] * s[0]) / det,
            (u[0] * xi[1] - u[1] * xi[0]) / det,
        ]
    }

    pub fn covector_from_coords(&self, c: [f64; 2]) -> [f64; 2] {
        [
            c[0] * self.cov_u[0] + c[1] * self.cov_s[0],
            c[0] * self.cov_u[1] + c[1] * self.cov_s[1],
        ]
    }
}

fn mul_i(a: [[i64; 2]; 2], b: [[i64; 2]; 2]) -> [[i64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// A 1-periodic trigonometric polynomial
/// `c(tau) = c0 + sum_n (cos_n cos(2 pi n tau) + sin_n sin(2 pi n tau))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeChange {
    pub c0: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TimeChange {
    pub fn constant(c0: f64) -> Self {
        TimeChange {
            c0,
            cos: vec![],
            sin: vec![],
        }
    }

    /// `c0 + amp cos(2 pi tau)`.
    pub fn cosine(c0: f64, amp: f64) -> Self {
        TimeChange {
            c0,
            cos: vec![amp],
            sin: vec![],
        }
    }

    pub fn degree(&self) -> usize {
        let last = |v: &[f64]| v.iter().rposition(|&a| a != 0.0).map_or(0, |i| i + 1);
        last(&self.cos).max(last(&self.sin))
    }

    pub fn eval(&self, tau: f64) -> f64 {
        let mut v = self.c0;
        for (n, a) in self.cos.iter().enumerate() {
            v += a * (2.0 * PI * (n + 1) as f64 * tau).cos();
        }
        for (n, b) in self.sin.iter().enumerate() {
            v += b * (2.0 * PI * (n + 1) as f64 * tau).sin();
        }
        v
    }

    pub fn derivative(&self, tau: f64) -> f64 {
        let mut v = 0.0;
        for (n, a) in self.cos.iter().enumerate() {
            let w = 2.0 * PI * (n + 1) as f64;
            v -= a * w * (w * tau).sin();
        }
        for (n, b) in self.sin.iter().enumerate() {
            let w = 2.0 * PI * (n + 1) as f64;
            v += b * w * (w * tau).cos();
        }
        v
    }

    /// Fourier coefficient `c_n` with `c(tau) = sum_n c_n e^{2 pi i n tau}`.
    pub fn fourier(&self, n: i64) -> num_complex::Complex64 {
        use num_complex::Complex64;
        if n == 0 {
            return Complex64::new(self.c0, 0.0);
        }
        let idx = n.unsigned_abs() as usize - 1;
        let a = self.cos.get(idx).copied().unwrap_or(0.0);
        let b = self.sin.get(idx).copied().unwrap_or(0.0);
        if n > 0 {
            Complex64::new(a / 2.0, -b / 2.0)
        } else {
            Complex64::new(a / 2.0, b / 2.0)
        }
    }

    pub fn min_on_grid(&self, n: usize) -> f64 {
        (0..n)
            .map(|i| self.eval(i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }
}

/// Measured hyperbolicity constants `|D phi_t v_s| <= c_hyp e^{-theta t} |v_s|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperbolicityFit {
    pub c_hyp: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePoint {
    pub x: [f64; 2],
    pub tau: f64,
}

/// Result of integrating the flow: the endpoint and the signed number of
/// seam crossings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowStep {
    pub point: BasePoint,
    pub crossings: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingTorusFlow {
    pub cat: CatMap,
    pub time_change: TimeChange,
    /// Absolute tolerance of the adaptive integrator.
    pub tol: f64,
}

pub type Mat3 = [[f64; 3]; 3];

const MIN_C_GRID: usize = 4096;

impl MappingTorusFlow {
    pub fn new(cat: CatMap, time_change: TimeChange) -> Result<Self, ModelError> {
        if time_change.cos.iter().chain(&time_change.sin).any(|v| !v.is_finite())
            || !time_change.c0.is_finite()
        {
            return Err(ModelError::BadTimeChange("non-finite coefficient".into()));
        }
        if cat.trace() < 0 {
            return Err(ModelError::NegativeTrace(cat.matrix()));
        }
        let min_c = time_change.min_on_grid(MIN_C_GRID);
        if min_c <= 0.0 {
            return Err(ModelError::NonPositiveTimeChange(min_c));
        }
        Ok(MappingTorusFlow {
            cat,
            time_change,
            tol: 1e-11,
        })
    }

    pub fn c(&self, tau: f64) -> f64 {
        self.time_change.eval(tau)
    }

    /// Canonical representative of `(x, tau)` for arbitrary real `tau`.
    pub fn point(&self, x: [f64; 2], tau: f64) -> BasePoint {
        let n = tau.floor();
        let t = tau - n;
        let x = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
        let (t, n) = if t >= 1.0 { (0.0, n + 1.0) } else { (t, n) };
        BasePoint {
            x: self.cat.act_torus(x, n as i64),
            tau: t,
        }
    }

    pub fn vector_field(&self, p: &BasePoint) -> [f64; 3] {
        [0.0, 0.0, self.c(p.tau)]
    }

    /// Return time of the suspension, `int_0^1 dtau / c(tau)`.
    pub fn mean_return_time(&self) -> f64 {
        if self.time_change.is_constant() {
            return 1.0 / self.time_change.c0;
        }
        gauss_kronrod(|t| 1.0 / self.c(t), 0.0, 1.0, 1e-15, 40)
            .expect("1/c is smooth and bounded")
    }

    /// Integrates `tau' = c(tau)` on the universal cover and returns the
    /// lifted endpoint.
    pub fn lifted_tau(&self, tau0: f64, t: f64) -> Result<f64, ModelError> {
        if t == 0.0 {
            return Ok(tau0);
        }
        if !t.is_finite() {
            return Err(ModelError::NonConvergence(format!("non-finite time {t}")));
        }
        if self.time_change.is_constant() {
            return Ok(tau0 + self.time_change.c0 * t);
        }
        dormand_prince(|y| self.c(y), tau0, t, self.tol)
    }

    pub fn flow_step(&self, p: &BasePoint, t: f64) -> Result<FlowStep, ModelError> {
        let lifted = self.lifted_tau(p.tau, t)?;
        let n = lifted.floor();
        let mut tau = lifted - n;
        let mut n = n as i64;
        if tau >= 1.0 {
            tau = 0.0;
            n += 1;
        }
        Ok(FlowStep {
            point: BasePoint {
                x: self.cat.act_torus(p.x, n),
                tau,
            },
            crossings: n,
        })
    }

    pub fn flow_map(&self, p: &BasePoint, t: f64) -> Result<BasePoint, ModelError> {
        Ok(self.flow_step(p, t)?.point)
    }

    /// `D phi_t` at `p` in `(x1, x2, tau)` coordinates.
    pub fn differential(&self, p: &BasePoint, t: f64) -> Result<Mat3, ModelError> {
        let step = self.flow_step(p, t)?;
        let h = self.cat.power(step.crossings);
        // The variational equation of tau' = c(tau) integrates to
        // c(tau_t) / c(tau_0).
        let dtau = self.c(step.point.tau) / self.c(p.tau);
        Ok([
            [h[0][0], h[0][1], 0.0],
            [h[1][0], h[1][1], 0.0],
            [0.0, 0.0, dtau],
        ])
    }

    /// The invariant splitting `(E_u, E_s, E_0)` as unit vectors.
    pub fn anosov_splitting(&self, p: &BasePoint) -> [[f64; 3]; 3] {
        let _ = p;
        let (u, s) = (self.cat.e_u, self.cat.e_s);
        [[u[0], u[1], 0.0], [s[0], s[1], 0.0], [0.0, 0.0, 1.0]]
    }

    /// Recovers `E_u(p)` as the limit of `D phi_t [v0]` started at
    /// `phi_{-t}(p)`. The iteration proceeds in unit-time chunks with
    /// renormalisation and stops once the direction is within `tol` of `E_u`.
    pub fn splitting_via_limit(
        &self,
        p: &BasePoint,
        v0: [f64; 3],
        t_max: f64,
        tol: f64,
    ) -> Result<[f64; 3], ModelError> {
        const SEED_THRESHOLD: f64 = 1e-6;
        let frames = self.anosov_splitting(p);
        let coords = frame_coords(&frames, v0);
        let norm = norm3(v0);
        let unstable_angle = (coords[0].abs() * norm3(frames[0]) / norm).asin();
        if !(unstable_angle > SEED_THRESHOLD) {
            return Err(ModelError::DegenerateSeed(SEED_THRESHOLD));
        }
        let chunks = t_max.ceil().max(1.0) as usize;
        let dt = t_max / chunks as f64;
        let mut q = self.flow_map(p, -t_max)?;
        let mut v = scale3(v0, 1.0 / norm);
        for _ in 0..chunks {
            let d = self.differential(&q, dt)?;
            v = mat_vec(&d, v);
            let n = norm3(v);
            v = scale3(v, 1.0 / n);
            q = self.flow_map(&q, dt)?;
        }
        let e_u = frames[0];
        if dot3(v, e_u) < 0.0 {
            v = scale3(v, -1.0);
        }
        let angle = angle3(v, e_u);
        if angle > tol {
            return Err(ModelError::NonConvergence(format!(
                "angle to E_u is {angle:e} after t = {t_max}"
            )));
        }
        Ok(v)
    }

    /// The Anosov one-form: `ker alpha = E_u + E_s`, `alpha(V) = 1`.
    pub fn anosov_one_form(&self, p: &BasePoint) -> [f64; 3] {
        [0.0, 0.0, 1.0 / self.c(p.tau)]
    }

    /// Fits `theta` and `c_hyp` from the decay of `|D phi_t e_s|` along
    /// the given base points over `t` in `(0, t_max]`.
    pub fn fit_hyperbolicity(
        &self,
        points: &[BasePoint],
        t_max: f64,
        steps: usize,
    ) -> Result<HyperbolicityFit, ModelError> {
        let mut ts = Vec::new();
        let mut logs = Vec::new();
        for p in points {
            let v = self.anosov_splitting(p)[1];
            for i in 1..=steps {
                let t = t_max * i as f64 / steps as f64;
                let d = self.differential(p, t)?;
                ts.push(t);
                logs.push(norm3(mat_vec(&d, v)).ln());
            }
        }
        let n = ts.len() as f64;
        let mt = ts.iter().sum::<f64>() / n;
        let ml = logs.iter().sum::<f64>() / n;
        let sxy: f64 = ts.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
        let sxx: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
        let theta = -sxy / sxx;
        let c_hyp = ts
            .iter()
            .zip(&logs)
            .map(|(t, l)| (l + theta * t).exp())
            .fold(1.0f64, f64::max);
        Ok(HyperbolicityFit { c_hyp, theta })
    }
}

/// Adaptive Dormand-Prince 5(4) integration of the scalar autonomous ODE
/// `y' = f(y)` from `y0` over time `t` (either sign).
pub fn dormand_prince<F: Fn(f64) -> f64>(
    f: F,
    y0: f64,
    t: f64,
    atol: f64,
) -> Result<f64, ModelError> {
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let dir = t.signum();
    let total = t.abs();
    let mut y = y0;
    let mut done = 0.0;
    let mut h = total.min(0.05);
    let mut k1 = f(y);
    let mut iterations = 0usize;
    while done < total {
        iterations += 1;
        if iterations > 10_000_000 {
            return Err(ModelError::NonConvergence("too many steps".into()));
        }
        if h < 1e-14 * total.max(1.0) {
            return Err(ModelError::NonConvergence(format!(
                "step size underflow at t = {done}"
            )));
        }
        let h_eff = h.min(total - done);
        let hs = h_eff * dir;
        let k2 = f(y + hs * A21 * k1);
        let k3 = f(y + hs * (A31 * k1 + A32 * k2));
        let k4 = f(y + hs * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y_new = y + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        let k7 = f(y_new);
        let err = (hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)).abs();
        let scale = atol;
        if err <= scale {
            y = y_new;
            done += h_eff;
            k1 = k7;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h = h_eff * factor;
    }
    Ok(y)
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [dot3(m[0], v), dot3(m[1], v), dot3(m[2], v)]
}

/// Angle between two lines (not oriented), in `[0, pi/2]`.
pub fn angle3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    norm3(c).atan2(dot3(a, b).abs())
}

/// Coordinates of `v` in the (not necessarily orthogonal) frame.
pub fn frame_coords(frame: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let m = nalgebra::Matrix3::from_fn(|i, j| frame[j][i]);
    let x = m
        .lu()
        .solve(&nalgebra::Vector3::new(v[0], v[1], v[2]))
        .expect("Anosov frame is a basis");
    [x[0], x[1], x[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_flow() -> MappingTorusFlow {
        MappingTorusFlow::new(CatMap::standard(), TimeChange::cosine(1.0, 0.2)).unwrap()
    }

    #[test]
    fn cat_map_eigen_data() {
        let a = CatMap::standard();
        let golden = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((a.lambda_u - golden).abs() < 1e-14);
        assert!((a.lambda_u * a.lambda_s - 1.0).abs() < 1e-14);
        let m = a.power(1);
        for (v, l) in [(a.e_u, a.lambda_u), (a.e_s, a.lambda_s)] {
            let r0 = m[0][0] * v[0] + m[0][1] * v[1] - l * v[0];
            let r1 = m[1][0] * v[0] + m[1][1] * v[1] - l * v[1];
            assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12);
        }
        // Covector pairings.
        let pair = |c: [f64; 2], v: [f64; 2]| c[0] * v[0] + c[1] * v[1];
        assert!(pair(a.cov_u, a.e_u).abs() < 1e-14);
        assert!(pair(a.cov_s, a.e_s).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            CatMap::new(1, 1, 0, 1),
            Err(ModelError::NotHyperbolic(..))
        ));
        assert!(matches!(
            CatMap::new(2, 1, 1, 2),
            Err(ModelError::NotUnimodular(..))
        ));
        assert!(CatMap::new(-3, 1, -1, 0).is_ok());
    }

    #[test]
    fn rejects_nonpositive_time_change() {
        let r = MappingTorusFlow::new(CatMap::standard(), TimeChange::cosine(1.0, 1.5));
        assert!(matches!(r, Err(ModelError::NonPositiveTimeChange(_))));
    }

    #[test]
    fn vector_field_examples() {
        let unit = MappingTorusFlow::new(CatMap::standard(), TimeChange::constant(1.0)).unwrap();
        let p = unit.point([0.3, 0.7], 0.4);
        assert_eq!(unit.vector_field(&p), [0.0, 0.0, 1.0]);
        let f = cos_flow();
        assert!((f.vector_field(&f.point([0.0, 0.0], 0.0))[2] - 1.2).abs() < 1e-15);
        assert!((f.vector_field(&f.point([0.0, 0.0], 0.25))[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flow_map_examples() {
        let unit = MappingTorusFlow::new(CatMap::standard(), TimeChange::constant(1.0)).unwrap();
        let q = unit.flow_map(&unit.point([0.25, 0.5], 0.3), 0.4).unwrap();
        assert_eq!(q.x, [0.25, 0.5]);
        assert!((q.tau - 0.7).abs() < 1e-15);
        let q = unit.flow_map(&unit.point([0.25, 0.5], 0.0), 1.0).unwrap();
        assert!((q.x[0] - 0.0).abs() < 1e-15 && (q.x[1] - 0.75).abs() < 1e-15);
        assert!(q.tau.abs() < 1e-15);
    }

    #[test]
    fn one_period_returns_to_the_seam() {
        let f = cos_flow();
        // Independent oracle: composite Simpson on the periodic integrand.
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut tbar = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            tbar += w / f.c(i as f64 * h);
        }
        tbar *= h / 3.0;
        assert!((tbar - f.mean_return_time()).abs() < 1e-12);
        let lifted = f.lifted_tau(0.0, tbar).unwrap();
        assert!((lifted - 1.0).abs() < 1e-9, "lifted tau = {lifted}");
        let step = f.flow_step(&f.point([0.1, 0.2], 0.0), tbar + 1e-6).unwrap();
        assert_eq!(step.crossings, 1);
    }

    #[test]
    fn differential_examples() {
        let unit = MappingTorusFlow::new(CatMap::standard(), TimeChange::constant(1.0)).unwrap();
        let p = unit.point([0.1, 0.2], 0.0);
        let d = unit.differential(&p, 1.0).unwrap();
        assert_eq!(d[0], [2.0, 1.0, 0.0]);
        assert_eq!(d[1], [1.0, 1.0, 0.0]);
        assert_eq!(d[2], [0.0, 0.0, 1.0]);
        let d0 = unit.differential(&p, 0.0).unwrap();
        assert_eq!(d0, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let es = unit.anosov_splitting(&p)[1];
        let v = mat_vec(&unit.differential(&p, 3.0).unwrap(), es);
        assert!((norm3(v) - unit.cat.lambda_s.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn differential_tau_column_matches_finite_difference() {
        let f = cos_flow();
        let p = f.point([0.3, 0.6], 0.37);
        let t = 0.45;
        let d = f.differential(&p, t).unwrap();
        let eps = 1e-5;
        let up = f.lifted_tau(p.tau + eps, t).unwrap();
        let dn = f.lifted_tau(p.tau - eps, t).unwrap();
        assert!(((up - dn) / (2.0 * eps) - d[2][2]).abs() < 1e-6);
        let det = d[2][2] * (d[0][0] * d[1][1] - d[0][1] * d[1][0]);
        assert!(det > 0.0);
    }

    #[test]
    fn splitting_via_limit_examples() {
        let f = cos_flow();
        let p = f.point([0.2, 0.9], 0.3);
        let eu = f.anosov_splitting(&p)[0];
        let v = f.splitting_via_limit(&p, eu, 0.0, 1e-12).unwrap();
        assert!(angle3(v, eu) < 1e-14);
        let v = f.splitting_via_limit(&p, [1.0, 0.0, 0.0], 20.0, 1e-10).unwrap();
        assert!(angle3(v, eu) < 1e-10);
        let es = f.anosov_splitting(&p)[1];
        assert!(matches!(
            f.splitting_via_limit(&p, es, 20.0, 1e-10),
            Err(ModelError::DegenerateSeed(_))
        ));
    }

    #[test]
    fn one_form_examples() {
        let f = cos_flow();
        let p = f.point([0.5, 0.5], 0.0);
        let a = f.anosov_one_form(&p);
        assert!((a[2] - 1.0 / 1.2).abs() < 1e-15);
        assert!((dot3(a, f.vector_field(&p)) - 1.0).abs() < 1e-15);
        assert_eq!(dot3(a, f.anosov_splitting(&p)[0]), 0.0);
    }

    #[test]
    fn point_applies_seam_identification() {
        let f = cos_flow();
        let p = f.point([0.25, 0.5], 1.0);
        assert_eq!(p.tau, 0.0);
        assert!((p.x[0] - 0.0).abs() < 1e-15 && (p.x[1] - 0.75).abs() < 1e-15);
        let q = f.point([0.25, 0.5], -1.0);
        let back = f.point(q.x, q.tau + 1.0);
        assert!((back.x[0] - 0.25).abs() < 1e-12 && (back.x[1] - 0.5).abs() < 1e-12);
    }
}
