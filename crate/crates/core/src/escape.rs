//! Order function `m`, escape function `G_m = m log sqrt(1 + f^2)` and its
//! derivative along the lifted flow.
//!
//! Everything is evaluated in [`Adapted`] coordinates, where the lifted flow
//! is the linear stretch `(zeta_u e^L, zeta_s e^{-L}, zeta_0)`. The two
//! averaged bumps `m1`, `m2` therefore have closed-form transition times and
//! only the transition window needs quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cotangent::{adapted, from_adapted, lifted_flow, stretch_rate, Adapted, CotangentPoint};
use crate::model::{BasePoint, MappingTorusFlow, ModelError};
use crate::quad::gauss_kronrod;

const QUAD_TOL: f64 = 1e-13;
const QUAD_DEPTH: u32 = 40;
/// Flow-time step of the centered difference in [`EscapeFunction::derivative`].
pub const FD_STEP: f64 = 1e-4;
/// Upper bound allowed for `X(G_m)` anywhere with `|xi| >= R`.
pub const XG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum EscapeError {
    #[error("invalid order parameters: {0}")]
    InvalidParams(String),
    #[error("adaptive quadrature did not converge for direction {0:?}")]
    QuadratureFailure([f64; 3]),
    #[error("{} samples violate the escape estimates", .0.len())]
    EstimateViolation(Vec<EscapeSample>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderParams {
    pub u: f64,
    pub n0: f64,
    pub s: f64,
    /// Averaging half-window, in stretch units `L`.
    pub t_avg: f64,
    /// Half-angle of the cones around `E*_u`, `E*_s`, `E*_0`.
    pub aperture: f64,
    /// Radius below which the estimates are not checked.
    pub radius: f64,
    pub symmetric: bool,
}

impl Default for OrderParams {
    fn default() -> Self {
        OrderParams {
            u: -8.0,
            n0: 0.0,
            s: 8.0,
            t_avg: 8.0,
            aperture: 0.1,
            radius: 50.0,
            symmetric: true,
        }
    }
}

impl OrderParams {
    pub fn validate(&self) -> Result<(), EscapeError> {
        let bad = |m: &str| Err(EscapeError::InvalidParams(m.to_string()));
        if !(self.u < self.n0 && self.n0 < self.s) {
            return bad("need u < n0 < s");
        }
        if !(self.t_avg > 0.0 && self.t_avg.is_finite()) {
            return bad("t_avg must be positive");
        }
        if !(self.aperture > 0.0 && self.aperture < std::f64::consts::FRAC_PI_4) {
            return bad("aperture must lie in (0, pi/4)");
        }
        if !(self.radius >= 1.0) {
            return bad("radius must be at least 1");
        }
        Ok(())
    }
}

/// C^3 smoothstep on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let t4 = t * t * t * t;
        t4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
    }
}

pub fn smoothstep_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let u = t * (1.0 - t);
        140.0 * u * u * u
    }
}

/// Which of the two averaged bumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bump {
    /// Zero near `E*_s`, one away from it; driven by `|zeta_s| / |zeta|`.
    M1,
    /// Zero away from `E*_u`, one near it; driven by `|zeta_u| / |zeta|`.
    M2,
}

/// A bump `m0` on the cosphere, nondecreasing along the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeBump {
    pub which: Bump,
    sin_a: f64,
    cos_a: f64,
}

impl ConeBump {
    pub fn new(which: Bump, aperture: f64) -> Self {
        ConeBump {
            which,
            sin_a: aperture.sin(),
            cos_a: aperture.cos(),
        }
    }

    pub fn ratio(&self, z: &Adapted) -> f64 {
        let n = z.norm();
        match self.which {
            Bump::M1 => z.0[1].abs() / n,
            Bump::M2 => z.0[0].abs() / n,
        }
    }

    pub fn eval(&self, z: &Adapted) -> f64 {
        let t = (self.ratio(z) - self.sin_a) / (self.cos_a - self.sin_a);
        match self.which {
            Bump::M1 => 1.0 - smoothstep(t),
            Bump::M2 => smoothstep(t),
        }
    }

    /// Stretch time at which the ratio along the orbit of `z` equals `rho`,
    /// or `None` if the ratio is constant along the orbit.
    fn crossing(&self, z: &Adapted, rho: f64) -> Option<f64> {
        let [a, b, c] = z.0;
        let (a2, b2, c2) = (a * a, b * b, c * c);
        let y = match self.which {
            Bump::M1 => {
                // b^2 / (a^2 y^2 + c^2 y + b^2) = rho^2
                if b == 0.0 || (a == 0.0 && c == 0.0) {
                    return None;
                }
                let k = 1.0 / (rho * rho) - 1.0;
                2.0 * b2 * k / (c2 + (c2 * c2 + 4.0 * a2 * b2 * k).sqrt())
            }
            Bump::M2 => {
                // a^2 y^2 / (a^2 y^2 + c^2 y + b^2) = rho^2
                if a == 0.0 || (b == 0.0 && c == 0.0) {
                    return None;
                }
                let r2 = rho * rho;
                (r2 * c2 + (r2 * r2 * c2 * c2 + 4.0 * a2 * (1.0 - r2) * r2 * b2).sqrt())
                    / (2.0 * a2 * (1.0 - r2))
            }
        };
        Some(0.5 * y.ln())
    }

    /// `(lo, hi)` with `m0 = 0` before `lo` and `m0 = 1` after `hi`.
    pub fn transition(&self, z: &Adapted) -> Option<(f64, f64)> {
        let (r_lo, r_hi) = match self.which {
            Bump::M1 => (self.cos_a, self.sin_a),
            Bump::M2 => (self.sin_a, self.cos_a),
        };
        Some((self.crossing(z, r_lo)?, self.crossing(z, r_hi)?))
    }

    /// `(1 / 2T) int_{-T}^{T} m0(z e^L) dL`.
    pub fn averaged(&self, z: &Adapted, t_avg: f64) -> Result<f64, EscapeError> {
        let z = unit(z);
        let Some((lo, hi)) = self.transition(&z) else {
            return Ok(self.eval(&z));
        };
        let mut total = (t_avg - hi.max(-t_avg)).max(0.0);
        let (a, b) = (lo.max(-t_avg), hi.min(t_avg));
        if a < b {
            total += gauss_kronrod(|l| self.eval(&z.stretch(l)), a, b, QUAD_TOL, QUAD_DEPTH)
                .ok_or(EscapeError::QuadratureFailure(z.0))?;
        }
        Ok(total / (2.0 * t_avg))
    }

    /// Derivative of [`ConeBump::averaged`] in stretch time.
    pub fn averaged_derivative(&self, z: &Adapted, t_avg: f64) -> f64 {
        let z = unit(z);
        (self.eval(&z.stretch(t_avg)) - self.eval(&z.stretch(-t_avg))) / (2.0 * t_avg)
    }
}

fn unit(z: &Adapted) -> Adapted {
    let n = z.norm();
    Adapted([z.0[0] / n, z.0[1] / n, z.0[2] / n])
}

/// Exact projective flow on adapted directions.
pub fn projective_flow_step(direction: &Adapted, l: f64) -> Adapted {
    unit(&direction.stretch(l))
}

/// Cone membership of a covector, by angle in adapted coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeLabel {
    Unstable,
    Stable,
    Neutral,
    Transit,
}

impl ConeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConeLabel::Unstable => "unstable",
            ConeLabel::Stable => "stable",
            ConeLabel::Neutral => "neutral",
            ConeLabel::Transit => "transit",
        }
    }
}

/// Angle between the line through `z` and coordinate axis `i`.
fn axis_angle(z: &Adapted, i: usize) -> f64 {
    let n = z.norm();
    (z.0[i].abs() / n).min(1.0).acos()
}

pub fn cone_label(z: &Adapted, aperture: f64) -> ConeLabel {
    if axis_angle(z, 2) <= aperture {
        ConeLabel::Neutral
    } else if axis_angle(z, 0) <= aperture {
        ConeLabel::Unstable
    } else if axis_angle(z, 1) <= aperture {
        ConeLabel::Stable
    } else {
        ConeLabel::Transit
    }
}

/// Cutoff in `|xi|`: 0 below 1/2, 1 above 1, smooth in `log |xi|`.
fn radial_cutoff(rho: f64) -> (f64, f64) {
    let t = (rho.ln() + std::f64::consts::LN_2) / std::f64::consts::LN_2;
    (
        smoothstep(t),
        smoothstep_derivative(t) / std::f64::consts::LN_2,
    )
}

#[derive(Debug, Clone)]
pub struct EscapeFunction {
    pub flow: MappingTorusFlow,
    pub params: OrderParams,
    m1: ConeBump,
    m2: ConeBump,
}

impl EscapeFunction {
    pub fn new(flow: MappingTorusFlow, params: OrderParams) -> Result<Self, EscapeError> {
        params.validate()?;
        Ok(EscapeFunction {
            m1: ConeBump::new(Bump::M1, params.aperture),
            m2: ConeBump::new(Bump::M2, params.aperture),
            flow,
            params,
        })
    }

    pub fn bumps(&self) -> (ConeBump, ConeBump) {
        (self.m1, self.m2)
    }

    fn combine(&self, m1: f64, m2: f64) -> f64 {
        let p = &self.params;
        p.s + (p.n0 - p.s) * m1 + (p.u - p.n0) * m2
    }

    fn tilde_one(&self, dir: &Adapted) -> Result<f64, EscapeError> {
        let t = self.params.t_avg;
        Ok(self.combine(self.m1.averaged(dir, t)?, self.m2.averaged(dir, t)?))
    }

    /// `m~` on the cosphere, symmetrised if requested.
    pub fn order_direction(&self, dir: &Adapted) -> Result<f64, EscapeError> {
        let v = self.tilde_one(dir)?;
        if self.params.symmetric {
            Ok(0.5 * (v + self.tilde_one(&dir.neg())?))
        } else {
            Ok(v)
        }
    }

    /// Stretch-time derivative of `m~`.
    pub fn order_direction_derivative(&self, dir: &Adapted) -> f64 {
        let p = &self.params;
        let one = |d: &Adapted| {
            (p.n0 - p.s) * self.m1.averaged_derivative(d, p.t_avg)
                + (p.u - p.n0) * self.m2.averaged_derivative(d, p.t_avg)
        };
        if p.symmetric {
            0.5 * (one(dir) + one(&dir.neg()))
        } else {
            one(dir)
        }
    }

    pub fn order_adapted(&self, z: &Adapted) -> Result<f64, EscapeError> {
        let rho = z.norm();
        if rho <= 0.5 {
            return Ok(0.0);
        }
        Ok(radial_cutoff(rho).0 * self.order_direction(z)?)
    }

    pub fn order_function(&self, q: &CotangentPoint) -> Result<f64, EscapeError> {
        self.order_adapted(&adapted(&self.flow, q))
    }

    /// Weight of the `|H0|` branch of `f`: 1 within `aperture` of `E*_0`,
    /// 0 beyond twice that.
    fn neutral_weight(&self, z: &Adapted) -> (f64, f64) {
        let a = self.params.aperture;
        let t = (axis_angle(z, 2) - a) / a;
        (1.0 - smoothstep(t), -smoothstep_derivative(t) / a)
    }

    pub fn f_adapted(&self, z: &Adapted) -> f64 {
        let (chi, _) = self.neutral_weight(z);
        chi * z.0[2].abs() + (1.0 - chi) * z.norm()
    }

    pub fn f_interpolation(&self, q: &CotangentPoint) -> f64 {
        self.f_adapted(&adapted(&self.flow, q))
    }

    pub fn value_adapted(&self, z: &Adapted) -> Result<f64, EscapeError> {
        let m = self.order_adapted(z)?;
        if m == 0.0 {
            return Ok(0.0);
        }
        let f = self.f_adapted(z);
        Ok(m * 0.5 * (f * f).ln_1p())
    }

    /// `G_m(x, xi)`.
    pub fn escape_value(&self, q: &CotangentPoint) -> Result<f64, EscapeError> {
        self.value_adapted(&adapted(&self.flow, q))
    }

    /// `X(G_m)` by a Richardson-extrapolated centered difference along the
    /// lifted flow.
    pub fn escape_derivative(&self, q: &CotangentPoint) -> Result<f64, EscapeError> {
        let g = |t: f64| -> Result<f64, EscapeError> {
            self.escape_value(&lifted_flow(&self.flow, q, t)?)
        };
        let d = |h: f64| -> Result<f64, EscapeError> { Ok((g(h)? - g(-h)?) / (2.0 * h)) };
        let (d1, d2) = (d(FD_STEP)?, d(0.5 * FD_STEP)?);
        Ok((4.0 * d2 - d1) / 3.0)
    }

    /// `X(G_m) = X(m) log sqrt(1 + f^2) + m X(log sqrt(1 + f^2))`, assembled
    /// from closed-form pieces.
    pub fn escape_derivative_chain(&self, q: &CotangentPoint) -> Result<f64, EscapeError> {
        let z = adapted(&self.flow, q);
        let rate = stretch_rate(&self.flow, q.base.tau);
        let rho = z.norm();
        if rho <= 0.5 {
            return Ok(0.0);
        }
        let [zu, zs, z0] = z.0;
        let grow = zu * zu - zs * zs;
        let (kappa, dkappa) = radial_cutoff(rho);
        let mt = self.order_direction(&z)?;
        let dm = dkappa * grow / (rho * rho) * mt + kappa * self.order_direction_derivative(&z);
        let m = kappa * mt;

        let (chi, dchi) = self.neutral_weight(&z);
        let p = zu.hypot(zs);
        let dtheta = if p > 0.0 {
            z0.abs() * (grow / p) / (rho * rho)
        } else {
            0.0
        };
        let f = chi * z0.abs() + (1.0 - chi) * rho;
        let df = dchi * dtheta * (z0.abs() - rho) + (1.0 - chi) * grow / rho;
        let ell = 0.5 * (f * f).ln_1p();
        let dell = f * df / (1.0 + f * f);
        Ok(rate * (dm * ell + m * dell))
    }
}

/// One sample of the estimate survey.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeSample {
    pub x: [f64; 2],
    pub tau: f64,
    pub xi: [f64; 3],
    pub norm: f64,
    pub label: ConeLabel,
    pub m: f64,
    pub g: f64,
    pub xg: f64,
}

pub const ESCAPE_CSV_HEADER: &str = "x1,x2,tau,xi1,xi2,eta,norm,label,m,g,xg";

impl EscapeSample {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.x[0],
            self.x[1],
            self.tau,
            self.xi[0],
            self.xi[1],
            self.xi[2],
            self.norm,
            self.label.as_str(),
            self.m,
            self.g,
            self.xg
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeReport {
    pub samples: Vec<EscapeSample>,
    /// `min(-X(G_m))` over samples outside the neutral cone.
    pub c_m: f64,
    /// `c_m / min(|u|, s)`.
    pub c_fit: f64,
    pub min_xg: f64,
    pub max_xg: f64,
    /// Indices of samples violating either estimate.
    pub violations: Vec<usize>,
}

impl EscapeReport {
    pub fn outside_neutral(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.label != ConeLabel::Neutral)
            .count()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(ESCAPE_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&s.csv());
            out.push('\n');
        }
        out
    }
}

/// Uniform direction in the cap of half-angle `a` around `+-E*_0`.
fn neutral_direction<R: Rng>(rng: &mut R, a: f64) -> Adapted {
    let cos_t = 1.0 - rng.random::<f64>() * (1.0 - a.cos());
    let sin_t = (1.0 - cos_t * cos_t).sqrt();
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    Adapted([sin_t * phi.cos(), sin_t * phi.sin(), sign * cos_t])
}

fn sphere_direction<R: Rng>(rng: &mut R) -> Adapted {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let r = (1.0 - z * z).sqrt();
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    Adapted([r * phi.cos(), r * phi.sin(), z])
}

impl EscapeFunction {
    /// Random phase-space points with `|xi|` log-uniform in `[R, 100 R]`:
    /// `outside` of them outside the neutral cone plus `outside / 10` inside.
    pub fn survey_points(&self, outside: usize, seed: u64) -> Vec<CotangentPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.params.radius;
        let a = self.params.aperture;
        let mut pts = Vec::with_capacity(outside + outside / 10);
        let base = |rng: &mut ChaCha8Rng, dir: Adapted| {
            let norm = r * (100f64.ln() * rng.random::<f64>()).exp();
            let b = self.flow.point([rng.random(), rng.random()], rng.random());
            let z = Adapted([dir.0[0] * norm, dir.0[1] * norm, dir.0[2] * norm]);
            from_adapted(&self.flow, &b, &z)
        };
        let mut n = 0;
        while n < outside {
            let d = sphere_direction(&mut rng);
            if cone_label(&d, a) == ConeLabel::Neutral {
                continue;
            }
            pts.push(base(&mut rng, d));
            n += 1;
        }
        for _ in 0..outside / 10 {
            let d = neutral_direction(&mut rng, a);
            pts.push(base(&mut rng, d));
        }
        pts
    }

    fn sample(&self, q: &CotangentPoint) -> Result<EscapeSample, EscapeError> {
        let z = adapted(&self.flow, q);
        Ok(EscapeSample {
            x: q.base.x,
            tau: q.base.tau,
            xi: q.covector(),
            norm: z.norm(),
            label: cone_label(&z, self.params.aperture),
            m: self.order_adapted(&z)?,
            g: self.value_adapted(&z)?,
            xg: self.escape_derivative(q)?,
        })
    }

    /// Evaluates `m`, `G_m`, `X(G_m)` on [`EscapeFunction::survey_points`]
    /// and summarises, without failing on violations.
    pub fn escape_survey(&self, sample_count: usize, seed: u64) -> Result<EscapeReport, EscapeError> {
        let pts = self.survey_points(sample_count, seed);
        let samples = pts
            .par_iter()
            .map(|q| self.sample(q))
            .collect::<Result<Vec<_>, _>>()?;
        let mut c_m = f64::INFINITY;
        let (mut min_xg, mut max_xg) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut violations = vec![];
        for (i, s) in samples.iter().enumerate() {
            min_xg = min_xg.min(s.xg);
            max_xg = max_xg.max(s.xg);
            let outside = s.label != ConeLabel::Neutral;
            if outside {
                c_m = c_m.min(-s.xg);
            }
            if s.xg > XG_TOLERANCE || (outside && s.xg >= 0.0) {
                violations.push(i);
            }
        }
        let p = &self.params;
        Ok(EscapeReport {
            c_fit: c_m / p.u.abs().min(p.s),
            c_m,
            min_xg,
            max_xg,
            samples,
            violations,
        })
    }

    /// Checks `X(G_m) < -C_m < 0` outside the neutral cone and
    /// `X(G_m) <= 1e-9` everywhere, on at least `sample_count` points.
    pub fn verify_escape_estimates(
        &self,
        sample_count: usize,
        seed: u64,
    ) -> Result<EscapeReport, EscapeError> {
        let report = self.escape_survey(sample_count, seed)?;
        if report.violations.is_empty() {
            Ok(report)
        } else {
            Err(EscapeError::EstimateViolation(
                report
                    .violations
                    .iter()
                    .map(|&i| report.samples[i].clone())
                    .collect(),
            ))
        }
    }
}

/// A cotangent point at `base` with adapted coordinates `z`.
pub fn point_at(flow: &MappingTorusFlow, base: BasePoint, z: [f64; 3]) -> CotangentPoint {
    from_adapted(flow, &base, &Adapted(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CatMap, TimeChange};
    use proptest::prelude::{prop_assert, prop_assume, proptest, ProptestConfig};

    fn esc(params: OrderParams) -> EscapeFunction {
        let flow =
            MappingTorusFlow::new(CatMap::standard(), TimeChange::cosine(1.0, 0.2)).unwrap();
        EscapeFunction::new(flow, params).unwrap()
    }

    fn base(e: &EscapeFunction) -> BasePoint {
        e.flow.point([0.3, 0.6], 0.45)
    }

    #[test]
    fn smoothstep_is_c1_at_the_ends() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        let fd = (smoothstep(0.3 + h) - smoothstep(0.3 - h)) / (2.0 * h);
        assert!((fd - smoothstep_derivative(0.3)).abs() < 1e-8);
    }

    #[test]
    fn params_are_validated() {
        let p = OrderParams {
            n0: 9.0,
            ..OrderParams::default()
        };
        assert!(matches!(p.validate(), Err(EscapeError::InvalidParams(_))));
        let p = OrderParams {
            aperture: 0.9,
            ..OrderParams::default()
        };
        assert!(p.validate().is_err());
        assert!(OrderParams::default().validate().is_ok());
    }

    #[test]
    fn projective_flow_fixed_points_and_limit() {
        for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            let d = projective_flow_step(&Adapted(axis), 3.7);
            assert!((d.0[0] - axis[0]).abs() + (d.0[1] - axis[1]).abs() < 1e-15);
        }
        let d = projective_flow_step(&Adapted([0.3, 0.8, 0.52]), 10.0);
        // Distance to the E*_u + E*_0 plane.
        assert!(d.0[1].abs() < 1e-6);
    }

    #[test]
    fn transition_times_match_the_ratio() {
        let z = Adapted([0.2, 0.9, -0.4]);
        for which in [Bump::M1, Bump::M2] {
            let b = ConeBump::new(which, 0.1);
            let (lo, hi) = b.transition(&z).unwrap();
            assert!(lo < hi);
            let r_lo = b.ratio(&z.stretch(lo));
            let r_hi = b.ratio(&z.stretch(hi));
            let (e_lo, e_hi) = match which {
                Bump::M1 => (0.1f64.cos(), 0.1f64.sin()),
                Bump::M2 => (0.1f64.sin(), 0.1f64.cos()),
            };
            assert!((r_lo - e_lo).abs() < 1e-12 && (r_hi - e_hi).abs() < 1e-12);
            assert!(b.eval(&z.stretch(lo - 0.1)) == 0.0);
            assert!(b.eval(&z.stretch(hi + 0.1)) == 1.0);
        }
    }

    #[test]
    fn averaged_order_matches_brute_force_quadrature() {
        let b = ConeBump::new(Bump::M1, 0.1);
        let z = Adapted([0.4, 0.6, 0.2]);
        let got = b.averaged(&z, 8.0).unwrap();
        // Composite midpoint rule on the whole window.
        let n = 200_000;
        let h = 16.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            acc += b.eval(&unit(&z).stretch(-8.0 + (i as f64 + 0.5) * h));
        }
        assert!((got - acc * h / 16.0).abs() < 1e-8);
    }

    #[test]
    fn averaged_order_limits() {
        let b1 = ConeBump::new(Bump::M1, 0.1);
        let b2 = ConeBump::new(Bump::M2, 0.1);
        // Deep in the basin where m0 = 1 for the whole window.
        assert!(b1.averaged(&Adapted([1.0, 1e-9, 0.0]), 8.0).unwrap() > 1.0 - 1e-12);
        assert!(b2.averaged(&Adapted([1.0, 1e-9, 0.0]), 8.0).unwrap() > 1.0 - 1e-12);
        // On the repelling axis.
        assert!(b1.averaged(&Adapted([0.0, 1.0, 0.0]), 8.0).unwrap() < 1e-12);
        assert!(b2.averaged(&Adapted([0.0, 1.0, 0.3]), 8.0).unwrap() < 1e-12);
        // Mid-basin direction crosses the whole transition inside the window.
        let mid = Adapted([1.0, 1.0, 0.0]);
        assert!(b1.averaged_derivative(&mid, 8.0) >= 1.0 / 16.0 - 1e-12);
    }

    #[test]
    fn averaged_derivative_matches_difference_quotient() {
        let b = ConeBump::new(Bump::M2, 0.1);
        let z = Adapted([0.05, 0.7, 0.3]);
        let h = 1e-4;
        let fd = (b.averaged(&z.stretch(h), 8.0).unwrap() - b.averaged(&z.stretch(-h), 8.0).unwrap())
            / (2.0 * h);
        assert!((fd - b.averaged_derivative(&z, 8.0)).abs() < 1e-7);
    }

    #[test]
    fn order_function_cone_values() {
        let e = esc(OrderParams::default());
        let p = base(&e);
        let at = |z| e.order_function(&point_at(&e.flow, p, z)).unwrap();
        assert!((at([5.0, 0.0, 0.0]) + 8.0).abs() < 1e-12);
        assert!((at([0.0, 5.0, 0.0]) - 8.0).abs() < 1e-12);
        assert!(at([0.0, 0.0, 5.0]).abs() < 1e-12);
        assert_eq!(at([0.1, 0.2, 0.3]), 0.0);
        // Deep inside the unstable cone the value is below u / 2. The cone
        // where this holds has angle of order e^{-T/2} for the centered
        // average.
        let v = at([5.0, 1e-4, 1e-4]);
        assert!(v < -4.0, "{v}");
    }

    #[test]
    fn combination_formula() {
        let e = esc(OrderParams {
            n0: 1.0,
            ..OrderParams::default()
        });
        assert_eq!(e.combine(0.0, 0.0), 8.0);
        assert_eq!(e.combine(1.0, 0.0), 1.0);
        assert_eq!(e.combine(1.0, 1.0), -8.0);
    }

    #[test]
    fn f_interpolation_examples() {
        let e = esc(OrderParams::default());
        let p = base(&e);
        let q = point_at(&e.flow, p, [0.0, 7.0, 0.0]);
        assert!((e.f_interpolation(&q) - 7.0).abs() < 1e-12);
        let t = crate::cotangent::trapped_point(&e.flow, &p, 3.0);
        assert!((e.f_interpolation(&t) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn escape_value_examples() {
        let e = esc(OrderParams::default());
        let p = base(&e);
        assert_eq!(e.escape_value(&point_at(&e.flow, p, [0.2, 0.1, 0.3])).unwrap(), 0.0);
        let r = 1f64.exp();
        let g = e.escape_value(&point_at(&e.flow, p, [0.0, r, 0.0])).unwrap();
        let expect = 8.0 * (1.0 + r * r).sqrt().ln();
        assert!((g - expect).abs() < 1e-12);
        let q = point_at(&e.flow, p, [3.0, -2.0, 1.5]);
        let a = e.escape_value(&q).unwrap();
        let b = e.escape_value(&q.scaled(-1.0)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn derivative_vanishes_on_the_trapped_set() {
        let e = esc(OrderParams::default());
        let p = base(&e);
        let t = crate::cotangent::trapped_point(&e.flow, &p, 200.0);
        assert!(e.escape_derivative(&t).unwrap().abs() < 1e-6);
    }

    #[test]
    fn derivative_is_negative_deep_in_the_cones() {
        let e = esc(OrderParams::default());
        let p = base(&e);
        let r = e.params.radius;
        let xu = e.escape_derivative(&point_at(&e.flow, p, [r, 0.01, 0.02])).unwrap();
        let xs = e.escape_derivative(&point_at(&e.flow, p, [0.02, r, -0.01])).unwrap();
        assert!(xu < -1.0 && xs < -1.0, "{xu} {xs}");
    }

    #[test]
    fn finite_difference_matches_chain_rule() {
        let e = esc(OrderParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let d = sphere_direction(&mut rng);
            let s = 60.0;
            let b = e.flow.point([rng.random(), rng.random()], rng.random());
            let q = point_at(&e.flow, b, [d.0[0] * s, d.0[1] * s, d.0[2] * s]);
            let fd = e.escape_derivative(&q).unwrap();
            let ch = e.escape_derivative_chain(&q).unwrap();
            assert!((fd - ch).abs() < 1e-6 * (1.0 + ch.abs()), "{fd} {ch}");
        }
        // Inside the cutoff ramp as well.
        let q = point_at(&e.flow, base(&e), [0.5, 0.4, 0.2]);
        let (fd, ch) = (e.escape_derivative(&q).unwrap(), e.escape_derivative_chain(&q).unwrap());
        assert!((fd - ch).abs() < 1e-6, "{fd} {ch}");
    }

    #[test]
    fn small_survey_passes_and_scales_linearly() {
        let e = esc(OrderParams::default());
        let r = e.verify_escape_estimates(300, 11).unwrap();
        assert!(r.c_m > 0.0 && r.max_xg <= XG_TOLERANCE);
        assert_eq!(r.outside_neutral(), 300);
        let e2 = esc(OrderParams {
            u: -16.0,
            s: 16.0,
            ..OrderParams::default()
        });
        let r2 = e2.escape_survey(300, 11).unwrap();
        assert!((r2.c_m / r.c_m - 2.0).abs() < 1e-6);
        assert_eq!(r.csv().lines().count(), r.samples.len() + 1);
    }

    #[test]
    fn monotone_on_a_cosphere_grid() {
        let e = esc(OrderParams::default());
        for i in 0..24 {
            for j in 0..48 {
                let th = std::f64::consts::PI * (i as f64 + 0.5) / 24.0;
                let ph = std::f64::consts::TAU * j as f64 / 48.0;
                let d = Adapted([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                assert!(e.order_direction_derivative(&d) <= 1e-13);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn order_in_range_and_homogeneous(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, s in 1.5f64..50.0,
        ) {
            prop_assume!(a * a + b * b + c * c > 1e-4);
            let e = esc(OrderParams::default());
            let n = (a * a + b * b + c * c).sqrt();
            let z = Adapted([a / n * s, b / n * s, c / n * s]);
            let m = e.order_adapted(&z).unwrap();
            prop_assert!((-8.0..=8.0).contains(&m));
            let z2 = Adapted([z.0[0] * 2.0, z.0[1] * 2.0, z.0[2] * 2.0]);
            prop_assert!((e.order_adapted(&z2).unwrap() - m).abs() < 1e-12);
            prop_assert!((e.f_adapted(&z2) - 2.0 * e.f_adapted(&z)).abs() < 1e-12 * s);
        }
    }
}
