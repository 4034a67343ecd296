//! The lift of the flow to the cotangent bundle.
//!
//! Covectors are stored as `(xi_x, eta)` in the fundamental domain. The
//! lifted flow acts by the inverse transpose of the differential, which for
//! this model is block diagonal: `(A^{-T})^n` on the horizontal part and
//! `c(tau_0) / c(tau_t)` on `eta`. The Hamiltonian `H0 = c(tau) eta` is
//! conserved.
//!
//! [`Adapted`] coordinates rescale the horizontal components by
//! `lambda_u^{+-tau}` so that they are continuous across the seam: in them
//! the lifted flow is exactly linear, `(zeta_u e^L, zeta_s e^{-L}, zeta_0)`
//! with `L = log(lambda_u) * (lifted tau advance)`.

use crate::model::{BasePoint, MappingTorusFlow, ModelError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CotangentPoint {
    pub base: BasePoint,
    pub xi_x: [f64; 2],
    pub eta: f64,
}

impl CotangentPoint {
    pub fn covector(&self) -> [f64; 3] {
        [self.xi_x[0], self.xi_x[1], self.eta]
    }

    pub fn scaled(&self, s: f64) -> Self {
        CotangentPoint {
            base: self.base,
            xi_x: [self.xi_x[0] * s, self.xi_x[1] * s],
            eta: self.eta * s,
        }
    }
}

/// Energy shell `{H0 = energy}`; `energy == 0` is the excluded case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyShell {
    pub energy: f64,
}

impl EnergyShell {
    pub fn is_degenerate(&self) -> bool {
        self.energy == 0.0
    }
}

/// Coordinates `(zeta_u, zeta_s, zeta_0)` of a covector in the adapted
/// frame. The adapted norm is the Euclidean norm of these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adapted(pub [f64; 3]);

impl Adapted {
    pub fn norm(&self) -> f64 {
        let z = self.0;
        (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt()
    }

    pub fn neg(&self) -> Adapted {
        Adapted([-self.0[0], -self.0[1], -self.0[2]])
    }

    /// Exact lifted flow in stretch time `l`.
    pub fn stretch(&self, l: f64) -> Adapted {
        let z = self.0;
        Adapted([z[0] * l.exp(), z[1] * (-l).exp(), z[2]])
    }
}

pub fn h0(flow: &MappingTorusFlow, q: &CotangentPoint) -> f64 {
    flow.c(q.base.tau) * q.eta
}

pub fn lifted_flow(
    flow: &MappingTorusFlow,
    q: &CotangentPoint,
    t: f64,
) -> Result<CotangentPoint, ModelError> {
    let step = flow.flow_step(&q.base, t)?;
    let xi_x = flow.cat.covector_push(q.xi_x, step.crossings);
    let eta = q.eta * flow.c(q.base.tau) / flow.c(step.point.tau);
    Ok(CotangentPoint {
        base: step.point,
        xi_x,
        eta,
    })
}

/// `(E*_u, E*_s, E*_0)` as unit covectors.
pub fn dual_splitting(flow: &MappingTorusFlow, p: &BasePoint) -> [[f64; 3]; 3] {
    let _ = p;
    let (u, s) = (flow.cat.cov_u, flow.cat.cov_s);
    [[u[0], u[1], 0.0], [s[0], s[1], 0.0], [0.0, 0.0, 1.0]]
}

/// The point `E alpha(p)` of the trapped set `K_E`.
pub fn trapped_point(flow: &MappingTorusFlow, p: &BasePoint, energy: f64) -> CotangentPoint {
    let a = flow.anosov_one_form(p);
    CotangentPoint {
        base: *p,
        xi_x: [a[0] * energy, a[1] * energy],
        eta: a[2] * energy,
    }
}

pub fn adapted(flow: &MappingTorusFlow, q: &CotangentPoint) -> Adapted {
    let [a, b] = flow.cat.covector_coords(q.xi_x);
    let g = flow.cat.lambda_u.powf(q.base.tau);
    Adapted([a * g, b / g, h0(flow, q)])
}

pub fn from_adapted(flow: &MappingTorusFlow, base: &BasePoint, z: &Adapted) -> CotangentPoint {
    let g = flow.cat.lambda_u.powf(base.tau);
    let xi_x = flow.cat.covector_from_coords([z.0[0] / g, z.0[1] * g]);
    CotangentPoint {
        base: *base,
        xi_x,
        eta: z.0[2] / flow.c(base.tau),
    }
}

/// Rate `dL/dt` converting flow time into stretch time at `tau`.
pub fn stretch_rate(flow: &MappingTorusFlow, tau: f64) -> f64 {
    flow.cat.lambda_u.ln() * flow.c(tau)
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub point: CotangentPoint,
    pub h0: f64,
}

pub fn trajectory(
    flow: &MappingTorusFlow,
    q: &CotangentPoint,
    times: &[f64],
) -> Result<Vec<TrajectoryRow>, ModelError> {
    times
        .iter()
        .map(|&t| {
            let p = lifted_flow(flow, q, t)?;
            Ok(TrajectoryRow {
                t,
                point: p,
                h0: h0(flow, &p),
            })
        })
        .collect()
}

pub const TRAJECTORY_HEADER: &str = "t,x1,x2,tau,xi1,xi2,eta,h0";

impl TrajectoryRow {
    pub fn csv(&self) -> String {
        let p = &self.point;
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t, p.base.x[0], p.base.x[1], p.base.tau, p.xi_x[0], p.xi_x[1], p.eta, self.h0
        )
    }
}
