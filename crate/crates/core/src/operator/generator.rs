//! Matrix blocks of `H = -iV` per sector.
//!
//! In the neutral sector `H` acts on `e^{2 pi i j tau}` as `2 pi C D` with
//! `C` the Toeplitz matrix of the Fourier coefficients of `c` and
//! `D = diag(j)`. Orbit sectors carry `-i c(s mod 1) d/ds` on the line
//! `s = tau - p`; each unit cell is discretised with periodic Fourier modes
//! and an upwind penalty on the jump at its inflow edge.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;

use super::modes::{enumerate_orbits, ModeIndex, OrbitSector, SectorKey, Truncation};
use super::OperatorError;
use crate::linalg::{CMat, CVec};
use crate::model::{MappingTorusFlow, TimeChange};

/// Upwind penalty factor on the cell-edge jump.
pub const UPWIND_PENALTY: f64 = 2.0;

/// `C[i][l] = c_{i - l}` on indices `-j_max..=j_max`.
pub fn toeplitz(tc: &TimeChange, j_max: u32) -> CMat {
    let n = 2 * j_max as usize + 1;
    CMat::from_fn(n, n, |i, l| tc.fourier(i as i64 - l as i64))
}

/// `2 pi C D` on `|j| <= j_max`.
pub fn neutral_block(tc: &TimeChange, j_max: u32) -> CMat {
    let jm = j_max as i64;
    let mut m = toeplitz(tc, j_max);
    for (col, j) in (-jm..=jm).enumerate() {
        for r in 0..m.nrows() {
            m[(r, col)] *= TAU * j as f64;
        }
    }
    m
}

/// Diagonal block of one orbit cell: `2 pi C D - i sigma c(0) 1 1^T`.
pub fn cell_block(tc: &TimeChange, j_max: u32, sigma: f64) -> CMat {
    let mut m = neutral_block(tc, j_max);
    let pen = Complex64::new(0.0, -sigma * tc.eval(0.0));
    m.iter_mut().for_each(|z| *z += pen);
    m
}

/// Coupling from the upstream cell: `+i sigma c(0) 1 1^T`.
pub fn inflow_block(tc: &TimeChange, j_max: u32, sigma: f64) -> CMat {
    let n = 2 * j_max as usize + 1;
    CMat::from_element(n, n, Complex64::new(0.0, sigma * tc.eval(0.0)))
}

/// Block bidiagonal matrix of one sector. Cells are ordered by ascending
/// position `p`; `inflow[i]` couples cell `i + 1` into cell `i`, so the
/// dense matrix is block upper triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorMatrix {
    pub key: SectorKey,
    pub positions: Vec<i64>,
    pub j_max: u32,
    pub diag: Vec<CMat>,
    pub inflow: Vec<CMat>,
}

impl SectorMatrix {
    pub fn cell_dim(&self) -> usize {
        2 * self.j_max as usize + 1
    }

    pub fn dim(&self) -> usize {
        self.positions.len() * self.cell_dim()
    }

    pub fn modes(&self) -> Vec<ModeIndex> {
        let jm = self.j_max as i64;
        self.positions
            .iter()
            .flat_map(|&p| {
                (-jm..=jm).map(move |j| ModeIndex {
                    sector: self.key,
                    p,
                    j,
                })
            })
            .collect()
    }

    pub fn to_dense(&self) -> CMat {
        let (n, d) = (self.dim(), self.cell_dim());
        let mut m = CMat::zeros(n, n);
        for (i, b) in self.diag.iter().enumerate() {
            m.view_mut((i * d, i * d), (d, d)).copy_from(b);
        }
        for (i, b) in self.inflow.iter().enumerate() {
            m.view_mut((i * d, (i + 1) * d), (d, d)).copy_from(b);
        }
        m
    }

    /// Matrix-vector product using the block structure.
    pub fn apply(&self, v: &CVec) -> CVec {
        let d = self.cell_dim();
        let mut out = CVec::zeros(self.dim());
        for (i, b) in self.diag.iter().enumerate() {
            let vi = v.rows(i * d, d);
            if vi.iter().any(|z| *z != Complex64::new(0.0, 0.0)) {
                let mut oi = out.rows_mut(i * d, d);
                oi += b * vi;
            }
        }
        for (i, b) in self.inflow.iter().enumerate() {
            let vi = v.rows((i + 1) * d, d);
            if vi.iter().any(|z| *z != Complex64::new(0.0, 0.0)) {
                let mut oi = out.rows_mut(i * d, d);
                oi += b * vi;
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.inflow)
            .map(|b| b.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, h: f64) -> SectorMatrix {
        let s = Complex64::new(h, 0.0);
        SectorMatrix {
            diag: self.diag.iter().map(|b| b * s).collect(),
            inflow: self.inflow.iter().map(|b| b * s).collect(),
            ..self.clone()
        }
    }

    /// Diagonal similarity `W M W^{-1}` with `log_w[i]` the log-weights of
    /// cell `i`.
    pub fn conjugated(&self, log_w: &[Vec<f64>]) -> SectorMatrix {
        let conj = |b: &CMat, row: &[f64], col: &[f64]| {
            CMat::from_fn(b.nrows(), b.ncols(), |r, c| b[(r, c)] * (row[r] - col[c]).exp())
        };
        SectorMatrix {
            diag: self
                .diag
                .iter()
                .enumerate()
                .map(|(i, b)| conj(b, &log_w[i], &log_w[i]))
                .collect(),
            inflow: self
                .inflow
                .iter()
                .enumerate()
                .map(|(i, b)| conj(b, &log_w[i], &log_w[i + 1]))
                .collect(),
            ..self.clone()
        }
    }

    /// Dense dump: `u64` dimension, then row-major little-endian `(re, im)`
    /// pairs of `f64`.
    pub fn write_dense<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.to_dense();
        w.write_all(&(m.nrows() as u64).to_le_bytes())?;
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                w.write_all(&m[(r, c)].re.to_le_bytes())?;
                w.write_all(&m[(r, c)].im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

pub fn neutral_generator(flow: &MappingTorusFlow, j_max: u32) -> SectorMatrix {
    SectorMatrix {
        key: SectorKey::Neutral,
        positions: vec![0],
        j_max,
        diag: vec![neutral_block(&flow.time_change, j_max)],
        inflow: vec![],
    }
}

pub fn orbit_generator(flow: &MappingTorusFlow, sector: &OrbitSector, j_max: u32) -> SectorMatrix {
    let tc = &flow.time_change;
    let n = sector.positions.len();
    let b = cell_block(tc, j_max, UPWIND_PENALTY);
    let k = inflow_block(tc, j_max, UPWIND_PENALTY);
    SectorMatrix {
        key: sector.key(),
        positions: sector.positions.clone(),
        j_max,
        diag: vec![b; n],
        inflow: vec![k; n.saturating_sub(1)],
    }
}

/// Generator blocks for every sector of the truncation, neutral first.
pub fn build_generator(
    flow: &MappingTorusFlow,
    t: &Truncation,
) -> Result<Vec<SectorMatrix>, OperatorError> {
    let orbits = enumerate_orbits(&flow.cat, t)?;
    let mut out = vec![neutral_generator(flow, t.j_max)];
    out.extend(orbits.iter().map(|s| orbit_generator(flow, s, t.j_max)));
    Ok(out)
}
