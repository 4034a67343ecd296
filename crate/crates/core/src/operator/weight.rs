//! The anisotropic weight and the spectrum of the weighted generator.
//!
//! The weight is diagonal in the mode basis, `w = exp(G_m)` at the phase
//! point `(x_bar, tau_bar; 2 pi h (k_p, j))`. Conjugating by a diagonal
//! matrix is a similarity, so the eigenvalues of every truncated block are
//! weight-independent; the weight changes eigenvectors, conditioning and
//! pseudospectra.

use num_complex::Complex64;

use super::generator::SectorMatrix;
use super::modes::{orbit_frequency, SectorKey};
use super::OperatorError;
use crate::cotangent::CotangentPoint;
use crate::escape::EscapeFunction;
use crate::linalg::{cluster, eigendecompose, CVec};
use crate::model::BasePoint;

/// Largest admissible `|log w|`.
pub const MAX_LOG_WEIGHT: f64 = 700.0;
/// Eigenvalues closer than this (unscaled units) are one cluster.
pub const CLUSTER_RADIUS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGenerator {
    pub h: f64,
    /// `h H`.
    pub generator: SectorMatrix,
    /// `h W H W^{-1}`.
    pub weighted: SectorMatrix,
    /// `G_m` per cell and mode.
    pub log_weights: Vec<Vec<f64>>,
}

impl WeightedGenerator {
    pub fn key(&self) -> SectorKey {
        self.weighted.key
    }

    /// `log` of the condition number of `W`.
    pub fn log_condition(&self) -> f64 {
        let all = self.log_weights.iter().flatten();
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
        hi - lo
    }
}

/// Phase-space covector `2 pi h (k_p, j)` of a mode.
pub fn mode_covector(
    base: &BasePoint,
    k0: [i64; 2],
    cat: &crate::model::CatMap,
    p: i64,
    j: i64,
    h: f64,
) -> CotangentPoint {
    let k = if k0 == [0, 0] {
        k0
    } else {
        orbit_frequency(cat, k0, p)
    };
    let s = std::f64::consts::TAU * h;
    CotangentPoint {
        base: *base,
        xi_x: [s * k[0] as f64, s * k[1] as f64],
        eta: s * j as f64,
    }
}

/// `G_m` at the modes `(p, j)` of one cell.
pub fn cell_log_weights(
    escape: &EscapeFunction,
    key: SectorKey,
    k0: [i64; 2],
    p: i64,
    js: &[i64],
    h: f64,
    base: &BasePoint,
) -> Result<Vec<f64>, OperatorError> {
    js.iter()
        .map(|&j| {
            let q = mode_covector(base, k0, &escape.flow.cat, p, j, h);
            let g = escape.escape_value(&q)?;
            if !(g.abs() <= MAX_LOG_WEIGHT) {
                return Err(OperatorError::WeightOverflow {
                    sector: key,
                    p,
                    j,
                    log_weight: g,
                });
            }
            Ok(g)
        })
        .collect()
}

/// Conjugates `H` by `W = exp(G_m)` evaluated at `base` and scales by `h`.
pub fn apply_weight(
    h_mat: &SectorMatrix,
    escape: &EscapeFunction,
    h: f64,
    base: &BasePoint,
) -> Result<WeightedGenerator, OperatorError> {
    let k0 = match h_mat.key {
        SectorKey::Neutral => [0, 0],
        SectorKey::Orbit(k) => k,
    };
    let mut log_weights = Vec::with_capacity(h_mat.positions.len());
    for &p in &h_mat.positions {
        let js: Vec<i64> = (-(h_mat.j_max as i64)..=h_mat.j_max as i64).collect();
        log_weights.push(cell_log_weights(escape, h_mat.key, k0, p, &js, h, base)?);
    }
    let generator = h_mat.scaled(h);
    let weighted = generator.conjugated(&log_weights);
    Ok(WeightedGenerator {
        h,
        generator,
        weighted,
        log_weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorEigen {
    /// Eigenvalue in unscaled units (divided by `h`).
    pub value: Complex64,
    pub multiplicity: usize,
    /// `|P v - lambda v| / |P|_F` on the full weighted sector matrix.
    pub residual: f64,
}

/// Eigenvalues of a weighted sector with algebraic multiplicity.
///
/// The sector matrix is block triangular with identical (up to diagonal
/// similarity) diagonal blocks, so its spectrum is that of one block with
/// multiplicity multiplied by the number of cells. The block of the most
/// downstream cell is solved; its eigenvectors padded with zeros are exact
/// eigenvectors of the whole sector, and residuals are measured there.
pub fn sector_spectrum(wg: &WeightedGenerator) -> Result<Vec<SectorEigen>, OperatorError> {
    let p = &wg.weighted;
    let cells = p.positions.len();
    let pairs = eigendecompose(&p.diag[0])?;
    let pnorm = p.frobenius();
    let d = p.cell_dim();
    let values: Vec<Complex64> = pairs.iter().map(|e| e.value / wg.h).collect();
    let mut out = vec![];
    for (mean, count) in cluster(&values, CLUSTER_RADIUS) {
        let mut worst: f64 = 0.0;
        for (e, v) in pairs.iter().zip(&values) {
            if (v - mean).norm() <= CLUSTER_RADIUS * count as f64 {
                let mut full = CVec::zeros(p.dim());
                full.rows_mut(0, d).copy_from(&e.vector);
                let r = (p.apply(&full) - &full * e.value).norm() / (full.norm() * pnorm);
                worst = worst.max(r);
            }
        }
        out.push(SectorEigen {
            value: mean,
            multiplicity: count * cells,
            residual: worst,
        });
    }
    out.sort_by(|a, b| b.value.im.total_cmp(&a.value.im).then(a.value.re.total_cmp(&b.value.re)));
    Ok(out)
}
