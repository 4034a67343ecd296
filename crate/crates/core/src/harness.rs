//! Checks run on computed resonance sets: box counting, symmetry, intrinsic
//! comparison across weights, the upper half-plane, Weyl inequalities and
//! the disk inclusion.

use std::f64::consts::TAU;

use num_complex::Complex64;
use pathfinding::prelude::{kuhn_munkres_min, Matrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::escape::{EscapeFunction, OrderParams};
use crate::linalg::{cluster_weighted, eigenvalues, singular_values, CMat, LinalgError};
use crate::model::{BasePoint, MappingTorusFlow};
use crate::operator::{
    apply_weight, build_generator, sector_spectrum, OperatorError, SectorKey, Truncation,
    WeightedGenerator,
};
use crate::operator::weight::CLUSTER_RADIUS;

pub mod campaign;

/// Residual bound (relative to `|P|_F`) for a trusted resonance.
pub const RESIDUAL_BOUND: f64 = 1e-10;
/// Per-factor relative slack of the Weyl prefix products.
pub const WEYL_SLACK: f64 = 1e-10;
/// Default matching cutoff, ten clustering radii.
pub const MATCH_CUTOFF: f64 = 10.0 * CLUSTER_RADIUS;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("counting box needs alpha > 0, beta > 0 and E != 0 (got E={e}, alpha={alpha}, beta={beta})")]
    InvalidBox { e: f64, alpha: f64, beta: f64 },
    #[error("alpha grid must be ascending with at least 5 points")]
    InvalidGrid,
    #[error("box at alpha={alpha} needs j_max={needed}, above the cap {cap}")]
    UnresolvedWindow { alpha: f64, needed: u32, cap: u32 },
    #[error("{} entries without a partner within {cutoff:e}", .entries.len())]
    UnmatchedEntry {
        entries: Vec<Complex64>,
        cutoff: f64,
    },
    #[error("{} matched pairs with different multiplicity", .pairs.len())]
    MultiplicityMismatch { pairs: Vec<MatchPair> },
    #[error("disk check needs b > 2 beta (b={b}, beta={beta})")]
    Precondition { b: f64, beta: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceEntry {
    /// Unscaled eigenvalue of `H`.
    pub value: Complex64,
    pub multiplicity: usize,
    pub residual: f64,
    pub sector: SectorKey,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub truncation: Truncation,
    pub escape: OrderParams,
    pub h: f64,
    /// Neutral eigenvalues with `|Re| <=` this are resolved.
    pub trusted_re: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ResonanceSet {
    pub entries: Vec<ResonanceEntry>,
    pub meta: Option<RunMeta>,
}

impl ResonanceSet {
    /// Multiplicity-one entries in the neutral sector with zero residual.
    pub fn synthetic(values: &[Complex64]) -> Self {
        ResonanceSet {
            entries: values
                .iter()
                .map(|&value| ResonanceEntry {
                    value,
                    multiplicity: 1,
                    residual: 0.0,
                    sector: SectorKey::Neutral,
                })
                .collect(),
            meta: None,
        }
    }

    pub fn total_multiplicity(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    /// Distinct values across all sectors, clustered at `radius` with
    /// summed multiplicity.
    pub fn merged(&self, radius: f64) -> Vec<(Complex64, usize)> {
        let v: Vec<(Complex64, usize)> =
            self.entries.iter().map(|e| (e.value, e.multiplicity)).collect();
        let mut out = cluster_weighted(&v, radius);
        out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
        out
    }

    /// Entries with `Im > floor`.
    pub fn above(&self, floor: f64) -> ResonanceSet {
        ResonanceSet {
            entries: self
                .entries
                .iter()
                .filter(|e| e.value.im > floor)
                .copied()
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Neutral entries outside the resolved window removed.
    pub fn trusted(&self) -> ResonanceSet {
        let Some(meta) = &self.meta else {
            return self.clone();
        };
        ResonanceSet {
            entries: self
                .entries
                .iter()
                .filter(|e| e.sector != SectorKey::Neutral || e.value.re.abs() <= meta.trusted_re + 1e-9)
                .copied()
                .collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Largest `|2 pi j / T|` resolved by the neutral block: `|j| <= j_max / 2`.
pub fn trusted_re(flow: &MappingTorusFlow, j_max: u32) -> f64 {
    TAU * (j_max / 2) as f64 / flow.mean_return_time()
}

/// Weighted `h H` for every sector, built in parallel, neutral first.
pub fn weighted_sectors(
    escape: &EscapeFunction,
    t: &Truncation,
    h: f64,
    base: &BasePoint,
) -> Result<Vec<WeightedGenerator>, HarnessError> {
    let sectors = build_generator(&escape.flow, t)?;
    let out: Result<Vec<_>, OperatorError> = sectors
        .par_iter()
        .map(|s| apply_weight(s, escape, h, base))
        .collect();
    Ok(out?)
}

/// Spectra of weighted sectors, merged in sector order.
pub fn resonances(wgs: &[WeightedGenerator], meta: Option<RunMeta>) -> Result<ResonanceSet, HarnessError> {
    let per: Result<Vec<_>, OperatorError> = wgs
        .par_iter()
        .map(|w| sector_spectrum(w).map(|s| (w.key(), s)))
        .collect();
    let mut entries = vec![];
    for (sector, spec) in per? {
        entries.extend(spec.into_iter().map(|e| ResonanceEntry {
            value: e.value,
            multiplicity: e.multiplicity,
            residual: e.residual,
            sector,
        }));
    }
    Ok(ResonanceSet { entries, meta })
}

pub fn compute_resonances(
    escape: &EscapeFunction,
    t: &Truncation,
    h: f64,
    base: &BasePoint,
) -> Result<ResonanceSet, HarnessError> {
    let wgs = weighted_sectors(escape, t, h, base)?;
    let meta = RunMeta {
        truncation: *t,
        escape: escape.params.clone(),
        h,
        trusted_re: trusted_re(&escape.flow, t.j_max),
    };
    resonances(&wgs, Some(meta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountingBox {
    pub e: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl CountingBox {
    pub fn new(e: f64, alpha: f64, beta: f64) -> Result<Self, HarnessError> {
        if !(alpha > 0.0 && beta > 0.0 && e != 0.0 && e.is_finite()) {
            return Err(HarnessError::InvalidBox { e, alpha, beta });
        }
        Ok(CountingBox { e, alpha, beta })
    }

    /// `|Re l - alpha E| <= sqrt(alpha)` (closed) and `Im l > -beta`.
    pub fn contains(&self, l: Complex64) -> bool {
        (l.re - self.alpha * self.e).abs() <= self.alpha.sqrt() && l.im > -self.beta
    }

    /// Largest `|Re|` reached by the box.
    pub fn reach(&self) -> f64 {
        (self.alpha * self.e).abs() + self.alpha.sqrt()
    }
}

/// Multiplicity-weighted number of entries in the box.
pub fn count_in_box(res: &ResonanceSet, b: &CountingBox) -> usize {
    res.entries
        .iter()
        .filter(|e| b.contains(e.value))
        .map(|e| e.multiplicity)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub alpha: f64,
    pub count: usize,
    pub j_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    /// Slope of `log(N + 1)` against `log alpha`; `None` when every count
    /// is zero.
    pub exponent: Option<f64>,
    pub zero_counts: bool,
}

pub fn fit_exponent(rows: &[ScalingRow]) -> ScalingFit {
    let zero_counts = rows.iter().any(|r| r.count == 0);
    if rows.iter().all(|r| r.count == 0) || rows.len() < 2 {
        return ScalingFit {
            exponent: None,
            zero_counts,
        };
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.alpha.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (r.count as f64 + 1.0).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    ScalingFit {
        exponent: Some(sxy / sxx),
        zero_counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub fit: ScalingFit,
    /// `n - 1/2` with `n = 3`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSetup {
    pub e: f64,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub k_max: u32,
    pub p_max: u32,
    /// Largest `j_max` a run may use.
    pub j_cap: u32,
}

/// At least five strictly increasing `alpha` values.
pub fn check_grid(alphas: &[f64]) -> Result<(), HarnessError> {
    if alphas.len() < 5 || alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(HarnessError::InvalidGrid);
    }
    Ok(())
}

/// Smallest even `j_max` whose trusted neutral window covers the box.
pub fn window_j_max(flow: &MappingTorusFlow, b: &CountingBox) -> u32 {
    let half = (b.reach() * flow.mean_return_time() / TAU).ceil() as u32;
    2 * half.max(1)
}

/// `N(alpha)` for the model at `h = 1 / alpha`, truncation adapted per
/// `alpha`.
pub fn scaling_study(
    escape: &EscapeFunction,
    setup: &ScalingSetup,
    base: &BasePoint,
) -> Result<ScalingReport, HarnessError> {
    check_grid(&setup.alphas)?;
    let rows: Result<Vec<ScalingRow>, HarnessError> = setup
        .alphas
        .par_iter()
        .map(|&alpha| {
            let b = CountingBox::new(setup.e, alpha, setup.beta)?;
            let j_max = window_j_max(&escape.flow, &b);
            if j_max > setup.j_cap {
                return Err(HarnessError::UnresolvedWindow {
                    alpha,
                    needed: j_max,
                    cap: setup.j_cap,
                });
            }
            let t = Truncation {
                k_max: setup.k_max,
                p_max: setup.p_max,
                j_max,
            };
            let res = compute_resonances(escape, &t, 1.0 / alpha, base)?;
            Ok(ScalingRow {
                alpha,
                count: count_in_box(&res.trusted(), &b),
                j_max,
            })
        })
        .collect();
    let rows = rows?;
    Ok(ScalingReport {
        fit: fit_exponent(&rows),
        rows,
        reference: 2.5,
    })
}

/// The spectrum `{|n| : n in Z^3, |n| <= radius}` with multiplicities, a
/// stand-in for a first-order operator on a 3-torus.
pub fn lattice_spectrum(radius: f64) -> ResonanceSet {
    let r = radius.floor() as i64;
    let r2 = r * r;
    let mut reps = vec![0usize; r2 as usize + 1];
    for a in -r..=r {
        for b in -r..=r {
            let ab = a * a + b * b;
            if ab > r2 {
                continue;
            }
            let cmax = ((r2 - ab) as f64).sqrt().floor() as i64;
            for c in -cmax..=cmax {
                reps[(ab + c * c) as usize] += 1;
            }
        }
    }
    ResonanceSet {
        entries: reps
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0)
            .map(|(n2, &m)| ResonanceEntry {
                value: Complex64::new((n2 as f64).sqrt(), 0.0),
                multiplicity: m,
                residual: 0.0,
                sector: SectorKey::Neutral,
            })
            .collect(),
        meta: None,
    }
}

/// Control study on [`lattice_spectrum`]; the exponent should be near 2.5.
pub fn lattice_scaling_study(e: f64, alphas: &[f64], beta: f64) -> Result<ScalingReport, HarnessError> {
    check_grid(alphas)?;
    let boxes: Result<Vec<CountingBox>, _> =
        alphas.iter().map(|&a| CountingBox::new(e, a, beta)).collect();
    let boxes = boxes?;
    let spec = lattice_spectrum(boxes.iter().map(|b| b.reach()).fold(0.0, f64::max) + 1.0);
    let rows: Vec<ScalingRow> = boxes
        .iter()
        .map(|b| ScalingRow {
            alpha: b.alpha,
            count: count_in_box(&spec, b),
            j_max: 0,
        })
        .collect();
    Ok(ScalingReport {
        fit: fit_exponent(&rows),
        rows,
        reference: 2.5,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchPair {
    pub left: Complex64,
    pub right: Complex64,
    pub left_multiplicity: usize,
    pub right_multiplicity: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchPair>,
    pub max_distance: f64,
}

/// Optimal one-to-one assignment minimising the summed distance.
/// Entries left over, or paired beyond `cutoff`, are unmatched.
pub fn match_spectra(
    left: &[(Complex64, usize)],
    right: &[(Complex64, usize)],
    cutoff: f64,
) -> Result<MatchReport, HarnessError> {
    let swap = left.len() > right.len();
    let (rows, cols) = if swap { (right, left) } else { (left, right) };
    let mut pairs = vec![];
    let mut unmatched = vec![];
    if !rows.is_empty() {
        // Integer costs for the assignment solver; 1e-12 resolution.
        let m = Matrix::from_fn(rows.len(), cols.len(), |(i, j)| {
            ((rows[i].0 - cols[j].0).norm() * 1e12).round().min(1e17) as i64
        });
        let (_, assign) = kuhn_munkres_min(&m);
        let mut used = vec![false; cols.len()];
        for (i, &j) in assign.iter().enumerate() {
            used[j] = true;
            let (r, c) = (rows[i], cols[j]);
            let (l, rr) = if swap { (c, r) } else { (r, c) };
            let d = (l.0 - rr.0).norm();
            if d > cutoff {
                unmatched.push(l.0);
                unmatched.push(rr.0);
            } else {
                pairs.push(MatchPair {
                    left: l.0,
                    right: rr.0,
                    left_multiplicity: l.1,
                    right_multiplicity: rr.1,
                    distance: d,
                });
            }
        }
        unmatched.extend(cols.iter().zip(&used).filter(|(_, &u)| !u).map(|(c, _)| c.0));
    } else {
        unmatched.extend(cols.iter().map(|c| c.0));
    }
    if !unmatched.is_empty() {
        return Err(HarnessError::UnmatchedEntry {
            entries: unmatched,
            cutoff,
        });
    }
    let bad: Vec<MatchPair> = pairs
        .iter()
        .filter(|p| p.left_multiplicity != p.right_multiplicity)
        .copied()
        .collect();
    if !bad.is_empty() {
        return Err(HarnessError::MultiplicityMismatch { pairs: bad });
    }
    let max_distance = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
    Ok(MatchReport {
        pairs,
        max_distance,
    })
}

/// Pairs the spectrum with its image under `l -> -conj(l)`.
pub fn symmetry_check(res: &ResonanceSet, cutoff: f64) -> Result<MatchReport, HarnessError> {
    let a = res.merged(CLUSTER_RADIUS);
    let b: Vec<(Complex64, usize)> = a.iter().map(|&(v, m)| (-v.conj(), m)).collect();
    match_spectra(&a, &b, cutoff)
}

/// Matches the parts of two spectra above `floor`.
pub fn intrinsic_check(
    a: &ResonanceSet,
    b: &ResonanceSet,
    floor: f64,
    cutoff: f64,
) -> Result<MatchReport, HarnessError> {
    match_spectra(
        &a.above(floor).merged(CLUSTER_RADIUS),
        &b.above(floor).merged(CLUSTER_RADIUS),
        cutoff,
    )
}

/// Largest imaginary part, `-inf` for an empty set.
pub fn upper_half_check(res: &ResonanceSet) -> f64 {
    res.entries
        .iter()
        .map(|e| e.value.im)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylReport {
    pub dim: usize,
    pub verdict: bool,
    /// Largest `sum log s_j - sum log |l_j - z|` over prefixes, minus the
    /// allowed slack; positive means violated.
    pub worst_margin: f64,
    /// Prefix length of the worst margin.
    pub worst_prefix: usize,
    /// Singular values of `P - z` below `disk_radius`.
    pub small_singular: usize,
    /// Eigenvalues (with multiplicity) in `D(z, disk_radius)`.
    pub disk_eigen: usize,
    pub disk_radius: f64,
}

/// Weyl prefix inequalities for `P - z`, with eigenvalues from a dense
/// solve.
pub fn weyl_audit(p: &CMat, z: Complex64, disk_radius: f64) -> Result<WeylReport, HarnessError> {
    let ev: Vec<(Complex64, usize)> = eigenvalues(p)?.into_iter().map(|v| (v, 1)).collect();
    Ok(weyl_audit_with(p, &ev, z, disk_radius))
}

/// As [`weyl_audit`] with eigenvalues (and multiplicities) supplied.
pub fn weyl_audit_with(
    p: &CMat,
    eigen: &[(Complex64, usize)],
    z: Complex64,
    disk_radius: f64,
) -> WeylReport {
    let s = singular_values(p, z);
    let mut d: Vec<f64> = eigen
        .iter()
        .flat_map(|&(v, m)| std::iter::repeat_n((v - z).norm(), m))
        .collect();
    d.sort_by(f64::total_cmp);
    assert_eq!(d.len(), s.len(), "eigenvalue count must match the dimension");
    // Factors below `floor` count as exact zeros.
    let floor = s.last().copied().unwrap_or(0.0) * f64::EPSILON;
    let (mut ls, mut ld, mut scale) = (0.0, 0.0, 0.0);
    let (mut zero_s, mut zero_d) = (false, false);
    let (mut worst, mut at) = (f64::NEG_INFINITY, 0);
    for (n, (&si, &di)) in s.iter().zip(&d).enumerate() {
        zero_s |= si <= floor;
        zero_d |= di <= floor;
        let margin = if zero_d {
            if zero_s { f64::NEG_INFINITY } else { f64::INFINITY }
        } else if zero_s {
            f64::NEG_INFINITY
        } else {
            ls += si.ln();
            ld += di.ln();
            scale += di.ln().abs().max(1.0);
            ls - ld - WEYL_SLACK * scale
        };
        if margin > worst || n == 0 {
            worst = margin;
            at = n + 1;
        }
    }
    WeylReport {
        dim: s.len(),
        verdict: s.is_empty() || worst <= 0.0,
        worst_margin: if s.is_empty() { 0.0 } else { worst },
        worst_prefix: at,
        small_singular: s.iter().filter(|&&x| x < disk_radius).count(),
        disk_eigen: d.iter().filter(|&&x| x <= disk_radius).count(),
        disk_radius,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiskBoxReport {
    pub in_box: usize,
    /// Box members outside the disk, in `h`-scaled units.
    pub outside: Vec<Complex64>,
}

impl DiskBoxReport {
    pub fn holds(&self) -> bool {
        self.outside.is_empty()
    }
}

/// `(spec(P) cap Z_beta) subset D(E + i, 1 + b h)` for `P = h H`, with
/// `Z_beta = {|Re z - E| <= sqrt(beta h), Im z >= -beta h}`.
pub fn disk_box_check(
    res: &ResonanceSet,
    e: f64,
    beta: f64,
    b: f64,
    h: f64,
) -> Result<DiskBoxReport, HarnessError> {
    if !(b > 2.0 * beta) {
        return Err(HarnessError::Precondition { b, beta });
    }
    let ze = Complex64::new(e, 1.0);
    let mut report = DiskBoxReport {
        in_box: 0,
        outside: vec![],
    };
    for en in &res.entries {
        let z = en.value * h;
        if (z.re - e).abs() <= (beta * h).sqrt() && z.im >= -beta * h {
            report.in_box += en.multiplicity;
            if (z - ze).norm() > 1.0 + b * h {
                report.outside.push(z);
            }
        }
    }
    Ok(report)
}
