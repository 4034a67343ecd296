//! Dense non-Hermitian eigensolver and the small amount of matrix analysis
//! built on it.
//!
//! The eigensolver is balancing (powers of two), Householder reduction to
//! Hessenberg form and single-shift complex QR with Wilkinson shifts.
//! Eigenvectors come from back-substitution on the Schur form. Graded
//! matrices, which the weighted generators are, need the balancing step.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
/// QR sweeps allowed per eigenvalue.
const ITER_PER_EIG: usize = 30;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("QR iteration did not converge: {deflated} of {dim} eigenvalues after {iterations} sweeps")]
    NonConvergence {
        dim: usize,
        deflated: usize,
        iterations: usize,
    },
    #[error("resolvent norm {norm:e} on the contour exceeds {bound:e}")]
    ContourTooClose { norm: f64, bound: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    /// Unit right eigenvector.
    pub vector: CVec,
    /// `|P v - lambda v| / |P|_F`.
    pub residual: f64,
}

fn check_square(p: &CMat) -> Result<usize, LinalgError> {
    if p.nrows() != p.ncols() {
        return Err(LinalgError::NotSquare(p.nrows(), p.ncols()));
    }
    if p.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(p.nrows())
}

/// Diagonal similarity `D^{-1} A D` with power-of-two entries that roughly
/// equalises row and column norms. Returns the balanced matrix and `D`.
pub fn balance(a: &CMat) -> (CMat, Vec<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = vec![1.0; n];
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].norm_sqr();
                    r += b[(i, j)].norm_sqr();
                }
            }
            let (mut c, mut r) = (c.sqrt(), r.sqrt());
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let g0 = r / radix;
            while c < g0 {
                f *= radix;
                c *= radix;
                r /= radix;
            }
            let g1 = r * radix;
            while c >= g1 {
                f /= radix;
                c /= radix;
                r *= radix;
            }
            if (c + r) < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, d)
}

/// Householder reduction to upper Hessenberg form. Returns `(H, Q)` with
/// `A = Q H Q^*` (`Q` only if requested).
pub fn hessenberg(a: &CMat, want_q: bool) -> (CMat, Option<CMat>) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = want_q.then(|| CMat::identity(n, n));
    for k in 0..n.saturating_sub(2) {
        let mut alpha = 0.0;
        for i in k + 1..n {
            alpha += h[(i, k)].norm_sqr();
        }
        let alpha = alpha.sqrt();
        if alpha == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        // v = x + phase * |x| e_1
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        v[0] += phase * alpha;
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vn == 0.0 {
            continue;
        }
        let beta = 2.0 / vn;
        // H <- (I - beta v v^*) H
        for j in 0..n {
            let mut s = ZERO;
            for (t, vi) in v.iter().enumerate() {
                s += vi.conj() * h[(k + 1 + t, j)];
            }
            s *= beta;
            for (t, vi) in v.iter().enumerate() {
                h[(k + 1 + t, j)] -= vi * s;
            }
        }
        // H <- H (I - beta v v^*)
        for i in 0..n {
            let mut s = ZERO;
            for (t, vi) in v.iter().enumerate() {
                s += h[(i, k + 1 + t)] * vi;
            }
            s *= beta;
            for (t, vi) in v.iter().enumerate() {
                h[(i, k + 1 + t)] -= s * vi.conj();
            }
        }
        if let Some(q) = q.as_mut() {
            for i in 0..n {
                let mut s = ZERO;
                for (t, vi) in v.iter().enumerate() {
                    s += q[(i, k + 1 + t)] * vi;
                }
                s *= beta;
                for (t, vi) in v.iter().enumerate() {
                    q[(i, k + 1 + t)] -= s * vi.conj();
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, q)
}

/// Givens rotation `[c s; -conj(s) c]` with real `c` mapping `(a, b)` to
/// `(r, 0)`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, ZERO);
    }
    if na == 0.0 {
        return (0.0, (b / nb).conj());
    }
    let r = na.hypot(nb);
    let c = na / r;
    let s = (a / na) * b.conj() / r;
    (c, s)
}

/// Applies the rotation to rows `i`, `i + 1` over columns `cols`.
fn rot_rows(h: &mut CMat, i: usize, c: f64, s: Complex64, cols: std::ops::Range<usize>) {
    for j in cols {
        let (x, y) = (h[(i, j)], h[(i + 1, j)]);
        h[(i, j)] = x * c + s * y;
        h[(i + 1, j)] = -s.conj() * x + y * c;
    }
}

/// Applies the conjugate transpose rotation to columns `i`, `i + 1` over
/// rows `rows`.
fn rot_cols(h: &mut CMat, i: usize, c: f64, s: Complex64, rows: std::ops::Range<usize>) {
    for r in rows {
        let (x, y) = (h[(r, i)], h[(r, i + 1)]);
        h[(r, i)] = x * c + y * s.conj();
        h[(r, i + 1)] = -s * x + y * c;
    }
}

/// Eigenvalue of the trailing 2x2 block closer to its last diagonal entry.
fn wilkinson(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = (tr * tr - det).sqrt();
    let (l1, l2) = (tr + disc, tr - disc);
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Complex Schur form of an upper Hessenberg matrix in place. If `z` is
/// given the rotations are accumulated into it and the full triangular
/// factor is formed; otherwise only the eigenvalue-relevant window is
/// updated.
fn hqr(h: &mut CMat, mut z: Option<&mut CMat>) -> Result<(), LinalgError> {
    let n = h.nrows();
    if n == 0 {
        return Ok(());
    }
    let full = z.is_some();
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let max_total = ITER_PER_EIG * n.max(1);
    while hi > 0 {
        // Find the start of the active unreduced block.
        let mut lo = hi;
        while lo > 0 {
            let s = h[(lo - 1, lo - 1)].l1_norm() + h[(lo, lo)].l1_norm();
            let sub = h[(lo, lo - 1)].l1_norm();
            if sub <= eps * s || sub < f64::MIN_POSITIVE {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        if total >= max_total {
            return Err(LinalgError::NonConvergence {
                dim: n,
                deflated: n - 1 - hi,
                iterations: total,
            });
        }
        iter += 1;
        total += 1;
        let shift = if iter.is_multiple_of(10) {
            // Exceptional shift.
            let t = h[(hi, hi - 1)].l1_norm() + if hi >= 2 { h[(hi - 1, hi - 2)].l1_norm() } else { 0.0 };
            h[(hi, hi)] + Complex64::new(0.75 * t, 0.0)
        } else {
            wilkinson(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };
        let (c0, c1) = if full { (0, n) } else { (lo, hi + 1) };
        let (c, s) = givens(h[(lo, lo)] - shift, h[(lo + 1, lo)]);
        rot_rows(h, lo, c, s, lo..c1);
        rot_cols(h, lo, c, s, c0..(lo + 3).min(hi + 1));
        if let Some(z) = z.as_deref_mut() {
            rot_cols(z, lo, c, s, 0..n);
        }
        for k in lo + 1..hi {
            let (c, s) = givens(h[(k, k - 1)], h[(k + 1, k - 1)]);
            rot_rows(h, k, c, s, k - 1..c1);
            h[(k + 1, k - 1)] = ZERO;
            rot_cols(h, k, c, s, c0..(k + 3).min(hi + 1));
            if let Some(z) = z.as_deref_mut() {
                rot_cols(z, k, c, s, 0..n);
            }
        }
    }
    Ok(())
}

fn by_descending_im(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re))
}

/// Eigenvalues only, sorted by descending imaginary part.
pub fn eigenvalues(p: &CMat) -> Result<Vec<Complex64>, LinalgError> {
    let n = check_square(p)?;
    let (b, _) = balance(p);
    let (mut h, _) = hessenberg(&b, false);
    hqr(&mut h, None)?;
    let mut ev: Vec<Complex64> = (0..n).map(|i| h[(i, i)]).collect();
    ev.sort_by(by_descending_im);
    Ok(ev)
}

/// Eigenvalues with unit right eigenvectors and residuals, sorted by
/// descending imaginary part.
pub fn eigendecompose(p: &CMat) -> Result<Vec<EigenPair>, LinalgError> {
    let n = check_square(p)?;
    let (b, d) = balance(p);
    let (mut t, q) = hessenberg(&b, true);
    let mut z = q.expect("requested");
    hqr(&mut t, Some(&mut z))?;
    let tnorm = t.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let small = f64::EPSILON * tnorm.max(f64::MIN_POSITIVE);
    let pnorm = frobenius(p);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lam = t[(k, k)];
        let mut x = CVec::zeros(n);
        x[k] = ONE;
        for j in (0..k).rev() {
            let mut s = ZERO;
            for m in j + 1..=k {
                s += t[(j, m)] * x[m];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < small {
                den = Complex64::new(small, 0.0);
            }
            x[j] = -s / den;
            // Rescale to avoid overflow in long chains.
            let mx = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if mx > 1e100 {
                x /= Complex64::new(mx, 0.0);
            }
        }
        let mut v = &z * x;
        for (i, di) in d.iter().enumerate() {
            v[i] *= di;
        }
        let nv = v.norm();
        v /= Complex64::new(nv, 0.0);
        let r = (p * &v - &v * lam).norm() / pnorm.max(f64::MIN_POSITIVE);
        out.push(EigenPair {
            value: lam,
            vector: v,
            residual: r,
        });
    }
    out.sort_by(|a, b| by_descending_im(&a.value, &b.value));
    Ok(out)
}

pub fn frobenius(p: &CMat) -> f64 {
    p.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Residual `|P v - lambda v| / |P|_F` for a unit vector.
pub fn residual(p: &CMat, lambda: Complex64, v: &CVec) -> f64 {
    (p * v - v * lambda).norm() / (v.norm() * frobenius(p)).max(f64::MIN_POSITIVE)
}

fn shifted(p: &CMat, z: Complex64) -> CMat {
    let mut m = p.clone();
    for i in 0..m.nrows() {
        m[(i, i)] -= z;
    }
    m
}

/// Singular values of `P - z I`, ascending.
pub fn singular_values(p: &CMat, z: Complex64) -> Vec<f64> {
    let m = shifted(p, z);
    let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Rank of the trapezoid-rule approximation of the Riesz projector for the
/// circle `|z - center| = radius`, thresholded at 1/2.
pub fn spectral_projector_rank(
    p: &CMat,
    center: Complex64,
    radius: f64,
    nodes: usize,
    max_resolvent: f64,
) -> Result<usize, LinalgError> {
    let n = check_square(p)?;
    if n == 0 {
        return Ok(0);
    }
    let mut proj = CMat::zeros(n, n);
    for k in 0..nodes {
        let w = Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / nodes as f64);
        let zk = center + w;
        let a = shifted(p, zk) * Complex64::new(-1.0, 0.0);
        let r = a
            .lu()
            .try_inverse()
            .ok_or(LinalgError::ContourTooClose {
                norm: f64::INFINITY,
                bound: max_resolvent,
            })?;
        let norm = frobenius(&r);
        if !(norm <= max_resolvent) {
            return Err(LinalgError::ContourTooClose {
                norm,
                bound: max_resolvent,
            });
        }
        proj += r * (w / nodes as f64);
    }
    Ok(proj
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > 0.5)
        .count())
}

/// Groups eigenvalues within `radius` of each other (single linkage) and
/// returns `(mean, count)` per cluster, in order of first appearance.
pub fn cluster(values: &[Complex64], radius: f64) -> Vec<(Complex64, usize)> {
    let weighted: Vec<(Complex64, usize)> = values.iter().map(|&v| (v, 1)).collect();
    cluster_weighted(&weighted, radius)
}

/// [`cluster`] for values carrying multiplicities; means are weighted and
/// multiplicities summed.
pub fn cluster_weighted(values: &[(Complex64, usize)], radius: f64) -> Vec<(Complex64, usize)> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].0.re.total_cmp(&values[b].0.re));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if values[j].0.re - values[i].0.re > radius {
                break;
            }
            if (values[i].0 - values[j].0).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut roots: Vec<usize> = vec![];
    let mut acc: std::collections::HashMap<usize, (Complex64, usize)> = Default::default();
    for (i, &(v, m)) in values.iter().enumerate() {
        let r = find(&mut parent, i);
        let e = acc.entry(r).or_insert_with(|| {
            roots.push(r);
            (ZERO, 0)
        });
        e.0 += v * m as f64;
        e.1 += m;
    }
    roots
        .into_iter()
        .map(|r| {
            let (s, c) = acc[&r];
            (if c > 0 { s / c as f64 } else { s }, c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random(n: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    /// Roots of the characteristic polynomial by Durand-Kerner, with the
    /// coefficients from Faddeev-LeVerrier.
    fn char_roots(a: &CMat) -> Vec<Complex64> {
        let n = a.nrows();
        let mut coef = vec![ONE; n + 1];
        let mut m = CMat::zeros(n, n);
        for k in 1..=n {
            let mut mk = a * &m;
            for i in 0..n {
                mk[(i, i)] += coef[k - 1];
            }
            m = mk;
            let am = a * &m;
            coef[k] = -am.trace() / k as f64;
        }
        let eval = |z: Complex64| coef.iter().fold(ZERO, |acc, &ck| acc * z + ck);
        let mut roots: Vec<Complex64> = (0..n).map(|k| c(0.4, 0.9).powu(k as u32)).collect();
        for _ in 0..2000 {
            for i in 0..n {
                let mut den = ONE;
                for j in 0..n {
                    if i != j {
                        den *= roots[i] - roots[j];
                    }
                }
                let step = eval(roots[i]) / den;
                roots[i] -= step;
            }
        }
        roots
    }

    #[test]
    fn diagonal_eigenvalues() {
        let p = CMat::from_diagonal(&CVec::from_iterator(
            5,
            (-2..=2).map(|j| c(std::f64::consts::TAU * j as f64, 0.0)),
        ));
        let ev = eigendecompose(&p).unwrap();
        let mut re: Vec<f64> = ev.iter().map(|e| e.value.re).collect();
        re.sort_by(f64::total_cmp);
        for (k, r) in re.iter().enumerate() {
            assert!((r - std::f64::consts::TAU * (k as f64 - 2.0)).abs() < 1e-12);
        }
        assert!(ev.iter().all(|e| e.residual < 1e-14));
    }

    #[test]
    fn jordan_block() {
        let p = CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let ev = eigendecompose(&p).unwrap();
        for e in &ev {
            assert!(e.value.norm() < 1e-12 && e.residual <= 1e-10);
        }
    }

    #[test]
    fn random_matches_characteristic_polynomial() {
        for seed in 0..5 {
            let a = random(8, seed);
            let ev = eigenvalues(&a).unwrap();
            let mut oracle = char_roots(&a);
            for e in &ev {
                let (i, d) = oracle
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (i, (r - e).norm()))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .unwrap();
                assert!(d < 1e-8, "seed {seed}: {e} off by {d}");
                oracle.remove(i);
            }
        }
    }

    #[test]
    fn residuals_on_random_and_graded_matrices() {
        for seed in 0..4 {
            let mut a = random(60, seed);
            let ev = eigendecompose(&a).unwrap();
            assert!(ev.iter().all(|e| e.residual < 1e-12));
            assert!(ev.windows(2).all(|w| w[0].value.im >= w[1].value.im));
            // Strongly graded similarity of the same matrix.
            for i in 0..60 {
                for j in 0..60 {
                    a[(i, j)] *= (0.4 * (i as f64 - j as f64)).exp();
                }
            }
            let ev2 = eigendecompose(&a).unwrap();
            assert!(ev2.iter().all(|e| e.residual < 1e-10));
            for (x, y) in ev.iter().zip(&ev2) {
                assert!((x.value - y.value).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn hessenberg_is_a_similarity() {
        let a = random(7, 9);
        let (h, q) = hessenberg(&a, true);
        let q = q.unwrap();
        assert!((&q * &h * q.adjoint() - &a).norm() < 1e-13);
        for i in 2..7 {
            for j in 0..i - 1 {
                assert_eq!(h[(i, j)], ZERO);
            }
        }
    }

    #[test]
    fn singular_value_examples() {
        let id = CMat::identity(4, 4);
        assert!(singular_values(&id, ZERO).iter().all(|s| (s - 1.0).abs() < 1e-14));
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]));
        let s = singular_values(&d, ZERO);
        assert!((s[0] - 1.0).abs() < 1e-14 && (s[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_values_match_hermitian_oracle() {
        let a = random(6, 21);
        let z = c(0.3, -0.2);
        let s = singular_values(&a, z);
        let m = shifted(&a, z);
        let g = m.adjoint() * &m;
        let mut ev: Vec<f64> = g.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
        ev.sort_by(f64::total_cmp);
        for (x, y) in s.iter().zip(&ev) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn projector_rank_examples() {
        let d = CMat::from_diagonal(&CVec::from_vec(vec![ZERO, c(5.0, 0.0)]));
        assert_eq!(spectral_projector_rank(&d, ZERO, 1.0, 64, 1e8).unwrap(), 1);
        let j = CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert_eq!(spectral_projector_rank(&j, ZERO, 1.0, 64, 1e8).unwrap(), 2);
        assert!(matches!(
            spectral_projector_rank(&d, c(1.0, 0.0), 1.0, 64, 1e8),
            Err(LinalgError::ContourTooClose { .. })
        ));
    }

    #[test]
    fn projector_rank_agrees_with_eigen_count() {
        let a = random(12, 5);
        let ev = eigenvalues(&a).unwrap();
        let (center, radius) = (c(0.05, 0.0), 0.6);
        let inside = ev.iter().filter(|e| (*e - center).norm() < radius).count();
        let rank = spectral_projector_rank(&a, center, radius, 256, 1e10).unwrap();
        assert_eq!(rank, inside);
    }

    #[test]
    fn clustering_counts_multiplicity() {
        let v = vec![c(1.0, 0.0), c(1.0 + 1e-9, 0.0), c(2.0, 0.0), c(1.0, 1e-9)];
        let cl = cluster(&v, 1e-7);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].1, 3);
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            eigenvalues(&CMat::zeros(2, 3)),
            Err(LinalgError::NotSquare(2, 3))
        ));
    }
}
