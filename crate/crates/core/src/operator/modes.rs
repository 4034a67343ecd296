//! Mode bookkeeping on the mapping torus.
//!
//! A function on the mapping torus with torus frequency `k` at height `tau`
//! satisfies `a_{A^T k}(tau + 1) = a_k(tau)`. Along an `A^T`-orbit
//! `k_p = (A^T)^p k_0` this reads `a_p(tau + 1) = a_{p-1}(tau)`, so the
//! coefficients of one orbit are a single function `b(s)` on the line
//! `s = tau - p`, cut into unit cells. Cell `p` receives inflow from cell
//! `p + 1`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::OperatorError;
use crate::model::CatMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectorKey {
    Neutral,
    Orbit([i64; 2]),
}

impl fmt::Display for SectorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectorKey::Neutral => write!(f, "neutral"),
            SectorKey::Orbit(k) => write!(f, "orbit({};{})", k[0], k[1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    pub sector: SectorKey,
    pub p: i64,
    pub j: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub k_max: u32,
    pub p_max: u32,
    pub j_max: u32,
}

impl Truncation {
    pub fn validate(&self) -> Result<(), OperatorError> {
        if self.k_max < 1 || self.p_max < 2 || self.j_max < 1 {
            return Err(OperatorError::TruncationTooSmall(*self));
        }
        Ok(())
    }

    pub fn cell_dim(&self) -> usize {
        2 * self.j_max as usize + 1
    }
}

fn norm2(k: [i64; 2]) -> i64 {
    k[0] * k[0] + k[1] * k[1]
}

fn better(a: [i64; 2], b: [i64; 2]) -> bool {
    (norm2(a), a) < (norm2(b), b)
}

/// Minimal-norm element of the `A^T`-orbit of `k` (ties broken
/// lexicographically) and the position `p` of `k` relative to it, so that
/// `k = (A^T)^p rep`.
pub fn orbit_representative(cat: &CatMap, k: [i64; 2]) -> ([i64; 2], i64) {
    assert!(k != [0, 0], "zero frequency has no orbit");
    // The norm along an orbit is a sum of two exponentials in p plus a
    // constant, hence convex: walk downhill both ways.
    let mut best = (k, 0i64);
    let mut cur = k;
    let mut p = 0;
    loop {
        let next = cat.transpose_inverse_apply(cur);
        p -= 1;
        if norm2(next) > norm2(cur) {
            break;
        }
        cur = next;
        if better(cur, best.0) {
            best = (cur, p);
        }
    }
    let mut cur = k;
    let mut p = 0;
    loop {
        let next = cat.transpose_apply(cur);
        p += 1;
        if norm2(next) > norm2(cur) {
            break;
        }
        cur = next;
        if better(cur, best.0) {
            best = (cur, p);
        }
    }
    (best.0, -best.1)
}

/// `(A^T)^p k`.
pub fn orbit_frequency(cat: &CatMap, k0: [i64; 2], p: i64) -> [i64; 2] {
    let mut k = k0;
    for _ in 0..p.unsigned_abs() {
        k = if p > 0 {
            cat.transpose_apply(k)
        } else {
            cat.transpose_inverse_apply(k)
        };
    }
    k
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitSector {
    pub rep: [i64; 2],
    /// Positions whose frequency has norm at most `k_max`.
    pub core: (i64, i64),
    /// Core extended by `p_max` cells on each side, ascending.
    pub positions: Vec<i64>,
}

impl OrbitSector {
    pub fn key(&self) -> SectorKey {
        SectorKey::Orbit(self.rep)
    }

    pub fn frequency(&self, cat: &CatMap, p: i64) -> [i64; 2] {
        orbit_frequency(cat, self.rep, p)
    }
}

/// All orbit sectors meeting the disk `0 < |k| <= k_max`, sorted by
/// representative.
pub fn enumerate_orbits(cat: &CatMap, t: &Truncation) -> Result<Vec<OrbitSector>, OperatorError> {
    t.validate()?;
    let km = t.k_max as i64;
    let mut reps = BTreeSet::new();
    for a in -km..=km {
        for b in -km..=km {
            if (a, b) != (0, 0) && a * a + b * b <= km * km {
                reps.insert(orbit_representative(cat, [a, b]).0);
            }
        }
    }
    Ok(reps
        .into_iter()
        .map(|rep| orbit_sector(cat, rep, t))
        .collect())
}

/// The sector of representative `rep` under truncation `t`.
pub fn orbit_sector(cat: &CatMap, rep: [i64; 2], t: &Truncation) -> OrbitSector {
    let km = t.k_max as i64;
    let inside = |p| norm2(orbit_frequency(cat, rep, p)) <= km * km;
    let (mut lo, mut hi) = (0, 0);
    while inside(lo - 1) {
        lo -= 1;
    }
    while inside(hi + 1) {
        hi += 1;
    }
    let pm = t.p_max as i64;
    OrbitSector {
        rep,
        core: (lo, hi),
        positions: (lo - pm..=hi + pm).collect(),
    }
}

/// Sector and position of a nonzero frequency.
pub fn sector_of(cat: &CatMap, k: [i64; 2]) -> (SectorKey, i64) {
    if k == [0, 0] {
        return (SectorKey::Neutral, 0);
    }
    let (rep, p) = orbit_representative(cat, k);
    (SectorKey::Orbit(rep), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trunc(k: u32) -> Truncation {
        Truncation {
            k_max: k,
            p_max: 2,
            j_max: 4,
        }
    }

    #[test]
    fn orbit_of_one_zero() {
        let cat = CatMap::standard();
        assert_eq!(orbit_frequency(&cat, [1, 0], 1), [2, 1]);
        assert_eq!(orbit_frequency(&cat, [1, 0], 2), [5, 3]);
        assert_eq!(cat.transpose_apply([1, -1]), [1, 0]);
        let (rep, p) = orbit_representative(&cat, [5, 3]);
        assert_eq!(orbit_frequency(&cat, rep, p), [5, 3]);
        assert_eq!(sector_of(&cat, [1, -1]).0, sector_of(&cat, [1, 0]).0);
    }

    #[test]
    fn representative_is_minimal_over_the_orbit() {
        let cat = CatMap::standard();
        assert_eq!(orbit_representative(&cat, [3, 2]).0, [0, 1]);
        for a in -6i64..=6 {
            for b in -6i64..=6 {
                if (a, b) == (0, 0) {
                    continue;
                }
                let (rep, _) = orbit_representative(&cat, [a, b]);
                let best = (-6..=6)
                    .map(|p| orbit_frequency(&cat, [a, b], p))
                    .min_by_key(|k| (norm2(*k), *k))
                    .unwrap();
                assert_eq!(rep, best);
            }
        }
    }

    #[test]
    fn every_frequency_in_exactly_one_sector() {
        let cat = CatMap::standard();
        let t = trunc(7);
        let sectors = enumerate_orbits(&cat, &t).unwrap();
        for a in -7i64..=7 {
            for b in -7i64..=7 {
                let n = a * a + b * b;
                if n == 0 || n > 49 {
                    continue;
                }
                let hits: usize = sectors
                    .iter()
                    .map(|s| {
                        (s.core.0..=s.core.1)
                            .filter(|&p| s.frequency(&cat, p) == [a, b])
                            .count()
                    })
                    .sum();
                assert_eq!(hits, 1, "k = ({a}, {b})");
            }
        }
        assert!(sectors.iter().all(|s| s.positions.len() as i64 == s.core.1 - s.core.0 + 5));
    }

    #[test]
    fn rejects_small_truncation() {
        let cat = CatMap::standard();
        let t = Truncation {
            p_max: 1,
            ..trunc(4)
        };
        assert!(matches!(
            enumerate_orbits(&cat, &t),
            Err(OperatorError::TruncationTooSmall(_))
        ));
    }
}
