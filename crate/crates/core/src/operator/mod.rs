//! Truncated generator `H = -iV`, its anisotropic conjugate `P = W H W^{-1}`
//! and the phase-space checks run on them.

pub mod semiclassical;
pub mod generator;
pub mod modes;
pub mod weight;

pub use generator::{build_generator, neutral_generator, orbit_generator, SectorMatrix};
pub use modes::{enumerate_orbits, sector_of, ModeIndex, OrbitSector, SectorKey, Truncation};
pub use weight::{apply_weight, sector_spectrum, SectorEigen, WeightedGenerator};

use crate::escape::EscapeError;
use crate::linalg::LinalgError;

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error("truncation {0:?} too small: need k_max >= 1, p_max >= 2, j_max >= 1")]
    TruncationTooSmall(Truncation),
    #[error("log weight {log_weight} at {sector} p={p} j={j} exceeds 700; reduce |u|, s or k_max")]
    WeightOverflow {
        sector: SectorKey,
        p: i64,
        j: i64,
        log_weight: f64,
    },
    #[error("coherent state has {outside:.3e} of its mass outside the truncation window")]
    UnresolvedState { outside: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Escape(#[from] EscapeError),
}
