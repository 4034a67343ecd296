//! Ruelle resonances of a time-changed suspension of a hyperbolic toral
//! automorphism.
//!
//! The crate is organised bottom-up: [`model`] defines the flow,
//! [`cotangent`] its lift, [`escape`] the escape function, [`operator`] the
//! truncated weighted generator and [`harness`] the checks run on its
//! spectrum.

pub mod cotangent;
pub mod escape;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod operator;
pub mod quad;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/escape.md")]
    mod escape {}
    #[doc = include_str!("../../../book/src/operator.md")]
    mod operator {}
    #[doc = include_str!("../../../book/src/resonances.md")]
    mod resonances {}
    #[doc = include_str!("../../../book/src/campaign.md")]
    mod campaign {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
