pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod imaging;
pub mod losses;
pub mod metrics;
pub mod optimizer;
pub mod photometry;
pub mod registration;
pub mod rig;
pub mod simulator;
pub mod uncertainty;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/photometric-model.md")]
    mod photometric_model {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/registration.md")]
    mod registration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
