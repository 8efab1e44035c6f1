//! Fitting, evaluation and cost-aware allocation for saturating scaling laws.
//!
//! * [`forms`]: the saturating law, its ablations and baseline laws.
//! * [`gridio`]: run records, CSV ingestion and grid preprocessing.
//! * [`fit`]: robust multistart fitting with exact gradients.
//! * [`eval`]: holdout protocols, log-space metrics and bootstrap intervals.
//! * [`alloc`]: least-loss and least-cost allocation of size, data and steps.
//! * [`verify`]: limit audits, synthetic grids and isoFLOP curves.

pub mod alloc;
pub mod error;
pub mod eval;
pub mod fit;
pub mod forms;
pub mod gridio;
pub mod scalar;
pub mod verify;

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/law.md")]
    mod law {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
