//! Snippet-level PHP vulnerability samples: extraction by sink localization
//! and slicing, normalization, deduplication, synthesis into host code,
//! dataset splits, classification and evaluation. See `book/` for a guide.

pub mod classify;
pub mod config;
pub mod dataset;
pub mod dedup;
pub mod eval;
pub mod flow;
pub mod normalize;
pub mod php;
pub mod pipeline;
pub mod sinks;
pub mod slicer;
pub mod synth;

// The guide's examples run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/parsing.md")]
    mod parsing {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/sinks.md")]
    mod sinks {}
    #[doc = include_str!("../../../book/src/slicing.md")]
    mod slicing {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/classify.md")]
    mod classify {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
