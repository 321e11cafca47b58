//! Guide chapters compiled as doc-tests, so every listing in `book/`
//! builds and runs against the current library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/decoding.md")]
pub mod decoding {}

#[doc = include_str!("../../../book/src/alignment.md")]
pub mod alignment {}

#[doc = include_str!("../../../book/src/fusion.md")]
pub mod fusion {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/experiment.md")]
pub mod experiment {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
