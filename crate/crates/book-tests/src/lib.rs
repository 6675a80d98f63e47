//! Doctest mirrors of the guide.
//!
//! Each module embeds one chapter of `book/src` as its documentation, so
//! `cargo test` compiles and runs every Rust code block in the book
//! against the current `sloaci` API. A chapter edit that breaks an
//! example fails the build here rather than rotting in the book.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/data-model.md")]
pub mod data_model {}

#[doc = include_str!("../../../book/src/allocation.md")]
pub mod allocation {}

#[doc = include_str!("../../../book/src/outcome-models.md")]
pub mod outcome_models {}

#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}

#[doc = include_str!("../../../book/src/sequential-testing.md")]
pub mod sequential_testing {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
