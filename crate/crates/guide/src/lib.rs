//! Runs the code blocks of the book in `book/src` as doc-tests, so the guide
//! cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/filters.md")]
pub mod filters {}

#[doc = include_str!("../../../book/src/tracking.md")]
pub mod tracking {}

#[doc = include_str!("../../../book/src/stability.md")]
pub mod stability {}

#[doc = include_str!("../../../book/src/enhancement.md")]
pub mod enhancement {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
