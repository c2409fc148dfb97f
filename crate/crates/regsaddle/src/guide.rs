//! The book under `book/` rendered as rustdoc, one module per chapter,
//! so every code block in the guide runs as a documentation test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/preconditioners.md")]
pub mod preconditioners {}

#[doc = include_str!("../../../book/src/sparsification.md")]
pub mod sparsification {}

#[doc = include_str!("../../../book/src/interior-point.md")]
pub mod interior_point {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
