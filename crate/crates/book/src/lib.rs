//! Compiles the chapters under `book/src` as documentation so their code
//! blocks run as doc-tests. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/physics.md")]
pub mod physics {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/tag-files.md")]
pub mod tag_files {}
#[doc = include_str!("../../../book/src/coincidences.md")]
pub mod coincidences {}
#[doc = include_str!("../../../book/src/two-way.md")]
pub mod two_way {}
#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}
#[doc = include_str!("../../../book/src/checks.md")]
pub mod checks {}
