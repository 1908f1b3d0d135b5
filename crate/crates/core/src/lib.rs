//! Towers over free groups.
//!
//! Modules, bottom-up:
//! - [`word`]: free-group words, roots, conjugacy, pieces
//! - [`dioph`]: integer lattices, Hermite/Smith forms, closure cosets
//! - [`normal`]: presentations, morphisms, normal forms and the word problem
//! - [`gog`]: graphs of groups, GADs, Dehn twists, modular generators
//! - [`tower`]: flats, floors, towers and their JSON specs
//! - [`construct`]: doubles, twin towers, closures, completions
//! - [`testseq`]: test-sequence points, verification and oracles

pub mod construct;
pub mod dioph;
pub mod gog;
pub mod normal;
pub mod testseq;
pub mod tower;
pub mod word;

pub use dioph::{ClosureEmbedding, Coset, IntMatrix, Lattice};
pub use normal::{Morphism, Presentation, Verdict, VerdictOptions};
pub use tower::{GlueOptions, Tower, TowerError};
pub use word::{Basis, Letter, Word, WordError};
