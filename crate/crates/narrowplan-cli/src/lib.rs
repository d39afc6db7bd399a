//! Library surface behind the `narrowplan` binary: scene-file loading, the
//! seeded benchmark harness, tuning grids, and rendering. Kept as a library
//! so integration tests drive the exact code paths the binary uses.

pub mod bench;
pub mod render;
pub mod scene;
pub mod tune;
