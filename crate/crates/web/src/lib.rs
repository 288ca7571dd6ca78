//! Browser demo of contour-based shape refinement. The page (see `www/`)
//! drives a [`Studio`]: sketch an outline and reconstruct, draw a stroke
//! and edit, orbit the view. All optimization runs in the page.

pub mod studio;

#[cfg(target_arch = "wasm32")]
mod bindings;

pub use studio::{RunSummary, Studio};
