//! Reconstruction and editing of template-deformable meshes from line
//! drawings.
//!
//! A [`TemplateMesh`] decodes a low-dimensional [`LatentCode`] into a
//! triangle mesh. The mesh is rasterized through a pinhole [`Camera`], its
//! external contour is lifted back onto the surface, and the code is refined
//! by gradient descent so the projected contour matches the drawing.

pub mod camera;
pub mod chamfer;
pub mod contour;
pub mod error;
pub mod image;
pub mod init;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod refine;
pub mod shape;
pub mod synth;

pub use camera::{Camera, CameraSpec, Point2};
pub use chamfer::{chamfer_loss, ChamferMode, ChamferResult, ChamferTarget};
pub use contour::{
    external_contour_of_mask, filter_sketch_external, lift_contour, mesh_contour_anchors, sketch_to_mask, Anchor,
    SketchFilter, SurfaceSampleSet,
};
pub use error::{Error, Result};
pub use image::BinaryImage;
pub use init::initialize_code;
pub use mesh::{Face, Mesh, Point3};
pub use metrics::{chamfer_3d, normal_consistency, sample_surface};
pub use raster::{rasterize, render_normal_map, RasterBuffers};
pub use refine::{optimize, optimize_with, LossTerms, Objective, RefinementConfig, RefinementTrace};
pub use shape::{fit_basis, LatentCode, TemplateMesh};
pub use synth::{render_occluding, render_sketchfd, SketchStyle};
