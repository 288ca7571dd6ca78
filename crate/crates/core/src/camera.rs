//! Pinhole camera orbiting the origin.
//!
//! Camera frame: `x` right, `y` down, `z` forward (towards the origin).
//! Pixel `(i, j)` covers `[i, i+1) x [j, j+1)` in continuous image
//! coordinates, so its center sits at `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix2x3, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point3;

pub type Point2 = Vector2<f64>;

/// Points closer than this to the camera plane cannot be projected.
pub const NEAR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    azimuth: f64,
    elevation: f64,
    distance: f64,
    focal: f64,
    width: usize,
    height: usize,
    principal: Point2,
    rotation: Matrix3<f64>,
    eye: Point3,
}

impl Camera {
    /// Angles in radians; principal point at the image center.
    pub fn new(
        azimuth: f64,
        elevation: f64,
        distance: f64,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Camera> {
        let principal = Point2::new(width as f64 / 2.0, height as f64 / 2.0);
        Camera::with_principal(azimuth, elevation, distance, focal, width, height, principal)
    }

    pub fn with_principal(
        azimuth: f64,
        elevation: f64,
        distance: f64,
        focal: f64,
        width: usize,
        height: usize,
        principal: Point2,
    ) -> Result<Camera> {
        if !(azimuth.is_finite() && elevation.is_finite()) {
            return Err(Error::InvalidCamera("angles must be finite".into()));
        }
        if elevation.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidCamera("elevation must be within (-90, 90) degrees".into()));
        }
        if !(distance.is_finite() && distance > 0.0) {
            return Err(Error::InvalidCamera("distance must be positive".into()));
        }
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::InvalidCamera("focal must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if !(principal.x.is_finite() && principal.y.is_finite()) {
            return Err(Error::InvalidCamera("principal point must be finite".into()));
        }
        let (sa, ca) = azimuth.sin_cos();
        let (se, ce) = elevation.sin_cos();
        let eye = Point3::new(ce * sa, se, ce * ca) * distance;
        let forward = -eye / distance;
        let right = forward.cross(&Point3::y()).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Camera {
            azimuth,
            elevation,
            distance,
            focal,
            width,
            height,
            principal,
            rotation,
            eye,
        })
    }

    /// Default framing for an object of the given bounding radius:
    /// distance three radii, focal 1.2 times the short image side.
    pub fn framing(azimuth: f64, elevation: f64, width: usize, height: usize, radius: f64) -> Result<Camera> {
        let focal = 1.2 * width.min(height) as f64;
        Camera::new(azimuth, elevation, 3.0 * radius, focal, width, height)
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }
    pub fn elevation(&self) -> f64 {
        self.elevation
    }
    pub fn distance(&self) -> f64 {
        self.distance
    }
    pub fn focal(&self) -> f64 {
        self.focal
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn principal(&self) -> Point2 {
        self.principal
    }
    pub fn eye(&self) -> Point3 {
        self.eye
    }
    /// World-to-camera rotation (rows are the camera axes in world frame).
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn with_view(&self, azimuth: f64, elevation: f64) -> Result<Camera> {
        Camera::with_principal(
            azimuth,
            elevation,
            self.distance,
            self.focal,
            self.width,
            self.height,
            self.principal,
        )
    }

    pub fn with_size(&self, width: usize, height: usize) -> Result<Camera> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera::with_principal(
            self.azimuth,
            self.elevation,
            self.distance,
            self.focal * sx.min(sy),
            width,
            height,
            Point2::new(self.principal.x * sx, self.principal.y * sy),
        )
    }

    pub fn to_camera(&self, p: &Point3) -> Point3 {
        self.rotation * (p - self.eye)
    }

    pub fn direction_to_camera(&self, d: &Point3) -> Point3 {
        self.rotation * d
    }

    /// Projection of a camera-frame point.
    pub fn project_camera(&self, pc: &Point3) -> Result<Point2> {
        if pc.z <= NEAR {
            return Err(Error::BehindCamera { depth: pc.z });
        }
        Ok(Point2::new(
            self.principal.x + self.focal * pc.x / pc.z,
            self.principal.y + self.focal * pc.y / pc.z,
        ))
    }

    pub fn project(&self, p: &Point3) -> Result<Point2> {
        self.project_camera(&self.to_camera(p))
    }

    /// Pixel coordinates and the 2x3 Jacobian with respect to the world point.
    pub fn project_with_jacobian(&self, p: &Point3) -> Result<(Point2, Matrix2x3<f64>)> {
        let pc = self.to_camera(p);
        let uv = self.project_camera(&pc)?;
        let iz = 1.0 / pc.z;
        let f = self.focal;
        let jc = Matrix2x3::new(
            f * iz,
            0.0,
            -f * pc.x * iz * iz,
            0.0,
            f * iz,
            -f * pc.y * iz * iz,
        );
        Ok((uv, jc * self.rotation))
    }

    pub fn spec(&self) -> CameraSpec {
        CameraSpec {
            azimuth_deg: self.azimuth.to_degrees(),
            elevation_deg: self.elevation.to_degrees(),
            distance: self.distance,
            focal_px: self.focal,
            width: self.width,
            height: self.height,
            cx: Some(self.principal.x),
            cy: Some(self.principal.y),
        }
    }
}

/// Human-editable camera description; angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub distance: f64,
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
}

impl CameraSpec {
    /// Per-field validation messages; empty when the spec is usable.
    pub fn field_errors(&self) -> Vec<(&'static str, String)> {
        let mut errs = Vec::new();
        if !self.azimuth_deg.is_finite() {
            errs.push(("azimuth_deg", "must be finite".to_string()));
        }
        if !(self.elevation_deg.is_finite() && self.elevation_deg.abs() < 90.0) {
            errs.push(("elevation_deg", "must be within (-90, 90)".to_string()));
        }
        if !(self.distance.is_finite() && self.distance > 0.0) {
            errs.push(("distance", "must be positive".to_string()));
        }
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            errs.push(("focal_px", "must be positive".to_string()));
        }
        if self.width == 0 {
            errs.push(("width", "must be positive".to_string()));
        }
        if self.height == 0 {
            errs.push(("height", "must be positive".to_string()));
        }
        errs
    }

    pub fn to_camera(&self) -> Result<Camera> {
        if let Some((field, msg)) = self.field_errors().into_iter().next() {
            return Err(Error::InvalidCamera(format!("{field} {msg}")));
        }
        let principal = Point2::new(
            self.cx.unwrap_or(self.width as f64 / 2.0),
            self.cy.unwrap_or(self.height as f64 / 2.0),
        );
        Camera::with_principal(
            self.azimuth_deg.to_radians(),
            self.elevation_deg.to_radians(),
            self.distance,
            self.focal_px,
            self.width,
            self.height,
            principal,
        )
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Camera> {
        let text = std::fs::read_to_string(path)?;
        let spec: CameraSpec = serde_json::from_str(&text)?;
        spec.to_camera()
    }
}
