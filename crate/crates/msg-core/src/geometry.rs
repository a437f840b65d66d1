//! Pose algebra, pinhole projection of oriented 3D boxes, and 2D box overlap
//! measures.

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate box [{x1}, {y1}, {x2}, {y2}]: corners must satisfy x1 < x2 and y1 < y2")]
    DegenerateBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("quaternion norm {0} too far from 1")]
    NonUnitQuaternion(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// World-from-camera rigid transform. `rotation` maps camera-frame vectors to
/// world-frame vectors; `translation` is the camera center in the world frame,
/// in meters. Camera frame convention: +z forward, +x right, +y down.
/// Serialized as `{"q": [w, x, y, z], "t": [x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRecord", into = "PoseRecord")]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PoseRecord {
    q: [f64; 4],
    t: [f64; 3],
}

impl TryFrom<PoseRecord> for Pose {
    type Error = GeometryError;

    fn try_from(record: PoseRecord) -> Result<Self, Self::Error> {
        let [w, x, y, z] = record.q;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(GeometryError::NonUnitQuaternion(norm));
        }
        Ok(Pose {
            rotation: UnitQuaternion::from_quaternion(q),
            translation: Vector3::from(record.t),
        })
    }
}

impl From<Pose> for PoseRecord {
    fn from(pose: Pose) -> Self {
        let q = pose.rotation.quaternion();
        PoseRecord {
            q: [q.w, q.i, q.j, q.k],
            t: [pose.translation.x, pose.translation.y, pose.translation.z],
        }
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: UnitQuaternion::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    /// Camera-frame coordinates of a world point.
    pub fn world_to_camera(&self, point: &Point3<f64>) -> Point3<f64> {
        self.rotation.inverse_transform_point(&Point3::from(point.coords - self.translation))
    }

    /// World coordinates of a camera-frame point.
    pub fn camera_to_world(&self, point: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transform_point(point).coords + self.translation)
    }
}

/// Relative pose distance: Euclidean distance between camera centers in
/// meters, and the geodesic rotation angle in radians,
/// `arccos(clamp((trace(Ra' Rb) - 1) / 2, -1, 1))`.
pub fn relative_pose_distance(a: &Pose, b: &Pose) -> (f64, f64) {
    let translation = (a.translation - b.translation).norm();
    let relative = a.rotation.to_rotation_matrix().transpose() * b.rotation.to_rotation_matrix();
    let cos_angle = ((relative.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    (translation, cos_angle.acos())
}

/// Pinhole camera intrinsics, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cx={} outside (0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cy={} outside (0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Pixel coordinates of a camera-frame point with positive depth.
    pub fn project(&self, point: &Point3<f64>) -> (f64, f64) {
        (
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        )
    }
}

/// Axis-aligned 2D box in pixel corner form, `x1 < x2` and `y1 < y2`.
/// Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Box2 {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl TryFrom<[f64; 4]> for Box2 {
    type Error = GeometryError;

    fn try_from([x1, y1, x2, y2]: [f64; 4]) -> Result<Self, Self::Error> {
        Box2::new(x1, y1, x2, y2)
    }
}

impl From<Box2> for [f64; 4] {
    fn from(b: Box2) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl Box2 {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1 < x2 && y1 < y2) || !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeometryError::DegenerateBox { x1, y1, x2, y2 });
        }
        Ok(Box2 { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn intersection_area(&self, other: &Box2) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest axis-aligned box enclosing both.
    pub fn hull(&self, other: &Box2) -> Box2 {
        Box2 {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn box_iou(a: &Box2, b: &Box2) -> f64 {
    let intersection = a.intersection_area(b);
    let union = a.area() + b.area() - intersection;
    intersection / union
}

/// Generalized IoU: IoU minus the fraction of the enclosing box not covered
/// by the union. Range `(-1, 1]`, equal to 1 only for identical boxes.
pub fn giou(a: &Box2, b: &Box2) -> f64 {
    let intersection = a.intersection_area(b);
    let union = a.area() + b.area() - intersection;
    let enclosing = a.hull(b).area();
    intersection / union - (enclosing - union) / enclosing
}

/// Oriented 3D box: center and half-extents in meters, orientation as a unit
/// quaternion mapping box-frame axes to world-frame axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Box3 {
    /// The 8 corners in world coordinates.
    pub fn corners(&self) -> [Point3<f64>; 8] {
        let mut corners = [Point3::origin(); 8];
        for (index, corner) in corners.iter_mut().enumerate() {
            let sx = if index & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if index & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if index & 4 == 0 { -1.0 } else { 1.0 };
            let local = Vector3::new(
                sx * self.half_extents.x,
                sy * self.half_extents.y,
                sz * self.half_extents.z,
            );
            *corner = Point3::from(self.center + self.orientation.transform_vector(&local));
        }
        corners
    }
}

/// Visibility and degeneracy thresholds for [`project_box3`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectParams {
    /// Projected boxes with clipped area below this many square pixels are
    /// discarded.
    pub min_area: f64,
    /// Corners closer than this (meters) to the camera plane do not count as
    /// visible.
    pub near: f64,
    /// Minimum number of corners in front of the camera for the box to count
    /// as visible at all.
    pub min_visible_corners: usize,
}

impl Default for ProjectParams {
    fn default() -> Self {
        ProjectParams { min_area: 100.0, near: 0.05, min_visible_corners: 1 }
    }
}

/// Projects an oriented 3D box into an image as the axis-aligned hull of its
/// visible corners, clipped to the image rectangle. Returns `None` when the
/// box is behind the camera or its projection is too small.
pub fn project_box3(
    box3: &Box3,
    camera: &Pose,
    intrinsics: &Intrinsics,
    params: &ProjectParams,
) -> Option<Box2> {
    let mut u_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut visible = 0usize;
    for corner in box3.corners() {
        let in_camera = camera.world_to_camera(&corner);
        if in_camera.z <= params.near {
            continue;
        }
        visible += 1;
        let (u, v) = intrinsics.project(&in_camera);
        u_min = u_min.min(u);
        u_max = u_max.max(u);
        v_min = v_min.min(v);
        v_max = v_max.max(v);
    }
    if visible < params.min_visible_corners.max(1) {
        return None;
    }
    let x1 = u_min.clamp(0.0, intrinsics.width as f64);
    let x2 = u_max.clamp(0.0, intrinsics.width as f64);
    let y1 = v_min.clamp(0.0, intrinsics.height as f64);
    let y2 = v_max.clamp(0.0, intrinsics.height as f64);
    let clipped = Box2::new(x1, y1, x2, y2).ok()?;
    if clipped.area() < params.min_area {
        return None;
    }
    Some(clipped)
}
