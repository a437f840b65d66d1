//! Per-scene annotations: camera poses, intrinsics, and object detections for
//! every frame, plus optional 3D object boxes.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Box2, Box3, Intrinsics, Pose};
use crate::graph::{ObjectId, PlaceId};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("frame at position {position} has id {found}, expected consecutive ids from 0")]
    NonConsecutiveFrameIds { position: usize, found: u32 },
    #[error("detection in frame {frame} references object {object} missing from objects3d")]
    UnknownDetectionObject { frame: u32, object: u32 },
    #[error("frame {frame}: {source}")]
    BadIntrinsics {
        frame: u32,
        source: crate::geometry::GeometryError,
    },
    #[error("anonymous detection in GT build (frame {0})")]
    AnonymousDetection(u32),
    #[error("scene has no 3D object boxes to project")]
    MissingObjects3d,
    #[error("invalid threshold: {0} must be positive")]
    NonPositiveThreshold(&'static str),
}

/// One 2D observation of an object in a frame. Ground-truth detections carry
/// the object identity; anonymous detections (predictions from a detector)
/// leave it unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(default)]
    pub object_id: Option<ObjectId>,
    #[serde(rename = "box")]
    pub bbox: Box2,
    #[serde(default)]
    pub score: Option<f64>,
}

/// One image: pose, intrinsics, and detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: PlaceId,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub detections: Vec<Detection>,
}

/// A 3D object annotation. Serialized with the orientation quaternion as
/// `[w, x, y, z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Object3dRecord", into = "Object3dRecord")]
pub struct Object3d {
    pub object_id: ObjectId,
    pub box3: Box3,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Object3dRecord {
    object_id: ObjectId,
    center: [f64; 3],
    half_extents: [f64; 3],
    q: [f64; 4],
    #[serde(default)]
    label: Option<String>,
}

impl TryFrom<Object3dRecord> for Object3d {
    type Error = crate::geometry::GeometryError;

    fn try_from(record: Object3dRecord) -> Result<Self, Self::Error> {
        let [w, x, y, z] = record.q;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(crate::geometry::GeometryError::NonUnitQuaternion(norm));
        }
        Ok(Object3d {
            object_id: record.object_id,
            box3: Box3 {
                center: Vector3::from(record.center),
                half_extents: Vector3::from(record.half_extents),
                orientation: UnitQuaternion::from_quaternion(q),
            },
            label: record.label,
        })
    }
}

impl From<Object3d> for Object3dRecord {
    fn from(object: Object3d) -> Self {
        let q = object.box3.orientation.quaternion();
        Object3dRecord {
            object_id: object.object_id,
            center: object.box3.center.into(),
            half_extents: object.box3.half_extents.into(),
            q: [q.w, q.i, q.j, q.k],
            label: object.label,
        }
    }
}

/// All annotations for one scene: an ordered frame list (frame ids are the
/// place ids) and, when available, the 3D boxes the detections came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub objects3d: Option<Vec<Object3d>>,
}

impl SceneAnnotation {
    /// Checks frame-id ordering, intrinsics sanity, and that every identified
    /// detection exists in `objects3d` when that list is present.
    pub fn validate(&self) -> Result<(), SceneError> {
        for (position, frame) in self.frames.iter().enumerate() {
            if frame.frame_id.index() != position {
                return Err(SceneError::NonConsecutiveFrameIds {
                    position,
                    found: frame.frame_id.0,
                });
            }
            frame
                .intrinsics
                .validate()
                .map_err(|source| SceneError::BadIntrinsics { frame: frame.frame_id.0, source })?;
        }
        if let Some(objects3d) = &self.objects3d {
            let known: std::collections::BTreeSet<_> =
                objects3d.iter().map(|o| o.object_id).collect();
            for frame in &self.frames {
                for detection in &frame.detections {
                    if let Some(id) = detection.object_id {
                        if !known.contains(&id) {
                            return Err(SceneError::UnknownDetectionObject {
                                frame: frame.frame_id.0,
                                object: id.0,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn label_of(&self, id: ObjectId) -> Option<String> {
        self.objects3d
            .as_ref()?
            .iter()
            .find(|o| o.object_id == id)
            .and_then(|o| o.label.clone())
    }
}

/// Pose thresholds deciding when two images capture the same place. Both must
/// hold simultaneously; the boundary is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtThresholds {
    /// Meters.
    pub translation: f64,
    /// Radians of geodesic rotation distance.
    pub rotation: f64,
}

impl Default for GtThresholds {
    fn default() -> Self {
        GtThresholds { translation: 1.0, rotation: 1.0 }
    }
}

impl GtThresholds {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.translation > 0.0) {
            return Err(SceneError::NonPositiveThreshold("translation"));
        }
        if !(self.rotation > 0.0) {
            return Err(SceneError::NonPositiveThreshold("rotation"));
        }
        Ok(())
    }
}
