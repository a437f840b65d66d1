//! Ground-truth graph construction from posed, annotated scenes.

use std::collections::BTreeSet;

use crate::geometry::{project_box3, relative_pose_distance, ProjectParams};
use crate::graph::{MSGraph, ObjectId, ObjectNode, PlaceId};
use crate::scene::{Detection, GtThresholds, SceneAnnotation, SceneError};

/// Builds the ground-truth graph of a scene: a pp edge joins two frames when
/// their translation and rotation distances are both within the thresholds
/// (inclusive), and a po edge joins a frame to every object detected in it.
/// Objects are ordered by first appearance. Every detection must carry an
/// object id.
pub fn build_gt_graph(
    scene: &SceneAnnotation,
    thresholds: &GtThresholds,
) -> Result<MSGraph, SceneError> {
    scene.validate()?;
    thresholds.validate()?;

    let mut pp_edges = Vec::new();
    for (i, a) in scene.frames.iter().enumerate() {
        for b in scene.frames.iter().skip(i + 1) {
            let (translation, rotation) = relative_pose_distance(&a.pose, &b.pose);
            if translation <= thresholds.translation && rotation <= thresholds.rotation {
                pp_edges.push((a.frame_id, b.frame_id));
            }
        }
    }

    let mut seen = BTreeSet::new();
    let mut objects = Vec::new();
    let mut po_edges = Vec::new();
    for frame in &scene.frames {
        for detection in &frame.detections {
            let id = detection
                .object_id
                .ok_or(SceneError::AnonymousDetection(frame.frame_id.0))?;
            if seen.insert(id) {
                objects.push(ObjectNode { id, label: scene.label_of(id) });
            }
            po_edges.push((frame.frame_id, id));
        }
    }

    Ok(MSGraph::new(scene.frames.len(), objects, pp_edges, po_edges)
        .expect("edges are built from validated frames and registered objects"))
}

/// Regenerates every frame's detections by projecting the scene's 3D boxes.
/// Objects invisible in a frame produce no detection there. The result is a
/// deterministic function of the scene and parameters.
pub fn derive_detections(
    scene: &SceneAnnotation,
    params: &ProjectParams,
) -> Result<SceneAnnotation, SceneError> {
    let objects3d = scene.objects3d.as_ref().ok_or(SceneError::MissingObjects3d)?;
    let mut derived = scene.clone();
    for frame in &mut derived.frames {
        frame.detections = objects3d
            .iter()
            .filter_map(|object| {
                project_box3(&object.box3, &frame.pose, &frame.intrinsics, params).map(|bbox| {
                    Detection { object_id: Some(object.object_id), bbox, score: None }
                })
            })
            .collect();
    }
    derived.validate()?;
    Ok(derived)
}

/// Per-object tracks: frame index -> box, keeping the largest-area box when
/// an object is detected more than once in one frame. Detections without an
/// id are skipped.
pub fn object_tracks(
    frames: &[Vec<Detection>],
) -> std::collections::BTreeMap<ObjectId, std::collections::BTreeMap<PlaceId, crate::geometry::Box2>>
{
    let mut tracks: std::collections::BTreeMap<
        ObjectId,
        std::collections::BTreeMap<PlaceId, crate::geometry::Box2>,
    > = std::collections::BTreeMap::new();
    for (index, detections) in frames.iter().enumerate() {
        let frame_id = PlaceId(index as u32);
        for detection in detections {
            let Some(id) = detection.object_id else { continue };
            let entry = tracks.entry(id).or_default();
            match entry.get(&frame_id) {
                Some(existing) if existing.area() >= detection.bbox.area() => {}
                _ => {
                    entry.insert(frame_id, detection.bbox);
                }
            }
        }
    }
    tracks
}
