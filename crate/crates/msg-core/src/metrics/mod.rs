//! Evaluation suite: edge-set IoU over aligned graphs, truth-to-result object
//! matching by accumulated GIoU, PP/PO IoU, and Recall@1.

pub mod assignment;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{giou, Box2};
use crate::graph::{MSGraph, ObjectId, PlaceId};
use crate::gt::object_tracks;
use crate::scene::{Detection, SceneAnnotation};

pub use assignment::{assignment_cost, solve_assignment};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("place count mismatch: ground truth has {gt}, prediction has {pred}")]
    PlaceCountMismatch { gt: usize, pred: usize },
    #[error("prediction has {pred} frames of detections, scene has {scene}")]
    FrameCountMismatch { pred: usize, scene: usize },
    #[error("empty objects: neither track ever appears")]
    EmptyObjects,
    #[error("matching references unknown ids: {0}")]
    MatchingIdMismatch(String),
    #[error("similarity matrix is {rows}x{cols}, expected {places}x{places}")]
    SimilarityShape { rows: usize, cols: usize, places: usize },
    #[error("recall undefined: no query image has a positive neighbor")]
    RecallUndefined,
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
}

/// True/false positive and false negative edge counts of one adjacency block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeCounts {
    #[serde(rename = "tp")]
    pub true_pos: usize,
    #[serde(rename = "fp")]
    pub false_pos: usize,
    #[serde(rename = "fn")]
    pub false_neg: usize,
}

impl EdgeCounts {
    /// `TP / (TP + FP + FN)`; 1 when all three are zero (two empty graphs
    /// agree perfectly).
    pub fn iou(&self) -> f64 {
        let denominator = self.true_pos + self.false_pos + self.false_neg;
        if denominator == 0 {
            1.0
        } else {
            self.true_pos as f64 / denominator as f64
        }
    }
}

/// Edge-level confusion counts of two edge sets over a shared, aligned vertex
/// universe: matched vertices occupy the overlap region and unmatched
/// vertices of either side are appended, so an edge is a true positive only
/// if both sides name exactly the same aligned endpoints.
pub fn edge_counts<T: Ord>(gt: &BTreeSet<T>, pred: &BTreeSet<T>) -> EdgeCounts {
    let true_pos = gt.intersection(pred).count();
    EdgeCounts {
        true_pos,
        false_pos: pred.len() - true_pos,
        false_neg: gt.len() - true_pos,
    }
}

/// Intersection over union of two edge sets on a shared aligned vertex
/// universe: `TP / (TP + FP + FN)`. Two empty sets score 1.
pub fn graph_iou<T: Ord>(gt: &BTreeSet<T>, pred: &BTreeSet<T>) -> f64 {
    edge_counts(gt, pred).iou()
}

/// Place-place IoU in percent. Place correspondence is fixed by image order,
/// so the vertex alignment is the identity; the graphs must have the same
/// number of places.
pub fn pp_iou(gt: &MSGraph, pred: &MSGraph) -> Result<f64, MetricsError> {
    Ok(100.0 * pp_counts(gt, pred)?.iou())
}

pub fn pp_counts(gt: &MSGraph, pred: &MSGraph) -> Result<EdgeCounts, MetricsError> {
    if gt.num_places() != pred.num_places() {
        return Err(MetricsError::PlaceCountMismatch {
            gt: gt.num_places(),
            pred: pred.num_places(),
        });
    }
    Ok(edge_counts(gt.pp_edges(), pred.pp_edges()))
}

/// A per-object appearance track: frame -> detection box.
pub type Track = BTreeMap<PlaceId, Box2>;

/// Accumulated-GIoU match score between a ground-truth track and a predicted
/// track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    /// Sum of per-frame GIoU over frames where both objects appear.
    pub accumulated_giou: f64,
    /// Number of frames where at least one of the two appears.
    pub union_frames: usize,
    /// `accumulated_giou / union_frames`, in `(-inf, 1]`.
    pub score: f64,
}

/// Computes the match score of two tracks. Errors when neither object ever
/// appears.
pub fn pair_match_score(gt: &Track, pred: &Track) -> Result<MatchScore, MetricsError> {
    let co_present = gt.iter().filter(|(frame, _)| pred.contains_key(frame));
    let mut accumulated_giou = 0.0;
    let mut shared = 0usize;
    for (frame, gt_box) in co_present {
        accumulated_giou += giou(gt_box, &pred[frame]);
        shared += 1;
    }
    let union_frames = gt.len() + pred.len() - shared;
    if union_frames == 0 {
        return Err(MetricsError::EmptyObjects);
    }
    Ok(MatchScore {
        accumulated_giou,
        union_frames,
        score: accumulated_giou / union_frames as f64,
    })
}

/// One-to-one alignment between ground-truth and predicted object sets.
/// Every retained pair has a strictly positive score; objects without a
/// meaningful spatial overlap stay unmatched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMatching {
    /// `(ground-truth id, predicted id, score)`.
    pub pairs: Vec<(ObjectId, ObjectId, f64)>,
    pub unmatched_gt: Vec<ObjectId>,
    pub unmatched_pred: Vec<ObjectId>,
}

impl ObjectMatching {
    pub fn identity(ids: impl IntoIterator<Item = ObjectId>) -> Self {
        ObjectMatching {
            pairs: ids.into_iter().map(|id| (id, id, 1.0)).collect(),
            unmatched_gt: Vec::new(),
            unmatched_pred: Vec::new(),
        }
    }

    /// Predicted id -> ground-truth id over the retained pairs.
    pub fn pred_to_gt(&self) -> BTreeMap<ObjectId, ObjectId> {
        self.pairs.iter().map(|&(gt, pred, _)| (pred, gt)).collect()
    }
}

/// Matches predicted objects to ground-truth objects: builds the score matrix
/// of all track pairs, solves a minimal-cost assignment on `1 - score`, and
/// discards assigned pairs whose score is not positive.
pub fn match_objects(
    gt_scene: &SceneAnnotation,
    pred_frames: &[Vec<Detection>],
) -> Result<ObjectMatching, MetricsError> {
    if pred_frames.len() != gt_scene.frames.len() {
        return Err(MetricsError::FrameCountMismatch {
            pred: pred_frames.len(),
            scene: gt_scene.frames.len(),
        });
    }
    let gt_detections: Vec<Vec<Detection>> =
        gt_scene.frames.iter().map(|f| f.detections.clone()).collect();
    let gt_tracks = object_tracks(&gt_detections);
    let pred_tracks = object_tracks(pred_frames);
    match_tracks(&gt_tracks, &pred_tracks)
}

/// Matching on already-extracted tracks.
pub fn match_tracks(
    gt_tracks: &BTreeMap<ObjectId, Track>,
    pred_tracks: &BTreeMap<ObjectId, Track>,
) -> Result<ObjectMatching, MetricsError> {
    let gt_ids: Vec<ObjectId> = gt_tracks.keys().copied().collect();
    let pred_ids: Vec<ObjectId> = pred_tracks.keys().copied().collect();
    let mut scores = DMatrix::zeros(gt_ids.len(), pred_ids.len());
    for (row, gt_id) in gt_ids.iter().enumerate() {
        for (col, pred_id) in pred_ids.iter().enumerate() {
            scores[(row, col)] =
                pair_match_score(&gt_tracks[gt_id], &pred_tracks[pred_id])?.score;
        }
    }
    let cost = scores.map(|score| 1.0 - score);
    let assigned = solve_assignment(&cost);

    let mut pairs = Vec::new();
    let mut matched_gt = BTreeSet::new();
    let mut matched_pred = BTreeSet::new();
    for (row, col) in assigned {
        let score = scores[(row, col)];
        if score > 0.0 {
            pairs.push((gt_ids[row], pred_ids[col], score));
            matched_gt.insert(gt_ids[row]);
            matched_pred.insert(pred_ids[col]);
        }
    }
    Ok(ObjectMatching {
        pairs,
        unmatched_gt: gt_ids.into_iter().filter(|id| !matched_gt.contains(id)).collect(),
        unmatched_pred: pred_ids.into_iter().filter(|id| !matched_pred.contains(id)).collect(),
    })
}

/// Aligned object universe for the place-object block: matched predicted
/// objects are renamed to their ground-truth counterpart; unmatched objects
/// of either side keep their own slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum AlignedObject {
    Shared(ObjectId),
    PredOnly(ObjectId),
}

fn aligned_po_counts(
    gt: &MSGraph,
    pred: &MSGraph,
    matching: &ObjectMatching,
) -> Result<EdgeCounts, MetricsError> {
    if gt.num_places() != pred.num_places() {
        return Err(MetricsError::PlaceCountMismatch {
            gt: gt.num_places(),
            pred: pred.num_places(),
        });
    }
    let gt_ids: BTreeSet<ObjectId> = gt.objects().iter().map(|o| o.id).collect();
    let pred_ids: BTreeSet<ObjectId> = pred.objects().iter().map(|o| o.id).collect();
    for &(gt_id, pred_id, _) in &matching.pairs {
        if !gt_ids.contains(&gt_id) {
            return Err(MetricsError::MatchingIdMismatch(format!(
                "pair references ground-truth object {gt_id} absent from the graph"
            )));
        }
        if !pred_ids.contains(&pred_id) {
            return Err(MetricsError::MatchingIdMismatch(format!(
                "pair references predicted object {pred_id} absent from the graph"
            )));
        }
    }
    for id in &matching.unmatched_gt {
        if !gt_ids.contains(id) {
            return Err(MetricsError::MatchingIdMismatch(format!(
                "unmatched ground-truth object {id} absent from the graph"
            )));
        }
    }
    for id in &matching.unmatched_pred {
        if !pred_ids.contains(id) {
            return Err(MetricsError::MatchingIdMismatch(format!(
                "unmatched predicted object {id} absent from the graph"
            )));
        }
    }

    let rename = matching.pred_to_gt();
    let gt_edges: BTreeSet<(PlaceId, AlignedObject)> = gt
        .po_edges()
        .iter()
        .map(|&(place, object)| (place, AlignedObject::Shared(object)))
        .collect();
    let pred_edges: BTreeSet<(PlaceId, AlignedObject)> = pred
        .po_edges()
        .iter()
        .map(|&(place, object)| match rename.get(&object) {
            Some(&gt_object) => (place, AlignedObject::Shared(gt_object)),
            None => (place, AlignedObject::PredOnly(object)),
        })
        .collect();
    Ok(edge_counts(&gt_edges, &pred_edges))
}

/// Place-object IoU in percent, after renaming matched predicted objects to
/// their ground-truth counterparts. Edges of unmatched predicted objects
/// count as false positives; edges of unmatched ground-truth objects as false
/// negatives.
pub fn po_iou(
    gt: &MSGraph,
    pred: &MSGraph,
    matching: &ObjectMatching,
) -> Result<f64, MetricsError> {
    Ok(100.0 * aligned_po_counts(gt, pred, matching)?.iou())
}

/// Recall@1 in percent: over query images having at least one ground-truth
/// pp edge, the fraction whose most-similar other image (diagonal excluded,
/// ties to the lowest index) is a true pp neighbor.
pub fn recall_at_1(similarity: &DMatrix<f64>, gt: &MSGraph) -> Result<f64, MetricsError> {
    let places = gt.num_places();
    if similarity.nrows() != places || similarity.ncols() != places {
        return Err(MetricsError::SimilarityShape {
            rows: similarity.nrows(),
            cols: similarity.ncols(),
            places,
        });
    }
    let mut queries = 0usize;
    let mut hits = 0usize;
    for i in 0..places {
        let query = PlaceId(i as u32);
        let has_positive = (0..places)
            .any(|j| j != i && gt.has_pp_edge(query, PlaceId(j as u32)));
        if !has_positive {
            continue;
        }
        queries += 1;
        let mut best = None;
        let mut best_value = f64::NEG_INFINITY;
        for j in 0..places {
            if j == i {
                continue;
            }
            if similarity[(i, j)] > best_value {
                best_value = similarity[(i, j)];
                best = Some(j);
            }
        }
        if let Some(top) = best {
            if gt.has_pp_edge(query, PlaceId(top as u32)) {
                hits += 1;
            }
        }
    }
    if queries == 0 {
        return Err(MetricsError::RecallUndefined);
    }
    Ok(100.0 * hits as f64 / queries as f64)
}

/// Evaluation result for one scene. `recall_at_1` is absent when no place
/// similarity was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_at_1: Option<f64>,
    pub pp_iou: f64,
    pub po_iou: f64,
    pub pp: EdgeCounts,
    pub po: EdgeCounts,
    pub matching: ObjectMatching,
}

/// Runs the full evaluation of a predicted graph against the ground truth:
/// object matching, PP IoU, PO IoU, and optionally Recall@1.
pub fn evaluate(
    gt: &MSGraph,
    pred: &MSGraph,
    gt_scene: &SceneAnnotation,
    pred_frames: &[Vec<Detection>],
    similarity: Option<&DMatrix<f64>>,
) -> Result<EvalReport, MetricsError> {
    if gt.num_places() != gt_scene.frames.len() {
        return Err(MetricsError::PlaceCountMismatch {
            gt: gt.num_places(),
            pred: gt_scene.frames.len(),
        });
    }
    let matching = match_objects(gt_scene, pred_frames)?;
    let pp = pp_counts(gt, pred)?;
    let po = aligned_po_counts(gt, pred, &matching)?;
    let recall = similarity.map(|sim| recall_at_1(sim, gt)).transpose()?;
    Ok(EvalReport {
        recall_at_1: recall,
        pp_iou: 100.0 * pp.iou(),
        po_iou: 100.0 * po.iou(),
        pp,
        po,
        matching,
    })
}

/// Unweighted per-scene means of the three metrics. Recall is averaged over
/// the reports that carry it, absent if none do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub recall_at_1: Option<f64>,
    pub pp_iou: f64,
    pub po_iou: f64,
}

pub fn aggregate(reports: &[EvalReport]) -> MeanMetrics {
    let n = reports.len().max(1) as f64;
    let recalls: Vec<f64> = reports.iter().filter_map(|r| r.recall_at_1).collect();
    MeanMetrics {
        recall_at_1: if recalls.is_empty() {
            None
        } else {
            Some(recalls.iter().sum::<f64>() / recalls.len() as f64)
        },
        pp_iou: reports.iter().map(|r| r.pp_iou).sum::<f64>() / n,
        po_iou: reports.iter().map(|r| r.po_iou).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, Pose};
    use crate::graph::ObjectNode;
    use crate::scene::Frame;
    use approx::assert_relative_eq;

    fn edges(list: &[(u32, u32)]) -> BTreeSet<(u32, u32)> {
        list.iter().copied().collect()
    }

    #[test]
    fn identical_edge_sets_score_one() {
        let e = edges(&[(0, 1), (1, 2)]);
        assert_eq!(graph_iou(&e, &e), 1.0);
        assert_eq!(graph_iou(&edges(&[]), &edges(&[])), 1.0);
    }

    #[test]
    fn one_shared_one_extra_each_scores_third() {
        let gt = edges(&[(0, 1), (1, 2)]);
        let pred = edges(&[(0, 1), (0, 2)]);
        assert_relative_eq!(graph_iou(&gt, &pred), 1.0 / 3.0);
        let counts = edge_counts(&gt, &pred);
        assert_eq!((counts.true_pos, counts.false_pos, counts.false_neg), (1, 1, 1));
    }

    #[test]
    fn extra_vertex_edges_count_as_false_positives() {
        // Identical graphs except the prediction grew an extra vertex (9)
        // with two incident edges: e / (e + 2).
        let gt = edges(&[(0, 1), (1, 2)]);
        let pred = edges(&[(0, 1), (1, 2), (0, 9), (1, 9)]);
        assert_relative_eq!(graph_iou(&gt, &pred), 2.0 / 4.0);
    }

    fn graph(places: usize, pp: &[(u32, u32)]) -> MSGraph {
        MSGraph::new(
            places,
            vec![],
            pp.iter().map(|&(a, b)| (PlaceId(a), PlaceId(b))),
            [],
        )
        .unwrap()
    }

    fn graph_with_po(places: usize, ids: &[u32], po: &[(u32, u32)]) -> MSGraph {
        MSGraph::new(
            places,
            ids.iter().map(|&k| ObjectNode { id: ObjectId(k), label: None }).collect(),
            [],
            po.iter().map(|&(p, k)| (PlaceId(p), ObjectId(k))),
        )
        .unwrap()
    }

    #[test]
    fn pp_iou_examples() {
        let gt = graph(3, &[(0, 1)]);
        assert_eq!(pp_iou(&gt, &gt).unwrap(), 100.0);
        assert_eq!(pp_iou(&gt, &graph(3, &[])).unwrap(), 0.0);
        assert_relative_eq!(pp_iou(&gt, &graph(3, &[(0, 1), (1, 2)])).unwrap(), 50.0);
        assert!(pp_iou(&gt, &graph(4, &[])).is_err());
    }

    fn track(frames: &[(u32, [f64; 4])]) -> Track {
        frames
            .iter()
            .map(|&(f, [x1, y1, x2, y2])| (PlaceId(f), Box2::new(x1, y1, x2, y2).unwrap()))
            .collect()
    }

    const B: [f64; 4] = [0.0, 0.0, 10.0, 10.0];

    #[test]
    fn match_score_with_partial_overlap() {
        // Co-present in 2 frames with identical boxes; gt appears in 3 frames
        // total, pred in 2: accumulated 2 over union 3.
        let gt = track(&[(0, B), (1, B), (2, B)]);
        let pred = track(&[(0, B), (1, B)]);
        let m = pair_match_score(&gt, &pred).unwrap();
        assert_eq!(m.accumulated_giou, 2.0);
        assert_eq!(m.union_frames, 3);
        assert_relative_eq!(m.score, 2.0 / 3.0);
    }

    #[test]
    fn match_score_disjoint_tracks() {
        let gt = track(&[(0, B), (1, B)]);
        let pred = track(&[(2, B), (3, B), (4, B)]);
        let m = pair_match_score(&gt, &pred).unwrap();
        assert_eq!(m.accumulated_giou, 0.0);
        assert_eq!(m.union_frames, 5);
        assert_eq!(m.score, 0.0);
    }

    #[test]
    fn match_score_identical_tracks() {
        let gt = track(&[(0, B), (1, B), (2, B), (3, B)]);
        let m = pair_match_score(&gt, &gt).unwrap();
        assert_eq!(m.union_frames, 4);
        assert_eq!(m.score, 1.0);
    }

    #[test]
    fn match_score_requires_appearances() {
        assert!(matches!(
            pair_match_score(&Track::new(), &Track::new()),
            Err(MetricsError::EmptyObjects)
        ));
    }

    fn intr() -> Intrinsics {
        Intrinsics { fx: 200.0, fy: 200.0, cx: 128.0, cy: 96.0, width: 256, height: 192 }
    }

    fn scene_from(frames: Vec<Vec<Detection>>) -> SceneAnnotation {
        SceneAnnotation {
            scene_id: "m".into(),
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(i, detections)| Frame {
                    frame_id: PlaceId(i as u32),
                    pose: Pose::identity(),
                    intrinsics: intr(),
                    detections,
                })
                .collect(),
            objects3d: None,
        }
    }

    fn det(id: u32, bbox: [f64; 4]) -> Detection {
        Detection {
            object_id: Some(ObjectId(id)),
            bbox: Box2::new(bbox[0], bbox[1], bbox[2], bbox[3]).unwrap(),
            score: None,
        }
    }

    #[test]
    fn relabeled_identical_tracks_match_perfectly() {
        let gt_frames = vec![
            vec![det(0, [0.0, 0.0, 10.0, 10.0]), det(1, [20.0, 20.0, 40.0, 40.0])],
            vec![det(0, [0.0, 0.0, 10.0, 10.0])],
        ];
        let pred_frames = vec![
            vec![det(5, [0.0, 0.0, 10.0, 10.0]), det(9, [20.0, 20.0, 40.0, 40.0])],
            vec![det(5, [0.0, 0.0, 10.0, 10.0])],
        ];
        let matching = match_objects(&scene_from(gt_frames), &pred_frames).unwrap();
        assert_eq!(matching.pairs.len(), 2);
        assert!(matching.pairs.iter().all(|&(_, _, m)| m == 1.0));
        assert!(matching.unmatched_gt.is_empty());
        assert!(matching.unmatched_pred.is_empty());
        assert_eq!(matching.pred_to_gt()[&ObjectId(5)], ObjectId(0));
        assert_eq!(matching.pred_to_gt()[&ObjectId(9)], ObjectId(1));
    }

    #[test]
    fn spurious_prediction_stays_unmatched() {
        let gt_frames = vec![vec![det(0, [0.0, 0.0, 10.0, 10.0])]];
        let pred_frames = vec![vec![
            det(0, [0.0, 0.0, 10.0, 10.0]),
            det(1, [100.0, 100.0, 110.0, 110.0]),
        ]];
        let matching = match_objects(&scene_from(gt_frames), &pred_frames).unwrap();
        assert_eq!(matching.pairs.len(), 1);
        assert_eq!(matching.unmatched_pred, vec![ObjectId(1)]);
    }

    #[test]
    fn po_iou_is_invariant_under_pred_relabeling() {
        let gt = graph_with_po(3, &[0, 1], &[(0, 0), (1, 0), (2, 1)]);
        let pred_a = graph_with_po(3, &[7, 8], &[(0, 7), (1, 7), (2, 8)]);
        let pred_b = graph_with_po(3, &[8, 7], &[(0, 8), (1, 8), (2, 7)]);
        let matching_a = ObjectMatching {
            pairs: vec![(ObjectId(0), ObjectId(7), 1.0), (ObjectId(1), ObjectId(8), 1.0)],
            unmatched_gt: vec![],
            unmatched_pred: vec![],
        };
        let matching_b = ObjectMatching {
            pairs: vec![(ObjectId(0), ObjectId(8), 1.0), (ObjectId(1), ObjectId(7), 1.0)],
            unmatched_gt: vec![],
            unmatched_pred: vec![],
        };
        let a = po_iou(&gt, &pred_a, &matching_a).unwrap();
        let b = po_iou(&gt, &pred_b, &matching_b).unwrap();
        assert_eq!(a, 100.0);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn missed_object_edges_are_false_negatives() {
        let gt = graph_with_po(4, &[0], &[(0, 0), (1, 0), (3, 0)]);
        let pred = graph_with_po(4, &[], &[]);
        let matching = ObjectMatching {
            pairs: vec![],
            unmatched_gt: vec![ObjectId(0)],
            unmatched_pred: vec![],
        };
        let counts = aligned_po_counts(&gt, &pred, &matching).unwrap();
        assert_eq!((counts.true_pos, counts.false_pos, counts.false_neg), (0, 0, 3));
    }

    #[test]
    fn po_iou_mixed_example() {
        // gt object A -> {0, 1}; matched prediction -> {0, 2}: one shared
        // edge, one false positive, one false negative.
        let gt = graph_with_po(3, &[0], &[(0, 0), (1, 0)]);
        let pred = graph_with_po(3, &[4], &[(0, 4), (2, 4)]);
        let matching = ObjectMatching {
            pairs: vec![(ObjectId(0), ObjectId(4), 0.5)],
            unmatched_gt: vec![],
            unmatched_pred: vec![],
        };
        assert_relative_eq!(po_iou(&gt, &pred, &matching).unwrap(), 100.0 / 3.0);
    }

    #[test]
    fn po_iou_rejects_unknown_matching_ids() {
        let gt = graph_with_po(2, &[0], &[(0, 0)]);
        let pred = graph_with_po(2, &[1], &[(0, 1)]);
        let matching = ObjectMatching {
            pairs: vec![(ObjectId(3), ObjectId(1), 0.9)],
            unmatched_gt: vec![],
            unmatched_pred: vec![],
        };
        assert!(matches!(
            po_iou(&gt, &pred, &matching),
            Err(MetricsError::MatchingIdMismatch(_))
        ));
    }

    #[test]
    fn recall_examples() {
        // 3 images, edge {0, 1}: only 0 and 1 are queries. Similarity ranks 1
        // first for query 0 (hit) and 2 first for query 1 (miss).
        let gt = graph(3, &[(0, 1)]);
        let sim = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0, 0.9, 0.1, //
                0.2, 1.0, 0.8, //
                0.0, 0.0, 1.0,
            ],
        );
        assert_relative_eq!(recall_at_1(&sim, &gt).unwrap(), 50.0);

        // Adjacency itself as similarity: perfect recall.
        let adjacency = DMatrix::from_fn(3, 3, |i, j| {
            if gt.has_pp_edge(PlaceId(i as u32), PlaceId(j as u32)) {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(recall_at_1(&adjacency, &gt).unwrap(), 100.0);

        // Every query ranks a non-neighbor first.
        let wrong = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0, 0.0, 0.9, //
                0.0, 1.0, 0.9, //
                0.9, 0.0, 1.0,
            ],
        );
        assert_eq!(recall_at_1(&wrong, &gt).unwrap(), 0.0);

        // No positives anywhere: undefined.
        assert!(matches!(
            recall_at_1(&DMatrix::zeros(3, 3), &graph(3, &[])),
            Err(MetricsError::RecallUndefined)
        ));
    }

    #[test]
    fn recall_is_invariant_under_monotone_transforms() {
        let gt = graph(4, &[(0, 1), (2, 3)]);
        let sim = DMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let transformed = sim.map(|v| (v * 4.0).exp() - 0.5);
        assert_eq!(
            recall_at_1(&sim, &gt).unwrap(),
            recall_at_1(&transformed, &gt).unwrap()
        );
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let frames = vec![
            vec![det(0, [0.0, 0.0, 10.0, 10.0])],
            vec![det(0, [5.0, 5.0, 15.0, 15.0]), det(1, [50.0, 50.0, 80.0, 90.0])],
            vec![],
        ];
        let scene = scene_from(frames.clone());
        let gt = graph_with_po(3, &[0, 1], &[(0, 0), (1, 0), (1, 1)]);
        let gt_with_pp = MSGraph::new(
            3,
            gt.objects().to_vec(),
            [(PlaceId(0), PlaceId(1))],
            gt.po_edges().iter().copied(),
        )
        .unwrap();
        let adjacency = DMatrix::from_fn(3, 3, |i, j| {
            if gt_with_pp.has_pp_edge(PlaceId(i as u32), PlaceId(j as u32)) {
                1.0
            } else {
                0.0
            }
        });
        let report =
            evaluate(&gt_with_pp, &gt_with_pp, &scene, &frames, Some(&adjacency)).unwrap();
        assert_eq!(report.pp_iou, 100.0);
        assert_eq!(report.po_iou, 100.0);
        assert_eq!(report.recall_at_1, Some(100.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let frames = vec![vec![det(0, [0.0, 0.0, 10.0, 10.0])], vec![]];
        let scene = scene_from(frames);
        let gt = MSGraph::new(
            2,
            vec![ObjectNode { id: ObjectId(0), label: None }],
            [(PlaceId(0), PlaceId(1))],
            [(PlaceId(0), ObjectId(0))],
        )
        .unwrap();
        let pred = MSGraph::empty(2);
        let report = evaluate(&gt, &pred, &scene, &[vec![], vec![]], None).unwrap();
        assert_eq!(report.pp_iou, 0.0);
        assert_eq!(report.po_iou, 0.0);
        assert_eq!(report.recall_at_1, None);
    }

    #[test]
    fn report_json_shape() {
        let report = EvalReport {
            recall_at_1: None,
            pp_iou: 50.0,
            po_iou: 25.0,
            pp: EdgeCounts { true_pos: 1, false_pos: 1, false_neg: 0 },
            po: EdgeCounts { true_pos: 1, false_pos: 2, false_neg: 1 },
            matching: ObjectMatching {
                pairs: vec![(ObjectId(0), ObjectId(3), 0.75)],
                unmatched_gt: vec![ObjectId(1)],
                unmatched_pred: vec![],
            },
        };
        let value: serde_json::Value = serde_json::to_value(&report).unwrap();
        assert!(value["recall_at_1"].is_null());
        assert_eq!(value["pp"]["tp"], 1);
        assert_eq!(value["po"]["fn"], 1);
        assert_eq!(value["matching"]["pairs"][0][0], 0);
        assert_eq!(value["matching"]["pairs"][0][2], 0.75);
        let back: EvalReport = serde_json::from_value(value).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn aggregate_means() {
        let base = EvalReport {
            recall_at_1: Some(100.0),
            pp_iou: 80.0,
            po_iou: 60.0,
            pp: EdgeCounts::default(),
            po: EdgeCounts::default(),
            matching: ObjectMatching { pairs: vec![], unmatched_gt: vec![], unmatched_pred: vec![] },
        };
        let mut other = base.clone();
        other.recall_at_1 = None;
        other.pp_iou = 40.0;
        other.po_iou = 20.0;
        let mean = aggregate(&[base, other]);
        assert_eq!(mean.recall_at_1, Some(100.0));
        assert_relative_eq!(mean.pp_iou, 60.0);
        assert_relative_eq!(mean.po_iou, 40.0);
    }
}
