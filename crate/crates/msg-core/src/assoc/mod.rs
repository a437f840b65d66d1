//! Graph prediction from embeddings: cosine-thresholded place edges and
//! online object association against a per-scene memory bank.

pub mod bank;
pub mod embeddings;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Box2;
use crate::graph::{GraphError, MSGraph, ObjectId, ObjectNode, PlaceId};
use crate::metrics::solve_assignment;
use crate::scene::Detection;

pub use bank::{update_rule, update_rule_names, MemoryBank, PrototypeUpdate};
pub use embeddings::{EmbeddingError, EmbeddingSet, FrameEmbeddings};

#[derive(Debug, Error)]
pub enum AssocError {
    #[error("threshold {name} = {value} outside (-1, 1)")]
    ThresholdOutOfRange { name: &'static str, value: f64 },
    #[error("unknown bank update rule {found:?}; known rules: {known}")]
    UnknownUpdateRule { found: String, known: String },
    #[error("embeddings cover {emb} frames but the scene has {frames}")]
    FrameCountMismatch { emb: usize, frames: usize },
    #[error("frame {frame}: {emb} detection embeddings for {detections} detections")]
    DetectionCountMismatch { frame: usize, emb: usize, detections: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Thresholds and bank behavior for graph prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssocConfig {
    /// Cosine similarity at or above which two places connect.
    #[serde(default = "default_tau_place")]
    pub tau_place: f64,
    /// Cosine similarity at or above which a detection adopts an existing
    /// object identity.
    #[serde(default = "default_tau_object")]
    pub tau_object: f64,
    /// Registered name of the prototype update rule.
    #[serde(default = "default_bank_update")]
    pub bank_update: String,
}

fn default_tau_place() -> f64 {
    0.3
}

fn default_tau_object() -> f64 {
    0.2
}

fn default_bank_update() -> String {
    "running_mean".to_owned()
}

impl Default for AssocConfig {
    fn default() -> Self {
        AssocConfig {
            tau_place: default_tau_place(),
            tau_object: default_tau_object(),
            bank_update: default_bank_update(),
        }
    }
}

impl AssocConfig {
    pub fn validate(&self) -> Result<(), AssocError> {
        for (name, value) in [("tau_place", self.tau_place), ("tau_object", self.tau_object)] {
            if !(value > -1.0 && value < 1.0) {
                return Err(AssocError::ThresholdOutOfRange { name, value });
            }
        }
        self.update_rule()?;
        Ok(())
    }

    pub fn update_rule(&self) -> Result<Box<dyn PrototypeUpdate>, AssocError> {
        update_rule(&self.bank_update).ok_or_else(|| AssocError::UnknownUpdateRule {
            found: self.bank_update.clone(),
            known: update_rule_names().join(", "),
        })
    }
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Pairwise cosine similarity of the place embeddings; symmetric with the
/// diagonal pinned to exactly 1.
pub fn place_similarity(emb: &EmbeddingSet) -> DMatrix<f64> {
    let frames = emb.frames();
    let n = frames.len();
    let norms: Vec<f64> = frames.iter().map(|f| f.place.norm()).collect();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        matrix[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let value = frames[i].place.dot(&frames[j].place) / (norms[i] * norms[j]);
            matrix[(i, j)] = value;
            matrix[(j, i)] = value;
        }
    }
    matrix
}

/// Thresholds the place similarity: an edge joins `i < j` whenever their
/// cosine is at least `tau_place`. Returns the edges with the similarity
/// matrix they came from.
pub fn predict_pp(
    emb: &EmbeddingSet,
    cfg: &AssocConfig,
) -> (BTreeSet<(PlaceId, PlaceId)>, DMatrix<f64>) {
    let similarity = place_similarity(emb);
    let mut edges = BTreeSet::new();
    for i in 0..similarity.nrows() {
        for j in (i + 1)..similarity.ncols() {
            if similarity[(i, j)] >= cfg.tau_place {
                edges.insert((PlaceId(i as u32), PlaceId(j as u32)));
            }
        }
    }
    (edges, similarity)
}

/// Associates detections with object identities frame by frame, in stored
/// order. Within a frame, detections compete for bank prototypes through a
/// maximum-similarity one-to-one assignment; a pair is accepted only when its
/// cosine reaches `tau_object`. Accepted detections adopt the bank id and
/// update its prototype; everything else registers a fresh id. No two
/// detections of one frame ever share an id.
pub fn associate_objects(
    emb: &EmbeddingSet,
    cfg: &AssocConfig,
) -> Result<(Vec<Vec<ObjectId>>, MemoryBank), AssocError> {
    cfg.validate()?;
    let rule = cfg.update_rule()?;
    let mut bank = MemoryBank::new();
    let mut assignments = Vec::with_capacity(emb.num_frames());
    for frame in emb.frames() {
        let detections = &frame.objects;
        let mut ids: Vec<Option<ObjectId>> = vec![None; detections.len()];
        if !detections.is_empty() && !bank.is_empty() {
            let similarity = DMatrix::from_fn(detections.len(), bank.len(), |d, e| {
                cosine(&detections[d], &bank.entries()[e].prototype)
            });
            for (detection, entry) in solve_assignment(&(-&similarity)) {
                if similarity[(detection, entry)] >= cfg.tau_object {
                    let observation = normalize(&detections[detection]);
                    ids[detection] = Some(bank.absorb(entry, &observation, rule.as_ref()));
                }
            }
        }
        let ids = ids
            .into_iter()
            .zip(detections)
            .map(|(id, embedding)| id.unwrap_or_else(|| bank.register(normalize(embedding))))
            .collect();
        assignments.push(ids);
    }
    Ok((assignments, bank))
}

fn normalize(v: &DVector<f64>) -> DVector<f64> {
    v / v.norm()
}

/// Predicts the full graph for a scene: thresholded place edges plus
/// place-object edges from the online association. Returns the graph, the
/// detections re-labeled with predicted ids (for truth-to-result matching),
/// and the place similarity matrix.
pub fn build_pred_graph(
    emb: &EmbeddingSet,
    cfg: &AssocConfig,
    frames: &[Vec<Detection>],
) -> Result<(MSGraph, Vec<Vec<Detection>>, DMatrix<f64>), AssocError> {
    if emb.num_frames() != frames.len() {
        return Err(AssocError::FrameCountMismatch {
            emb: emb.num_frames(),
            frames: frames.len(),
        });
    }
    for (index, (frame_emb, detections)) in emb.frames().iter().zip(frames).enumerate() {
        if frame_emb.objects.len() != detections.len() {
            return Err(AssocError::DetectionCountMismatch {
                frame: index,
                emb: frame_emb.objects.len(),
                detections: detections.len(),
            });
        }
    }
    let (pp_edges, similarity) = predict_pp(emb, cfg);
    let (ids, bank) = associate_objects(emb, cfg)?;

    let objects: Vec<ObjectNode> = bank
        .entries()
        .iter()
        .map(|entry| ObjectNode { id: entry.id, label: None })
        .collect();
    let mut po_edges = BTreeSet::new();
    let mut labeled = Vec::with_capacity(frames.len());
    for (index, (detections, frame_ids)) in frames.iter().zip(&ids).enumerate() {
        let place = PlaceId(index as u32);
        let mut frame_out = Vec::with_capacity(detections.len());
        for (detection, &id) in detections.iter().zip(frame_ids) {
            po_edges.insert((place, id));
            frame_out.push(Detection { object_id: Some(id), ..detection.clone() });
        }
        labeled.push(frame_out);
    }
    let graph = MSGraph::new(frames.len(), objects, pp_edges, po_edges)?;
    Ok((graph, labeled, similarity))
}

/// Convenience for prediction streams that are plain boxes.
pub fn detections_from_boxes(frames: &[Vec<Box2>]) -> Vec<Vec<Detection>> {
    frames
        .iter()
        .map(|boxes| {
            boxes
                .iter()
                .map(|&bbox| Detection { object_id: None, bbox, score: None })
                .collect()
        })
        .collect()
}
