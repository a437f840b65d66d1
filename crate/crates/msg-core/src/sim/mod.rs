//! Synthetic scene generation with ground-truth graphs and
//! controllable-noise embeddings, for exact and statistical end-to-end
//! verification of the build/predict/score pipeline.

pub mod plant;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{
    build_pred_graph, place_similarity, AssocConfig, AssocError, EmbeddingError, EmbeddingSet,
    FrameEmbeddings,
};
use crate::geometry::{Box2, Box3, Intrinsics, Pose, ProjectParams};
use crate::graph::MSGraph;
use crate::gt::{build_gt_graph, derive_detections};
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::scene::{Detection, Frame, GtThresholds, SceneAnnotation, SceneError};

pub use plant::{place_embedder, place_mode_names, PlaceEmbedder, PlantParams, PlantedPlaces};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {field} {message}")]
    BadConfig { field: &'static str, message: String },
    #[error("unknown place mode {found:?}; known modes: {known}")]
    UnknownPlaceMode { found: String, known: String },
    #[error("oracle place mode needs dim >= number of places ({places}), got {dim}")]
    DimTooSmall { dim: usize, places: usize },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Assoc(#[from] AssocError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Detector corruption applied to the prediction stream only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DetectorNoise {
    /// Probability of dropping each true detection.
    #[serde(default)]
    pub drop_prob: f64,
    /// Uniform per-coordinate box jitter, pixels.
    #[serde(default)]
    pub jitter_px: f64,
    /// Probability of adding one spurious, identity-free box per frame.
    #[serde(default)]
    pub spurious_rate: f64,
}

/// Full description of a synthetic scene family. Every operation downstream
/// is a pure function of this config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    /// Half-size of the square room, meters.
    #[serde(default = "default_room_half_size")]
    pub room_half_size: f64,
    #[serde(default = "default_n_frames")]
    pub n_frames: usize,
    #[serde(default = "default_n_objects")]
    pub n_objects: usize,
    /// Camera travel per frame, meters.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Uniform per-frame heading change bound, radians.
    #[serde(default = "default_heading_jitter")]
    pub heading_jitter: f64,
    /// Embedding dimension for both place and object embeddings.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Registered place-embedding strategy: `oracle` or `smooth`.
    #[serde(default = "default_place_mode")]
    pub place_mode: String,
    #[serde(default)]
    pub sigma_place: f64,
    #[serde(default)]
    pub sigma_object: f64,
    /// Smooth-mode target cosine at exactly-threshold pose distance.
    #[serde(default = "default_smooth_target")]
    pub smooth_target_cos: f64,
    /// When set, a fixed ill-conditioned linear distortion (seeded from this
    /// value, shared across scenes) is applied to object embeddings.
    #[serde(default)]
    pub object_distortion_seed: Option<u64>,
    #[serde(default)]
    pub detector: DetectorNoise,
    #[serde(default)]
    pub thresholds: GtThresholds,
    #[serde(default)]
    pub assoc: AssocConfig,
}

fn default_room_half_size() -> f64 {
    4.0
}
fn default_n_frames() -> usize {
    48
}
fn default_n_objects() -> usize {
    10
}
fn default_step() -> f64 {
    0.25
}
fn default_heading_jitter() -> f64 {
    0.35
}
fn default_dim() -> usize {
    64
}
fn default_place_mode() -> String {
    "oracle".to_owned()
}
fn default_smooth_target() -> f64 {
    0.3
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            room_half_size: default_room_half_size(),
            n_frames: default_n_frames(),
            n_objects: default_n_objects(),
            step: default_step(),
            heading_jitter: default_heading_jitter(),
            dim: default_dim(),
            place_mode: default_place_mode(),
            sigma_place: 0.0,
            sigma_object: 0.0,
            smooth_target_cos: default_smooth_target(),
            object_distortion_seed: None,
            detector: DetectorNoise::default(),
            thresholds: GtThresholds::default(),
            assoc: AssocConfig::default(),
        }
    }
}

const CAMERA_HEIGHT: f64 = 1.4;
const WALL_MARGIN: f64 = 0.5;
const DISTORTION_CONDITION: f64 = 30.0;

fn sim_intrinsics() -> Intrinsics {
    Intrinsics { fx: 200.0, fy: 200.0, cx: 128.0, cy: 96.0, width: 256, height: 192 }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig { seed, ..SimConfig::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let field = |field: &'static str, message: String| SimError::BadConfig { field, message };
        if self.n_frames == 0 {
            return Err(field("n_frames", "must be positive".into()));
        }
        if self.dim == 0 {
            return Err(field("dim", "must be positive".into()));
        }
        if !(self.room_half_size > WALL_MARGIN) {
            return Err(field(
                "room_half_size",
                format!("must exceed the wall margin {WALL_MARGIN}"),
            ));
        }
        if !(self.step > 0.0) {
            return Err(field("step", "must be positive".into()));
        }
        if !(self.heading_jitter >= 0.0) {
            return Err(field("heading_jitter", "must be non-negative".into()));
        }
        for (name, sigma) in [("sigma_place", self.sigma_place), ("sigma_object", self.sigma_object)]
        {
            if !(sigma >= 0.0) {
                return Err(SimError::BadConfig {
                    field: name,
                    message: format!("must be non-negative, got {sigma}"),
                });
            }
        }
        for (name, p) in [
            ("detector.drop_prob", self.detector.drop_prob),
            ("detector.spurious_rate", self.detector.spurious_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::BadConfig {
                    field: name,
                    message: format!("must lie in [0, 1], got {p}"),
                });
            }
        }
        if !(self.detector.jitter_px >= 0.0) {
            return Err(field("detector.jitter_px", "must be non-negative".into()));
        }
        if !(self.smooth_target_cos > 0.0 && self.smooth_target_cos < 1.0) {
            return Err(field("smooth_target_cos", "must lie in (0, 1)".into()));
        }
        self.thresholds.validate()?;
        self.assoc.validate()?;
        if plant::place_embedder(&self.place_mode).is_none() {
            return Err(SimError::UnknownPlaceMode {
                found: self.place_mode.clone(),
                known: plant::place_mode_names().join(", "),
            });
        }
        Ok(())
    }
}

/// One generated scene: the clean ground-truth annotation and graph, the
/// corrupted prediction stream (spurious boxes carry no object id), and
/// embeddings aligned one-to-one with the prediction stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub scene: SceneAnnotation,
    pub gt: MSGraph,
    pub pred_frames: Vec<Vec<Detection>>,
    pub emb: EmbeddingSet,
    /// Threshold reconstructing the place adjacency exactly (oracle mode).
    pub oracle_tau_place: Option<f64>,
    /// Cleared when `n_objects > dim` forced non-orthogonal object latents.
    pub object_latents_orthonormal: bool,
}

/// Generates a scene: a bounded random-walk camera trajectory, random 3D
/// boxes, projected detections, the ground-truth graph, a corrupted
/// prediction stream, and planted embeddings.
pub fn generate(cfg: &SimConfig) -> Result<SimScene, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let poses = random_walk(cfg, &mut rng);
    let objects3d = random_objects(cfg, &mut rng);
    let bare = SceneAnnotation {
        scene_id: format!("sim-{}", cfg.seed),
        frames: poses
            .into_iter()
            .enumerate()
            .map(|(index, pose)| Frame {
                frame_id: crate::graph::PlaceId(index as u32),
                pose,
                intrinsics: sim_intrinsics(),
                detections: vec![],
            })
            .collect(),
        objects3d: Some(objects3d),
    };
    let scene = derive_detections(&bare, &ProjectParams::default())?;
    let gt = build_gt_graph(&scene, &cfg.thresholds)?;

    let pred_frames = corrupt_detections(&scene, &cfg.detector, &mut rng);
    let emb = plant_embeddings(cfg, &scene, &gt, &pred_frames, &mut rng)?;

    Ok(SimScene {
        oracle_tau_place: emb.1,
        object_latents_orthonormal: emb.2,
        emb: emb.0,
        scene,
        gt,
        pred_frames,
    })
}

/// Generates `count` scenes with per-scene seeds `cfg.seed ^ index`, so
/// scenes are independent and reproducible in any order.
pub fn generate_batch(cfg: &SimConfig, count: usize) -> Result<Vec<SimScene>, SimError> {
    (0..count)
        .map(|index| {
            let mut scene_cfg = cfg.clone();
            scene_cfg.seed = cfg.seed ^ index as u64;
            generate(&scene_cfg)
        })
        .collect()
}

fn random_walk(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let limit = cfg.room_half_size - WALL_MARGIN;
    let mut x = rng.gen_range(-limit..limit);
    let mut y = rng.gen_range(-limit..limit);
    let mut heading = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut poses = Vec::with_capacity(cfg.n_frames);
    for index in 0..cfg.n_frames {
        if index > 0 {
            heading += rng.gen_range(-cfg.heading_jitter..=cfg.heading_jitter);
            let mut nx = x + cfg.step * heading.cos();
            let mut ny = y + cfg.step * heading.sin();
            if nx.abs() > limit {
                heading = std::f64::consts::PI - heading;
                nx = x + cfg.step * heading.cos();
            }
            if ny.abs() > limit {
                heading = -heading;
                ny = y + cfg.step * heading.sin();
            }
            x = nx.clamp(-limit, limit);
            y = ny.clamp(-limit, limit);
        }
        poses.push(camera_pose(x, y, heading));
    }
    poses
}

/// World-from-camera pose of a camera at `(x, y)` looking along the heading:
/// camera +z maps to the horizontal forward direction, +x to the right of it,
/// +y to world down.
fn camera_pose(x: f64, y: f64, heading: f64) -> Pose {
    let forward = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let right = Vector3::new(heading.sin(), -heading.cos(), 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let rotation = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
    Pose::new(
        UnitQuaternion::from_rotation_matrix(&rotation),
        Vector3::new(x, y, CAMERA_HEIGHT),
    )
}

fn random_objects(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<crate::scene::Object3d> {
    let limit = (cfg.room_half_size - 0.6).max(0.1);
    (0..cfg.n_objects)
        .map(|index| {
            let center = Vector3::new(
                rng.gen_range(-limit..limit),
                rng.gen_range(-limit..limit),
                rng.gen_range(0.3..1.8),
            );
            let half_extents = Vector3::new(
                rng.gen_range(0.15..0.45),
                rng.gen_range(0.15..0.45),
                rng.gen_range(0.15..0.45),
            );
            let orientation = UnitQuaternion::from_axis_angle(
                &Vector3::z_axis(),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            crate::scene::Object3d {
                object_id: crate::graph::ObjectId(index as u32),
                box3: Box3 { center, half_extents, orientation },
                label: None,
            }
        })
        .collect()
}

/// Applies drops, box jitter, and spurious boxes to the clean detections.
/// Real detections keep their ground-truth id (association never reads it);
/// spurious boxes carry none.
fn corrupt_detections(
    scene: &SceneAnnotation,
    noise: &DetectorNoise,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Detection>> {
    let intr = sim_intrinsics();
    let (width, height) = (intr.width as f64, intr.height as f64);
    scene
        .frames
        .iter()
        .map(|frame| {
            let mut out = Vec::with_capacity(frame.detections.len());
            for detection in &frame.detections {
                if noise.drop_prob > 0.0 && rng.gen_range(0.0..1.0) < noise.drop_prob {
                    continue;
                }
                let bbox = if noise.jitter_px > 0.0 {
                    let j = noise.jitter_px;
                    let b = &detection.bbox;
                    let x1 = (b.x1 + rng.gen_range(-j..=j)).clamp(0.0, width);
                    let y1 = (b.y1 + rng.gen_range(-j..=j)).clamp(0.0, height);
                    let x2 = (b.x2 + rng.gen_range(-j..=j)).clamp(0.0, width);
                    let y2 = (b.y2 + rng.gen_range(-j..=j)).clamp(0.0, height);
                    match Box2::new(x1, y1, x2, y2) {
                        Ok(jittered) => jittered,
                        Err(_) => continue,
                    }
                } else {
                    detection.bbox
                };
                out.push(Detection { bbox, ..detection.clone() });
            }
            if noise.spurious_rate > 0.0 && rng.gen_range(0.0..1.0) < noise.spurious_rate {
                let cx = rng.gen_range(0.0..width);
                let cy = rng.gen_range(0.0..height);
                let hw = rng.gen_range(8.0..40.0);
                let hh = rng.gen_range(8.0..40.0);
                if let Ok(bbox) = Box2::new(
                    (cx - hw).clamp(0.0, width - 1.0),
                    (cy - hh).clamp(0.0, height - 1.0),
                    (cx + hw).clamp(1.0, width),
                    (cy + hh).clamp(1.0, height),
                ) {
                    out.push(Detection { object_id: None, bbox, score: None });
                }
            }
            out
        })
        .collect()
}

type PlantedEmbeddings = (EmbeddingSet, Option<f64>, bool);

fn plant_embeddings(
    cfg: &SimConfig,
    scene: &SceneAnnotation,
    gt: &MSGraph,
    pred_frames: &[Vec<Detection>],
    rng: &mut ChaCha8Rng,
) -> Result<PlantedEmbeddings, SimError> {
    let embedder =
        plant::place_embedder(&cfg.place_mode).ok_or_else(|| SimError::UnknownPlaceMode {
            found: cfg.place_mode.clone(),
            known: plant::place_mode_names().join(", "),
        })?;
    let params = PlantParams {
        dim: cfg.dim,
        sigma_place: cfg.sigma_place,
        smooth_target_cos: cfg.smooth_target_cos,
        thresholds: cfg.thresholds,
    };
    let planted = embedder.plant(scene, gt, &params, rng)?;

    let ids: Vec<crate::graph::ObjectId> = scene
        .objects3d
        .as_ref()
        .map(|objects| objects.iter().map(|o| o.object_id).collect())
        .unwrap_or_default();
    let (latents, orthonormal) = plant::object_latents(&ids, cfg.dim, rng);
    let distortion = cfg.object_distortion_seed.map(|seed| {
        let mut distortion_rng = ChaCha8Rng::seed_from_u64(seed);
        plant::distortion_matrix(cfg.dim, DISTORTION_CONDITION, &mut distortion_rng)
    });

    let frames = planted
        .embeddings
        .into_iter()
        .zip(pred_frames)
        .map(|(place, detections)| FrameEmbeddings {
            place,
            objects: detections
                .iter()
                .map(|detection| {
                    object_embedding(detection, &latents, cfg.sigma_object, &distortion, rng)
                })
                .collect(),
        })
        .collect();
    Ok((EmbeddingSet::new(cfg.dim, frames)?, planted.suggested_tau, orthonormal))
}

fn object_embedding(
    detection: &Detection,
    latents: &std::collections::BTreeMap<crate::graph::ObjectId, DVector<f64>>,
    sigma: f64,
    distortion: &Option<DMatrix<f64>>,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let dim = latents.values().next().map(|v| v.len()).unwrap_or(1);
    let mut embedding = match detection.object_id.and_then(|id| latents.get(&id)) {
        Some(latent) => {
            let mut noisy = latent.clone();
            if sigma > 0.0 {
                for value in noisy.iter_mut() {
                    *value += sigma * plant::normal(rng);
                }
            }
            noisy
        }
        // Spurious detection: an embedding unrelated to every real object.
        None => DVector::from_fn(dim, |_, _| plant::normal(rng)),
    };
    if let Some(matrix) = distortion {
        embedding = matrix * embedding;
    }
    let norm = embedding.norm();
    if norm > 0.0 {
        embedding /= norm;
    } else {
        embedding[0] = 1.0;
    }
    embedding
}

/// Generates a scene, predicts its graph from the planted embeddings, and
/// scores the prediction against the ground truth. In oracle mode the place
/// threshold is the planted one; otherwise the configured threshold applies.
pub fn run_end_to_end(cfg: &SimConfig) -> Result<EvalReport, SimError> {
    let sim = generate(cfg)?;
    let report = evaluate_sim_scene(&sim, &cfg.assoc)?;
    Ok(report)
}

/// The prediction-and-scoring half of [`run_end_to_end`], reusable on an
/// already-generated scene (optionally with substituted embeddings).
pub fn evaluate_sim_scene(sim: &SimScene, assoc: &AssocConfig) -> Result<EvalReport, SimError> {
    let mut assoc_cfg = assoc.clone();
    if let Some(tau) = sim.oracle_tau_place {
        assoc_cfg.tau_place = tau;
    }
    let (pred, labeled, _) = build_pred_graph(&sim.emb, &assoc_cfg, &sim.pred_frames)?;
    let similarity = place_similarity(&sim.emb);
    Ok(evaluate(&sim.gt, &pred, &sim.scene, &labeled, Some(&similarity))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::associate_objects;
    use crate::graph::PlaceId;
    use approx::assert_relative_eq;

    fn small_cfg(seed: u64) -> SimConfig {
        let mut cfg = SimConfig::with_seed(seed);
        cfg.n_frames = 24;
        cfg.n_objects = 6;
        cfg.dim = 32;
        cfg
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_cfg(11);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&small_cfg(1)).unwrap();
        let b = generate(&small_cfg(2)).unwrap();
        assert_ne!(a.scene, b.scene);
    }

    #[test]
    fn outputs_pass_validation() {
        let sim = generate(&small_cfg(3)).unwrap();
        sim.scene.validate().unwrap();
        assert!(sim.gt.check().is_empty());
        assert_eq!(sim.gt.num_places(), sim.scene.frames.len());
        assert_eq!(sim.emb.num_frames(), sim.pred_frames.len());
        for (frame_emb, dets) in sim.emb.frames().iter().zip(&sim.pred_frames) {
            assert_eq!(frame_emb.objects.len(), dets.len());
        }
    }

    #[test]
    fn consecutive_frames_form_pp_edges() {
        // Steps of 0.25 m and bounded heading jitter keep neighbors well
        // within the default thresholds.
        let sim = generate(&small_cfg(5)).unwrap();
        for i in 1..sim.scene.frames.len() {
            assert!(
                sim.gt.has_pp_edge(PlaceId(i as u32 - 1), PlaceId(i as u32)),
                "frames {} and {} not connected",
                i - 1,
                i
            );
        }
    }

    #[test]
    fn drop_prob_one_empties_the_prediction_stream() {
        let mut cfg = small_cfg(7);
        cfg.detector.drop_prob = 1.0;
        let sim = generate(&cfg).unwrap();
        assert!(sim.pred_frames.iter().all(Vec::is_empty));
    }

    #[test]
    fn zero_noise_prediction_stream_equals_gt_detections() {
        let sim = generate(&small_cfg(9)).unwrap();
        let gt_frames: Vec<Vec<Detection>> =
            sim.scene.frames.iter().map(|f| f.detections.clone()).collect();
        assert_eq!(sim.pred_frames, gt_frames);
    }

    #[test]
    fn oracle_thresholding_recovers_pp_edges_exactly() {
        let cfg = small_cfg(13);
        let sim = generate(&cfg).unwrap();
        let tau = sim.oracle_tau_place.unwrap();
        let assoc_cfg = AssocConfig { tau_place: tau, ..AssocConfig::default() };
        let (edges, _) = crate::assoc::predict_pp(&sim.emb, &assoc_cfg);
        assert_eq!(&edges, sim.gt.pp_edges());
    }

    #[test]
    fn zero_sigma_association_recovers_identity_up_to_relabeling() {
        let sim = generate(&small_cfg(17)).unwrap();
        let (ids, _) = associate_objects(&sim.emb, &AssocConfig::default()).unwrap();
        // Build the mapping predicted -> true id; it must be a bijection.
        let mut forward = std::collections::BTreeMap::new();
        let mut backward = std::collections::BTreeMap::new();
        for (frame, dets) in sim.pred_frames.iter().enumerate() {
            for (d, det) in dets.iter().enumerate() {
                let truth = det.object_id.unwrap();
                let predicted = ids[frame][d];
                assert_eq!(*forward.entry(predicted).or_insert(truth), truth);
                assert_eq!(*backward.entry(truth).or_insert(predicted), predicted);
            }
        }
    }

    #[test]
    fn smooth_cosine_decays_with_pose_distance() {
        let mut cfg = small_cfg(19);
        cfg.place_mode = "smooth".into();
        cfg.n_frames = 48;
        cfg.dim = 128;
        let sim = generate(&cfg).unwrap();
        let similarity = place_similarity(&sim.emb);
        // Rank correlation between pose distance and cosine must be clearly
        // negative over all pairs.
        let mut pairs = Vec::new();
        for i in 0..sim.scene.frames.len() {
            for j in (i + 1)..sim.scene.frames.len() {
                let (t, _) = crate::geometry::relative_pose_distance(
                    &sim.scene.frames[i].pose,
                    &sim.scene.frames[j].pose,
                );
                pairs.push((t, similarity[(i, j)]));
            }
        }
        assert!(pairs.len() >= 1000);
        let concordant_minus_discordant: i64 = {
            let mut total = 0i64;
            for a in 0..pairs.len() {
                for b in (a + 1)..pairs.len() {
                    let dt = pairs[a].0 - pairs[b].0;
                    let dc = pairs[a].1 - pairs[b].1;
                    if dt * dc > 0.0 {
                        total += 1;
                    } else if dt * dc < 0.0 {
                        total -= 1;
                    }
                }
            }
            total
        };
        assert!(
            concordant_minus_discordant < 0,
            "cosine did not decay with distance: {concordant_minus_discordant}"
        );
    }

    #[test]
    fn smooth_identical_poses_have_unit_cosine() {
        let mut cfg = small_cfg(23);
        cfg.place_mode = "smooth".into();
        cfg.step = 1e-12;
        cfg.heading_jitter = 0.0;
        cfg.n_frames = 3;
        let sim = generate(&cfg).unwrap();
        let similarity = place_similarity(&sim.emb);
        assert_relative_eq!(similarity[(0, 1)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(similarity[(0, 2)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn oracle_end_to_end_is_perfect() {
        let report = run_end_to_end(&small_cfg(29)).unwrap();
        assert_eq!(report.pp_iou, 100.0);
        assert_eq!(report.po_iou, 100.0);
        assert_eq!(report.recall_at_1, Some(100.0));
    }

    #[test]
    fn end_to_end_is_deterministic() {
        let cfg = small_cfg(31);
        let a = run_end_to_end(&cfg).unwrap();
        let b = run_end_to_end(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heavy_object_noise_fragments_identities() {
        let mut quiet = small_cfg(37);
        quiet.sigma_object = 0.0;
        let mut loud = quiet.clone();
        loud.sigma_object = 2.0;
        let clean = run_end_to_end(&quiet).unwrap();
        let noisy = run_end_to_end(&loud).unwrap();
        assert!(noisy.po_iou < clean.po_iou);
    }

    #[test]
    fn config_validation_names_fields() {
        let mut cfg = SimConfig::default();
        cfg.sigma_place = -0.5;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("sigma_place"), "{err}");

        let mut cfg = SimConfig::default();
        cfg.detector.drop_prob = 1.5;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("drop_prob"), "{err}");

        let mut cfg = SimConfig::default();
        cfg.place_mode = "warp".into();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("oracle"), "{err}");
    }

    #[test]
    fn batch_seeds_are_split_by_xor() {
        let cfg = small_cfg(40);
        let batch = generate_batch(&cfg, 3).unwrap();
        assert_eq!(batch.len(), 3);
        let mut solo_cfg = cfg.clone();
        solo_cfg.seed = cfg.seed ^ 2;
        let solo = generate(&solo_cfg).unwrap();
        assert_eq!(batch[2], solo);
        assert_ne!(batch[0].scene, batch[1].scene);
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let parsed: SimConfig =
            serde_json::from_str(r#"{"seed": 5, "n_frames": 10}"#).unwrap();
        assert_eq!(parsed.seed, 5);
        assert_eq!(parsed.n_frames, 10);
        assert_eq!(parsed.dim, 64);
        assert_eq!(parsed.place_mode, "oracle");
        assert_eq!(parsed.assoc.tau_place, 0.3);
        let text = serde_json::to_string(&parsed).unwrap();
        let reparsed: SimConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(reparsed, parsed);
    }
}
