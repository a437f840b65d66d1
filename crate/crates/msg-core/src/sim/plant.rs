//! Controllable-noise embedding construction for synthetic scenes.
//!
//! Place embeddings come from one of two interchangeable strategies behind
//! [`PlaceEmbedder`], registered by name and selected through
//! `SimConfig::place_mode`:
//!
//! * `oracle` plants a Gram matrix whose Cholesky rows reproduce the
//!   ground-truth place adjacency exactly under thresholding;
//! * `smooth` maps poses through random sinusoidal features so that cosine
//!   similarity decays smoothly with pose distance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{MSGraph, ObjectId};
use crate::scene::{GtThresholds, SceneAnnotation};

use super::SimError;

/// Inputs shared by the place-embedding strategies.
#[derive(Debug, Clone)]
pub struct PlantParams {
    pub dim: usize,
    pub sigma_place: f64,
    /// Mean cosine the smooth mode aims for at exactly-threshold pose
    /// distance.
    pub smooth_target_cos: f64,
    pub thresholds: GtThresholds,
}

/// Planted place embeddings, one per frame, with the threshold that
/// reconstructs the planted edges when the strategy guarantees one.
pub struct PlantedPlaces {
    pub embeddings: Vec<DVector<f64>>,
    pub suggested_tau: Option<f64>,
}

pub trait PlaceEmbedder: Send + Sync {
    fn name(&self) -> &'static str;
    fn plant(
        &self,
        scene: &SceneAnnotation,
        gt: &MSGraph,
        params: &PlantParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlantedPlaces, SimError>;
}

pub struct OraclePlaceEmbedder;

impl PlaceEmbedder for OraclePlaceEmbedder {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn plant(
        &self,
        _scene: &SceneAnnotation,
        gt: &MSGraph,
        params: &PlantParams,
        _rng: &mut ChaCha8Rng,
    ) -> Result<PlantedPlaces, SimError> {
        let (embeddings, tau) = plant_place_embeddings_oracle(gt, params.dim)?;
        Ok(PlantedPlaces { embeddings, suggested_tau: Some(tau) })
    }
}

pub struct SmoothPlaceEmbedder;

impl PlaceEmbedder for SmoothPlaceEmbedder {
    fn name(&self) -> &'static str {
        "smooth"
    }

    fn plant(
        &self,
        scene: &SceneAnnotation,
        _gt: &MSGraph,
        params: &PlantParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlantedPlaces, SimError> {
        Ok(PlantedPlaces {
            embeddings: plant_place_embeddings_smooth(scene, params, rng),
            suggested_tau: None,
        })
    }
}

type EmbedderFactory = fn() -> Box<dyn PlaceEmbedder>;

const PLACE_MODES: &[(&str, EmbedderFactory)] = &[
    ("oracle", || Box::new(OraclePlaceEmbedder)),
    ("smooth", || Box::new(SmoothPlaceEmbedder)),
];

/// Looks up a place-embedding strategy by its registered name.
pub fn place_embedder(name: &str) -> Option<Box<dyn PlaceEmbedder>> {
    PLACE_MODES
        .iter()
        .find(|(registered, _)| *registered == name)
        .map(|(_, factory)| factory())
}

pub fn place_mode_names() -> Vec<&'static str> {
    PLACE_MODES.iter().map(|(name, _)| *name).collect()
}

/// Plants embeddings realizing the Gram matrix `G = I + beta * App` with
/// `beta = 0.9 / max(1, max place degree)`. Strict diagonal dominance makes
/// `G` positive definite, so its Cholesky factor exists; row `i` of the
/// factor is the embedding of place `i` (zero-padded to `dim`). Cosines are
/// then exactly `beta` across edges and `0` across non-edges, so
/// thresholding at the returned `tau = beta / 2` reconstructs the place
/// adjacency without error.
pub fn plant_place_embeddings_oracle(
    gt: &MSGraph,
    dim: usize,
) -> Result<(Vec<DVector<f64>>, f64), SimError> {
    let places = gt.num_places();
    if dim < places {
        return Err(SimError::DimTooSmall { dim, places });
    }
    let mut degree = vec![0usize; places];
    for &(a, b) in gt.pp_edges() {
        degree[a.index()] += 1;
        degree[b.index()] += 1;
    }
    let max_degree = degree.iter().copied().max().unwrap_or(0).max(1);
    let beta = 0.9 / max_degree as f64;

    let mut gram = DMatrix::identity(places, places);
    for &(a, b) in gt.pp_edges() {
        gram[(a.index(), b.index())] = beta;
        gram[(b.index(), a.index())] = beta;
    }
    let factor = nalgebra::Cholesky::new(gram)
        .expect("I + beta * App is strictly diagonally dominant")
        .unpack();
    let embeddings = (0..places)
        .map(|i| {
            let mut v = DVector::zeros(dim);
            for j in 0..=i {
                v[j] = factor[(i, j)];
            }
            v
        })
        .collect();
    Ok((embeddings, beta / 2.0))
}

/// Random sinusoidal features of pose. Positions and headings are rescaled so
/// that two poses exactly at the pp thresholds land at a mean cosine of about
/// `smooth_target_cos`, then Gaussian noise of scale `sigma_place` is added
/// per coordinate and the result normalized.
pub fn plant_place_embeddings_smooth(
    scene: &SceneAnnotation,
    params: &PlantParams,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    // Feature cosines approximate exp(-|u - v|^2 / 2). Scale positions and
    // headings so each contributes -ln(target) at its threshold, putting a
    // pair exactly at both thresholds at cosine ~ target.
    let dim = params.dim;
    let bandwidth = -params.smooth_target_cos.ln();
    let translation_scale = bandwidth.sqrt() / params.thresholds.translation;
    let chord = 2.0 * (params.thresholds.rotation / 2.0).sin();
    let heading_scale = bandwidth.sqrt() / chord;

    // Shared random feature bank: frequencies and phases.
    let frequencies: Vec<[f64; 5]> = (0..dim)
        .map(|_| {
            let mut w = [0.0; 5];
            for value in &mut w {
                *value = normal(rng);
            }
            w
        })
        .collect();
    let phases: Vec<f64> =
        (0..dim).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();

    scene
        .frames
        .iter()
        .map(|frame| {
            let position = frame.pose.translation * translation_scale;
            let forward = frame.pose.rotation * nalgebra::Vector3::z();
            let u = [
                position.x,
                position.y,
                position.z,
                heading_scale * forward.x,
                heading_scale * forward.y,
            ];
            let amplitude = (2.0 / dim as f64).sqrt();
            let mut feature = DVector::from_fn(dim, |k, _| {
                let dot: f64 = frequencies[k].iter().zip(&u).map(|(w, x)| w * x).sum();
                amplitude * (dot + phases[k]).cos()
            });
            if params.sigma_place > 0.0 {
                for value in feature.iter_mut() {
                    *value += params.sigma_place * normal(rng);
                }
            }
            let norm = feature.norm();
            if norm > 0.0 {
                feature /= norm;
            } else {
                feature[0] = 1.0;
            }
            feature
        })
        .collect()
}

/// Per-object latent vectors: exactly orthonormal when the object count fits
/// the dimension, otherwise plain normalized Gaussians with the returned flag
/// cleared.
pub fn object_latents(
    ids: &[ObjectId],
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> (std::collections::BTreeMap<ObjectId, DVector<f64>>, bool) {
    let orthonormal = ids.len() <= dim;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(ids.len());
    for _ in ids {
        let mut candidate;
        loop {
            candidate = DVector::from_fn(dim, |_, _| normal(rng));
            if orthonormal {
                for existing in &basis {
                    let overlap = candidate.dot(existing);
                    candidate -= existing * overlap;
                }
            }
            let norm = candidate.norm();
            if norm > 1e-9 {
                candidate /= norm;
                break;
            }
        }
        basis.push(candidate);
    }
    (ids.iter().copied().zip(basis).collect(), orthonormal)
}

/// A fixed ill-conditioned linear distortion: random orthogonal bases around
/// log-spaced singular values from 1 down to `1 / condition`.
pub fn distortion_matrix(dim: usize, condition: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q1 = random_orthogonal(dim, rng);
    let q2 = random_orthogonal(dim, rng);
    let mut singular = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let t = if dim > 1 { i as f64 / (dim - 1) as f64 } else { 0.0 };
        singular[(i, i)] = condition.powf(-t);
    }
    q1 * singular * q2.transpose()
}

fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let gaussian = DMatrix::from_fn(dim, dim, |_, _| normal(rng));
    let qr = gaussian.qr();
    qr.q()
}

pub(super) fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
