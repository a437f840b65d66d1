//! Numeric core for embedding training signals: the place and object losses
//! with analytic gradients, the coding-rate collapse diagnostic, a linear
//! probe trained over frozen embeddings, and a finite-difference gradient
//! checker.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{EmbeddingError, EmbeddingSet};
use crate::graph::{MSGraph, ObjectId};

#[derive(Debug, Error)]
pub enum EmbedlabError {
    #[error("zero-norm embedding passed to a cosine loss")]
    ZeroNorm,
    #[error("non-finite input")]
    NonFinite,
    #[error("empty input: no scenes to train on")]
    NoScenes,
    #[error("invalid probe config: {0}")]
    BadConfig(String),
    #[error("scene {scene}: embeddings are {found}-dimensional, probe expects {expected}")]
    DimMismatch { scene: usize, found: usize, expected: usize },
    #[error("scene {scene}: {graphs} places in the graph vs {frames} embedding frames")]
    SceneShape { scene: usize, graphs: usize, frames: usize },
    #[error("projector input is {found}-dimensional, expected {expected}")]
    ProjectorInput { found: usize, expected: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Cosine similarity with gradients with respect to both vectors.
fn cosine_with_grad(a: &DVector<f64>, b: &DVector<f64>) -> Result<(f64, DVector<f64>, DVector<f64>), EmbedlabError> {
    let norm_a = a.norm();
    let norm_b = b.norm();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(EmbedlabError::ZeroNorm);
    }
    let unit_a = a / norm_a;
    let unit_b = b / norm_b;
    let value = unit_a.dot(&unit_b);
    let grad_a = (&unit_b - &unit_a * value) / norm_a;
    let grad_b = (unit_a - unit_b * value) / norm_b;
    Ok((value, grad_a, grad_b))
}

/// Squared error between the embeddings' cosine and its target (1 for the
/// same place, 0 otherwise), with analytic gradients.
pub fn place_loss(
    e1: &DVector<f64>,
    e2: &DVector<f64>,
    same_place: bool,
) -> Result<(f64, DVector<f64>, DVector<f64>), EmbedlabError> {
    let (value, grad_a, grad_b) = cosine_with_grad(e1, e2)?;
    let target = if same_place { 1.0 } else { 0.0 };
    let residual = value - target;
    Ok((residual * residual, grad_a * (2.0 * residual), grad_b * (2.0 * residual)))
}

const LOG_FLOOR: f64 = 1e-12;

/// Weighted binary cross-entropy on the logistic of a scaled cosine:
/// `p = sigmoid(scale * cos)`, positives weighted by `positive_weight`.
/// Returns the loss and its derivative with respect to the cosine.
pub fn object_loss(cos_sim: f64, same_object: bool, positive_weight: f64, scale: f64) -> (f64, f64) {
    let p = 1.0 / (1.0 + (-scale * cos_sim).exp());
    if same_object {
        let loss = -positive_weight * p.max(LOG_FLOOR).ln();
        let grad = -positive_weight * scale * (1.0 - p);
        (loss, grad)
    } else {
        let loss = -(1.0 - p).max(LOG_FLOOR).ln();
        let grad = scale * p;
        (loss, grad)
    }
}

/// Total coding rate of a set of row vectors:
/// `0.5 * logdet(I_d + (d / (n * eps^2)) * Z' Z)`. A diagnostic for embedding
/// collapse; zero exactly when `Z` is zero.
pub fn coding_rate(z: &DMatrix<f64>, eps: f64) -> Result<f64, EmbedlabError> {
    Ok(coding_rate_with_grad(z, eps)?.0)
}

/// Coding rate together with its gradient `alpha * Z * M^{-1}` where
/// `M = I + alpha * Z' Z`.
pub fn coding_rate_with_grad(
    z: &DMatrix<f64>,
    eps: f64,
) -> Result<(f64, DMatrix<f64>), EmbedlabError> {
    if !(eps > 0.0) {
        return Err(EmbedlabError::BadConfig(format!("eps must be positive, got {eps}")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(EmbedlabError::NonFinite);
    }
    let (n, d) = z.shape();
    if n == 0 || d == 0 {
        return Ok((0.0, DMatrix::zeros(n, d)));
    }
    let alpha = d as f64 / (n as f64 * eps * eps);
    let gram = DMatrix::identity(d, d) + z.transpose() * z * alpha;
    let cholesky = nalgebra::Cholesky::new(gram)
        .expect("I + alpha Z'Z is symmetric positive definite");
    let log_det_half: f64 = (0..d).map(|i| cholesky.l_dirty()[(i, i)].ln()).sum();
    let inverse = cholesky.inverse();
    let grad = z * inverse * alpha;
    Ok((log_det_half, grad))
}

/// Max relative error between an analytic gradient and central finite
/// differences at a point: for each coordinate,
/// `|analytic - (f(x+h) - f(x-h)) / 2h| / (|analytic| + 1e-8)`.
pub fn grad_check(
    f: &mut dyn FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    point: &DVector<f64>,
    h: f64,
) -> f64 {
    let (_, analytic) = f(point);
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let mut forward = point.clone();
        forward[i] += h;
        let mut backward = point.clone();
        backward[i] -= h;
        let numeric = (f(&forward).0 - f(&backward).0) / (2.0 * h);
        let error = (analytic[i] - numeric).abs() / (analytic[i].abs() + 1e-8);
        worst = worst.max(error);
    }
    worst
}

/// A linear head over frozen embeddings: `x -> W x + b`.
/// Serialized as `{"in_dim", "out_dim", "weights": row-major, "bias"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProjectorRecord", into = "ProjectorRecord")]
pub struct Projector {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProjectorRecord {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl TryFrom<ProjectorRecord> for Projector {
    type Error = String;

    fn try_from(record: ProjectorRecord) -> Result<Self, Self::Error> {
        if record.weights.len() != record.in_dim * record.out_dim {
            return Err(format!(
                "{} weights for a {}x{} projector",
                record.weights.len(),
                record.out_dim,
                record.in_dim
            ));
        }
        if record.bias.len() != record.out_dim {
            return Err(format!(
                "{} bias entries for output dimension {}",
                record.bias.len(),
                record.out_dim
            ));
        }
        if record.weights.iter().chain(&record.bias).any(|v| !v.is_finite()) {
            return Err("non-finite projector entries".to_owned());
        }
        Ok(Projector {
            weights: DMatrix::from_row_slice(record.out_dim, record.in_dim, &record.weights),
            bias: DVector::from_vec(record.bias),
        })
    }
}

impl From<Projector> for ProjectorRecord {
    fn from(projector: Projector) -> Self {
        let (out_dim, in_dim) = projector.weights.shape();
        let weights = projector
            .weights
            .row_iter()
            .flat_map(|row| row.iter().copied().collect::<Vec<_>>())
            .collect();
        ProjectorRecord { in_dim, out_dim, weights, bias: projector.bias.iter().copied().collect() }
    }
}

impl Projector {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Seeded initialization: the leading square block starts at identity,
    /// plus small Gaussian noise everywhere.
    pub fn identity_scaled(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise_scale = 0.01 / (in_dim as f64).sqrt();
        let mut weights = DMatrix::from_fn(out_dim, in_dim, |_, _| {
            noise_scale * standard_normal(&mut rng)
        });
        for i in 0..out_dim.min(in_dim) {
            weights[(i, i)] += 1.0;
        }
        Projector { weights, bias: DVector::zeros(out_dim) }
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>, EmbedlabError> {
        if v.len() != self.in_dim() {
            return Err(EmbedlabError::ProjectorInput { found: v.len(), expected: self.in_dim() });
        }
        Ok(&self.weights * v + &self.bias)
    }

    /// Projects every place and object vector of a set.
    pub fn project_set(&self, set: &EmbeddingSet) -> Result<EmbeddingSet, EmbedlabError> {
        if set.dim() != self.in_dim() {
            return Err(EmbedlabError::ProjectorInput { found: set.dim(), expected: self.in_dim() });
        }
        Ok(set.map_vectors(self.out_dim(), |v| &self.weights * v + &self.bias)?)
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple and seeded.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Hyperparameters of the probe trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_scenes_per_batch")]
    pub scenes_per_batch: usize,
    #[serde(default = "default_frames_per_scene")]
    pub frames_per_scene: usize,
    #[serde(default = "default_positive_weight")]
    pub positive_weight: f64,
    /// Relative weight of the place loss term.
    #[serde(default = "default_loss_weight")]
    pub place_loss_weight: f64,
    /// Relative weight of the object loss term.
    #[serde(default = "default_loss_weight")]
    pub object_loss_weight: f64,
    /// Logistic scale applied to cosines inside the object loss.
    #[serde(default = "default_bce_scale")]
    pub bce_scale: f64,
    /// Cap on sampled pairs per batch and loss term.
    #[serde(default = "default_pair_budget")]
    pub pair_budget: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_learning_rate() -> f64 {
    2e-5
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    30
}
fn default_scenes_per_batch() -> usize {
    6
}
fn default_frames_per_scene() -> usize {
    64
}
fn default_positive_weight() -> f64 {
    10.0
}
fn default_loss_weight() -> f64 {
    1.0
}
fn default_bce_scale() -> f64 {
    10.0
}
fn default_pair_budget() -> usize {
    2048
}

impl ProbeConfig {
    pub fn with_dims(in_dim: usize, out_dim: usize) -> Self {
        ProbeConfig {
            in_dim,
            out_dim,
            learning_rate: default_learning_rate(),
            weight_decay: default_weight_decay(),
            epochs: default_epochs(),
            scenes_per_batch: default_scenes_per_batch(),
            frames_per_scene: default_frames_per_scene(),
            positive_weight: default_positive_weight(),
            place_loss_weight: default_loss_weight(),
            object_loss_weight: default_loss_weight(),
            bce_scale: default_bce_scale(),
            pair_budget: default_pair_budget(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedlabError> {
        let positives: [(&str, f64); 7] = [
            ("in_dim", self.in_dim as f64),
            ("out_dim", self.out_dim as f64),
            ("learning_rate", self.learning_rate),
            ("scenes_per_batch", self.scenes_per_batch as f64),
            ("frames_per_scene", self.frames_per_scene as f64),
            ("positive_weight", self.positive_weight),
            ("bce_scale", self.bce_scale),
        ];
        for (name, value) in positives {
            if !(value > 0.0) {
                return Err(EmbedlabError::BadConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.pair_budget == 0 {
            return Err(EmbedlabError::BadConfig("pair_budget must be positive".into()));
        }
        for (name, value) in [
            ("weight_decay", self.weight_decay),
            ("place_loss_weight", self.place_loss_weight),
            ("object_loss_weight", self.object_loss_weight),
        ] {
            if !(value >= 0.0) {
                return Err(EmbedlabError::BadConfig(format!(
                    "{name} must be non-negative, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// One training scene: frozen embeddings, the ground-truth graph labeling
/// place pairs, and the per-detection ground-truth object ids labeling object
/// pairs (None for spurious detections, which pair positively with nothing).
#[derive(Debug, Clone)]
pub struct TrainScene {
    pub emb: EmbeddingSet,
    pub gt: MSGraph,
    pub object_ids: Vec<Vec<Option<ObjectId>>>,
}

/// Result of probe training.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub projector: Projector,
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
}

struct AdamW {
    learning_rate: f64,
    weight_decay: f64,
    step: usize,
    m_weights: DMatrix<f64>,
    v_weights: DMatrix<f64>,
    m_bias: DVector<f64>,
    v_bias: DVector<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn new(out_dim: usize, in_dim: usize, learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            step: 0,
            m_weights: DMatrix::zeros(out_dim, in_dim),
            v_weights: DMatrix::zeros(out_dim, in_dim),
            m_bias: DVector::zeros(out_dim),
            v_bias: DVector::zeros(out_dim),
        }
    }

    fn update(&mut self, projector: &mut Projector, grad_w: &DMatrix<f64>, grad_b: &DVector<f64>) {
        self.step += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        self.m_weights = &self.m_weights * ADAM_BETA1 + grad_w * (1.0 - ADAM_BETA1);
        self.v_weights =
            &self.v_weights * ADAM_BETA2 + grad_w.component_mul(grad_w) * (1.0 - ADAM_BETA2);
        self.m_bias = &self.m_bias * ADAM_BETA1 + grad_b * (1.0 - ADAM_BETA1);
        self.v_bias = &self.v_bias * ADAM_BETA2 + grad_b.component_mul(grad_b) * (1.0 - ADAM_BETA2);
        for i in 0..projector.weights.nrows() {
            for j in 0..projector.weights.ncols() {
                let m_hat = self.m_weights[(i, j)] / bias1;
                let v_hat = self.v_weights[(i, j)] / bias2;
                let w = projector.weights[(i, j)];
                projector.weights[(i, j)] =
                    w - self.learning_rate * (m_hat / (v_hat.sqrt() + ADAM_EPS) + self.weight_decay * w);
            }
        }
        for i in 0..projector.bias.len() {
            let m_hat = self.m_bias[i] / bias1;
            let v_hat = self.v_bias[i] / bias2;
            let b = projector.bias[i];
            projector.bias[i] =
                b - self.learning_rate * (m_hat / (v_hat.sqrt() + ADAM_EPS) + self.weight_decay * b);
        }
    }
}

/// Index of one sampled frame within a batch.
#[derive(Clone, Copy)]
struct BatchFrame {
    scene: usize,
    frame: usize,
}

/// Index of one detection within a batch.
#[derive(Clone, Copy)]
struct BatchDetection {
    scene: usize,
    frame: usize,
    det: usize,
}

/// Trains a linear probe over frozen embeddings with mini-batch AdamW.
/// Batches mix frames from several scenes; place pairs are labeled by the
/// ground-truth graphs (cross-scene pairs are negatives) and object pairs by
/// ground-truth object identity. Deterministic for a fixed seed.
pub fn train_probe(scenes: &[TrainScene], cfg: &ProbeConfig) -> Result<TrainOutcome, EmbedlabError> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(EmbedlabError::NoScenes);
    }
    for (index, scene) in scenes.iter().enumerate() {
        if scene.emb.dim() != cfg.in_dim {
            return Err(EmbedlabError::DimMismatch {
                scene: index,
                found: scene.emb.dim(),
                expected: cfg.in_dim,
            });
        }
        if scene.gt.num_places() != scene.emb.num_frames()
            || scene.object_ids.len() != scene.emb.num_frames()
        {
            return Err(EmbedlabError::SceneShape {
                scene: index,
                graphs: scene.gt.num_places(),
                frames: scene.emb.num_frames(),
            });
        }
    }

    let mut projector = Projector::identity_scaled(cfg.in_dim, cfg.out_dim, cfg.seed);
    let mut optimizer = AdamW::new(cfg.out_dim, cfg.in_dim, cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let mut scene_order: Vec<usize> = (0..scenes.len()).collect();
        shuffle(&mut scene_order, &mut rng);
        let mut batch_losses = Vec::new();
        for group in scene_order.chunks(cfg.scenes_per_batch) {
            let (frames, detections) = sample_batch(scenes, group, cfg, &mut rng);
            if let Some(loss) =
                batch_step(scenes, &frames, &detections, cfg, &mut projector, &mut optimizer, &mut rng)?
            {
                batch_losses.push(loss);
            }
        }
        let mean = if batch_losses.is_empty() {
            0.0
        } else {
            batch_losses.iter().sum::<f64>() / batch_losses.len() as f64
        };
        epoch_loss.push(mean);
    }
    Ok(TrainOutcome { projector, epoch_loss })
}

fn sample_batch(
    scenes: &[TrainScene],
    group: &[usize],
    cfg: &ProbeConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<BatchFrame>, Vec<BatchDetection>) {
    let mut frames = Vec::new();
    for &scene in group {
        let total = scenes[scene].emb.num_frames();
        let mut order: Vec<usize> = (0..total).collect();
        shuffle(&mut order, rng);
        order.truncate(cfg.frames_per_scene.min(total));
        order.sort_unstable();
        frames.extend(order.into_iter().map(|frame| BatchFrame { scene, frame }));
    }
    let mut detections = Vec::new();
    for &BatchFrame { scene, frame } in &frames {
        for det in 0..scenes[scene].emb.frames()[frame].objects.len() {
            detections.push(BatchDetection { scene, frame, det });
        }
    }
    (frames, detections)
}

#[allow(clippy::too_many_arguments)]
fn batch_step(
    scenes: &[TrainScene],
    frames: &[BatchFrame],
    detections: &[BatchDetection],
    cfg: &ProbeConfig,
    projector: &mut Projector,
    optimizer: &mut AdamW,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>, EmbedlabError> {
    let mut grad_w = DMatrix::zeros(cfg.out_dim, cfg.in_dim);
    let mut grad_b = DVector::zeros(cfg.out_dim);
    let mut total_loss = 0.0;
    let mut have_pairs = false;

    let place_pairs = sample_pairs(frames.len(), cfg.pair_budget, rng);
    if cfg.place_loss_weight > 0.0 && !place_pairs.is_empty() {
        have_pairs = true;
        let scale = cfg.place_loss_weight / place_pairs.len() as f64;
        for (a, b) in place_pairs {
            let fa = frames[a];
            let fb = frames[b];
            let same = fa.scene == fb.scene
                && scenes[fa.scene].gt.has_pp_edge(
                    crate::graph::PlaceId(fa.frame as u32),
                    crate::graph::PlaceId(fb.frame as u32),
                );
            let ea = &scenes[fa.scene].emb.frames()[fa.frame].place;
            let eb = &scenes[fb.scene].emb.frames()[fb.frame].place;
            let pa = projector.apply(ea)?;
            let pb = projector.apply(eb)?;
            let (loss, ga, gb) = place_loss(&pa, &pb, same)?;
            total_loss += scale * loss;
            grad_w += (&ga * ea.transpose() + &gb * eb.transpose()) * scale;
            grad_b += (ga + gb) * scale;
        }
    }

    let object_pairs = sample_pairs(detections.len(), cfg.pair_budget, rng);
    if cfg.object_loss_weight > 0.0 && !object_pairs.is_empty() {
        have_pairs = true;
        let scale = cfg.object_loss_weight / object_pairs.len() as f64;
        for (a, b) in object_pairs {
            let da = detections[a];
            let db = detections[b];
            let id_a = scenes[da.scene].object_ids[da.frame][da.det];
            let id_b = scenes[db.scene].object_ids[db.frame][db.det];
            let same = da.scene == db.scene && id_a.is_some() && id_a == id_b;
            let ea = &scenes[da.scene].emb.frames()[da.frame].objects[da.det];
            let eb = &scenes[db.scene].emb.frames()[db.frame].objects[db.det];
            let pa = projector.apply(ea)?;
            let pb = projector.apply(eb)?;
            let (value, ca, cb) = cosine_with_grad(&pa, &pb)?;
            let (loss, dcos) = object_loss(value, same, cfg.positive_weight, cfg.bce_scale);
            total_loss += scale * loss;
            let ga = ca * dcos;
            let gb = cb * dcos;
            grad_w += (&ga * ea.transpose() + &gb * eb.transpose()) * scale;
            grad_b += (ga + gb) * scale;
        }
    }

    if !have_pairs {
        return Ok(None);
    }
    optimizer.update(projector, &grad_w, &grad_b);
    Ok(Some(total_loss))
}

/// All unordered index pairs when they fit the budget, otherwise a uniform
/// sample of `budget` distinct pairs.
fn sample_pairs(n: usize, budget: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let total = n * (n - 1) / 2;
    if total <= budget {
        let mut pairs = Vec::with_capacity(total);
        for a in 0..n {
            for b in (a + 1)..n {
                pairs.push((a, b));
            }
        }
        return pairs;
    }
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < budget {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            picked.insert((a.min(b), a.max(b)));
        }
    }
    picked.into_iter().collect()
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
