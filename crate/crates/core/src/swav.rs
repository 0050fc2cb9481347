//! Prototype-assignment self-supervised loss and the QNN training loop.
//!
//! For two noisy views `e₁, e₂` of the generated features, each view is scored against
//! learnable prototypes (`softmax(e·Pᵀ/τ)` followed by label smoothing). The loss is
//!
//! ```text
//! q = log1p(p₁) / Σ log1p(p₁)
//! L = Σ_i q_i · ln(q_i / p₂_i)
//! ```
//!
//! `log1p(p₁)` alone is not a distribution, so it is renormalized before the KL term.
//! With a one-hot `p₁` this reduces to the ordinary `KL(p₁ ‖ p₂)`. There is no
//! Sinkhorn assignment step.
//!
//! Gradients flow through both views. Circuit angles receive theirs through the
//! parameter-shift probability Jacobian; everything downstream of the weights is
//! differentiated analytically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;
use crate::quantum::{
    apply_transform, finite_difference_gradient, qnn_gradient, qubits_for, QnnModel,
    QuantumError, QuantumFeatures, Provenance, Strategy, TransformShape, DEFAULT_MAX_QUBITS,
};
use crate::seed::mix_seed;

/// Row-major dense rows.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum SwavError {
    #[error("invalid prototype bank: {0}")]
    InvalidBank(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("embedding dimension {got} does not match prototype dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("p2 has zero mass where q is positive (index {0})")]
    ZeroTarget(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),
    #[error("gradient has {got} entries, parameters have {expected}")]
    GradientShape { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("feature matrix is empty")]
    EmptyFeatures,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    /// `num_prototypes × embedding_dim`, row-major.
    prototypes: Vec<f64>,
    num_prototypes: usize,
    embedding_dim: usize,
    temperature: f64,
    smoothing: f64,
}

impl PrototypeBank {
    pub fn new(
        prototypes: Rows,
        temperature: f64,
        smoothing: f64,
    ) -> Result<Self, SwavError> {
        let num_prototypes = prototypes.len();
        if num_prototypes < 2 {
            return Err(SwavError::InvalidBank(format!(
                "need at least 2 prototypes, got {num_prototypes}"
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(SwavError::InvalidBank(format!("temperature {temperature}")));
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(SwavError::InvalidBank(format!("smoothing {smoothing}")));
        }
        let embedding_dim = prototypes[0].len();
        if prototypes.iter().any(|p| p.len() != embedding_dim) {
            return Err(SwavError::InvalidBank("ragged prototype rows".into()));
        }
        Ok(Self {
            prototypes: prototypes.concat(),
            num_prototypes,
            embedding_dim,
            temperature,
            smoothing,
        })
    }

    /// Unit-norm Gaussian prototypes from a seeded stream.
    pub fn random(
        num_prototypes: usize,
        embedding_dim: usize,
        temperature: f64,
        smoothing: f64,
        seed: u64,
    ) -> Result<Self, SwavError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..num_prototypes)
            .map(|_| {
                let v: Vec<f64> = (0..embedding_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Self::new(rows, temperature, smoothing)
    }

    pub fn num_prototypes(&self) -> usize {
        self.num_prototypes
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn flat(&self) -> &[f64] {
        &self.prototypes
    }

    pub fn rows(&self) -> Rows {
        self.prototypes
            .chunks(self.embedding_dim.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    fn prototype(&self, i: usize) -> &[f64] {
        &self.prototypes[i * self.embedding_dim..(i + 1) * self.embedding_dim]
    }

    fn set_flat(&mut self, values: &[f64]) {
        self.prototypes.copy_from_slice(values);
    }
}

/// Forward state of one view of one row.
struct ViewRow {
    softmax: Vec<f64>,
    probs: Vec<f64>,
}

fn view_row(e: &[f64], bank: &PrototypeBank) -> Result<ViewRow, SwavError> {
    if e.len() != bank.embedding_dim {
        return Err(SwavError::Dimension {
            expected: bank.embedding_dim,
            got: e.len(),
        });
    }
    let logits: Vec<f64> = (0..bank.num_prototypes)
        .map(|i| {
            bank.prototype(i)
                .iter()
                .zip(e)
                .map(|(p, x)| p * x)
                .sum::<f64>()
                / bank.temperature
        })
        .collect();
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(SwavError::NonFiniteLogits);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let softmax: Vec<f64> = exp.iter().map(|x| x / total).collect();
    let k = bank.num_prototypes as f64;
    let eps = bank.smoothing;
    let probs = softmax.iter().map(|s| (1.0 - eps) * s + eps / k).collect();
    Ok(ViewRow { softmax, probs })
}

/// Temperature-scaled softmax over prototype similarities with label smoothing
/// `p' = (1−ε)·p + ε/K`.
pub fn prototype_probabilities(embeddings: &[Vec<f64>], bank: &PrototypeBank) -> Result<Rows, SwavError> {
    embeddings
        .iter()
        .map(|e| view_row(e, bank).map(|v| v.probs))
        .collect()
}

fn check_distribution(p: &[f64], name: &str) -> Result<(), SwavError> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SwavError::InvalidDistribution(format!(
            "{name} must be non-negative and sum to 1 (sum = {sum})"
        )));
    }
    Ok(())
}

fn log1p_normalize(p1: &[f64]) -> (Vec<f64>, f64) {
    let u: Vec<f64> = p1.iter().map(|p| p.ln_1p()).collect();
    let total: f64 = u.iter().sum();
    (u.iter().map(|x| x / total).collect(), total)
}

fn kl_terms(q: &[f64], p2: &[f64]) -> Result<f64, SwavError> {
    let mut loss = 0.0;
    for (i, (&qi, &pi)) in q.iter().zip(p2).enumerate() {
        if qi > 0.0 {
            if pi <= 0.0 {
                return Err(SwavError::ZeroTarget(i));
            }
            loss += qi * (qi / pi).ln();
        }
    }
    Ok(loss)
}

/// Row loss `KL(normalize(log1p(p1)) ‖ p2)`, using `0·ln(0/x) = 0`.
pub fn swav_loss(p1: &[f64], p2: &[f64]) -> Result<f64, SwavError> {
    if p1.len() != p2.len() {
        return Err(SwavError::InvalidDistribution("length mismatch".into()));
    }
    check_distribution(p1, "p1")?;
    check_distribution(p2, "p2")?;
    let (q, _) = log1p_normalize(p1);
    kl_terms(&q, p2)
}

/// Mean of row losses.
pub fn swav_batch_loss(p1: &[Vec<f64>], p2: &[Vec<f64>]) -> Result<f64, SwavError> {
    if p1.is_empty() || p1.len() != p2.len() {
        return Err(SwavError::InvalidDistribution("batch size mismatch".into()));
    }
    let total = p1
        .iter()
        .zip(p2)
        .map(|(a, b)| swav_loss(a, b))
        .sum::<Result<f64, _>>()?;
    Ok(total / p1.len() as f64)
}

/// Adds independent `N(0, σ²)` noise to every entry. `σ = 0` returns the input untouched.
pub fn gaussian_augment(output: &[Vec<f64>], sigma: f64, rng: &mut ChaCha8Rng) -> Rows {
    if sigma == 0.0 {
        return output.to_vec();
    }
    output
        .iter()
        .map(|row| {
            row.iter()
                .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Batch loss of two views and its gradients with respect to both views and the prototypes.
pub struct ViewGradients {
    pub loss: f64,
    pub view1: Rows,
    pub view2: Rows,
    pub prototypes: Vec<f64>,
}

pub fn swav_loss_and_gradients(
    view1: &[Vec<f64>],
    view2: &[Vec<f64>],
    bank: &PrototypeBank,
) -> Result<ViewGradients, SwavError> {
    if view1.is_empty() || view1.len() != view2.len() {
        return Err(SwavError::InvalidDistribution("batch size mismatch".into()));
    }
    let n = view1.len() as f64;
    let k = bank.num_prototypes;
    let dim = bank.embedding_dim;
    let (eps, tau) = (bank.smoothing, bank.temperature);
    let mut loss = 0.0;
    let mut g_view1 = Vec::with_capacity(view1.len());
    let mut g_view2 = Vec::with_capacity(view1.len());
    let mut g_proto = vec![0.0; k * dim];

    for (e1, e2) in view1.iter().zip(view2) {
        let a = view_row(e1, bank)?;
        let b = view_row(e2, bank)?;
        let (q, u_total) = log1p_normalize(&a.probs);
        loss += kl_terms(&q, &b.probs)?;

        // ∂L/∂q, then through the renormalization and log1p.
        let gq: Vec<f64> = q
            .iter()
            .zip(&b.probs)
            .map(|(qi, pi)| if *qi > 0.0 { (qi / pi).ln() + 1.0 } else { 0.0 })
            .collect();
        let mean_gq: f64 = q.iter().zip(&gq).map(|(a, b)| a * b).sum();
        let gp1: Vec<f64> = gq
            .iter()
            .zip(&a.probs)
            .map(|(g, p)| (g - mean_gq) / u_total / (1.0 + p))
            .collect();
        let gp2: Vec<f64> = q.iter().zip(&b.probs).map(|(qi, pi)| -qi / pi).collect();

        let gz1 = softmax_backward(&a.softmax, &gp1, 1.0 - eps);
        let gz2 = softmax_backward(&b.softmax, &gp2, 1.0 - eps);

        let mut ge1 = vec![0.0; dim];
        let mut ge2 = vec![0.0; dim];
        for i in 0..k {
            let proto = bank.prototype(i);
            for d in 0..dim {
                ge1[d] += gz1[i] * proto[d] / tau / n;
                ge2[d] += gz2[i] * proto[d] / tau / n;
                g_proto[i * dim + d] += (gz1[i] * e1[d] + gz2[i] * e2[d]) / tau / n;
            }
        }
        g_view1.push(ge1);
        g_view2.push(ge2);
    }
    Ok(ViewGradients {
        loss: loss / n,
        view1: g_view1,
        view2: g_view2,
        prototypes: g_proto,
    })
}

// Through smoothing (factor) and softmax.
fn softmax_backward(softmax: &[f64], g_probs: &[f64], factor: f64) -> Vec<f64> {
    let gs: Vec<f64> = g_probs.iter().map(|g| g * factor).collect();
    let dot: f64 = softmax.iter().zip(&gs).map(|(s, g)| s * g).sum();
    softmax.iter().zip(&gs).map(|(s, g)| s * (g - dot)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Rescales `grad` to `clip_norm` when its L2 norm exceeds it, then applies one
/// bias-corrected Adam update in place.
pub fn clipped_adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    clip_norm: f64,
) -> Result<(), SwavError> {
    if grad.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(SwavError::GradientShape {
            expected: params.len(),
            got: grad.len(),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(SwavError::NonFiniteGradient(i));
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let factor = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i] * factor;
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    /// Shift-rule probability Jacobian chained with analytic classical gradients.
    ParameterShift,
    /// Central differences of the full loss in the circuit angles.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub temperature: f64,
    pub smoothing: f64,
    /// Width of the generated feature transform (quantum feature columns).
    pub output_dim: usize,
    /// `γ` in the probability-to-weight map.
    pub weight_scale: f64,
    pub gradient: GradientMethod,
    pub fd_step: f64,
    pub max_qubits: usize,
    pub depth_range: Vec<usize>,
    pub prototype_range: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_epochs: 10,
            batch_size: 32,
            learning_rate: 1e-2,
            clip_norm: 1.0,
            noise_sigma: 0.05,
            seed: 0,
            temperature: 0.1,
            smoothing: 0.01,
            output_dim: 3,
            weight_scale: 1.0,
            gradient: GradientMethod::ParameterShift,
            fd_step: 1e-4,
            max_qubits: DEFAULT_MAX_QUBITS,
            depth_range: vec![1],
            prototype_range: vec![3],
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), SwavError> {
        let bad = |m: &str| Err(SwavError::InvalidConfig(m.to_owned()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning_rate and clip_norm must be positive");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if self.output_dim == 0 {
            return bad("output_dim must be positive");
        }
        Ok(())
    }
}

/// Additive noise of the two augmented views for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    pub view1: Rows,
    pub view2: Rows,
}

impl BatchNoise {
    pub fn draw(rows: usize, dim: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let zeros = vec![vec![0.0; dim]; rows];
        let view1 = gaussian_augment(&zeros, sigma, rng);
        let view2 = gaussian_augment(&zeros, sigma, rng);
        Self { view1, view2 }
    }
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Rows {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

/// Loss of one batch as a function of the generated weights.
fn weight_objective(
    batch: &FeatureMatrix,
    weights: &[f64],
    shape: TransformShape,
    bank: &PrototypeBank,
    noise: &BatchNoise,
) -> Result<f64, SwavError> {
    let y = apply_transform(batch, weights, shape)?.row_vecs();
    let p1 = prototype_probabilities(&add(&y, &noise.view1), bank)?;
    let p2 = prototype_probabilities(&add(&y, &noise.view2), bank)?;
    swav_batch_loss(&p1, &p2)
}

/// Full objective: circuit → weights → transform → two noisy views → loss.
pub fn swav_objective(
    batch: &FeatureMatrix,
    model: &QnnModel,
    bank: &PrototypeBank,
    noise: &BatchNoise,
    max_qubits: usize,
) -> Result<f64, SwavError> {
    let weights = model.weights(max_qubits)?;
    weight_objective(batch, &weights, model.transform_shape, bank, noise)
}

/// Returns `(L, ∂L/∂w, ∂L/∂P)` for explicit weights.
fn weight_gradient(
    batch: &FeatureMatrix,
    weights: &[f64],
    shape: TransformShape,
    bank: &PrototypeBank,
    noise: &BatchNoise,
) -> Result<(f64, Vec<f64>, Vec<f64>), SwavError> {
    let y = apply_transform(batch, weights, shape)?.row_vecs();
    let g = swav_loss_and_gradients(&add(&y, &noise.view1), &add(&y, &noise.view2), bank)?;
    let (din, dout) = (shape.input_dim, shape.output_dim);
    let mut dw = vec![0.0; shape.param_count()];
    for (r, yr) in y.iter().enumerate() {
        let x = batch.row(r);
        for o in 0..dout {
            let da = (g.view1[r][o] + g.view2[r][o]) * (1.0 - yr[o] * yr[o]);
            for c in 0..din {
                dw[o * din + c] += da * x[c];
            }
            dw[din * dout + o] += da;
        }
    }
    Ok((g.loss, dw, g.prototypes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGradient {
    pub loss: f64,
    pub theta: Vec<f64>,
    pub prototypes: Vec<f64>,
}

pub fn swav_objective_gradient(
    batch: &FeatureMatrix,
    model: &QnnModel,
    bank: &PrototypeBank,
    noise: &BatchNoise,
    method: GradientMethod,
    max_qubits: usize,
    fd_step: f64,
) -> Result<ObjectiveGradient, SwavError> {
    let shape = model.transform_shape;
    match method {
        GradientMethod::ParameterShift => {
            let mut classical = None;
            let result = qnn_gradient(model, max_qubits, |w| {
                match weight_gradient(batch, w, shape, bank, noise) {
                    Ok((l, dw, dp)) => {
                        classical = Some(Ok(dp));
                        (l, dw)
                    }
                    Err(e) => {
                        classical = Some(Err(e));
                        (f64::NAN, vec![f64::NAN; w.len()])
                    }
                }
            });
            let prototypes = match classical {
                Some(Ok(dp)) => dp,
                Some(Err(e)) => return Err(e),
                None => return Err(result.err().map_or(SwavError::NonFiniteLogits, Into::into)),
            };
            let (loss, theta, _) = result.map_err(|e| match e {
                QuantumError::NonFiniteLoss { .. } => SwavError::NonFiniteLogits,
                other => other.into(),
            })?;
            Ok(ObjectiveGradient {
                loss,
                theta,
                prototypes,
            })
        }
        GradientMethod::FiniteDifference => {
            let weights = model.weights(max_qubits)?;
            let (loss, _, prototypes) = weight_gradient(batch, &weights, shape, bank, noise)?;
            let theta = finite_difference_gradient(model.circuit.params(), fd_step, |t| {
                model
                    .circuit
                    .with_params(t.to_vec())
                    .and_then(|c| {
                        let m = QnnModel { circuit: c, ..model.clone() };
                        m.weights(max_qubits)
                    })
                    .ok()
                    .and_then(|w| weight_objective(batch, &w, shape, bank, noise).ok())
                    .unwrap_or(f64::NAN)
            })?;
            Ok(ObjectiveGradient {
                loss,
                theta,
                prototypes,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: QnnModel,
    pub bank: PrototypeBank,
    pub loss_history: Vec<f64>,
    pub snapshots: Vec<QuantumFeatures>,
    pub seed: u64,
}

/// Serializable echo of a trained model: angles, prototypes and the config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub depth: usize,
    pub n_qubits: usize,
    pub theta: Vec<f64>,
    pub num_prototypes: usize,
    pub prototypes: Rows,
    pub transform_shape: TransformShape,
    pub loss_history: Vec<f64>,
    pub seed: u64,
    pub config: TrainConfig,
}

impl TrainedModel {
    pub fn record(&self, config: &TrainConfig) -> ModelRecord {
        ModelRecord {
            depth: self.model.circuit.depth(),
            n_qubits: self.model.circuit.n_qubits(),
            theta: self.model.circuit.params().to_vec(),
            num_prototypes: self.bank.num_prototypes(),
            prototypes: self.bank.rows(),
            transform_shape: self.model.transform_shape,
            loss_history: self.loss_history.clone(),
            seed: self.seed,
            config: config.clone(),
        }
    }
}

/// Trains one `(depth, bank)` cell. Batches follow row order; the last batch may be short.
/// After each epoch a gradient-free pass over all rows is stored as a snapshot.
pub fn train_qnn_swav(
    features: &FeatureMatrix,
    depth: usize,
    config: &TrainConfig,
    mut bank: PrototypeBank,
) -> Result<TrainedModel, SwavError> {
    config.validate()?;
    if features.rows() == 0 {
        return Err(SwavError::EmptyFeatures);
    }
    if bank.embedding_dim() != config.output_dim {
        return Err(SwavError::Dimension {
            expected: config.output_dim,
            got: bank.embedding_dim(),
        });
    }
    let shape = TransformShape {
        input_dim: features.cols(),
        output_dim: config.output_dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_params = qubits_for(shape.param_count()) * depth;
    let theta: Vec<f64> = (0..n_params)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut model = QnnModel::for_transform(shape, depth, theta, config.weight_scale)?;

    let batch_size = config.batch_size.min(features.rows());
    let batches: Vec<FeatureMatrix> = (0..features.rows())
        .collect::<Vec<_>>()
        .chunks(batch_size)
        .map(|idx| {
            let rows: Rows = idx.iter().map(|&r| features.row(r).to_vec()).collect();
            FeatureMatrix::from_rows(&rows, features.column_names().to_vec())
                .expect("rows come from a valid matrix")
        })
        .collect();

    let mut adam = AdamState::new(n_params + bank.flat().len());
    let mut params: Vec<f64> = model.circuit.params().iter().chain(bank.flat()).copied().collect();
    let mut loss_history = Vec::with_capacity(config.num_epochs);
    let mut snapshots = Vec::with_capacity(config.num_epochs);

    for epoch in 1..=config.num_epochs {
        let mut epoch_loss = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let noise = BatchNoise::draw(batch.rows(), shape.output_dim, config.noise_sigma, &mut rng);
            let grad = swav_objective_gradient(
                batch,
                &model,
                &bank,
                &noise,
                config.gradient,
                config.max_qubits,
                config.fd_step,
            )
            .map_err(|e| match e {
                SwavError::NonFiniteLogits | SwavError::ZeroTarget(_) => {
                    SwavError::NonFiniteLoss { epoch, batch: b }
                }
                other => other,
            })?;
            if !grad.loss.is_finite() {
                return Err(SwavError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += grad.loss;
            let full: Vec<f64> = grad.theta.iter().chain(&grad.prototypes).copied().collect();
            clipped_adam_step(&mut params, &full, &mut adam, config.learning_rate, config.clip_norm)?;
            model.circuit = model.circuit.with_params(params[..n_params].to_vec())?;
            bank.set_flat(&params[n_params..]);
        }
        loss_history.push(epoch_loss / batches.len() as f64);

        let weights = model.weights(config.max_qubits)?;
        snapshots.push(QuantumFeatures {
            matrix: apply_transform(features, &weights, shape)?,
            provenance: Provenance {
                strategy: Strategy::Qnn,
                depth,
                epoch,
                seed: config.seed,
                num_prototypes: Some(bank.num_prototypes()),
            },
            theta: model.circuit.params().to_vec(),
        });
    }
    Ok(TrainedModel {
        model,
        bank,
        loss_history,
        snapshots,
        seed: config.seed,
    })
}

/// Trains every `(num_prototypes, depth)` cell of the config's ranges, in that nesting
/// order. Cells run in parallel, each with its own seed derived from the base seed.
pub fn train_sweep(features: &FeatureMatrix, config: &TrainConfig) -> Result<Vec<TrainedModel>, SwavError> {
    if config.depth_range.is_empty() || config.prototype_range.is_empty() {
        return Err(SwavError::InvalidConfig("empty depth or prototype range".into()));
    }
    let cells: Vec<(usize, usize)> = config
        .prototype_range
        .iter()
        .flat_map(|&p| config.depth_range.iter().map(move |&d| (p, d)))
        .collect();
    cells
        .par_iter()
        .map(|&(p, d)| {
            let cell_seed = mix_seed(config.seed, &[p as u64, d as u64]);
            let bank = PrototypeBank::random(
                p,
                config.output_dim,
                config.temperature,
                config.smoothing,
                mix_seed(cell_seed, &[0xBA5E]),
            )?;
            let cell_config = TrainConfig {
                seed: cell_seed,
                ..config.clone()
            };
            train_qnn_swav(features, d, &cell_config, bank)
        })
        .collect()
}
