//! Dense statevector simulation and quantum-generated network weights.
//!
//! The circuit family is a hardware-efficient ansatz: each layer applies `R_y(θ)` on
//! every qubit and then a nearest-neighbour CNOT chain `(0,1), (1,2), …`. Basis states
//! are indexed big-endian, so qubit 0 is the most significant bit of the index.
//!
//! The circuit is not fed transaction data. Its measurement probabilities `p_i` become
//! the parameters of a small classical network via `w_i = γ·(p_i·2ⁿ − 1)`, and that
//! network (one linear layer plus `tanh`) transforms the classical features.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{FeatureMatrix, MatrixError};

pub const DEFAULT_MAX_QUBITS: usize = 12;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("{requested} qubits exceeds the simulator cap of {cap}")]
    TooManyQubits { requested: usize, cap: usize },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("requested {requested} weights but the state has only {available} amplitudes")]
    WeightCount { requested: usize, available: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss while differentiating parameter {param}")]
    NonFiniteLoss { param: usize },
    #[error("random feature extraction needs at least one run")]
    ZeroRuns,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
    depth: usize,
    params: Vec<f64>,
}

impl CircuitSpec {
    /// `params[layer * n_qubits + q]` is the rotation angle of qubit `q` in `layer`.
    pub fn new(n_qubits: usize, depth: usize, params: Vec<f64>) -> Result<Self, QuantumError> {
        if n_qubits == 0 || depth == 0 {
            return Err(QuantumError::InvalidCircuit(format!(
                "n_qubits={n_qubits}, depth={depth}; both must be >= 1"
            )));
        }
        if params.len() != n_qubits * depth {
            return Err(QuantumError::InvalidCircuit(format!(
                "{} parameters for {n_qubits} qubits x depth {depth}",
                params.len()
            )));
        }
        Ok(Self {
            n_qubits,
            depth,
            params,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Same shape, different angles.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self, QuantumError> {
        Self::new(self.n_qubits, self.depth, params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QuantumError> {
        if amplitudes.is_empty() || !amplitudes.len().is_power_of_two() {
            return Err(QuantumError::InvalidCircuit(format!(
                "{} amplitudes is not a power of two",
                amplitudes.len()
            )));
        }
        Ok(Self { amplitudes })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn n_qubits(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    fn apply_ry(&mut self, qubit: usize, theta: f64) {
        let n = self.n_qubits();
        let mask = 1usize << (n - 1 - qubit);
        let (s, c) = (theta / 2.0).sin_cos();
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | mask];
                self.amplitudes[i] = a0 * c - a1 * s;
                self.amplitudes[i | mask] = a0 * s + a1 * c;
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let n = self.n_qubits();
        let cmask = 1usize << (n - 1 - control);
        let tmask = 1usize << (n - 1 - target);
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }

    fn normalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            for a in &mut self.amplitudes {
                *a /= norm;
            }
        }
    }
}

pub fn simulate_statevector(spec: &CircuitSpec) -> Result<StateVector, QuantumError> {
    simulate_statevector_capped(spec, DEFAULT_MAX_QUBITS)
}

pub fn simulate_statevector_capped(
    spec: &CircuitSpec,
    max_qubits: usize,
) -> Result<StateVector, QuantumError> {
    if spec.n_qubits > max_qubits {
        return Err(QuantumError::TooManyQubits {
            requested: spec.n_qubits,
            cap: max_qubits,
        });
    }
    let n = spec.n_qubits;
    let mut state = StateVector::zero(n);
    for layer in spec.params.chunks(n) {
        for (q, &theta) in layer.iter().enumerate() {
            state.apply_ry(q, theta);
        }
        for q in 0..n.saturating_sub(1) {
            state.apply_cnot(q, q + 1);
        }
    }
    state.normalize();
    Ok(state)
}

/// `w_i = scale·(p_i·2ⁿ − 1)` for the first `count` basis states.
pub fn extract_weights(
    state: &StateVector,
    count: usize,
    scale: f64,
) -> Result<Vec<f64>, QuantumError> {
    let dim = state.amplitudes.len();
    if count > dim {
        return Err(QuantumError::WeightCount {
            requested: count,
            available: dim,
        });
    }
    Ok(state.amplitudes[..count]
        .iter()
        .map(|a| scale * (a.norm_sqr() * dim as f64 - 1.0))
        .collect())
}

/// Smallest qubit count whose basis covers `weights` weights (at least one qubit).
pub fn qubits_for(weights: usize) -> usize {
    weights.max(2).next_power_of_two().trailing_zeros() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformShape {
    pub input_dim: usize,
    pub output_dim: usize,
}

impl TransformShape {
    /// Weight matrix entries plus biases.
    pub fn param_count(&self) -> usize {
        self.input_dim * self.output_dim + self.output_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightMap {
    pub count: usize,
    pub scale: f64,
}

/// A circuit, its probability-to-weight mapping, and the shape of the network it feeds.
///
/// Weight layout: the first `output_dim × input_dim` weights are the linear map `W`
/// in row-major order (`W[o][c]`), followed by the `output_dim` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnnModel {
    pub circuit: CircuitSpec,
    pub weight_map: WeightMap,
    pub transform_shape: TransformShape,
}

impl QnnModel {
    pub fn new(
        circuit: CircuitSpec,
        weight_map: WeightMap,
        transform_shape: TransformShape,
    ) -> Result<Self, QuantumError> {
        let available = 1usize << circuit.n_qubits;
        if weight_map.count > available {
            return Err(QuantumError::WeightCount {
                requested: weight_map.count,
                available,
            });
        }
        if transform_shape.param_count() != weight_map.count {
            return Err(QuantumError::Shape(format!(
                "transform needs {} parameters but the weight map yields {}",
                transform_shape.param_count(),
                weight_map.count
            )));
        }
        Ok(Self {
            circuit,
            weight_map,
            transform_shape,
        })
    }

    /// Sizes the circuit to the smallest register that can supply every transform parameter.
    pub fn for_transform(
        shape: TransformShape,
        depth: usize,
        params: Vec<f64>,
        scale: f64,
    ) -> Result<Self, QuantumError> {
        let count = shape.param_count();
        let circuit = CircuitSpec::new(qubits_for(count), depth, params)?;
        Self::new(circuit, WeightMap { count, scale }, shape)
    }

    pub fn n_params(&self) -> usize {
        self.circuit.n_params()
    }

    pub fn weights(&self, max_qubits: usize) -> Result<Vec<f64>, QuantumError> {
        let state = simulate_statevector_capped(&self.circuit, max_qubits)?;
        extract_weights(&state, self.weight_map.count, self.weight_map.scale)
    }
}

pub(crate) fn output_names(output_dim: usize) -> Vec<String> {
    (0..output_dim).map(|o| format!("q{o}")).collect()
}

/// `tanh(X·Wᵀ + b)` row-wise for explicit weights.
pub fn apply_transform(
    features: &FeatureMatrix,
    weights: &[f64],
    shape: TransformShape,
) -> Result<FeatureMatrix, QuantumError> {
    if features.cols() != shape.input_dim {
        return Err(QuantumError::Shape(format!(
            "features have {} columns, transform expects {}",
            features.cols(),
            shape.input_dim
        )));
    }
    if weights.len() != shape.param_count() {
        return Err(QuantumError::Shape(format!(
            "{} weights for a transform with {} parameters",
            weights.len(),
            shape.param_count()
        )));
    }
    let (w, b) = weights.split_at(shape.input_dim * shape.output_dim);
    let mut values = Vec::with_capacity(features.rows() * shape.output_dim);
    for r in 0..features.rows() {
        let x = features.row(r);
        for o in 0..shape.output_dim {
            let row = &w[o * shape.input_dim..(o + 1) * shape.input_dim];
            let pre: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[o];
            values.push(pre.tanh());
        }
    }
    Ok(FeatureMatrix::new(
        features.rows(),
        shape.output_dim,
        values,
        output_names(shape.output_dim),
    )?)
}

/// One statevector simulation, then the generated network applied to every row.
pub fn qnn_forward(features: &FeatureMatrix, model: &QnnModel) -> Result<FeatureMatrix, QuantumError> {
    let weights = model.weights(DEFAULT_MAX_QUBITS)?;
    apply_transform(features, &weights, model.transform_shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "QNN")]
    Qnn,
    #[serde(rename = "QF")]
    Qf,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Qnn => "QNN",
            Strategy::Qf => "QF",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a quantum feature matrix came from.
///
/// `epoch` is the 1-based training epoch for trained snapshots and the 1-based
/// Monte-Carlo run index for random features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    pub depth: usize,
    pub epoch: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_prototypes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumFeatures {
    pub matrix: FeatureMatrix,
    pub provenance: Provenance,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorOptions {
    pub output_dim: usize,
    pub scale: f64,
}

impl Default for ExtractorOptions {
    fn default() -> Self {
        Self {
            output_dim: 3,
            scale: 1.0,
        }
    }
}

/// Untrained feature extraction: each run draws every angle uniformly from `[0, 2π)`
/// from one seeded stream, in run order.
pub fn random_quantum_features(
    features: &FeatureMatrix,
    depth: usize,
    runs: usize,
    seed: u64,
    options: &ExtractorOptions,
) -> Result<Vec<QuantumFeatures>, QuantumError> {
    if runs == 0 {
        return Err(QuantumError::ZeroRuns);
    }
    let shape = TransformShape {
        input_dim: features.cols(),
        output_dim: options.output_dim,
    };
    let n_params = qubits_for(shape.param_count()) * depth;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=runs)
        .map(|run| {
            let theta: Vec<f64> = (0..n_params).map(|_| rng.random_range(0.0..TAU)).collect();
            let model = QnnModel::for_transform(shape, depth, theta.clone(), options.scale)?;
            Ok(QuantumFeatures {
                matrix: qnn_forward(features, &model)?,
                provenance: Provenance {
                    strategy: Strategy::Qf,
                    depth,
                    epoch: run,
                    seed,
                    num_prototypes: None,
                },
                theta,
            })
        })
        .collect()
}

/// Two-term shift rule `[f(θ_k + π/2) − f(θ_k − π/2)] / 2` for every angle.
///
/// Exact when `f` is affine in the measurement probabilities of the ansatz.
pub fn parameter_shift_gradient<F>(theta: &[f64], f: F) -> Result<Vec<f64>, QuantumError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut shifted = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            shifted[k] = theta[k] + FRAC_PI_2;
            let plus = f(&shifted);
            shifted[k] = theta[k] - FRAC_PI_2;
            let minus = f(&shifted);
            shifted[k] = theta[k];
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(QuantumError::NonFiniteLoss { param: k });
            }
            Ok((plus - minus) / 2.0)
        })
        .collect()
}

/// Central finite differences with step `h`.
pub fn finite_difference_gradient<F>(theta: &[f64], h: f64, f: F) -> Result<Vec<f64>, QuantumError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut shifted = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            shifted[k] = theta[k] + h;
            let plus = f(&shifted);
            shifted[k] = theta[k] - h;
            let minus = f(&shifted);
            shifted[k] = theta[k];
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(QuantumError::NonFiniteLoss { param: k });
            }
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Probabilities at `spec` and their Jacobian `jac[k][i] = ∂p_i/∂θ_k`, by parameter shift.
pub fn probability_jacobian(
    spec: &CircuitSpec,
    max_qubits: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), QuantumError> {
    let probs = simulate_statevector_capped(spec, max_qubits)?.probabilities();
    let mut theta = spec.params.clone();
    let mut jac = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let base = theta[k];
        theta[k] = base + FRAC_PI_2;
        let plus = simulate_statevector_capped(&spec.with_params(theta.clone())?, max_qubits)?;
        theta[k] = base - FRAC_PI_2;
        let minus = simulate_statevector_capped(&spec.with_params(theta.clone())?, max_qubits)?;
        theta[k] = base;
        jac.push(
            plus.probabilities()
                .iter()
                .zip(minus.probabilities())
                .map(|(p, m)| (p - m) / 2.0)
                .collect(),
        );
    }
    Ok((probs, jac))
}

/// Gradient of a loss over the generated weights with respect to the circuit angles.
///
/// `loss` maps the weight vector to `(L, ∂L/∂w)`. The probability Jacobian comes from
/// the shift rule (exact for this ansatz); the classical part is chained analytically.
/// Returns `(L, ∂L/∂θ, ∂L/∂w)`.
pub fn qnn_gradient<F>(
    model: &QnnModel,
    max_qubits: usize,
    loss: F,
) -> Result<(f64, Vec<f64>, Vec<f64>), QuantumError>
where
    F: FnOnce(&[f64]) -> (f64, Vec<f64>),
{
    let (probs, jac) = probability_jacobian(&model.circuit, max_qubits)?;
    let dim = probs.len() as f64;
    let scale = model.weight_map.scale;
    let weights: Vec<f64> = probs[..model.weight_map.count]
        .iter()
        .map(|p| scale * (p * dim - 1.0))
        .collect();
    let (value, dw) = loss(&weights);
    if !value.is_finite() || dw.iter().any(|g| !g.is_finite()) {
        return Err(QuantumError::NonFiniteLoss { param: 0 });
    }
    let dtheta = jac
        .iter()
        .map(|row| {
            row.iter()
                .zip(&dw)
                .map(|(dp, g)| g * scale * dim * dp)
                .sum()
        })
        .collect();
    Ok((value, dtheta, dw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn spec(n: usize, depth: usize, params: &[f64]) -> CircuitSpec {
        CircuitSpec::new(n, depth, params.to_vec()).unwrap()
    }

    fn uniform(n: usize) -> StateVector {
        let a = (1.0 / (1usize << n) as f64).sqrt();
        StateVector::from_amplitudes(vec![Complex64::new(a, 0.0); 1 << n]).unwrap()
    }

    #[test]
    fn identity_rotation_keeps_zero_state() {
        let s = simulate_statevector(&spec(1, 1, &[0.0])).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn half_pi_rotation_gives_equal_superposition() {
        let s = simulate_statevector(&spec(1, 1, &[FRAC_PI_2])).unwrap();
        let h = (PI / 4.0).cos();
        assert_abs_diff_eq!(s.amplitudes()[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, (PI / 4.0).sin(), epsilon = 1e-15);
    }

    #[test]
    fn flipped_control_propagates_through_cnot() {
        let s = simulate_statevector(&spec(2, 1, &[PI, 0.0])).unwrap();
        let p = s.probabilities();
        assert_abs_diff_eq!(p[3], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[..3].iter().sum::<f64>(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn qubit_cap_is_enforced() {
        let s = spec(13, 1, &[0.0; 13]);
        assert!(matches!(
            simulate_statevector(&s),
            Err(QuantumError::TooManyQubits { requested: 13, cap: 12 })
        ));
        assert!(simulate_statevector_capped(&spec(3, 1, &[0.0; 3]), 2).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(CircuitSpec::new(0, 1, vec![]).is_err());
        assert!(CircuitSpec::new(2, 0, vec![]).is_err());
        assert!(CircuitSpec::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn uniform_state_maps_to_zero_weights() {
        for n in 1..5 {
            for count in 0..=(1 << n) {
                let w = extract_weights(&uniform(n), count, 2.5).unwrap();
                assert!(w.iter().all(|&x| x.abs() < 1e-12), "n={n} count={count}");
            }
        }
    }

    #[test]
    fn weight_mapping_examples() {
        let basis = StateVector::zero(1);
        assert_eq!(extract_weights(&basis, 2, 1.0).unwrap(), vec![1.0, -1.0]);
        let plus = simulate_statevector(&spec(1, 1, &[FRAC_PI_2])).unwrap();
        assert_abs_diff_eq!(extract_weights(&plus, 1, 2.0).unwrap()[0], 0.0, epsilon = 1e-12);
        assert!(matches!(
            extract_weights(&basis, 3, 1.0),
            Err(QuantumError::WeightCount { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn qubits_cover_weight_count() {
        assert_eq!(qubits_for(1), 1);
        assert_eq!(qubits_for(2), 1);
        assert_eq!(qubits_for(3), 2);
        assert_eq!(qubits_for(30), 5);
        assert_eq!(qubits_for(32), 5);
        assert_eq!(qubits_for(33), 6);
    }

    fn two_row_features() -> FeatureMatrix {
        FeatureMatrix::new(3, 1, vec![0.5, -2.0, 0.5], vec!["x".into()]).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_features() {
        // Ry(π/2) on both qubits then CNOT: |+⟩|+⟩ is CNOT-invariant, so probabilities are uniform.
        let shape = TransformShape { input_dim: 1, output_dim: 2 };
        let model = QnnModel::for_transform(shape, 1, vec![FRAC_PI_2, FRAC_PI_2], 1.0).unwrap();
        let out = qnn_forward(&two_row_features(), &model).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn forward_matches_hand_composition() {
        let shape = TransformShape { input_dim: 1, output_dim: 1 };
        let model = QnnModel::for_transform(shape, 1, vec![FRAC_PI_2 / 3.0], 1.5).unwrap();
        let x = two_row_features();
        let out = qnn_forward(&x, &model).unwrap();
        // p0 = cos²(θ/2), p1 = sin²(θ/2); w = γ(2p − 1).
        let t: f64 = FRAC_PI_2 / 3.0;
        let w = 1.5 * (2.0 * (t / 2.0).cos().powi(2) - 1.0);
        let b = 1.5 * (2.0 * (t / 2.0).sin().powi(2) - 1.0);
        for r in 0..3 {
            assert_abs_diff_eq!(out.get(r, 0), (w * x.get(r, 0) + b).tanh(), epsilon = 1e-14);
        }
        assert_eq!(out.row(0), out.row(2));
    }

    #[test]
    fn forward_rejects_mismatched_shapes() {
        let shape = TransformShape { input_dim: 2, output_dim: 1 };
        let model = QnnModel::for_transform(shape, 1, vec![0.0; 2], 1.0).unwrap();
        assert!(matches!(
            qnn_forward(&two_row_features(), &model),
            Err(QuantumError::Shape(_))
        ));
        let circuit = spec(1, 1, &[0.0]);
        assert!(QnnModel::new(
            circuit,
            WeightMap { count: 2, scale: 1.0 },
            TransformShape { input_dim: 2, output_dim: 1 }
        )
        .is_err());
    }

    #[test]
    fn random_features_are_seed_deterministic() {
        let x = FeatureMatrix::new(4, 2, vec![0.1, 0.2, 0.3, 0.4, -1.0, 1.0, 2.0, 0.0], vec!["a".into(), "b".into()]).unwrap();
        let opts = ExtractorOptions::default();
        let a = random_quantum_features(&x, 2, 2, 3, &opts).unwrap();
        let b = random_quantum_features(&x, 2, 2, 3, &opts).unwrap();
        assert_eq!(a, b);
        let five = random_quantum_features(&x, 1, 5, 3, &opts).unwrap();
        assert_eq!(five.len(), 5);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(five[i].theta, five[j].theta);
            }
        }
        assert_eq!(five[4].provenance.epoch, 5);
        assert!(matches!(
            random_quantum_features(&x, 1, 0, 3, &opts),
            Err(QuantumError::ZeroRuns)
        ));
    }

    #[test]
    fn random_features_replay_the_seeded_stream() {
        let x = two_row_features();
        let opts = ExtractorOptions { output_dim: 1, scale: 1.0 };
        let out = random_quantum_features(&x, 1, 2, 99, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for run in &out {
            let theta: f64 = rng.random_range(0.0..TAU);
            let model = QnnModel::for_transform(
                TransformShape { input_dim: 1, output_dim: 1 },
                1,
                vec![theta],
                1.0,
            )
            .unwrap();
            assert_eq!(run.matrix, qnn_forward(&x, &model).unwrap());
        }
    }

    #[test]
    fn shift_rule_on_constant_is_zero() {
        let g = parameter_shift_gradient(&[0.3, 1.2], |_| 4.0).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn shift_rule_matches_closed_form_for_excited_probability() {
        let p1 = |t: &[f64]| simulate_statevector(&spec(1, 1, t)).unwrap().probabilities()[1];
        for &theta in &[0.0, FRAC_PI_2, 1.0, 2.5, -0.7] {
            let g = parameter_shift_gradient(&[theta], p1).unwrap();
            assert_abs_diff_eq!(g[0], 0.5 * f64::sin(theta), epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let err = parameter_shift_gradient(&[0.0, 1.0], |t| if t[1] > 2.0 { f64::NAN } else { 0.0 });
        assert!(matches!(err, Err(QuantumError::NonFiniteLoss { param: 1 })));
    }

    #[test]
    fn chained_gradient_matches_finite_differences() {
        let shape = TransformShape { input_dim: 1, output_dim: 2 };
        let x = two_row_features();
        let theta = vec![0.4, 2.1, -1.3, 0.9];
        let model = QnnModel::for_transform(shape, 2, theta.clone(), 1.0).unwrap();
        // L(w) = Σ_r Σ_o tanh(...)² : a smooth nonlinear loss of the weights.
        let loss_of_weights = |w: &[f64]| -> f64 {
            apply_transform(&x, w, shape).unwrap().values().iter().map(|v| v * v).sum()
        };
        let (_, analytic, _) = qnn_gradient(&model, 12, |w| {
            let dw = finite_difference_gradient(w, 1e-6, loss_of_weights).unwrap();
            (loss_of_weights(w), dw)
        })
        .unwrap();
        let numeric = finite_difference_gradient(&theta, 1e-4, |t| {
            let m = QnnModel::for_transform(shape, 2, t.to_vec(), 1.0).unwrap();
            loss_of_weights(&m.weights(12).unwrap())
        })
        .unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() <= 1e-5 * (1.0 + n.abs()), "{a} vs {n}");
        }
    }

    proptest! {
        #[test]
        fn simulation_preserves_norm(
            n in 1usize..6,
            depth in 1usize..5,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = (0..n * depth).map(|_| rng.random_range(-TAU..TAU)).collect();
            let s = simulate_statevector(&CircuitSpec::new(n, depth, params).unwrap()).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }
}
