//! Recurrent essay scorers with from-scratch forward and backward passes.
//!
//! Both architectures embed the token sequence, run a single unidirectional
//! recurrent layer (GRU or LSTM), sum the hidden states and divide by the
//! prompt's average essay length (not the essay's own length), optionally
//! concatenate three KL content features, and squash a dense projection
//! through a logistic to the (0,1) range. Training minimizes squared error
//! against min-max-normalized scores.
//!
//! Everything is `f64` and deterministic for a fixed seed, which keeps the
//! analytic gradients checkable against central finite differences.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PromptSpec;
use crate::textprep::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("sequence is empty after padding removal and truncation")]
    EmptySequence,
    #[error("token index {index} outside embedding table of {vocab_size} rows")]
    TokenOutOfRange { index: usize, vocab_size: usize },
    #[error("content features: expected {expected} values, got {found}")]
    ContentMismatch { expected: usize, found: usize },
    #[error("non-finite value in {name}")]
    NonFinite { name: &'static str },
    #[error("score {score} outside prompt range {min}..={max}")]
    ScoreOutOfRange { score: i64, min: i64, max: i64 },
    #[error("normalized value {0} outside [0,1]")]
    NormalizedOutOfRange(f64),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Gru,
    Lstm,
}

impl CellType {
    fn gate_count(self) -> usize {
        match self {
            CellType::Gru => 3,
            CellType::Lstm => 4,
        }
    }
}

impl std::fmt::Display for CellType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellType::Gru => write!(f, "gru"),
            CellType::Lstm => write!(f, "lstm"),
        }
    }
}

/// Architecture and runtime choices for one per-prompt scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell_type: CellType,
    pub cell_size: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub use_content_features: bool,
    pub content_dim: usize,
    /// Average training-essay length of the prompt; the pooling denominator.
    pub pooling_divisor: f64,
    pub max_seq_len: usize,
    pub freeze_embeddings: bool,
    pub pad_index: usize,
    pub prompt_id: u32,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(cell_type: CellType, vocab_size: usize, pooling_divisor: f64) -> Self {
        Self {
            cell_type,
            cell_size: 300,
            embed_dim: 100,
            vocab_size,
            use_content_features: false,
            content_dim: 3,
            pooling_divisor,
            max_seq_len: 500,
            freeze_embeddings: false,
            pad_index: crate::textprep::PAD_INDEX,
            prompt_id: 1,
            seed: 0,
        }
    }

    fn content_len(&self) -> usize {
        if self.use_content_features {
            self.content_dim
        } else {
            0
        }
    }

    fn feature_len(&self) -> usize {
        self.cell_size + self.content_len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.cell_size == 0 || self.embed_dim == 0 || self.vocab_size == 0 {
            return Err(ModelError::BadConfig(
                "cell_size, embed_dim and vocab_size must be positive".into(),
            ));
        }
        if !(self.pooling_divisor > 0.0) {
            return Err(ModelError::BadConfig(format!(
                "pooling_divisor must be positive, got {}",
                self.pooling_divisor
            )));
        }
        if self.max_seq_len == 0 {
            return Err(ModelError::BadConfig("max_seq_len must be positive".into()));
        }
        if self.use_content_features && self.content_dim == 0 {
            return Err(ModelError::BadConfig(
                "content features enabled with content_dim = 0".into(),
            ));
        }
        Ok(())
    }
}

/// A model output in (0,1), tagged with the prompt it scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub value: f64,
    pub prompt_id: u32,
}

/// Min-max normalization of an integer score to [0,1].
pub fn normalize_score(score: i64, spec: &PromptSpec) -> Result<NormalizedScore, ModelError> {
    if !spec.contains(score) {
        return Err(ModelError::ScoreOutOfRange {
            score,
            min: spec.min_score,
            max: spec.max_score,
        });
    }
    Ok(NormalizedScore {
        value: (score - spec.min_score) as f64 / (spec.max_score - spec.min_score) as f64,
        prompt_id: spec.prompt_id,
    })
}

/// Inverse of [`normalize_score`]: scale back, round half away from zero,
/// clamp into the prompt range.
pub fn denormalize_score(value: f64, spec: &PromptSpec) -> Result<i64, ModelError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(ModelError::NormalizedOutOfRange(value));
    }
    let raw = value * (spec.max_score - spec.min_score) as f64 + spec.min_score as f64;
    Ok((raw.round() as i64).clamp(spec.min_score, spec.max_score))
}

/// Squared-error loss on normalized scores.
pub fn loss(pred: f64, target: f64) -> f64 {
    (pred - target) * (pred - target)
}

/// All trainable weights. Gate blocks are stacked row-wise in the recurrent
/// matrices: GRU rows are [update; reset; candidate], LSTM rows are
/// [input; forget; cell; output].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub embedding: Array2<f64>,
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
    pub dense_w: Array1<f64>,
    pub dense_b: f64,
}

/// Tensor names used by the visitors, gradient reports, and the optimizer.
pub const PARAM_TENSORS: [&str; 6] = [
    "embedding",
    "w_input",
    "w_hidden",
    "bias",
    "dense_w",
    "dense_b",
];

impl Parameters {
    /// Seeded initialization: uniform(-0.05, 0.05) for weights, zero biases,
    /// zero padding embedding row.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut uniform = |rows: usize, cols: usize| -> Array2<f64> {
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-0.05..0.05))
        };
        let gates = config.cell_type.gate_count();
        let mut embedding = uniform(config.vocab_size, config.embed_dim);
        if config.pad_index < config.vocab_size {
            embedding.row_mut(config.pad_index).fill(0.0);
        }
        let w_input = uniform(gates * config.cell_size, config.embed_dim);
        let w_hidden = uniform(gates * config.cell_size, config.cell_size);
        let dense_w = uniform(1, config.feature_len()).row(0).to_owned();
        Ok(Self {
            embedding,
            w_input,
            w_hidden,
            bias: Array1::zeros(gates * config.cell_size),
            dense_w,
            dense_b: 0.0,
        })
    }

    /// Like [`Parameters::init`] but with the embedding table taken from a
    /// pre-trained matrix (padding/unknown rows already zeroed there).
    pub fn init_with_embeddings(
        config: &ModelConfig,
        embeddings: &EmbeddingMatrix,
    ) -> Result<Self, ModelError> {
        if embeddings.vocab_size() != config.vocab_size || embeddings.dim() != config.embed_dim {
            return Err(ModelError::BadConfig(format!(
                "embedding matrix is {}x{}, config wants {}x{}",
                embeddings.vocab_size(),
                embeddings.dim(),
                config.vocab_size,
                config.embed_dim
            )));
        }
        let mut params = Self::init(config)?;
        params.embedding = embeddings.matrix.clone();
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            w_input: Array2::zeros(self.w_input.raw_dim()),
            w_hidden: Array2::zeros(self.w_hidden.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
            dense_w: Array1::zeros(self.dense_w.raw_dim()),
            dense_b: 0.0,
        }
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        match name {
            "embedding" => self.embedding.as_slice().expect("standard layout"),
            "w_input" => self.w_input.as_slice().expect("standard layout"),
            "w_hidden" => self.w_hidden.as_slice().expect("standard layout"),
            "bias" => self.bias.as_slice().expect("standard layout"),
            "dense_w" => self.dense_w.as_slice().expect("standard layout"),
            "dense_b" => std::slice::from_ref(&self.dense_b),
            other => panic!("unknown parameter tensor '{other}'"),
        }
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [f64] {
        match name {
            "embedding" => self.embedding.as_slice_mut().expect("standard layout"),
            "w_input" => self.w_input.as_slice_mut().expect("standard layout"),
            "w_hidden" => self.w_hidden.as_slice_mut().expect("standard layout"),
            "bias" => self.bias.as_slice_mut().expect("standard layout"),
            "dense_w" => self.dense_w.as_slice_mut().expect("standard layout"),
            "dense_b" => std::slice::from_mut(&mut self.dense_b),
            other => panic!("unknown parameter tensor '{other}'"),
        }
    }

    pub fn n_params(&self) -> usize {
        PARAM_TENSORS.iter().map(|n| self.slice(n).len()).sum()
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        PARAM_TENSORS
            .iter()
            .find(|name| self.slice(name).iter().any(|v| !v.is_finite()))
            .copied()
    }

    pub fn assert_finite(&self) -> Result<(), ModelError> {
        match self.first_non_finite() {
            Some(name) => Err(ModelError::NonFinite { name }),
            None => Ok(()),
        }
    }
}

/// One training example: token indices, optional content features, and the
/// normalized target score.
#[derive(Debug, Clone)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub content: Option<Vec<f64>>,
    pub target: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

enum StepTrace {
    Gru {
        update: Array1<f64>,
        reset: Array1<f64>,
        candidate: Array1<f64>,
        reset_hidden: Array1<f64>,
    },
    Lstm {
        input: Array1<f64>,
        forget: Array1<f64>,
        cell_in: Array1<f64>,
        output: Array1<f64>,
        cell: Array1<f64>,
    },
}

struct ForwardTrace {
    tokens: Vec<usize>,
    steps: Vec<StepTrace>,
    /// h_0..h_T; index t+1 holds the state after consuming token t.
    hidden: Vec<Array1<f64>>,
    features: Array1<f64>,
    prediction: f64,
}

/// Drop padding tokens, truncate to the configured maximum, and bounds-check
/// the rest.
fn prepare_tokens(tokens: &[usize], config: &ModelConfig) -> Result<Vec<usize>, ModelError> {
    let mut seq: Vec<usize> = tokens
        .iter()
        .copied()
        .filter(|&t| t != config.pad_index)
        .collect();
    seq.truncate(config.max_seq_len);
    if seq.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    for &t in &seq {
        if t >= config.vocab_size {
            return Err(ModelError::TokenOutOfRange {
                index: t,
                vocab_size: config.vocab_size,
            });
        }
    }
    Ok(seq)
}

fn check_content<'a>(
    content: Option<&'a [f64]>,
    config: &ModelConfig,
) -> Result<Option<&'a [f64]>, ModelError> {
    match (config.use_content_features, content) {
        (true, Some(values)) if values.len() == config.content_dim => Ok(Some(values)),
        (true, Some(values)) => Err(ModelError::ContentMismatch {
            expected: config.content_dim,
            found: values.len(),
        }),
        (true, None) => Err(ModelError::ContentMismatch {
            expected: config.content_dim,
            found: 0,
        }),
        (false, Some(_)) => Err(ModelError::ContentMismatch {
            expected: 0,
            found: content.map(<[f64]>::len).unwrap_or(0),
        }),
        (false, None) => Ok(None),
    }
}

fn forward_trace(
    tokens: &[usize],
    content: Option<&[f64]>,
    params: &Parameters,
    config: &ModelConfig,
) -> Result<ForwardTrace, ModelError> {
    let seq = prepare_tokens(tokens, config)?;
    let content = check_content(content, config)?;
    let hidden_size = config.cell_size;

    let mut hidden = Vec::with_capacity(seq.len() + 1);
    hidden.push(Array1::zeros(hidden_size));
    let mut steps = Vec::with_capacity(seq.len());
    let mut cell_state = Array1::zeros(hidden_size);

    for &token in &seq {
        let x = params.embedding.row(token);
        let h_prev = hidden.last().expect("h_0 pushed").clone();
        // Input contribution for all gates at once.
        let gates_in = params.w_input.dot(&x) + &params.bias;
        match config.cell_type {
            CellType::Gru => {
                let hz = params
                    .w_hidden
                    .slice(s![..2 * hidden_size, ..])
                    .dot(&h_prev);
                let update = (&gates_in.slice(s![..hidden_size]) + &hz.slice(s![..hidden_size]))
                    .mapv(sigmoid);
                let reset = (&gates_in.slice(s![hidden_size..2 * hidden_size])
                    + &hz.slice(s![hidden_size..]))
                    .mapv(sigmoid);
                let reset_hidden = &reset * &h_prev;
                let candidate = (&gates_in.slice(s![2 * hidden_size..])
                    + &params
                        .w_hidden
                        .slice(s![2 * hidden_size.., ..])
                        .dot(&reset_hidden))
                    .mapv(f64::tanh);
                let h = &update * &h_prev + (1.0 - &update) * &candidate;
                hidden.push(h);
                steps.push(StepTrace::Gru {
                    update,
                    reset,
                    candidate,
                    reset_hidden,
                });
            }
            CellType::Lstm => {
                let pre = gates_in + params.w_hidden.dot(&h_prev);
                let input = pre.slice(s![..hidden_size]).mapv(sigmoid);
                let forget = pre.slice(s![hidden_size..2 * hidden_size]).mapv(sigmoid);
                let cell_in = pre
                    .slice(s![2 * hidden_size..3 * hidden_size])
                    .mapv(f64::tanh);
                let output = pre.slice(s![3 * hidden_size..]).mapv(sigmoid);
                let cell = &forget * &cell_state + &input * &cell_in;
                let h = &output * &cell.mapv(f64::tanh);
                cell_state = cell.clone();
                hidden.push(h);
                steps.push(StepTrace::Lstm {
                    input,
                    forget,
                    cell_in,
                    output,
                    cell,
                });
            }
        }
    }

    // Average-length pooling: the divisor is the prompt mean, not seq.len().
    let mut pooled = Array1::zeros(hidden_size);
    for h in hidden.iter().skip(1) {
        pooled += h;
    }
    pooled /= config.pooling_divisor;

    let mut features = Array1::zeros(config.feature_len());
    features.slice_mut(s![..hidden_size]).assign(&pooled);
    if let Some(values) = content {
        features
            .slice_mut(s![hidden_size..])
            .assign(&Array1::from_vec(values.to_vec()));
    }

    let pre_activation = params.dense_w.dot(&features) + params.dense_b;
    // Keep the logistic output strictly inside (0,1) even under saturation.
    let prediction = sigmoid(pre_activation).clamp(1e-300, 1.0 - 1e-16);
    if !prediction.is_finite() {
        return Err(ModelError::NonFinite {
            name: "prediction",
        });
    }
    Ok(ForwardTrace {
        tokens: seq,
        steps,
        hidden,
        features,
        prediction,
    })
}

/// Score one tokenized essay.
pub fn forward(
    tokens: &[usize],
    content: Option<&[f64]>,
    params: &Parameters,
    config: &ModelConfig,
) -> Result<NormalizedScore, ModelError> {
    let trace = forward_trace(tokens, content, params, config)?;
    Ok(NormalizedScore {
        value: trace.prediction,
        prompt_id: config.prompt_id,
    })
}

/// Mean squared error of a batch.
pub fn batch_loss(
    batch: &[Example],
    params: &Parameters,
    config: &ModelConfig,
) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut total = 0.0;
    for example in batch {
        let trace = forward_trace(&example.tokens, example.content.as_deref(), params, config)?;
        total += loss(trace.prediction, example.target);
    }
    Ok(total / batch.len() as f64)
}

/// Accumulate `scale * column ⊗ row` into a block of `acc`.
fn add_outer(
    acc: &mut Array2<f64>,
    row_offset: usize,
    column: &Array1<f64>,
    row: ndarray::ArrayView1<f64>,
) {
    let rows = column.len();
    let mut block = acc.slice_mut(s![row_offset..row_offset + rows, ..]);
    let lhs = column.view().insert_axis(Axis(1));
    let rhs = row.insert_axis(Axis(0));
    general_mat_mul(1.0, &lhs, &rhs, 1.0, &mut block);
}

/// Analytic gradients of the mean batch loss, by backpropagation through
/// time. Returns (mean loss, gradients with the parameters' shapes).
pub fn backward(
    batch: &[Example],
    params: &Parameters,
    config: &ModelConfig,
) -> Result<(f64, Parameters), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let hidden_size = config.cell_size;
    let mut grads = params.zeros_like();
    let mut total_loss = 0.0;
    let batch_scale = 1.0 / batch.len() as f64;

    for example in batch {
        let trace = forward_trace(&example.tokens, example.content.as_deref(), params, config)?;
        let y = trace.prediction;
        total_loss += loss(y, example.target);

        // d(mean loss)/dy, then through the logistic.
        let dy = 2.0 * (y - example.target) * batch_scale;
        let dpre = dy * y * (1.0 - y);
        grads.dense_w.scaled_add(dpre, &trace.features);
        grads.dense_b += dpre;
        let dfeatures = &params.dense_w * dpre;
        let dpooled = dfeatures.slice(s![..hidden_size]).to_owned();
        // Every step's hidden state receives dpooled / divisor from pooling.
        let dh_pool = &dpooled / config.pooling_divisor;

        let mut dh_carry: Array1<f64> = Array1::zeros(hidden_size);
        let mut dc_carry: Array1<f64> = Array1::zeros(hidden_size);
        for t in (0..trace.steps.len()).rev() {
            let token = trace.tokens[t];
            let x = params.embedding.row(token);
            let h_prev = &trace.hidden[t];
            let dh = &dh_carry + &dh_pool;

            match &trace.steps[t] {
                StepTrace::Gru {
                    update,
                    reset,
                    candidate,
                    reset_hidden,
                } => {
                    let dz = &dh * &(h_prev - candidate);
                    let dz_pre = &dz * update * &(1.0 - update);
                    let dn = &dh * &(1.0 - update);
                    let dn_pre = &dn * &(1.0 - candidate * candidate);
                    let u_n = params.w_hidden.slice(s![2 * hidden_size.., ..]);
                    let drh = u_n.t().dot(&dn_pre);
                    let dr = &drh * h_prev;
                    let dr_pre = &dr * reset * &(1.0 - reset);

                    grads
                        .bias
                        .slice_mut(s![..hidden_size])
                        .scaled_add(1.0, &dz_pre);
                    grads
                        .bias
                        .slice_mut(s![hidden_size..2 * hidden_size])
                        .scaled_add(1.0, &dr_pre);
                    grads
                        .bias
                        .slice_mut(s![2 * hidden_size..])
                        .scaled_add(1.0, &dn_pre);

                    add_outer(&mut grads.w_input, 0, &dz_pre, x);
                    add_outer(&mut grads.w_input, hidden_size, &dr_pre, x);
                    add_outer(&mut grads.w_input, 2 * hidden_size, &dn_pre, x);
                    add_outer(&mut grads.w_hidden, 0, &dz_pre, h_prev.view());
                    add_outer(&mut grads.w_hidden, hidden_size, &dr_pre, h_prev.view());
                    add_outer(
                        &mut grads.w_hidden,
                        2 * hidden_size,
                        &dn_pre,
                        reset_hidden.view(),
                    );

                    let u_z = params.w_hidden.slice(s![..hidden_size, ..]);
                    let u_r = params.w_hidden.slice(s![hidden_size..2 * hidden_size, ..]);
                    dh_carry = &dh * update
                        + &u_z.t().dot(&dz_pre)
                        + &u_r.t().dot(&dr_pre)
                        + &(&drh * reset);

                    if !config.freeze_embeddings {
                        let w_z = params.w_input.slice(s![..hidden_size, ..]);
                        let w_r = params.w_input.slice(s![hidden_size..2 * hidden_size, ..]);
                        let w_n = params.w_input.slice(s![2 * hidden_size.., ..]);
                        let dx =
                            w_z.t().dot(&dz_pre) + w_r.t().dot(&dr_pre) + w_n.t().dot(&dn_pre);
                        grads.embedding.row_mut(token).scaled_add(1.0, &dx);
                    }
                }
                StepTrace::Lstm {
                    input,
                    forget,
                    cell_in,
                    output,
                    cell,
                } => {
                    let c_prev = if t == 0 {
                        Array1::zeros(hidden_size)
                    } else {
                        match &trace.steps[t - 1] {
                            StepTrace::Lstm { cell, .. } => cell.clone(),
                            StepTrace::Gru { .. } => unreachable!("cell type is fixed"),
                        }
                    };
                    let tanh_c = cell.mapv(f64::tanh);
                    let do_gate = &dh * &tanh_c;
                    let do_pre = &do_gate * output * &(1.0 - output);
                    let dc = &dc_carry + &(&dh * output * &(1.0 - &tanh_c * &tanh_c));
                    let di = &dc * cell_in;
                    let di_pre = &di * input * &(1.0 - input);
                    let df = &dc * &c_prev;
                    let df_pre = &df * forget * &(1.0 - forget);
                    let dg = &dc * input;
                    let dg_pre = &dg * &(1.0 - cell_in * cell_in);
                    dc_carry = &dc * forget;

                    let mut dpre_all = Array1::zeros(4 * hidden_size);
                    dpre_all.slice_mut(s![..hidden_size]).assign(&di_pre);
                    dpre_all
                        .slice_mut(s![hidden_size..2 * hidden_size])
                        .assign(&df_pre);
                    dpre_all
                        .slice_mut(s![2 * hidden_size..3 * hidden_size])
                        .assign(&dg_pre);
                    dpre_all.slice_mut(s![3 * hidden_size..]).assign(&do_pre);

                    grads.bias.scaled_add(1.0, &dpre_all);
                    add_outer(&mut grads.w_input, 0, &dpre_all, x);
                    add_outer(&mut grads.w_hidden, 0, &dpre_all, h_prev.view());
                    dh_carry = params.w_hidden.t().dot(&dpre_all);
                    if !config.freeze_embeddings {
                        let dx = params.w_input.t().dot(&dpre_all);
                        grads.embedding.row_mut(token).scaled_add(1.0, &dx);
                    }
                }
            }
        }
    }

    grads.assert_finite()?;
    Ok((total_loss * batch_scale, grads))
}
