//! The VAE: fully-connected encoder producing (mu, log-variance), stochastic
//! latent, fully-connected decoder with per-feature output heads — softmax
//! probabilities for each categorical block, a real-valued mean for each
//! continuous column.
//!
//! Two forward paths share the same matrix kernels: a tape path used during
//! training (differentiable) and a plain path used for scoring (posterior
//! mean, no sampling, deterministic).

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::data::{ColumnKind, EncoderState, FeatureColumn};
use crate::fsio;
use crate::numerics::{Matrix, NodeId, NumericsError, Rng, Tape, PROB_FLOOR};

/// Log-variance head outputs are clamped to this interval.
pub const LOGVAR_CLAMP: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
    #[error("weight block {name:?} has shape {got:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("model file format {0:?} is not supported")]
    BadFormat(String),
    #[error("weight block {0:?} is missing")]
    MissingWeight(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Activation of the continuous output heads. `Tanh` keeps means in (-1, 1),
/// which saturates against z-scored targets outside that range; `Linear` is
/// the unconstrained alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_width: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
    pub feature_layout: Vec<FeatureColumn>,
    pub continuous_head: HeadKind,
    pub obs_sigma: f64,
}

impl Architecture {
    /// Defaults: encoder [64, 32], latent 8, decoder [32, 64], tanh
    /// continuous heads, unit observation sigma.
    pub fn defaults(layout: Vec<FeatureColumn>) -> Self {
        let input_width = layout.last().map(|c| c.offset + c.width).unwrap_or(0);
        Architecture {
            input_width,
            encoder_hidden: vec![64, 32],
            latent_dim: 8,
            decoder_hidden: vec![32, 64],
            feature_layout: layout,
            continuous_head: HeadKind::Tanh,
            obs_sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.latent_dim < 1 {
            return Err(ModelError::BadArchitecture(
                "latent_dim must be >= 1".into(),
            ));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(ModelError::BadArchitecture(
                "hidden layer widths must be >= 1".into(),
            ));
        }
        if self.obs_sigma.is_nan() || self.obs_sigma <= 0.0 {
            return Err(ModelError::BadArchitecture("obs_sigma must be > 0".into()));
        }
        let mut offset = 0;
        for col in &self.feature_layout {
            if col.offset != offset || col.width == 0 {
                return Err(ModelError::BadArchitecture(format!(
                    "feature layout does not tile at column {:?}",
                    col.name
                )));
            }
            offset += col.width;
        }
        if offset != self.input_width {
            return Err(ModelError::BadArchitecture(format!(
                "feature layout covers {offset} of {} inputs",
                self.input_width
            )));
        }
        Ok(())
    }
}

/// One dense layer: weights `(fan_in x fan_out)` and a bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Matrix,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Dense {
        let scale = (1.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform_in(-scale, scale))
            .collect();
        Dense {
            w: Matrix::from_vec_unchecked(fan_in, fan_out, data),
            b: Matrix::zeros(1, fan_out),
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        x.matmul(&self.w).add_row_broadcast(&self.b)
    }
}

/// Encoder/decoder weights plus the architecture they realize.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub encoder: Vec<Dense>,
    pub mu_head: Dense,
    pub logvar_head: Dense,
    pub decoder: Vec<Dense>,
    pub output: Dense,
}

/// Initializes weights uniform in `(-s, s)` with `s = sqrt(1 / fan_in)`,
/// biases zero. Draw order is fixed, so equal seeds give identical params.
pub fn init_params(arch: &Architecture, rng: &mut Rng) -> Result<ModelParams, ModelError> {
    arch.validate()?;
    let mut encoder = Vec::new();
    let mut width = arch.input_width;
    for &hidden in &arch.encoder_hidden {
        encoder.push(Dense::init(width, hidden, rng));
        width = hidden;
    }
    let mu_head = Dense::init(width, arch.latent_dim, rng);
    let logvar_head = Dense::init(width, arch.latent_dim, rng);

    let mut decoder = Vec::new();
    let mut width = arch.latent_dim;
    for &hidden in &arch.decoder_hidden {
        decoder.push(Dense::init(width, hidden, rng));
        width = hidden;
    }
    let output = Dense::init(width, arch.input_width, rng);

    Ok(ModelParams {
        arch: arch.clone(),
        encoder,
        mu_head,
        logvar_head,
        decoder,
        output,
    })
}

/// Per-feature decoder output on the tape.
#[derive(Debug, Clone, Copy)]
pub enum HeadNode {
    /// `B x (K + 1)` softmax probabilities.
    Categorical(NodeId),
    /// `B x 1` predicted means.
    Continuous(NodeId),
}

/// Per-feature decoder output as plain matrices.
#[derive(Debug, Clone)]
pub enum HeadValue {
    Categorical(Matrix),
    Continuous(Matrix),
}

/// Parameter nodes for one training step, in canonical parameter order.
pub struct TapeBinding {
    encoder: Vec<(NodeId, NodeId)>,
    mu_head: (NodeId, NodeId),
    logvar_head: (NodeId, NodeId),
    decoder: Vec<(NodeId, NodeId)>,
    output: (NodeId, NodeId),
}

impl TapeBinding {
    /// Parameter node ids in the same order as [`ModelParams::param_list`].
    pub fn node_list(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for (w, b) in &self.encoder {
            out.push(*w);
            out.push(*b);
        }
        out.extend([self.mu_head.0, self.mu_head.1]);
        out.extend([self.logvar_head.0, self.logvar_head.1]);
        for (w, b) in &self.decoder {
            out.push(*w);
            out.push(*b);
        }
        out.extend([self.output.0, self.output.1]);
        out
    }

    /// Gradients for every parameter after `backward`, zeros where a
    /// parameter does not touch the output.
    pub fn gradients(&self, tape: &Tape) -> Vec<Matrix> {
        self.node_list()
            .into_iter()
            .map(|id| match tape.gradient(id) {
                Some(g) => g.clone(),
                None => {
                    let (r, c) = tape.value(id).shape();
                    Matrix::zeros(r, c)
                }
            })
            .collect()
    }
}

impl ModelParams {
    /// Parameter matrices in canonical order: encoder layers (w, b), mu head,
    /// logvar head, decoder layers, output layer.
    pub fn param_list(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for layer in &self.encoder {
            out.push(&layer.w);
            out.push(&layer.b);
        }
        out.extend([&self.mu_head.w, &self.mu_head.b]);
        out.extend([&self.logvar_head.w, &self.logvar_head.b]);
        for layer in &self.decoder {
            out.push(&layer.w);
            out.push(&layer.b);
        }
        out.extend([&self.output.w, &self.output.b]);
        out
    }

    pub fn param_list_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        for layer in &mut self.encoder {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out.push(&mut self.mu_head.w);
        out.push(&mut self.mu_head.b);
        out.push(&mut self.logvar_head.w);
        out.push(&mut self.logvar_head.b);
        for layer in &mut self.decoder {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out.push(&mut self.output.w);
        out.push(&mut self.output.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_list().iter().map(|m| m.rows() * m.cols()).sum()
    }

    /// Registers every parameter matrix on the tape.
    pub fn bind(&self, tape: &mut Tape) -> Result<TapeBinding, NumericsError> {
        let dense = |layer: &Dense, tape: &mut Tape| -> Result<(NodeId, NodeId), NumericsError> {
            Ok((
                tape.parameter(layer.w.clone())?,
                tape.parameter(layer.b.clone())?,
            ))
        };
        let encoder = self
            .encoder
            .iter()
            .map(|l| dense(l, tape))
            .collect::<Result<_, _>>()?;
        let mu_head = dense(&self.mu_head, tape)?;
        let logvar_head = dense(&self.logvar_head, tape)?;
        let decoder = self
            .decoder
            .iter()
            .map(|l| dense(l, tape))
            .collect::<Result<_, _>>()?;
        let output = dense(&self.output, tape)?;
        Ok(TapeBinding {
            encoder,
            mu_head,
            logvar_head,
            decoder,
            output,
        })
    }
}

fn dense_on_tape(
    tape: &mut Tape,
    layer: (NodeId, NodeId),
    x: NodeId,
) -> Result<NodeId, NumericsError> {
    let h = tape.matmul(x, layer.0)?;
    tape.add_row_broadcast(h, layer.1)
}

/// Encoder forward on the tape: tanh hidden layers, linear mu head, logvar
/// head hard-clamped to [`LOGVAR_CLAMP`].
pub fn encode_forward(
    tape: &mut Tape,
    binding: &TapeBinding,
    batch: NodeId,
) -> Result<(NodeId, NodeId), NumericsError> {
    let mut h = batch;
    for layer in &binding.encoder {
        let pre = dense_on_tape(tape, *layer, h)?;
        h = tape.tanh(pre)?;
    }
    let mu = dense_on_tape(tape, binding.mu_head, h)?;
    let logvar_raw = dense_on_tape(tape, binding.logvar_head, h)?;
    let logvar = tape.clamp(logvar_raw, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1)?;
    Ok((mu, logvar))
}

/// Decoder forward on the tape: tanh hidden layers, then per-feature heads
/// sliced from one wide output layer.
pub fn decode_forward(
    tape: &mut Tape,
    binding: &TapeBinding,
    arch: &Architecture,
    z: NodeId,
) -> Result<Vec<HeadNode>, NumericsError> {
    let mut h = z;
    for layer in &binding.decoder {
        let pre = dense_on_tape(tape, *layer, h)?;
        h = tape.tanh(pre)?;
    }
    let wide = dense_on_tape(tape, binding.output, h)?;
    let mut heads = Vec::with_capacity(arch.feature_layout.len());
    for col in &arch.feature_layout {
        let slice = tape.column_slice(wide, col.offset, col.width)?;
        let head = match col.kind {
            ColumnKind::Categorical => HeadNode::Categorical(tape.softmax_rows(slice)?),
            ColumnKind::Continuous => HeadNode::Continuous(match arch.continuous_head {
                HeadKind::Tanh => tape.tanh(slice)?,
                HeadKind::Linear => slice,
            }),
        };
        heads.push(head);
    }
    Ok(heads)
}

impl ModelParams {
    /// Plain encoder forward; same arithmetic as the tape path.
    pub fn encode_plain(&self, batch: &Matrix) -> (Matrix, Matrix) {
        assert_eq!(batch.cols(), self.arch.input_width, "batch width");
        let mut h = batch.clone();
        for layer in &self.encoder {
            h = layer.forward(&h).map(f64::tanh);
        }
        let mu = self.mu_head.forward(&h);
        let logvar = self
            .logvar_head
            .forward(&h)
            .map(|v| v.clamp(LOGVAR_CLAMP.0, LOGVAR_CLAMP.1));
        (mu, logvar)
    }

    /// Plain decoder forward returning per-feature heads.
    pub fn decode_plain(&self, z: &Matrix) -> Vec<HeadValue> {
        assert_eq!(z.cols(), self.arch.latent_dim, "latent width");
        let mut h = z.clone();
        for layer in &self.decoder {
            h = layer.forward(&h).map(f64::tanh);
        }
        let wide = self.output.forward(&h);
        self.arch
            .feature_layout
            .iter()
            .map(|col| {
                let slice = wide.slice_cols(col.offset, col.width);
                match col.kind {
                    ColumnKind::Categorical => HeadValue::Categorical(slice.softmax_rows()),
                    ColumnKind::Continuous => {
                        HeadValue::Continuous(match self.arch.continuous_head {
                            HeadKind::Tanh => slice.map(f64::tanh),
                            HeadKind::Linear => slice,
                        })
                    }
                }
            })
            .collect()
    }

    /// Negative log-likelihood anomaly scores for every row of `batch`,
    /// using the posterior mean (no sampling). Higher means more anomalous.
    pub fn score_batch(&self, batch: &Matrix) -> Vec<f64> {
        let (mu, _) = self.encode_plain(batch);
        let heads = self.decode_plain(&mu);
        let sigma = self.arch.obs_sigma;
        let gauss_const = 0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();

        let mut scores = vec![0.0; batch.rows()];
        for (col, head) in self.arch.feature_layout.iter().zip(&heads) {
            match head {
                HeadValue::Categorical(probs) => {
                    for (r, score) in scores.iter_mut().enumerate() {
                        let block = &batch.row(r)[col.offset..col.offset + col.width];
                        let observed = block
                            .iter()
                            .position(|&v| v == 1.0)
                            .expect("categorical block must be one-hot");
                        let p = probs.get(r, observed).max(PROB_FLOOR);
                        *score -= p.ln();
                    }
                }
                HeadValue::Continuous(mean) => {
                    for (r, score) in scores.iter_mut().enumerate() {
                        let x = batch.get(r, col.offset);
                        let d = mean.get(r, 0) - x;
                        *score += gauss_const + d * d / (2.0 * sigma * sigma);
                    }
                }
            }
        }
        scores
    }

    /// Anomaly score of a single encoded row.
    pub fn nll_score(&self, row: &[f64]) -> f64 {
        let batch = Matrix::from_vec_unchecked(1, row.len(), row.to_vec());
        self.score_batch(&batch)[0]
    }
}

// ---------------------------------------------------------------------------
// Model file

/// On-disk trained model: encoder state, architecture and flattened weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub encoder_state: EncoderState,
    pub fingerprint: String,
    pub beta: f64,
    pub seed: u64,
}

const MODEL_FORMAT: &str = "rtvae-v1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    fingerprint: String,
    architecture: Architecture,
    encoder_state: EncoderState,
    weights: Vec<WeightBlock>,
    beta: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct WeightBlock {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn weight_names(params: &ModelParams) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..params.encoder.len() {
        names.push(format!("encoder.{i}.w"));
        names.push(format!("encoder.{i}.b"));
    }
    names.extend([
        "mu.w".into(),
        "mu.b".into(),
        "logvar.w".into(),
        "logvar.b".into(),
    ]);
    for i in 0..params.decoder.len() {
        names.push(format!("decoder.{i}.w"));
        names.push(format!("decoder.{i}.b"));
    }
    names.extend(["output.w".into(), "output.b".into()]);
    names
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String, ModelError> {
        let names = weight_names(&self.params);
        let weights = names
            .into_iter()
            .zip(self.params.param_list())
            .map(|(name, m)| WeightBlock {
                name,
                rows: m.rows(),
                cols: m.cols(),
                data: m.data().to_vec(),
            })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            fingerprint: self.fingerprint.clone(),
            architecture: self.params.arch.clone(),
            encoder_state: self.encoder_state.clone(),
            weights,
            beta: self.beta,
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let json = self.to_json()?;
        fsio::write_atomic(path.as_ref(), json.as_bytes())?;
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<TrainedModel, ModelError> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.format != MODEL_FORMAT {
            return Err(ModelError::BadFormat(file.format));
        }
        file.architecture.validate()?;

        // Shapes are validated against the architecture before use.
        let mut rng = Rng::new(0);
        let mut params = init_params(&file.architecture, &mut rng)?;
        let names = weight_names(&params);
        for (name, target) in names.iter().zip(params.param_list_mut()) {
            let block = file
                .weights
                .iter()
                .find(|b| &b.name == name)
                .ok_or_else(|| ModelError::MissingWeight(name.clone()))?;
            if (block.rows, block.cols) != target.shape() {
                return Err(ModelError::WeightShape {
                    name: name.clone(),
                    expected: target.shape(),
                    got: (block.rows, block.cols),
                });
            }
            *target = Matrix::from_vec(block.rows, block.cols, block.data.clone())?;
        }

        Ok(TrainedModel {
            params,
            encoder_state: file.encoder_state,
            fingerprint: file.fingerprint,
            beta: file.beta,
            seed: file.seed,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
        let json = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&json)
    }
}
