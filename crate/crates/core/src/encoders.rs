//! Frozen image and text encoders plus the closed word-embedding table.
//!
//! The text encoder is a one-block mean-field token mixer: every token is
//! shifted by a fixed positional embedding, gated against the sequence mean,
//! and the per-token outputs are mean-pooled and projected to feature space.
//! It consumes continuous embedding sequences, so learned prompt rows flow
//! through it exactly like looked-up word embeddings, and it exposes an
//! explicit reverse pass with respect to its input sequence.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input_err, Error, Result};
use crate::rng::{self, stream};

/// Words of the hand-written template that precedes the class token.
pub const MANUAL_TEMPLATE: [&str; 4] = ["a", "photo", "of", "a"];

pub fn class_name(k: usize) -> String {
    format!("class_{k}")
}

fn hash_arrays<'a>(arrays: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut hasher = Sha256::new();
    for values in arrays {
        hasher.update((values.len() as u64).to_le_bytes());
        for v in values {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn contiguous(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("encoder weights are stored in standard layout")
}

fn contiguous1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("encoder weights are stored in standard layout")
}

/// Closed vocabulary with one fixed embedding row per word.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    embeddings: Array2<f64>,
}

impl TokenTable {
    /// Rows are drawn i.i.d. from N(0, (1/sqrt(E))^2), so each row has norm close to one.
    pub fn new(words: &[String], embed_dim: usize, seed: u64) -> Result<Self> {
        if embed_dim == 0 {
            return input_err("embedding dimension must be positive");
        }
        let mut vocabulary = Vec::new();
        let mut index = HashMap::new();
        for w in words {
            if !index.contains_key(w) {
                index.insert(w.clone(), vocabulary.len());
                vocabulary.push(w.clone());
            }
        }
        let mut rng = rng::seeded(seed, stream::TOKENS);
        let std = 1.0 / (embed_dim as f64).sqrt();
        let embeddings = rng::gaussian_matrix(&mut rng, vocabulary.len(), embed_dim, std);
        Ok(Self {
            vocabulary,
            index,
            embeddings,
        })
    }

    /// Template words followed by `class_0 .. class_{K-1}`.
    pub fn for_classes(num_classes: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        let words: Vec<String> = MANUAL_TEMPLATE
            .iter()
            .map(|w| w.to_string())
            .chain((0..num_classes).map(class_name))
            .collect();
        Self::new(&words, embed_dim, seed)
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn row(&self, word: &str) -> Result<ArrayView1<'_, f64>> {
        let i = *self
            .index
            .get(word)
            .ok_or_else(|| Error::Vocabulary(word.to_string()))?;
        Ok(self.embeddings.row(i))
    }

    pub fn embeddings(&self) -> ArrayView2<'_, f64> {
        self.embeddings.view()
    }

    pub fn fingerprint(&self) -> String {
        hash_arrays([contiguous(&self.embeddings)])
    }
}

/// Stacks the table rows of `words` into an `L x E` sequence.
pub fn embed_tokens<S: AsRef<str>>(table: &TokenTable, words: &[S]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((words.len(), table.embed_dim()));
    for (i, w) in words.iter().enumerate() {
        out.row_mut(i).assign(&table.row(w.as_ref())?);
    }
    Ok(out)
}

/// Embedding sequence of "a photo of a [CLASS]".
pub fn manual_prompt(table: &TokenTable, class_name: &str) -> Result<Array2<f64>> {
    let mut words: Vec<&str> = MANUAL_TEMPLATE.to_vec();
    words.push(class_name);
    embed_tokens(table, &words)
}

#[derive(Debug, Clone, PartialEq)]
enum ImageWeights {
    /// `proj * x + bias`
    Linear { proj: Array2<f64>, bias: Array1<f64> },
    /// `w2 * tanh(w1 * x + b1) + b2`
    Mlp {
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoder {
    weights: ImageWeights,
    input_dim: usize,
    feature_dim: usize,
    seed: u64,
}

impl ImageEncoder {
    /// Two-layer affine + tanh network with seed-derived weights.
    pub fn random(input_dim: usize, hidden_dim: usize, feature_dim: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed, stream::IMAGE_ENCODER);
        let w1 = rng::gaussian_matrix(&mut rng, hidden_dim, input_dim, 1.0 / (input_dim as f64).sqrt());
        let b1 = rng::gaussian_vector(&mut rng, hidden_dim, 0.1);
        let w2 = rng::gaussian_matrix(&mut rng, feature_dim, hidden_dim, 1.0 / (hidden_dim as f64).sqrt());
        let b2 = rng::gaussian_vector(&mut rng, feature_dim, 0.1);
        Self {
            weights: ImageWeights::Mlp { w1, b1, w2, b2 },
            input_dim,
            feature_dim,
            seed,
        }
    }

    /// Fixed affine map; the oracle backbone uses this with a projection
    /// aligned to the text side.
    pub fn linear(proj: Array2<f64>, bias: Array1<f64>, seed: u64) -> Result<Self> {
        if bias.len() != proj.nrows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match projection rows {}",
                bias.len(),
                proj.nrows()
            )));
        }
        Ok(Self {
            input_dim: proj.ncols(),
            feature_dim: proj.nrows(),
            weights: ImageWeights::Linear {
                proj: proj.as_standard_layout().into_owned(),
                bias,
            },
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encode(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim {
            return input_err(format!(
                "image input has dimension {}, encoder expects {}",
                x.len(),
                self.input_dim
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return input_err("image input has non-finite entries");
        }
        Ok(match &self.weights {
            ImageWeights::Linear { proj, bias } => proj.dot(&x) + bias,
            ImageWeights::Mlp { w1, b1, w2, b2 } => {
                let hidden = (w1.dot(&x) + b1).mapv(f64::tanh);
                w2.dot(&hidden) + b2
            }
        })
    }

    /// Encodes every row of `inputs`.
    pub fn encode_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((inputs.nrows(), self.feature_dim));
        for (i, x) in inputs.outer_iter().enumerate() {
            out.row_mut(i).assign(&self.encode(x)?);
        }
        Ok(out)
    }

    pub fn fingerprint(&self) -> String {
        match &self.weights {
            ImageWeights::Linear { proj, bias } => hash_arrays([contiguous(proj), contiguous1(bias)]),
            ImageWeights::Mlp { w1, b1, w2, b2 } => {
                hash_arrays([contiguous(w1), contiguous1(b1), contiguous(w2), contiguous1(b2)])
            }
        }
    }
}

/// Forward-pass intermediates needed by [`TextEncoder::backward`].
#[derive(Debug, Clone)]
pub struct TextTrace {
    /// tanh of the gate pre-activations, `L x H`.
    gate: Array2<f64>,
    pub output: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    positions: Array2<f64>,
    w_skip: Array2<f64>,
    w_gate: Array2<f64>,
    w_mix: Array2<f64>,
    bias: Array1<f64>,
    w_out: Array2<f64>,
    seed: u64,
}

impl TextEncoder {
    pub fn new(embed_dim: usize, hidden_dim: usize, feature_dim: usize, max_seq_len: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed, stream::TEXT_ENCODER);
        let e = embed_dim as f64;
        let positions = rng::gaussian_matrix(&mut rng, max_seq_len, embed_dim, 0.1 / e.sqrt());
        let w_skip = rng::gaussian_matrix(&mut rng, hidden_dim, embed_dim, 1.0 / e.sqrt());
        let w_gate = rng::gaussian_matrix(&mut rng, hidden_dim, embed_dim, 1.0 / e.sqrt());
        let w_mix = rng::gaussian_matrix(&mut rng, hidden_dim, embed_dim, 1.0 / e.sqrt());
        let bias = rng::gaussian_vector(&mut rng, hidden_dim, 0.1);
        let w_out = rng::gaussian_matrix(&mut rng, feature_dim, hidden_dim, 1.0 / (hidden_dim as f64).sqrt());
        Self {
            positions,
            w_skip,
            w_gate,
            w_mix,
            bias,
            w_out,
            seed,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn max_seq_len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check(&self, seq: &ArrayView2<'_, f64>) -> Result<()> {
        let len = seq.nrows();
        if len == 0 {
            return input_err("text sequence is empty");
        }
        if len > self.max_seq_len() {
            return input_err(format!(
                "sequence length {len} exceeds max_seq_len {}",
                self.max_seq_len()
            ));
        }
        if seq.ncols() != self.embed_dim() {
            return input_err(format!(
                "sequence embedding width {} does not match encoder width {}",
                seq.ncols(),
                self.embed_dim()
            ));
        }
        Ok(())
    }

    pub fn encode(&self, seq: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.encode_traced(seq)?.output)
    }

    pub fn encode_traced(&self, seq: ArrayView2<'_, f64>) -> Result<TextTrace> {
        self.check(&seq)?;
        let len = seq.nrows();
        let shifted = &seq + &self.positions.slice(s![..len, ..]);
        let mean = shifted.mean_axis(Axis(0)).expect("non-empty sequence");
        let mixed = self.w_mix.dot(&mean) + &self.bias;
        // L x H
        let gate = (shifted.dot(&self.w_gate.t()) + &mixed).mapv(f64::tanh);
        let per_token = shifted.dot(&self.w_skip.t()) + &gate;
        let pooled = per_token.mean_axis(Axis(0)).expect("non-empty sequence");
        let output = self.w_out.dot(&pooled);
        Ok(TextTrace { gate, output })
    }

    /// Gradient of `<d_output, encode(seq)>` with respect to `seq`.
    pub fn backward(&self, trace: &TextTrace, d_output: ArrayView1<'_, f64>) -> Array2<f64> {
        let len = trace.gate.nrows();
        let inv_len = 1.0 / len as f64;
        let d_token = self.w_out.t().dot(&d_output) * inv_len;
        // d pre-activation of the gate, L x H
        let d_pre = (1.0 - &trace.gate.mapv(|t| t * t)) * &d_token;
        let d_skip = self.w_skip.t().dot(&d_token);
        let mut d_seq = d_pre.dot(&self.w_gate);
        let d_mean = self.w_mix.t().dot(&d_pre.sum_axis(Axis(0)));
        let shared = d_skip + d_mean * inv_len;
        d_seq += &shared;
        d_seq
    }

    pub fn fingerprint(&self) -> String {
        hash_arrays([
            contiguous(&self.positions),
            contiguous(&self.w_skip),
            contiguous(&self.w_gate),
            contiguous(&self.w_mix),
            contiguous1(&self.bias),
            contiguous(&self.w_out),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    /// Linear image encoder whose class axes point at the centered
    /// hand-written prompt features, so planted input structure is
    /// readable by zero-shot inference.
    Oracle,
    /// Random two-layer image encoder; no alignment with the text side.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub num_classes: usize,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            kind: BackboneKind::Oracle,
            num_classes: 4,
            input_dim: 16,
            embed_dim: 32,
            hidden_dim: 64,
            feature_dim: 16,
            max_seq_len: 64,
            seed: 0,
        }
    }
}

/// The frozen image/text pair together with its word table.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub image: ImageEncoder,
    pub text: TextEncoder,
    pub tokens: TokenTable,
    class_names: Vec<String>,
}

impl Backbone {
    pub fn build(cfg: &BackboneConfig) -> Result<Self> {
        if cfg.num_classes < 1 {
            return input_err("backbone needs at least one class");
        }
        if cfg.embed_dim == 0 || cfg.hidden_dim == 0 || cfg.feature_dim == 0 || cfg.input_dim == 0 {
            return input_err("backbone dimensions must be positive");
        }
        let tokens = TokenTable::for_classes(cfg.num_classes, cfg.embed_dim, cfg.seed)?;
        let text = TextEncoder::new(
            cfg.embed_dim,
            cfg.hidden_dim,
            cfg.feature_dim,
            cfg.max_seq_len,
            cfg.seed,
        );
        let class_names: Vec<String> = (0..cfg.num_classes).map(class_name).collect();
        let image = match cfg.kind {
            BackboneKind::Random => ImageEncoder::random(cfg.input_dim, cfg.hidden_dim, cfg.feature_dim, cfg.seed),
            BackboneKind::Oracle => {
                let manual = manual_features(&text, &tokens, &class_names)?;
                let proj = oracle_projection(&manual, cfg.input_dim, cfg.seed)?;
                ImageEncoder::linear(proj, Array1::zeros(cfg.feature_dim), cfg.seed)?
            }
        };
        Ok(Self {
            image,
            text,
            tokens,
            class_names,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// `K x D` features of the hand-written prompts.
    pub fn manual_features(&self) -> Result<Array2<f64>> {
        manual_features(&self.text, &self.tokens, &self.class_names)
    }

    pub fn encode_images(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.image.encode_batch(inputs)
    }

    /// Combined digest of every frozen weight.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}:{}:{}",
            self.image.fingerprint(),
            self.text.fingerprint(),
            self.tokens.fingerprint()
        )
    }
}

fn manual_features(text: &TextEncoder, tokens: &TokenTable, class_names: &[String]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((class_names.len(), text.feature_dim()));
    for (k, name) in class_names.iter().enumerate() {
        let seq = manual_prompt(tokens, name)?;
        out.row_mut(k).assign(&text.encode(seq.view())?);
    }
    Ok(out)
}

/// Columns `0..K` are the unit-normalized, mean-centered manual prompt
/// features; the remaining columns are an orthonormal completion drawn from
/// the seed. With K = 1 the single class axis is the raw manual direction.
fn oracle_projection(manual: &Array2<f64>, input_dim: usize, seed: u64) -> Result<Array2<f64>> {
    let (k, d) = manual.dim();
    if input_dim != d {
        return input_err(format!(
            "oracle backbone needs input_dim == feature_dim (got {input_dim} vs {d})"
        ));
    }
    if k > input_dim {
        return input_err("oracle backbone needs input_dim >= number of classes");
    }
    let centered = if k > 1 {
        manual - &manual.mean_axis(Axis(0)).expect("k > 0")
    } else {
        manual.clone()
    };
    let mut proj = Array2::zeros((d, input_dim));
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for (j, row) in centered.outer_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            return Err(Error::Degenerate("manual prompt features coincide".into()));
        }
        let unit = &row / norm;
        proj.column_mut(j).assign(&unit);
        orthonormal_push(&mut basis, unit);
    }
    let mut rng = rng::seeded(seed, stream::IMAGE_ENCODER);
    let mut j = k;
    while j < input_dim {
        let candidate = rng::gaussian_vector(&mut rng, d, 1.0);
        if let Some(unit) = orthonormal_push(&mut basis, candidate) {
            proj.column_mut(j).assign(&unit);
            j += 1;
        }
    }
    Ok(proj)
}

/// Gram-Schmidt step; returns the new unit vector if it was independent.
fn orthonormal_push(basis: &mut Vec<Array1<f64>>, v: Array1<f64>) -> Option<Array1<f64>> {
    let mut r = v;
    for b in basis.iter() {
        let c = r.dot(b);
        r.scaled_add(-c, b);
    }
    let norm = r.dot(&r).sqrt();
    if norm < 1e-8 {
        return None;
    }
    let unit = r / norm;
    basis.push(unit.clone());
    Some(unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_text() -> TextEncoder {
        TextEncoder::new(6, 10, 5, 8, 3)
    }

    #[test]
    fn embed_tokens_edge_cases() {
        let table = TokenTable::for_classes(2, 8, 1).unwrap();
        let empty: [&str; 0] = [];
        assert_eq!(embed_tokens(&table, &empty).unwrap().dim(), (0, 8));
        let twice = embed_tokens(&table, &["class_0", "class_0"]).unwrap();
        assert_eq!(twice.row(0), twice.row(1));
        let words = ["a", "photo", "of", "a", "class_1"];
        let seq = embed_tokens(&table, &words).unwrap();
        assert_eq!(seq.dim(), (5, 8));
        for (i, w) in words.iter().enumerate() {
            assert_eq!(seq.row(i), table.row(w).unwrap());
        }
        assert!(matches!(embed_tokens(&table, &["dog"]), Err(Error::Vocabulary(_))));
    }

    #[test]
    fn manual_prompt_layout() {
        let table = TokenTable::for_classes(3, 8, 1).unwrap();
        let p0 = manual_prompt(&table, "class_0").unwrap();
        let p2 = manual_prompt(&table, "class_2").unwrap();
        assert_eq!(p0.nrows(), MANUAL_TEMPLATE.len() + 1);
        assert_eq!(p0.slice(s![..4, ..]), p2.slice(s![..4, ..]));
        assert_ne!(p0.row(4), p2.row(4));
        assert!(manual_prompt(&table, "zebra").is_err());
    }

    #[test]
    fn token_rows_have_expected_scale() {
        let table = TokenTable::for_classes(60, 64, 7).unwrap();
        let n = table.embeddings().len() as f64;
        let var = table.embeddings().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var.sqrt() - 0.125).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn image_encoder_is_deterministic() {
        let a = ImageEncoder::random(5, 7, 4, 11);
        let b = ImageEncoder::random(5, 7, 4, 11);
        let x = array![0.3, -1.0, 2.0, 0.0, 0.5];
        assert_eq!(a.encode(x.view()).unwrap(), b.encode(x.view()).unwrap());
        assert_eq!(a.encode(x.view()).unwrap(), a.encode(x.view()).unwrap());
        assert!(a.encode(array![1.0, 2.0].view()).is_err());
        assert!(a.encode(array![f64::NAN, 0.0, 0.0, 0.0, 0.0].view()).is_err());
    }

    #[test]
    fn zero_input_through_zero_bias_linear_encoder() {
        let enc = ImageEncoder::linear(Array2::from_elem((3, 4), 0.7), Array1::zeros(3), 0).unwrap();
        assert_eq!(enc.encode(Array1::zeros(4).view()).unwrap(), Array1::<f64>::zeros(3));
    }

    #[test]
    fn text_encoder_rejects_bad_sequences() {
        let enc = small_text();
        assert!(enc.encode(Array2::zeros((0, 6)).view()).is_err());
        assert!(enc.encode(Array2::zeros((9, 6)).view()).is_err());
        assert!(enc.encode(Array2::zeros((3, 5)).view()).is_err());
        assert!(enc.encode(Array2::zeros((8, 6)).view()).is_ok());
    }

    #[test]
    fn text_encoder_is_position_sensitive() {
        let enc = small_text();
        let seq = Array2::from_shape_fn((3, 6), |(i, j)| ((i * 6 + j) as f64 * 0.37).sin());
        let mut swapped = seq.clone();
        swapped.row_mut(0).assign(&seq.row(2));
        swapped.row_mut(2).assign(&seq.row(0));
        let a = enc.encode(seq.view()).unwrap();
        let b = enc.encode(swapped.view()).unwrap();
        assert_eq!(a, enc.encode(seq.view()).unwrap());
        let diff = (&a - &b).mapv(f64::abs).sum();
        assert!(diff > 1e-6, "permutation left output unchanged ({diff})");
    }

    #[test]
    fn text_gradient_matches_finite_differences() {
        let enc = small_text();
        let seq = Array2::from_shape_fn((3, 6), |(i, j)| ((i * 7 + j * 3) as f64 * 0.41).cos());
        let readout = Array1::from_shape_fn(5, |i| 0.5 - 0.3 * i as f64);
        let trace = enc.encode_traced(seq.view()).unwrap();
        let grad = enc.backward(&trace, readout.view());
        let h = 1e-5;
        for i in 0..3 {
            for j in 0..6 {
                let mut plus = seq.clone();
                plus[[i, j]] += h;
                let mut minus = seq.clone();
                minus[[i, j]] -= h;
                let fd = (enc.encode(plus.view()).unwrap().dot(&readout)
                    - enc.encode(minus.view()).unwrap().dot(&readout))
                    / (2.0 * h);
                let rel = (fd - grad[[i, j]]).abs() / fd.abs().max(grad[[i, j]].abs()).max(1e-8);
                assert!(rel < 1e-4, "({i},{j}) fd {fd} analytic {}", grad[[i, j]]);
            }
        }
    }

    #[test]
    fn oracle_class_axes_follow_manual_prompts() {
        let cfg = BackboneConfig::default();
        let bb = Backbone::build(&cfg).unwrap();
        let manual = bb.manual_features().unwrap();
        // a clean class-k input must be zero-shot classified as k
        for k in 0..cfg.num_classes {
            let mut x = Array1::zeros(cfg.input_dim);
            x[k] = 4.0;
            let f = bb.image.encode(x.view()).unwrap();
            let fnorm = f.dot(&f).sqrt();
            let best = (0..cfg.num_classes)
                .map(|j| {
                    let m = manual.row(j);
                    f.dot(&m) / (fnorm * m.dot(&m).sqrt())
                })
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (j, c)| if c > acc.1 { (j, c) } else { acc },
                );
            assert_eq!(best.0, k);
        }
    }

    #[test]
    fn fingerprint_tracks_weights() {
        let cfg = BackboneConfig::default();
        let a = Backbone::build(&cfg).unwrap();
        let b = Backbone::build(&cfg).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = Backbone::build(&BackboneConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
