//! Learnable prompt contexts and prompt assembly.
//!
//! Every prompt is laid out as `[v-block | d-block | CLASS]`: the
//! domain-agnostic context (shared, or one block per class), the
//! domain-specific context of the requested domain, then the fixed class
//! token row.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::encoders::{TextEncoder, TextTrace, TokenTable, MANUAL_TEMPLATE};
use crate::error::{Error, Result};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptMode {
    #[serde(rename = "MANUAL")]
    Manual,
    #[serde(rename = "UNIFIED")]
    Unified,
    #[serde(rename = "CLASS_SPECIFIC")]
    ClassSpecific,
    #[serde(rename = "UNIFIED_DSC")]
    UnifiedDsc,
    #[serde(rename = "CLASS_SPECIFIC_DSC")]
    ClassSpecificDsc,
}

impl PromptMode {
    pub const ALL: [PromptMode; 5] = [
        PromptMode::Manual,
        PromptMode::Unified,
        PromptMode::ClassSpecific,
        PromptMode::UnifiedDsc,
        PromptMode::ClassSpecificDsc,
    ];

    pub fn has_domain_context(self) -> bool {
        matches!(self, PromptMode::UnifiedDsc | PromptMode::ClassSpecificDsc)
    }

    pub fn is_class_specific(self) -> bool {
        matches!(self, PromptMode::ClassSpecific | PromptMode::ClassSpecificDsc)
    }

    pub fn is_learnable(self) -> bool {
        self != PromptMode::Manual
    }

    /// The same context structure without the domain-specific block.
    pub fn without_domain_context(self) -> Self {
        match self {
            PromptMode::UnifiedDsc => PromptMode::Unified,
            PromptMode::ClassSpecificDsc => PromptMode::ClassSpecific,
            other => other,
        }
    }

    pub fn with_domain_context(self) -> Self {
        match self {
            PromptMode::Unified => PromptMode::UnifiedDsc,
            PromptMode::ClassSpecific => PromptMode::ClassSpecificDsc,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Manual => "MANUAL",
            PromptMode::Unified => "UNIFIED",
            PromptMode::ClassSpecific => "CLASS_SPECIFIC",
            PromptMode::UnifiedDsc => "UNIFIED_DSC",
            PromptMode::ClassSpecificDsc => "CLASS_SPECIFIC_DSC",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', '+'], "_");
        PromptMode::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown prompt mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainId {
    Source,
    Target,
}

impl DomainId {
    pub const BOTH: [DomainId; 2] = [DomainId::Source, DomainId::Target];

    pub fn index(self) -> usize {
        match self {
            DomainId::Source => 0,
            DomainId::Target => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DomainId::Source => "source",
            DomainId::Target => "target",
        }
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "source" | "s" => Ok(DomainId::Source),
            "target" | "u" | "t" => Ok(DomainId::Target),
            other => Err(Error::Input(format!("unknown domain `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub mode: PromptMode,
    /// Domain-agnostic context length.
    pub m1: usize,
    /// Domain-specific context length.
    pub m2: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub init_std: f64,
}

impl PromptConfig {
    pub fn new(mode: PromptMode, m1: usize, m2: usize, num_classes: usize, embed_dim: usize) -> Self {
        Self {
            mode,
            m1,
            m2,
            num_classes,
            embed_dim,
            init_std: 0.02,
        }
    }

    /// Forces the lengths a mode does not use to zero, and drops the
    /// domain block when `m2 == 0`.
    pub fn normalized(mut self) -> Self {
        match self.mode {
            PromptMode::Manual => {
                self.m1 = 0;
                self.m2 = 0;
            }
            m if !m.has_domain_context() => self.m2 = 0,
            m if self.m2 == 0 => self.mode = m.without_domain_context(),
            _ => {}
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Config("prompt config needs at least one class".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config("init_std must be finite and non-negative".into()));
        }
        if (self.m2 > 0) != self.mode.has_domain_context() {
            return Err(Error::Config(format!(
                "mode {} requires m2 {} 0 (got {})",
                self.mode,
                if self.mode.has_domain_context() { ">" } else { "==" },
                self.m2
            )));
        }
        if self.mode == PromptMode::Manual && self.m1 != 0 {
            return Err(Error::Config(
                "MANUAL mode has no learnable context; m1 must be 0".into(),
            ));
        }
        Ok(())
    }

    /// Rows in every assembled prompt.
    pub fn prompt_len(&self) -> usize {
        match self.mode {
            PromptMode::Manual => MANUAL_TEMPLATE.len() + 1,
            _ => self.m1 + self.m2 + 1,
        }
    }

    pub fn learnable_param_count(&self) -> usize {
        let context_blocks = if self.mode.is_class_specific() {
            self.num_classes
        } else {
            1
        };
        match self.mode {
            PromptMode::Manual => 0,
            _ => (context_blocks * self.m1 + 2 * self.m2) * self.embed_dim,
        }
    }
}

/// Gradients (or any update) shaped like a bank's learnable blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptGrads {
    pub context: Vec<Array2<f64>>,
    pub d_src: Array2<f64>,
    pub d_tgt: Array2<f64>,
}

impl PromptGrads {
    pub fn blocks(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.context.iter().chain([&self.d_src, &self.d_tgt])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.context.iter_mut().chain([&mut self.d_src, &mut self.d_tgt])
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &PromptGrads) {
        for (a, b) in self.blocks_mut().zip(other.blocks()) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    config: PromptConfig,
    /// One `M1 x E` block (unified) or `K` of them (class-specific).
    context: Vec<Array2<f64>>,
    d_src: Array2<f64>,
    d_tgt: Array2<f64>,
    class_tokens: Array2<f64>,
    /// Hand-written template rows; only populated in MANUAL mode.
    template: Array2<f64>,
}

impl PromptBank {
    /// Draws every learnable entry from N(0, init_std^2). Class tokens and the
    /// manual template are copied from `tokens`.
    pub fn init(config: &PromptConfig, tokens: &TokenTable, class_names: &[String], seed: u64) -> Result<Self> {
        config.validate()?;
        if class_names.len() != config.num_classes {
            return Err(Error::Config(format!(
                "{} class names for {} classes",
                class_names.len(),
                config.num_classes
            )));
        }
        if tokens.embed_dim() != config.embed_dim {
            return Err(Error::Config(format!(
                "token table width {} does not match prompt embed_dim {}",
                tokens.embed_dim(),
                config.embed_dim
            )));
        }
        let e = config.embed_dim;
        let class_tokens = crate::encoders::embed_tokens(tokens, class_names)?;
        let template = if config.mode == PromptMode::Manual {
            crate::encoders::embed_tokens(tokens, &MANUAL_TEMPLATE)?
        } else {
            Array2::zeros((0, e))
        };
        let mut rng = rng::seeded(seed, stream::PROMPT_INIT);
        let n_context = match config.mode {
            PromptMode::Manual => 0,
            m if m.is_class_specific() => config.num_classes,
            _ => 1,
        };
        let context = (0..n_context)
            .map(|_| rng::gaussian_matrix(&mut rng, config.m1, e, config.init_std))
            .collect();
        let d_src = rng::gaussian_matrix(&mut rng, config.m2, e, config.init_std);
        let d_tgt = rng::gaussian_matrix(&mut rng, config.m2, e, config.init_std);
        Ok(Self {
            config: config.clone(),
            context,
            d_src,
            d_tgt,
            class_tokens,
            template,
        })
    }

    /// Reassembles a bank from stored blocks, checking every shape.
    pub fn from_parts(
        config: PromptConfig,
        context: Vec<Array2<f64>>,
        d_src: Array2<f64>,
        d_tgt: Array2<f64>,
        class_tokens: Array2<f64>,
        template: Array2<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let e = config.embed_dim;
        let n_context = match config.mode {
            PromptMode::Manual => 0,
            m if m.is_class_specific() => config.num_classes,
            _ => 1,
        };
        let shape_err = |what: &str, got: (usize, usize), want: (usize, usize)| {
            Err(Error::Shape(format!("{what} has shape {got:?}, expected {want:?}")))
        };
        if context.len() != n_context {
            return Err(Error::Shape(format!(
                "{} context blocks, expected {n_context}",
                context.len()
            )));
        }
        for block in &context {
            if block.dim() != (config.m1, e) {
                return shape_err("context block", block.dim(), (config.m1, e));
            }
        }
        for (name, block) in [("d_src", &d_src), ("d_tgt", &d_tgt)] {
            if block.dim() != (config.m2, e) {
                return shape_err(name, block.dim(), (config.m2, e));
            }
        }
        if class_tokens.dim() != (config.num_classes, e) {
            return shape_err("class tokens", class_tokens.dim(), (config.num_classes, e));
        }
        let want_template = if config.mode == PromptMode::Manual {
            MANUAL_TEMPLATE.len()
        } else {
            0
        };
        if template.dim() != (want_template, e) {
            return shape_err("template", template.dim(), (want_template, e));
        }
        Ok(Self {
            config,
            context,
            d_src,
            d_tgt,
            class_tokens,
            template,
        })
    }

    pub fn config(&self) -> &PromptConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn context(&self) -> &[Array2<f64>] {
        &self.context
    }

    pub fn domain_context(&self, domain: DomainId) -> &Array2<f64> {
        match domain {
            DomainId::Source => &self.d_src,
            DomainId::Target => &self.d_tgt,
        }
    }

    pub fn domain_context_mut(&mut self, domain: DomainId) -> &mut Array2<f64> {
        match domain {
            DomainId::Source => &mut self.d_src,
            DomainId::Target => &mut self.d_tgt,
        }
    }

    pub fn class_tokens(&self) -> &Array2<f64> {
        &self.class_tokens
    }

    pub fn template(&self) -> &Array2<f64> {
        &self.template
    }

    pub fn learnable_param_count(&self) -> usize {
        self.blocks().map(|b| b.len()).sum()
    }

    /// Learnable blocks in storage order: context blocks, d_src, d_tgt.
    pub fn blocks(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.context.iter().chain([&self.d_src, &self.d_tgt])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.context.iter_mut().chain([&mut self.d_src, &mut self.d_tgt])
    }

    pub fn zero_grads(&self) -> PromptGrads {
        PromptGrads {
            context: self.context.iter().map(|b| Array2::zeros(b.raw_dim())).collect(),
            d_src: Array2::zeros(self.d_src.raw_dim()),
            d_tgt: Array2::zeros(self.d_tgt.raw_dim()),
        }
    }

    fn context_block(&self, k: usize) -> Option<&Array2<f64>> {
        if self.config.mode.is_class_specific() {
            self.context.get(k)
        } else {
            self.context.first()
        }
    }

    pub fn assemble_prompt(&self, domain: DomainId, k: usize) -> Result<Array2<f64>> {
        let num_classes = self.num_classes();
        if k >= num_classes {
            return Err(Error::Index {
                index: k,
                len: num_classes,
            });
        }
        let e = self.config.embed_dim;
        let len = self.config.prompt_len();
        let mut seq = Array2::zeros((len, e));
        if self.config.mode == PromptMode::Manual {
            let t = self.template.nrows();
            seq.slice_mut(s![..t, ..]).assign(&self.template);
        } else {
            let m1 = self.config.m1;
            let m2 = self.config.m2;
            if let Some(v) = self.context_block(k) {
                seq.slice_mut(s![..m1, ..]).assign(v);
            }
            seq.slice_mut(s![m1..m1 + m2, ..]).assign(self.domain_context(domain));
        }
        seq.row_mut(len - 1).assign(&self.class_tokens.row(k));
        Ok(seq)
    }

    /// Adds the context rows of a prompt-sequence gradient into `grads`;
    /// the class-token row is dropped.
    pub fn scatter_sequence_grad(
        &self,
        grads: &mut PromptGrads,
        domain: DomainId,
        k: usize,
        d_seq: ArrayView2<'_, f64>,
    ) {
        if self.config.mode == PromptMode::Manual {
            return;
        }
        let m1 = self.config.m1;
        let m2 = self.config.m2;
        let block = if self.config.mode.is_class_specific() { k } else { 0 };
        grads.context[block] += &d_seq.slice(s![..m1, ..]);
        let d_block = match domain {
            DomainId::Source => &mut grads.d_src,
            DomainId::Target => &mut grads.d_tgt,
        };
        *d_block += &d_seq.slice(s![m1..m1 + m2, ..]);
    }

    /// `p <- p - lr * grad` for every learnable block.
    pub fn sgd_step(&mut self, grads: &PromptGrads, lr: f64) -> Result<()> {
        let shapes_match = self.blocks().count() == grads.blocks().count()
            && self.blocks().zip(grads.blocks()).all(|(p, g)| p.dim() == g.dim());
        if !shapes_match {
            return Err(Error::Shape("gradient blocks do not match the prompt bank".into()));
        }
        for (p, g) in self.blocks_mut().zip(grads.blocks()) {
            p.scaled_add(-lr, g);
        }
        Ok(())
    }

    /// Encodes all 2K prompts; row `domain * K + k`.
    pub fn prompt_features(&self, text: &TextEncoder) -> Result<Array2<f64>> {
        Ok(self.traced_prompt_features(text)?.features)
    }

    pub fn traced_prompt_features(&self, text: &TextEncoder) -> Result<PromptFeatures> {
        let k = self.num_classes();
        let mut features = Array2::zeros((2 * k, text.feature_dim()));
        let mut traces = Vec::with_capacity(2 * k);
        for domain in DomainId::BOTH {
            for class in 0..k {
                let seq = self.assemble_prompt(domain, class)?;
                let trace = text.encode_traced(seq.view())?;
                features.row_mut(domain.index() * k + class).assign(&trace.output);
                traces.push(trace);
            }
        }
        Ok(PromptFeatures { features, traces })
    }

    /// Pulls a gradient on the `2K x D` prompt features back to the
    /// learnable blocks.
    pub fn backprop_features(
        &self,
        text: &TextEncoder,
        traced: &PromptFeatures,
        d_features: ArrayView2<'_, f64>,
    ) -> PromptGrads {
        let mut grads = self.zero_grads();
        if !self.config.mode.is_learnable() {
            return grads;
        }
        let k = self.num_classes();
        for domain in DomainId::BOTH {
            for class in 0..k {
                let row = domain.index() * k + class;
                let d_out = d_features.row(row);
                if d_out.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let d_seq = text.backward(&traced.traces[row], d_out);
                self.scatter_sequence_grad(&mut grads, domain, class, d_seq.view());
            }
        }
        grads
    }
}

/// All 2K prompt features with the forward traces needed for backprop.
#[derive(Debug, Clone)]
pub struct PromptFeatures {
    pub features: Array2<f64>,
    traces: Vec<TextTrace>,
}
