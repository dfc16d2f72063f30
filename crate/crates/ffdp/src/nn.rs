//! Embedding tables, the one-hidden-layer oracle network, analytic
//! gradients and the SGD update.
//!
//! The network scores transitions as
//! `softmax(W2 · relu(W1 · v + b1) + b2)` where `v` is the
//! concatenation of the looked-up feature embeddings. All parameters
//! are 32-bit floats; the gradient-check test suite keeps a 64-bit
//! shadow of the forward pass.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{input_dim, Attribute, FeatureTemplate, FeatureVector, Vocabulary};
use crate::transition::TransitionSystem;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite gradient in {0}; aborting the run")]
    NonFinite(&'static str),
    #[error("unsupported reduction percent {0} (expected 0..=50 step 10)")]
    Reduction(u8),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Embedding widths per attribute plus the reduction level they were
/// derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeConfig {
    pub form_dim: usize,
    pub upos_dim: usize,
    pub feats_dim: usize,
    pub deprel_dim: usize,
    pub reduction_percent: u8,
}

impl Default for SizeConfig {
    fn default() -> Self {
        SizeConfig {
            form_dim: 50,
            upos_dim: 20,
            feats_dim: 20,
            deprel_dim: 20,
            reduction_percent: 0,
        }
    }
}

impl SizeConfig {
    pub fn dim(&self, attr: Attribute) -> usize {
        match attr {
            Attribute::Form => self.form_dim,
            Attribute::Upostag => self.upos_dim,
            Attribute::Feats => self.feats_dim,
            Attribute::Deprel => self.deprel_dim,
        }
    }
}

/// Scales the default sizes down by `percent`, rounding half up with a
/// floor of 1.
pub fn reduced_sizes(base: &SizeConfig, percent: u8) -> Result<SizeConfig, NnError> {
    if percent > 50 || !percent.is_multiple_of(10) {
        return Err(NnError::Reduction(percent));
    }
    let scale = |d: usize| ((d * (100 - percent as usize) + 50) / 100).max(1);
    Ok(SizeConfig {
        form_dim: scale(base.form_dim),
        upos_dim: scale(base.upos_dim),
        feats_dim: scale(base.feats_dim),
        deprel_dim: scale(base.deprel_dim),
        reduction_percent: percent,
    })
}

/// Dense row-major matrix of f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = self · v
    pub fn matvec(&self, v: &[f32]) -> Vec<f32> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum::<f32>())
            .collect()
    }
}

/// Glorot-uniform initialization: entries i.i.d. on [-L, L] with
/// L = sqrt(6 / (rows + cols)).
pub fn glorot_init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    assert!(rows >= 1 && cols >= 1);
    let limit = (6.0 / (rows + cols) as f64).sqrt() as f32;
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix { rows, cols, data }
}

/// Everything needed to interpret a parameter set: the transition
/// system and template it was trained for, the embedding sizes, and a
/// hash of the vocabulary it is bound to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelMeta {
    pub system: TransitionSystem,
    pub template: FeatureTemplate,
    pub sizes: SizeConfig,
    pub hidden: usize,
    pub n_transitions: usize,
    pub vocab_hash: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub meta: ModelMeta,
    pub form_emb: Matrix,
    pub upos_emb: Matrix,
    pub feats_emb: Matrix,
    pub deprel_emb: Matrix,
    /// hidden × input_dim
    pub w1: Matrix,
    pub b1: Vec<f32>,
    /// n_transitions × hidden
    pub w2: Matrix,
    pub b2: Vec<f32>,
}

impl ModelParams {
    /// Glorot-initializes all embedding tables and weight matrices;
    /// biases start at zero. Initialization order is fixed so a fixed
    /// seed yields identical parameters.
    pub fn init<R: Rng>(meta: ModelMeta, vocab: &Vocabulary, rng: &mut R) -> ModelParams {
        let sizes = meta.sizes;
        let form_emb = glorot_init(vocab.size(Attribute::Form), sizes.form_dim, rng);
        let upos_emb = glorot_init(vocab.size(Attribute::Upostag), sizes.upos_dim, rng);
        let feats_emb = glorot_init(vocab.size(Attribute::Feats), sizes.feats_dim, rng);
        let deprel_emb = glorot_init(vocab.size(Attribute::Deprel), sizes.deprel_dim, rng);
        let in_dim = input_dim(meta.template, &sizes);
        let w1 = glorot_init(meta.hidden, in_dim, rng);
        let b1 = vec![0.0; meta.hidden];
        let w2 = glorot_init(meta.n_transitions, meta.hidden, rng);
        let b2 = vec![0.0; meta.n_transitions];
        ModelParams {
            meta,
            form_emb,
            upos_emb,
            feats_emb,
            deprel_emb,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn embedding(&self, attr: Attribute) -> &Matrix {
        match attr {
            Attribute::Form => &self.form_emb,
            Attribute::Upostag => &self.upos_emb,
            Attribute::Feats => &self.feats_emb,
            Attribute::Deprel => &self.deprel_emb,
        }
    }

    fn embedding_mut(&mut self, attr: Attribute) -> &mut Matrix {
        match attr {
            Attribute::Form => &mut self.form_emb,
            Attribute::Upostag => &mut self.upos_emb,
            Attribute::Feats => &mut self.feats_emb,
            Attribute::Deprel => &mut self.deprel_emb,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols
    }
}

/// Which embedding row fills which slice of the input vector, in
/// template order.
fn input_segments(template: FeatureTemplate, fv: &FeatureVector) -> Vec<(Attribute, u32)> {
    let addrs = template.element_addresses();
    let mut segs = Vec::with_capacity(addrs.len() * 4);
    let mut dep_idx = 0;
    for (i, addr) in addrs.iter().enumerate() {
        segs.push((Attribute::Form, fv.forms[i]));
        segs.push((Attribute::Upostag, fv.upostags[i]));
        segs.push((Attribute::Feats, fv.feats[i]));
        if addr.uses_deprel() {
            segs.push((Attribute::Deprel, fv.deprels[dep_idx]));
            dep_idx += 1;
        }
    }
    segs
}

/// All intermediates of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub fv: FeatureVector,
    pub input: Vec<f32>,
    pub pre_hidden: Vec<f32>,
    /// Post-ReLU, post-dropout hidden vector (the one fed to W2).
    pub hidden: Vec<f32>,
    /// Per-unit multiplier applied after ReLU: 0 for dropped units,
    /// 1/(1-rate) for kept ones, absent when dropout is off.
    pub dropout_mask: Option<Vec<f32>>,
    pub probs: Vec<f32>,
}

/// Runs the network. `dropout_rate > 0` requires an rng and applies
/// inverted dropout to the hidden layer.
pub fn forward<R: Rng>(
    params: &ModelParams,
    fv: &FeatureVector,
    dropout_rate: f32,
    mut rng: Option<&mut R>,
) -> Result<ForwardTrace, NnError> {
    let template = params.meta.template;
    if fv.forms.len() != template.n_elements() {
        return Err(NnError::Dimension(format!(
            "feature vector has {} elements, template {} expects {}",
            fv.forms.len(),
            template,
            template.n_elements()
        )));
    }
    assert!((0.0..1.0).contains(&dropout_rate));
    if dropout_rate > 0.0 && rng.is_none() {
        return Err(NnError::Dimension(
            "dropout requires a random number generator".into(),
        ));
    }

    let mut input = Vec::with_capacity(params.input_dim());
    for (attr, row) in input_segments(template, fv) {
        let table = params.embedding(attr);
        input.extend_from_slice(table.row(row as usize));
    }
    if input.len() != params.input_dim() {
        return Err(NnError::Dimension(format!(
            "assembled input has {} dims, W1 expects {}",
            input.len(),
            params.input_dim()
        )));
    }

    let mut pre_hidden = params.w1.matvec(&input);
    for (h, b) in pre_hidden.iter_mut().zip(&params.b1) {
        *h += b;
    }
    let mut hidden: Vec<f32> = pre_hidden.iter().map(|&x| x.max(0.0)).collect();
    let dropout_mask = if dropout_rate > 0.0 {
        let rng = rng.as_mut().unwrap();
        let keep_scale = 1.0 / (1.0 - dropout_rate);
        let mask: Vec<f32> = hidden
            .iter()
            .map(|_| {
                if rng.gen::<f32>() < dropout_rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        for (h, m) in hidden.iter_mut().zip(&mask) {
            *h *= m;
        }
        Some(mask)
    } else {
        None
    };

    let mut logits = params.w2.matvec(&hidden);
    for (z, b) in logits.iter_mut().zip(&params.b2) {
        *z += b;
    }
    let probs = softmax(&logits);

    Ok(ForwardTrace {
        fv: fv.clone(),
        input,
        pre_hidden,
        hidden,
        dropout_mask,
        probs,
    })
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradients of the mean cross-entropy loss for one or more instances.
/// Embedding gradients are kept sparse, keyed by (attribute, row).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Vec<f32>,
    pub w2: Matrix,
    pub b2: Vec<f32>,
    pub emb: BTreeMap<(u8, u32), Vec<f32>>,
}

fn attr_tag(attr: Attribute) -> u8 {
    match attr {
        Attribute::Form => 0,
        Attribute::Upostag => 1,
        Attribute::Feats => 2,
        Attribute::Deprel => 3,
    }
}

fn attr_from_tag(tag: u8) -> Attribute {
    match tag {
        0 => Attribute::Form,
        1 => Attribute::Upostag,
        2 => Attribute::Feats,
        _ => Attribute::Deprel,
    }
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Gradients {
        Gradients {
            w1: Matrix::zeros(params.w1.rows, params.w1.cols),
            b1: vec![0.0; params.b1.len()],
            w2: Matrix::zeros(params.w2.rows, params.w2.cols),
            b2: vec![0.0; params.b2.len()],
            emb: BTreeMap::new(),
        }
    }

    /// Accumulates `other` into `self`.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.w1.data.iter_mut().zip(&other.w1.data) {
            *a += b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b;
        }
        for (a, b) in self.w2.data.iter_mut().zip(&other.w2.data) {
            *a += b;
        }
        for (a, b) in self.b2.iter_mut().zip(&other.b2) {
            *a += b;
        }
        for (key, grad) in &other.emb {
            match self.emb.get_mut(key) {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(grad) {
                        *a += b;
                    }
                }
                None => {
                    self.emb.insert(*key, grad.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for x in self
            .w1
            .data
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.data.iter_mut())
            .chain(self.b2.iter_mut())
        {
            *x *= factor;
        }
        for grad in self.emb.values_mut() {
            for x in grad {
                *x *= factor;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.w1.data.iter().all(|x| x.is_finite())
            && self.b1.iter().all(|x| x.is_finite())
            && self.w2.data.iter().all(|x| x.is_finite())
            && self.b2.iter().all(|x| x.is_finite())
            && self.emb.values().flatten().all(|x| x.is_finite())
    }
}

/// Gradients of `-log p(gold)` with respect to all parameters touched
/// by the trace. Dropout is respected: masked hidden units receive no
/// gradient.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    gold_index: usize,
) -> Result<Gradients, NnError> {
    let n_out = params.meta.n_transitions;
    if gold_index >= n_out {
        return Err(NnError::Dimension(format!(
            "gold transition index {gold_index} out of range 0..{n_out}"
        )));
    }
    let mut grads = Gradients::zeros_like(params);

    // softmax + cross-entropy: dL/dz_k = p_k - [k == gold]
    let mut d_logits = trace.probs.clone();
    d_logits[gold_index] -= 1.0;

    // W2, b2, and the hidden gradient
    let hidden_size = params.meta.hidden;
    let mut d_hidden = vec![0.0f32; hidden_size];
    for (k, &dz) in d_logits.iter().enumerate().take(n_out) {
        grads.b2[k] = dz;
        let grow = grads.w2.row_mut(k);
        let w2row = params.w2.row(k);
        for j in 0..hidden_size {
            grow[j] = dz * trace.hidden[j];
            d_hidden[j] += dz * w2row[j];
        }
    }

    // back through dropout and ReLU
    let mut d_pre = d_hidden;
    if let Some(mask) = &trace.dropout_mask {
        for (d, m) in d_pre.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    for (d, &a) in d_pre.iter_mut().zip(&trace.pre_hidden) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }

    // W1, b1, and the input gradient
    let in_dim = params.input_dim();
    let mut d_input = vec![0.0f32; in_dim];
    for (j, &dj) in d_pre.iter().enumerate() {
        grads.b1[j] = dj;
        if dj == 0.0 {
            continue;
        }
        let grow = grads.w1.row_mut(j);
        let w1row = params.w1.row(j);
        for i in 0..in_dim {
            grow[i] = dj * trace.input[i];
            d_input[i] += dj * w1row[i];
        }
    }

    // scatter the input gradient into the embedding rows that built it
    let mut offset = 0;
    for (attr, row) in input_segments(params.meta.template, &trace.fv) {
        let dim = params.meta.sizes.dim(attr);
        let slice = &d_input[offset..offset + dim];
        let key = (attr_tag(attr), row);
        match grads.emb.get_mut(&key) {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(slice) {
                    *a += b;
                }
            }
            None => {
                grads.emb.insert(key, slice.to_vec());
            }
        }
        offset += dim;
    }

    Ok(grads)
}

/// One SGD update: θ ← θ − lr·grad. Embedding rows absent from the
/// gradient set are untouched. Rejects non-finite gradients.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, lr: f32) -> Result<(), NnError> {
    assert!(lr > 0.0);
    if !grads.is_finite() {
        return Err(NnError::NonFinite("sgd_step"));
    }
    for (p, g) in params.w1.data.iter_mut().zip(&grads.w1.data) {
        *p -= lr * g;
    }
    for (p, g) in params.b1.iter_mut().zip(&grads.b1) {
        *p -= lr * g;
    }
    for (p, g) in params.w2.data.iter_mut().zip(&grads.w2.data) {
        *p -= lr * g;
    }
    for (p, g) in params.b2.iter_mut().zip(&grads.b2) {
        *p -= lr * g;
    }
    for (&(tag, row), grad) in &grads.emb {
        let table = params.embedding_mut(attr_from_tag(tag));
        for (p, g) in table.row_mut(row as usize).iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }
    Ok(())
}

// --- model file format -------------------------------------------------
//
// Versioned binary, little-endian:
//   magic "FFDP", version u32
//   system u8, template u8, sizes (4 × u32 + reduction u8), hidden u32,
//   n_transitions u32, vocab sha-256 (32 bytes)
//   tensors in declared order: form/upos/feats/deprel embeddings, W1,
//   b1, W2, b2, each as rows u32, cols u32, then rows*cols f32.
// Save -> load -> save is byte-identical.

const MAGIC: &[u8; 4] = b"FFDP";
const VERSION: u32 = 1;

fn write_matrix<W: Write>(w: &mut W, m: &Matrix) -> io::Result<()> {
    w.write_u32::<LittleEndian>(m.rows as u32)?;
    w.write_u32::<LittleEndian>(m.cols as u32)?;
    for &x in &m.data {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<Matrix, NnError> {
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    let mut data = vec![0.0f32; rows * cols];
    for x in &mut data {
        *x = r.read_f32::<LittleEndian>()?;
    }
    Ok(Matrix { rows, cols, data })
}

fn write_vector<W: Write>(w: &mut W, v: &[f32]) -> io::Result<()> {
    w.write_u32::<LittleEndian>(v.len() as u32)?;
    for &x in v {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vector<R: Read>(r: &mut R) -> Result<Vec<f32>, NnError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut v = vec![0.0f32; len];
    for x in &mut v {
        *x = r.read_f32::<LittleEndian>()?;
    }
    Ok(v)
}

pub fn save_model<W: Write>(w: &mut W, params: &ModelParams) -> Result<(), NnError> {
    let meta = &params.meta;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(match meta.system {
        TransitionSystem::ArcStandard => 0,
        TransitionSystem::ArcStandardSwap => 1,
    })?;
    w.write_u8(match meta.template {
        FeatureTemplate::Standard => 0,
        FeatureTemplate::NoGd => 1,
        FeatureTemplate::NoGdD => 2,
    })?;
    w.write_u32::<LittleEndian>(meta.sizes.form_dim as u32)?;
    w.write_u32::<LittleEndian>(meta.sizes.upos_dim as u32)?;
    w.write_u32::<LittleEndian>(meta.sizes.feats_dim as u32)?;
    w.write_u32::<LittleEndian>(meta.sizes.deprel_dim as u32)?;
    w.write_u8(meta.sizes.reduction_percent)?;
    w.write_u32::<LittleEndian>(meta.hidden as u32)?;
    w.write_u32::<LittleEndian>(meta.n_transitions as u32)?;
    w.write_all(&meta.vocab_hash)?;
    write_matrix(w, &params.form_emb)?;
    write_matrix(w, &params.upos_emb)?;
    write_matrix(w, &params.feats_emb)?;
    write_matrix(w, &params.deprel_emb)?;
    write_matrix(w, &params.w1)?;
    write_vector(w, &params.b1)?;
    write_matrix(w, &params.w2)?;
    write_vector(w, &params.b2)?;
    Ok(())
}

pub fn load_model<R: Read>(r: &mut R) -> Result<ModelParams, NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Format("bad magic (not a ffdp model file)".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let system = match r.read_u8()? {
        0 => TransitionSystem::ArcStandard,
        1 => TransitionSystem::ArcStandardSwap,
        x => return Err(NnError::Format(format!("unknown system tag {x}"))),
    };
    let template = match r.read_u8()? {
        0 => FeatureTemplate::Standard,
        1 => FeatureTemplate::NoGd,
        2 => FeatureTemplate::NoGdD,
        x => return Err(NnError::Format(format!("unknown template tag {x}"))),
    };
    let sizes = SizeConfig {
        form_dim: r.read_u32::<LittleEndian>()? as usize,
        upos_dim: r.read_u32::<LittleEndian>()? as usize,
        feats_dim: r.read_u32::<LittleEndian>()? as usize,
        deprel_dim: r.read_u32::<LittleEndian>()? as usize,
        reduction_percent: r.read_u8()?,
    };
    let hidden = r.read_u32::<LittleEndian>()? as usize;
    let n_transitions = r.read_u32::<LittleEndian>()? as usize;
    let mut vocab_hash = [0u8; 32];
    r.read_exact(&mut vocab_hash)?;
    let meta = ModelMeta {
        system,
        template,
        sizes,
        hidden,
        n_transitions,
        vocab_hash,
    };
    let form_emb = read_matrix(r)?;
    let upos_emb = read_matrix(r)?;
    let feats_emb = read_matrix(r)?;
    let deprel_emb = read_matrix(r)?;
    let w1 = read_matrix(r)?;
    let b1 = read_vector(r)?;
    let w2 = read_matrix(r)?;
    let b2 = read_vector(r)?;
    if w1.cols != input_dim(template, &sizes) {
        return Err(NnError::Format(format!(
            "W1 has {} columns but template/sizes imply {}",
            w1.cols,
            input_dim(template, &sizes)
        )));
    }
    Ok(ModelParams {
        meta,
        form_emb,
        upos_emb,
        feats_emb,
        deprel_emb,
        w1,
        b1,
        w2,
        b2,
    })
}

pub fn save_model_file(path: &Path, params: &ModelParams) -> Result<(), NnError> {
    let mut file = io::BufWriter::new(std::fs::File::create(path)?);
    save_model(&mut file, params)
}

pub fn load_model_file(path: &Path) -> Result<ModelParams, NnError> {
    let mut file = io::BufReader::new(std::fs::File::open(path)?);
    load_model(&mut file)
}
