//! Pre-norm transformer with hand-written backward pass.
//!
//! Decoder-only models read `[BOS, t1, …]` under a causal mask. The
//! encoder-decoder variant encodes a one-token source (the first move, or BOS
//! for the empty prefix) and decodes the remaining moves with causal
//! self-attention plus cross-attention to the encoder output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::ModelConfig;
use super::ops::{self, AttnShape, LnCache, Slot};
use super::params::{BlockOffsets, Layout, TensorInfo};
use super::tokenizer::{Token, BOS, MOVE_TOKENS, PAD, VOCAB_SIZE};
use super::ModelError;
use crate::linalg::{gemm_into, MatRef};
use crate::scalar::Scalar;

/// One training or inference row: optional encoder source, decoder input,
/// and per-position targets (`PAD` = unscored).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub src: Option<Vec<Token>>,
    pub input: Vec<Token>,
    pub targets: Vec<Token>,
}

#[derive(Debug, Clone)]
pub(crate) struct SrcBatch {
    pub s: usize,
    pub tokens: Vec<Token>,
    pub lens: Vec<usize>,
}

/// Padded batch of examples.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub b: usize,
    pub t: usize,
    pub tokens: Vec<Token>,
    pub targets: Vec<Token>,
    pub lens: Vec<usize>,
    pub src: Option<SrcBatch>,
}

impl Batch {
    pub fn from_examples(examples: &[&Example]) -> Batch {
        let b = examples.len();
        let t = examples.iter().map(|e| e.input.len()).max().unwrap_or(1);
        let mut tokens = vec![PAD; b * t];
        let mut targets = vec![PAD; b * t];
        let mut lens = Vec::with_capacity(b);
        for (i, e) in examples.iter().enumerate() {
            tokens[i * t..i * t + e.input.len()].copy_from_slice(&e.input);
            targets[i * t..i * t + e.targets.len()].copy_from_slice(&e.targets);
            lens.push(e.input.len());
        }
        let src = examples.first().and_then(|e| e.src.as_ref()).map(|_| {
            let s = examples.iter().map(|e| e.src.as_ref().map_or(0, Vec::len)).max().unwrap_or(1);
            let mut stoks = vec![PAD; b * s];
            let mut slens = Vec::with_capacity(b);
            for (i, e) in examples.iter().enumerate() {
                let src = e.src.as_ref().expect("mixed encoder/decoder-only batch");
                stoks[i * s..i * s + src.len()].copy_from_slice(src);
                slens.push(src.len());
            }
            SrcBatch { s, tokens: stoks, lens: slens }
        });
        Batch { b, t, tokens, targets, lens, src }
    }

    pub fn n(&self) -> usize {
        self.b * self.t
    }
}

#[derive(Debug, Clone)]
struct CrossTrace<T> {
    ln: LnCache<T>,
    hx: Vec<T>,
    qx: Vec<T>,
    kvx: Vec<T>,
    probs: Vec<T>,
    att: Vec<T>,
    mask: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
struct BlockTrace<T> {
    ln1: LnCache<T>,
    h1: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    att: Vec<T>,
    mask1: Option<Vec<T>>,
    cross: Option<CrossTrace<T>>,
    ln2: LnCache<T>,
    h2: Vec<T>,
    fc: Vec<T>,
    act: Vec<T>,
    mask2: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
struct StackTrace<T> {
    emb_mask: Option<Vec<T>>,
    blocks: Vec<BlockTrace<T>>,
    hidden: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
struct EncoderTrace<T> {
    stack: StackTrace<T>,
    ln: LnCache<T>,
    mem: Vec<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    encoder: Option<EncoderTrace<T>>,
    decoder: StackTrace<T>,
    ln_f: LnCache<T>,
    hf: Vec<T>,
    /// `n × VOCAB_SIZE`.
    pub logits: Vec<T>,
}

impl<T: Scalar> Trace<T> {
    /// Residual stream after decoder block `layer` (`n × d`); only present
    /// when the forward pass was asked to keep hidden states.
    pub fn hidden(&self, layer: usize) -> Option<&[T]> {
        self.decoder.hidden.get(layer).map(Vec::as_slice)
    }
}

/// Forward-pass options.
pub(crate) struct Pass<'a> {
    pub dropout: Option<(f64, &'a mut ChaCha8Rng)>,
    pub keep_hidden: bool,
}

impl Pass<'_> {
    pub fn inference() -> Pass<'static> {
        Pass { dropout: None, keep_hidden: false }
    }

    pub fn with_hidden() -> Pass<'static> {
        Pass { dropout: None, keep_hidden: true }
    }
}

fn dropout_mask<T: Scalar>(x: &mut [T], pass: &mut Pass<'_>) -> Option<Vec<T>> {
    use rand::Rng;
    let (p, rng) = pass.dropout.as_mut()?;
    if *p <= 0.0 {
        return None;
    }
    let keep = T::lit(1.0 / (1.0 - *p));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.random::<f64>() < *p { T::zero() } else { keep })
        .collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

fn apply_mask<T: Scalar>(dy: &[T], mask: &Option<Vec<T>>) -> Vec<T> {
    match mask {
        Some(m) => dy.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => dy.to_vec(),
    }
}

fn pair_mut<T>(g: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    assert!(a + alen <= b, "tensor ranges overlap");
    let (lo, hi) = g.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

/// Decoder-only or encoder-decoder transformer over the 62-token vocabulary.
#[derive(Debug, Clone)]
pub struct Transformer<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<T>,
}

impl<T: Scalar> PartialEq for Transformer<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl<T: Scalar> Transformer<T> {
    /// Randomly initialized model (seeded by `config.seed`).
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let depth = config.layers + if config.is_encoder_decoder() { config.encoder_layers } else { 0 };
        let proj_std = 0.02 / (2.0 * depth as f64).sqrt();
        let mut params = vec![T::zero(); layout.total];
        for t in &layout.tensors {
            let std = if t.name.ends_with(".gain") {
                params[t.range()].iter_mut().for_each(|v| *v = T::one());
                continue;
            } else if t.shape.len() == 1 {
                continue;
            } else if t.name.ends_with("w_out") || t.name.ends_with("w_proj") {
                proj_std
            } else {
                0.02
            };
            for v in &mut params[t.range()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = T::lit(z * std);
            }
        }
        Ok(Transformer { config, layout, params })
    }

    /// Model from explicit parameters laid out as [`Transformer::tensors`].
    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::Config(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Transformer { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.tensor(name).map(|t| &self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.layout.tensor(name)?.range();
        Some(&mut self.params[range])
    }

    /// Input embedding row of a token.
    pub fn token_embedding(&self, token: Token) -> &[T] {
        let d = self.config.hidden_dim;
        let o = self.layout.tok_emb + token as usize * d;
        &self.params[o..o + d]
    }

    pub fn cast<U: Scalar>(&self) -> Transformer<U> {
        Transformer {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    fn p(&self, off: usize, len: usize) -> &[T] {
        &self.params[off..off + len]
    }

    fn embed(&self, tokens: &[Token], t: usize, pos_off: usize, pass: &mut Pass<'_>) -> (Vec<T>, Option<Vec<T>>) {
        let d = self.config.hidden_dim;
        let mut x = vec![T::zero(); tokens.len() * d];
        for (i, &tok) in tokens.iter().enumerate() {
            let e = self.p(self.layout.tok_emb + tok as usize * d, d);
            let pe = self.p(pos_off + (i % t) * d, d);
            for ((o, &a), &b) in x[i * d..(i + 1) * d].iter_mut().zip(e).zip(pe) {
                *o = a + b;
            }
        }
        let mask = dropout_mask(&mut x, pass);
        (x, mask)
    }

    #[allow(clippy::too_many_arguments)]
    fn block_forward(
        &self,
        off: &BlockOffsets,
        x: &mut [T],
        batch: usize,
        t: usize,
        key_lens: &[usize],
        causal: bool,
        mem: Option<(&[T], usize, &[usize])>,
        pass: &mut Pass<'_>,
    ) -> BlockTrace<T> {
        let d = self.config.hidden_dim;
        let n = batch * t;
        let shape = AttnShape { batch, tq: t, tk: t, heads: self.config.heads, head_dim: self.config.head_dim(), causal };

        let mut h1 = vec![T::zero(); n * d];
        let ln1 = ops::layernorm(x, d, self.p(off.ln1_g, d), self.p(off.ln1_b, d), &mut h1);
        let mut qkv = vec![T::zero(); n * 3 * d];
        ops::linear(&h1, n, d, self.p(off.w_qkv, 3 * d * d), self.p(off.b_qkv, 3 * d), 3 * d, &mut qkv);
        let mut probs = vec![T::zero(); shape.probs_len()];
        let mut att = vec![T::zero(); n * d];
        let (sq, sk, sv) = packed_slots(d);
        ops::attention(&qkv, sq, &qkv, sk, sv, key_lens, shape, &mut probs, &mut att);
        let mut a = vec![T::zero(); n * d];
        ops::linear(&att, n, d, self.p(off.w_o, d * d), self.p(off.b_o, d), d, &mut a);
        let mask1 = dropout_mask(&mut a, pass);
        add_into(x, &a);

        let cross = match (off.cross, mem) {
            (Some(c), Some((mem, s, src_lens))) => {
                let mut hx = vec![T::zero(); n * d];
                let ln = ops::layernorm(x, d, self.p(c.ln_g, d), self.p(c.ln_b, d), &mut hx);
                let mut qx = vec![T::zero(); n * d];
                ops::linear(&hx, n, d, self.p(c.w_q, d * d), self.p(c.b_q, d), d, &mut qx);
                let mut kvx = vec![T::zero(); batch * s * 2 * d];
                ops::linear(mem, batch * s, d, self.p(c.w_kv, 2 * d * d), self.p(c.b_kv, 2 * d), 2 * d, &mut kvx);
                let xshape = AttnShape { tk: s, causal: false, ..shape };
                let mut probs = vec![T::zero(); xshape.probs_len()];
                let mut att = vec![T::zero(); n * d];
                ops::attention(
                    &qx,
                    Slot { stride: d, offset: 0 },
                    &kvx,
                    Slot { stride: 2 * d, offset: 0 },
                    Slot { stride: 2 * d, offset: d },
                    src_lens,
                    xshape,
                    &mut probs,
                    &mut att,
                );
                let mut ao = vec![T::zero(); n * d];
                ops::linear(&att, n, d, self.p(c.w_o, d * d), self.p(c.b_o, d), d, &mut ao);
                let mask = dropout_mask(&mut ao, pass);
                add_into(x, &ao);
                Some(CrossTrace { ln, hx, qx, kvx, probs, att, mask })
            }
            _ => None,
        };

        let mut h2 = vec![T::zero(); n * d];
        let ln2 = ops::layernorm(x, d, self.p(off.ln2_g, d), self.p(off.ln2_b, d), &mut h2);
        let mut fc = vec![T::zero(); n * 4 * d];
        ops::linear(&h2, n, d, self.p(off.w_fc, 4 * d * d), self.p(off.b_fc, 4 * d), 4 * d, &mut fc);
        let mut act = vec![T::zero(); n * 4 * d];
        ops::gelu(&fc, &mut act);
        let mut m = vec![T::zero(); n * d];
        ops::linear(&act, n, 4 * d, self.p(off.w_proj, 4 * d * d), self.p(off.b_proj, d), d, &mut m);
        let mask2 = dropout_mask(&mut m, pass);
        add_into(x, &m);

        BlockTrace { ln1, h1, qkv, probs, att, mask1, cross, ln2, h2, fc, act, mask2 }
    }

    /// Full forward pass over a padded batch.
    pub(crate) fn forward(&self, batch: &Batch, pass: &mut Pass<'_>) -> Trace<T> {
        let d = self.config.hidden_dim;
        let encoder = match (&self.layout.encoder, &batch.src) {
            (Some(enc), Some(src)) => {
                let (mut xe, emb_mask) = self.embed(&src.tokens, src.s, enc.pos_emb, pass);
                let mut blocks = Vec::with_capacity(enc.blocks.len());
                for off in &enc.blocks {
                    blocks.push(self.block_forward(off, &mut xe, batch.b, src.s, &src.lens, false, None, pass));
                }
                let mut mem = vec![T::zero(); xe.len()];
                let ln = ops::layernorm(&xe, d, self.p(enc.ln_f_g, d), self.p(enc.ln_f_b, d), &mut mem);
                Some(EncoderTrace { stack: StackTrace { emb_mask, blocks, hidden: Vec::new() }, ln, mem })
            }
            (None, None) => None,
            _ => panic!("batch source does not match model architecture"),
        };

        let (mut x, emb_mask) = self.embed(&batch.tokens, batch.t, self.layout.pos_emb, pass);
        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        let mut hidden = Vec::new();
        for off in &self.layout.blocks {
            let mem = match (&encoder, &batch.src) {
                (Some(e), Some(src)) => Some((e.mem.as_slice(), src.s, src.lens.as_slice())),
                _ => None,
            };
            blocks.push(self.block_forward(off, &mut x, batch.b, batch.t, &batch.lens, true, mem, pass));
            if pass.keep_hidden {
                hidden.push(x.clone());
            }
        }
        let mut hf = vec![T::zero(); x.len()];
        let ln_f = ops::layernorm(&x, d, self.p(self.layout.ln_f_g, d), self.p(self.layout.ln_f_b, d), &mut hf);
        let logits = self.project_logits(&hf);
        Trace { encoder, decoder: StackTrace { emb_mask, blocks, hidden }, ln_f, hf, logits }
    }

    /// `hf · headᵀ` (tied) or `hf · head`.
    pub(crate) fn project_logits(&self, hf: &[T]) -> Vec<T> {
        let d = self.config.hidden_dim;
        let n = hf.len() / d;
        let mut logits = vec![T::zero(); n * VOCAB_SIZE];
        let head = self.head_view();
        gemm_into(T::one(), MatRef::dense(hf, n, d), head, T::zero(), &mut logits, VOCAB_SIZE);
        logits
    }

    fn head_view(&self) -> MatRef<'_, T> {
        let d = self.config.hidden_dim;
        match self.layout.head {
            Some(h) => MatRef::new(&self.params, h, d, VOCAB_SIZE, VOCAB_SIZE, 1),
            None => MatRef::new(&self.params, self.layout.tok_emb, VOCAB_SIZE, d, d, 1).t(),
        }
    }

    /// Masked mean cross-entropy over move tokens and its logit gradient.
    pub(crate) fn loss(&self, batch: &Batch, logits: &[T]) -> (T, Vec<T>, usize) {
        let count = batch.targets.iter().filter(|&&t| (t as usize) < MOVE_TOKENS).count();
        let mut dlogits = vec![T::zero(); logits.len()];
        if count == 0 {
            return (T::zero(), dlogits, 0);
        }
        let inv = T::one() / T::from_usize_lossy(count);
        let mut total = T::zero();
        for (i, &target) in batch.targets.iter().enumerate() {
            if target as usize >= MOVE_TOKENS {
                continue;
            }
            let row = &logits[i * VOCAB_SIZE..i * VOCAB_SIZE + MOVE_TOKENS];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            total += lse - row[target as usize];
            let drow = &mut dlogits[i * VOCAB_SIZE..i * VOCAB_SIZE + MOVE_TOKENS];
            for (j, g) in drow.iter_mut().enumerate() {
                let p = (row[j] - lse).exp();
                *g = (p - if j == target as usize { T::one() } else { T::zero() }) * inv;
            }
        }
        (total * inv, dlogits, count)
    }

    /// Loss and full parameter gradient for one batch.
    pub(crate) fn loss_and_grad(&self, batch: &Batch, pass: &mut Pass<'_>) -> (T, Vec<T>) {
        let trace = self.forward(batch, pass);
        let (loss, dlogits, _) = self.loss(batch, &trace.logits);
        let mut grads = vec![T::zero(); self.params.len()];
        self.backward(batch, &trace, &dlogits, &mut grads);
        (loss, grads)
    }

    /// Mean loss and parameter gradient over `examples`, without dropout.
    pub fn examples_loss_and_grad(&self, examples: &[&Example]) -> (T, Vec<T>) {
        self.loss_and_grad(&Batch::from_examples(examples), &mut Pass::inference())
    }

    /// Logits (`input.len() × VOCAB_SIZE`) for every decoder position.
    pub fn example_logits(&self, example: &Example) -> Vec<T> {
        let batch = Batch::from_examples(&[example]);
        self.forward(&batch, &mut Pass::inference()).logits
    }

    /// Mean loss without gradients.
    pub fn batch_loss(&self, examples: &[&Example]) -> T {
        let batch = Batch::from_examples(examples);
        let trace = self.forward(&batch, &mut Pass::inference());
        self.loss(&batch, &trace.logits).0
    }

    pub(crate) fn backward(&self, batch: &Batch, trace: &Trace<T>, dlogits: &[T], grads: &mut [T]) {
        let d = self.config.hidden_dim;
        let n = batch.n();
        let lay = &self.layout;

        // Output head.
        let mut dx = vec![T::zero(); n * d];
        match lay.head {
            Some(h) => {
                let head = MatRef::new(&self.params, h, d, VOCAB_SIZE, VOCAB_SIZE, 1);
                gemm_into(T::one(), MatRef::dense(dlogits, n, VOCAB_SIZE), head.t(), T::zero(), &mut dx, d);
                gemm_into(
                    T::one(),
                    MatRef::dense(&trace.hf, n, d).t(),
                    MatRef::dense(dlogits, n, VOCAB_SIZE),
                    T::one(),
                    &mut grads[h..h + d * VOCAB_SIZE],
                    VOCAB_SIZE,
                );
            }
            None => {
                let emb = MatRef::new(&self.params, lay.tok_emb, VOCAB_SIZE, d, d, 1);
                gemm_into(T::one(), MatRef::dense(dlogits, n, VOCAB_SIZE), emb, T::zero(), &mut dx, d);
                gemm_into(
                    T::one(),
                    MatRef::dense(dlogits, n, VOCAB_SIZE).t(),
                    MatRef::dense(&trace.hf, n, d),
                    T::one(),
                    &mut grads[lay.tok_emb..lay.tok_emb + VOCAB_SIZE * d],
                    d,
                );
            }
        }
        let mut dres = vec![T::zero(); n * d];
        {
            let (gg, gb) = pair_mut(grads, lay.ln_f_g, d, lay.ln_f_b, d);
            ops::layernorm_backward(&dx, &trace.ln_f, d, self.p(lay.ln_f_g, d), &mut dres, gg, gb);
        }

        let mut dmem = trace.encoder.as_ref().map(|e| vec![T::zero(); e.mem.len()]);
        for (off, bt) in lay.blocks.iter().zip(&trace.decoder.blocks).rev() {
            let mem = match (&trace.encoder, &batch.src) {
                (Some(e), Some(src)) => Some((e.mem.as_slice(), src.s)),
                _ => None,
            };
            self.block_backward(off, bt, &mut dres, batch.b, batch.t, true, mem, dmem.as_deref_mut(), grads);
        }
        self.embed_backward(&batch.tokens, batch.t, lay.pos_emb, &trace.decoder.emb_mask, &dres, grads);

        if let (Some(enc), Some(et), Some(src), Some(dmem)) = (&lay.encoder, &trace.encoder, &batch.src, dmem) {
            let mut dxe = vec![T::zero(); dmem.len()];
            {
                let (gg, gb) = pair_mut(grads, enc.ln_f_g, d, enc.ln_f_b, d);
                ops::layernorm_backward(&dmem, &et.ln, d, self.p(enc.ln_f_g, d), &mut dxe, gg, gb);
            }
            for (off, bt) in enc.blocks.iter().zip(&et.stack.blocks).rev() {
                self.block_backward(off, bt, &mut dxe, batch.b, src.s, false, None, None, grads);
            }
            self.embed_backward(&src.tokens, src.s, enc.pos_emb, &et.stack.emb_mask, &dxe, grads);
        }
    }

    fn embed_backward(&self, tokens: &[Token], t: usize, pos_off: usize, mask: &Option<Vec<T>>, dx: &[T], grads: &mut [T]) {
        let d = self.config.hidden_dim;
        let dx = apply_mask(dx, mask);
        for (i, &tok) in tokens.iter().enumerate() {
            let row = &dx[i * d..(i + 1) * d];
            let e = self.layout.tok_emb + tok as usize * d;
            add_into(&mut grads[e..e + d], row);
            let p = pos_off + (i % t) * d;
            add_into(&mut grads[p..p + d], row);
        }
    }

    /// Backpropagates through one block. `dx` holds the gradient w.r.t. the
    /// block output on entry and w.r.t. the block input on return.
    #[allow(clippy::too_many_arguments)]
    fn block_backward(
        &self,
        off: &BlockOffsets,
        bt: &BlockTrace<T>,
        dx: &mut [T],
        batch: usize,
        t: usize,
        causal: bool,
        mem: Option<(&[T], usize)>,
        dmem: Option<&mut [T]>,
        grads: &mut [T],
    ) {
        let d = self.config.hidden_dim;
        let n = batch * t;
        let shape = AttnShape { batch, tq: t, tk: t, heads: self.config.heads, head_dim: self.config.head_dim(), causal };

        // MLP branch.
        let dm = apply_mask(dx, &bt.mask2);
        let mut dact = vec![T::zero(); n * 4 * d];
        {
            let (gw, gb) = pair_mut(grads, off.w_proj, 4 * d * d, off.b_proj, d);
            ops::linear_backward(&bt.act, n, 4 * d, self.p(off.w_proj, 4 * d * d), d, &dm, Some(&mut dact), false, gw, gb);
        }
        let mut dfc = vec![T::zero(); n * 4 * d];
        ops::gelu_backward(&bt.fc, &dact, &mut dfc);
        let mut dh2 = vec![T::zero(); n * d];
        {
            let (gw, gb) = pair_mut(grads, off.w_fc, 4 * d * d, off.b_fc, 4 * d);
            ops::linear_backward(&bt.h2, n, d, self.p(off.w_fc, 4 * d * d), 4 * d, &dfc, Some(&mut dh2), false, gw, gb);
        }
        {
            let (gg, gb) = pair_mut(grads, off.ln2_g, d, off.ln2_b, d);
            ops::layernorm_backward(&dh2, &bt.ln2, d, self.p(off.ln2_g, d), dx, gg, gb);
        }

        // Cross-attention branch.
        if let (Some(c), Some(ct), Some((mem, s)), Some(dmem)) = (off.cross, &bt.cross, mem, dmem) {
            let dao = apply_mask(dx, &ct.mask);
            let mut datt = vec![T::zero(); n * d];
            {
                let (gw, gb) = pair_mut(grads, c.w_o, d * d, c.b_o, d);
                ops::linear_backward(&ct.att, n, d, self.p(c.w_o, d * d), d, &dao, Some(&mut datt), false, gw, gb);
            }
            let xshape = AttnShape { tk: s, causal: false, ..shape };
            let mut dqx = vec![T::zero(); n * d];
            let mut dkvx = vec![T::zero(); batch * s * 2 * d];
            ops::attention_backward(
                &ct.qx,
                Slot { stride: d, offset: 0 },
                &ct.kvx,
                Slot { stride: 2 * d, offset: 0 },
                Slot { stride: 2 * d, offset: d },
                xshape,
                &ct.probs,
                &datt,
                &mut dqx,
                Some(&mut dkvx),
            );
            let mut dhx = vec![T::zero(); n * d];
            {
                let (gw, gb) = pair_mut(grads, c.w_q, d * d, c.b_q, d);
                ops::linear_backward(&ct.hx, n, d, self.p(c.w_q, d * d), d, &dqx, Some(&mut dhx), false, gw, gb);
            }
            {
                let (gw, gb) = pair_mut(grads, c.w_kv, 2 * d * d, c.b_kv, 2 * d);
                ops::linear_backward(mem, batch * s, d, self.p(c.w_kv, 2 * d * d), 2 * d, &dkvx, Some(dmem), true, gw, gb);
            }
            let (gg, gb) = pair_mut(grads, c.ln_g, d, c.ln_b, d);
            ops::layernorm_backward(&dhx, &ct.ln, d, self.p(c.ln_g, d), dx, gg, gb);
        }

        // Self-attention branch.
        let da = apply_mask(dx, &bt.mask1);
        let mut datt = vec![T::zero(); n * d];
        {
            let (gw, gb) = pair_mut(grads, off.w_o, d * d, off.b_o, d);
            ops::linear_backward(&bt.att, n, d, self.p(off.w_o, d * d), d, &da, Some(&mut datt), false, gw, gb);
        }
        let mut dqkv = vec![T::zero(); n * 3 * d];
        let (sq, sk, sv) = packed_slots(d);
        ops::attention_backward(&bt.qkv, sq, &bt.qkv, sk, sv, shape, &bt.probs, &datt, &mut dqkv, None);
        let mut dh1 = vec![T::zero(); n * d];
        {
            let (gw, gb) = pair_mut(grads, off.w_qkv, 3 * d * d, off.b_qkv, 3 * d);
            ops::linear_backward(&bt.h1, n, d, self.p(off.w_qkv, 3 * d * d), 3 * d, &dqkv, Some(&mut dh1), false, gw, gb);
        }
        let (gg, gb) = pair_mut(grads, off.ln1_g, d, off.ln1_b, d);
        ops::layernorm_backward(&dh1, &bt.ln1, d, self.p(off.ln1_g, d), dx, gg, gb);
    }

    /// Logits of "branch" tokens for a decoder-only model: branch `p` sits
    /// at position `p + 1` and attends to positions `0..=p` of the traced
    /// sequence plus itself. This scores a second generated move for every
    /// prefix of a game with one batched pass.
    pub(crate) fn branch_logits(&self, trace: &Trace<T>, seq_len: usize, branch: &[Token]) -> Vec<T> {
        assert!(!self.config.is_encoder_decoder(), "branch decoding is decoder-only");
        let d = self.config.hidden_dim;
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let m = branch.len();
        assert!(m <= seq_len && m < self.config.max_seq_len);
        let scale = T::one() / T::from_usize_lossy(dh).sqrt();
        let mut x = vec![T::zero(); m * d];
        for (p, &tok) in branch.iter().enumerate() {
            let e = self.p(self.layout.tok_emb + tok as usize * d, d);
            let pe = self.p(self.layout.pos_emb + (p + 1) * d, d);
            for ((o, &a), &b) in x[p * d..(p + 1) * d].iter_mut().zip(e).zip(pe) {
                *o = a + b;
            }
        }
        let mut scores = vec![T::zero(); seq_len + 1];
        for (l, off) in self.layout.blocks.iter().enumerate() {
            let cache = &trace.decoder.blocks[l].qkv;
            let mut h1 = vec![T::zero(); m * d];
            ops::layernorm(&x, d, self.p(off.ln1_g, d), self.p(off.ln1_b, d), &mut h1);
            let mut qkv = vec![T::zero(); m * 3 * d];
            ops::linear(&h1, m, d, self.p(off.w_qkv, 3 * d * d), self.p(off.b_qkv, 3 * d), 3 * d, &mut qkv);
            let mut att = vec![T::zero(); m * d];
            for p in 0..m {
                let own = &qkv[p * 3 * d..(p + 1) * 3 * d];
                for h in 0..heads {
                    let q = &own[h * dh..(h + 1) * dh];
                    let sc = &mut scores[..p + 2];
                    for (j, s) in sc[..=p].iter_mut().enumerate() {
                        let k = &cache[j * 3 * d + d + h * dh..j * 3 * d + d + (h + 1) * dh];
                        *s = crate::linalg::dot(q, k) * scale;
                    }
                    sc[p + 1] = crate::linalg::dot(q, &own[d + h * dh..d + (h + 1) * dh]) * scale;
                    ops::softmax_prefix(sc, p + 2);
                    let out = &mut att[p * d + h * dh..p * d + (h + 1) * dh];
                    for (j, &w) in sc[..=p].iter().enumerate() {
                        let v = &cache[j * 3 * d + 2 * d + h * dh..j * 3 * d + 2 * d + (h + 1) * dh];
                        for (o, &vv) in out.iter_mut().zip(v) {
                            *o += w * vv;
                        }
                    }
                    let w = sc[p + 1];
                    for (o, &vv) in out.iter_mut().zip(&own[2 * d + h * dh..2 * d + (h + 1) * dh]) {
                        *o += w * vv;
                    }
                }
            }
            let mut a = vec![T::zero(); m * d];
            ops::linear(&att, m, d, self.p(off.w_o, d * d), self.p(off.b_o, d), d, &mut a);
            add_into(&mut x, &a);
            let mut h2 = vec![T::zero(); m * d];
            ops::layernorm(&x, d, self.p(off.ln2_g, d), self.p(off.ln2_b, d), &mut h2);
            let mut fc = vec![T::zero(); m * 4 * d];
            ops::linear(&h2, m, d, self.p(off.w_fc, 4 * d * d), self.p(off.b_fc, 4 * d), 4 * d, &mut fc);
            let mut act = vec![T::zero(); m * 4 * d];
            ops::gelu(&fc, &mut act);
            let mut mo = vec![T::zero(); m * d];
            ops::linear(&act, m, 4 * d, self.p(off.w_proj, 4 * d * d), self.p(off.b_proj, d), d, &mut mo);
            add_into(&mut x, &mo);
        }
        let mut hf = vec![T::zero(); m * d];
        ops::layernorm(&x, d, self.p(self.layout.ln_f_g, d), self.p(self.layout.ln_f_b, d), &mut hf);
        self.project_logits(&hf)
    }

    /// Decoder input (and encoder source) for a prefix `[BOS, t1, …, tm]`.
    pub fn prefix_example(&self, prefix: &[Token]) -> Example {
        debug_assert_eq!(prefix.first(), Some(&BOS));
        if self.config.is_encoder_decoder() {
            if prefix.len() <= 1 {
                Example { src: Some(vec![BOS]), input: vec![BOS], targets: vec![PAD] }
            } else {
                let mut input = vec![BOS];
                input.extend_from_slice(&prefix[2..]);
                let targets = vec![PAD; input.len()];
                Example { src: Some(vec![prefix[1]]), input, targets }
            }
        } else {
            Example { src: None, input: prefix.to_vec(), targets: vec![PAD; prefix.len()] }
        }
    }

    /// Training rows for one encoded game `[BOS, t1, …, tn]`.
    pub fn game_examples(&self, tokens: &[Token]) -> Vec<Example> {
        let n = tokens.len() - 1;
        if n == 0 {
            return Vec::new();
        }
        if self.config.is_encoder_decoder() {
            let mut out = vec![Example { src: Some(vec![BOS]), input: vec![BOS], targets: vec![tokens[1]] }];
            if n >= 2 {
                let mut input = vec![BOS];
                input.extend_from_slice(&tokens[2..n]);
                out.push(Example { src: Some(vec![tokens[1]]), input, targets: tokens[2..].to_vec() });
            }
            out
        } else {
            vec![Example { src: None, input: tokens[..n].to_vec(), targets: tokens[1..].to_vec() }]
        }
    }
}

fn packed_slots(d: usize) -> (Slot, Slot, Slot) {
    (
        Slot { stride: 3 * d, offset: 0 },
        Slot { stride: 3 * d, offset: d },
        Slot { stride: 3 * d, offset: 2 * d },
    )
}

fn add_into<T: Scalar>(x: &mut [T], y: &[T]) {
    for (a, &b) in x.iter_mut().zip(y) {
        *a += b;
    }
}
