//! Flat parameter storage with a named tensor table.

use super::config::ModelConfig;
use super::tokenizer::VOCAB_SIZE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CrossOffsets {
    pub ln_g: usize,
    pub ln_b: usize,
    pub w_q: usize,
    pub b_q: usize,
    pub w_kv: usize,
    pub b_kv: usize,
    pub w_o: usize,
    pub b_o: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub cross: Option<CrossOffsets>,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderOffsets {
    pub pos_emb: usize,
    pub blocks: Vec<BlockOffsets>,
    pub ln_f_g: usize,
    pub ln_f_b: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub encoder: Option<EncoderOffsets>,
    pub blocks: Vec<BlockOffsets>,
    pub ln_f_g: usize,
    pub ln_f_b: usize,
    /// Untied output head `[hidden, vocab]`.
    pub head: Option<usize>,
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
}

struct Builder {
    tensors: Vec<TensorInfo>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize]) -> usize {
        let offset = self.total;
        self.total += shape.iter().product::<usize>();
        self.tensors.push(TensorInfo { name, shape: shape.to_vec(), offset });
        offset
    }

    fn block(&mut self, prefix: &str, d: usize, cross: bool) -> BlockOffsets {
        let ln1_g = self.add(format!("{prefix}.ln1.gain"), &[d]);
        let ln1_b = self.add(format!("{prefix}.ln1.bias"), &[d]);
        let w_qkv = self.add(format!("{prefix}.attn.w_qkv"), &[d, 3 * d]);
        let b_qkv = self.add(format!("{prefix}.attn.b_qkv"), &[3 * d]);
        let w_o = self.add(format!("{prefix}.attn.w_out"), &[d, d]);
        let b_o = self.add(format!("{prefix}.attn.b_out"), &[d]);
        let cross = cross.then(|| CrossOffsets {
            ln_g: self.add(format!("{prefix}.ln_cross.gain"), &[d]),
            ln_b: self.add(format!("{prefix}.ln_cross.bias"), &[d]),
            w_q: self.add(format!("{prefix}.cross.w_q"), &[d, d]),
            b_q: self.add(format!("{prefix}.cross.b_q"), &[d]),
            w_kv: self.add(format!("{prefix}.cross.w_kv"), &[d, 2 * d]),
            b_kv: self.add(format!("{prefix}.cross.b_kv"), &[2 * d]),
            w_o: self.add(format!("{prefix}.cross.w_out"), &[d, d]),
            b_o: self.add(format!("{prefix}.cross.b_out"), &[d]),
        });
        BlockOffsets {
            ln1_g,
            ln1_b,
            w_qkv,
            b_qkv,
            w_o,
            b_o,
            cross,
            ln2_g: self.add(format!("{prefix}.ln2.gain"), &[d]),
            ln2_b: self.add(format!("{prefix}.ln2.bias"), &[d]),
            w_fc: self.add(format!("{prefix}.mlp.w_fc"), &[d, 4 * d]),
            b_fc: self.add(format!("{prefix}.mlp.b_fc"), &[4 * d]),
            w_proj: self.add(format!("{prefix}.mlp.w_proj"), &[4 * d, d]),
            b_proj: self.add(format!("{prefix}.mlp.b_proj"), &[d]),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.hidden_dim;
        let mut b = Builder { tensors: Vec::new(), total: 0 };
        let tok_emb = b.add("tok_emb".into(), &[VOCAB_SIZE, d]);
        let pos_emb = b.add("pos_emb".into(), &[cfg.max_seq_len, d]);
        let encoder = cfg.is_encoder_decoder().then(|| {
            let pos_emb = b.add("enc.pos_emb".into(), &[cfg.max_seq_len, d]);
            let blocks = (0..cfg.encoder_layers).map(|l| b.block(&format!("enc.{l}"), d, false)).collect();
            EncoderOffsets {
                pos_emb,
                blocks,
                ln_f_g: b.add("enc.ln_f.gain".into(), &[d]),
                ln_f_b: b.add("enc.ln_f.bias".into(), &[d]),
            }
        });
        let cross = cfg.is_encoder_decoder();
        let blocks = (0..cfg.layers).map(|l| b.block(&format!("dec.{l}"), d, cross)).collect();
        let ln_f_g = b.add("ln_f.gain".into(), &[d]);
        let ln_f_b = b.add("ln_f.bias".into(), &[d]);
        let head = (!cfg.tie_embeddings).then(|| b.add("head".into(), &[d, VOCAB_SIZE]));
        Layout {
            tok_emb,
            pos_emb,
            encoder,
            blocks,
            ln_f_g,
            ln_f_b,
            head,
            tensors: b.tensors,
            total: b.total,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
