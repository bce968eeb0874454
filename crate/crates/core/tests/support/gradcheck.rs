//! Analytic gradients against central finite differences on tiny models.
#![allow(dead_code)]

use othello_probe::engine::generate_games;
use othello_probe::model::{encode_game, Architecture, Example, ModelConfig, Transformer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const H: f64 = 1e-5;
pub const TOL: f64 = 1e-3;

pub fn tiny(architecture: Architecture, tie: bool) -> ModelConfig {
    ModelConfig {
        architecture,
        layers: 1,
        encoder_layers: if architecture == Architecture::EncoderDecoder { 1 } else { 0 },
        hidden_dim: 8,
        heads: 2,
        tie_embeddings: tie,
        seed: 3,
        ..ModelConfig::decoder_default()
    }
}

/// Parameters drawn wide enough that every nonlinearity is exercised.
pub fn perturbed(cfg: ModelConfig) -> Transformer<f64> {
    let base = Transformer::<f64>::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let params = base.params().iter().map(|&p| p + noise.sample(&mut rng)).collect();
    Transformer::from_params(cfg, params).unwrap()
}

fn examples(model: &Transformer<f64>) -> Vec<Example> {
    let games = generate_games(3, 21);
    let mut out = Vec::new();
    for g in &games.games {
        // Short prefixes keep the finite-difference sweep fast; mixed
        // lengths exercise padding.
        let tokens = encode_game(g);
        out.extend(model.game_examples(&tokens[..1 + g.len().min(7 + out.len() * 3)]));
    }
    if model.config().is_encoder_decoder() {
        // Game rows use one-token sources, where cross-attention weights are
        // constant; longer sources give the query path a gradient.
        out.push(Example { src: Some(vec![19, 4, 33]), input: vec![60, 2, 7], targets: vec![2, 7, 40] });
        out.push(Example { src: Some(vec![12, 50]), input: vec![60, 9], targets: vec![9, 61] });
    }
    out
}

/// `(tensor, relative error, gradient norm)` for every parameter group.
pub fn relative_errors(model: &Transformer<f64>) -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    let ex = examples(&model);
    let refs: Vec<&Example> = ex.iter().collect();
    let (_, analytic) = model.examples_loss_and_grad(&refs);
    let mut probe = model.clone();
    for t in model.tensors() {
        let mut num = Vec::with_capacity(t.len());
        for i in t.range() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + H;
            let up = probe.batch_loss(&refs);
            probe.params_mut()[i] = orig - H;
            let down = probe.batch_loss(&refs);
            probe.params_mut()[i] = orig;
            num.push((up - down) / (2.0 * H));
        }
        let ana = &analytic[t.range()];
        let diff: f64 = num.iter().zip(ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na: f64 = ana.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale < 1e-12 { 0.0 } else { diff / scale };
        out.push((t.name.clone(), rel, scale));
    }
    out
}
