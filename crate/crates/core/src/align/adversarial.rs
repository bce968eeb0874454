use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::csls::{build_dictionary, csls_translation_score, CslsOptions};
use super::map::{AlignMode, AlignmentMap};
use super::procrustes::procrustes_fit;
use super::{AlignData, AlignError, SimilarityReport};
use crate::linalg::{gemm_into, nearest_orthogonal, Matrix};
use crate::scalar::Scalar;

const LEAK: f64 = 0.2;

/// Feed-forward classifier `h → hidden → hidden → 1` with leaky-ReLU
/// activations, trained by plain SGD. Outputs the probability that a row
/// is a mapped source row.
#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    w: [Matrix<T>; 3],
    b: [Vec<T>; 3],
    pub lr: f64,
    pub seed: u64,
}

struct DiscTrace<T> {
    pre: [Matrix<T>; 2],
    act: [Matrix<T>; 2],
    logits: Vec<T>,
}

fn affine<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Matrix<T> {
    let mut out = Matrix::from_fn(x.rows(), w.cols(), |_, j| b[j]);
    let ld = w.cols();
    gemm_into(T::one(), x.view(), w.view(), T::one(), out.as_mut_slice(), ld);
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(input: usize, hidden: usize, lr: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |i: usize, o: usize| Matrix::random_normal(i, o, (2.0 / i as f64).sqrt(), &mut rng);
        Discriminator {
            w: [init(input, hidden), init(hidden, hidden), init(hidden, 1)],
            b: [vec![T::zero(); hidden], vec![T::zero(); hidden], vec![T::zero(); 1]],
            lr,
            seed,
        }
    }

    fn trace(&self, x: &Matrix<T>) -> DiscTrace<T> {
        let leak = T::lit(LEAK);
        let lrelu = |m: &Matrix<T>| Matrix::from_fn(m.rows(), m.cols(), |i, j| {
            let v = m[(i, j)];
            if v > T::zero() { v } else { v * leak }
        });
        let p0 = affine(x, &self.w[0], &self.b[0]);
        let a0 = lrelu(&p0);
        let p1 = affine(&a0, &self.w[1], &self.b[1]);
        let a1 = lrelu(&p1);
        let logits = affine(&a1, &self.w[2], &self.b[2]).into_vec();
        DiscTrace { pre: [p0, p1], act: [a0, a1], logits }
    }

    /// Probabilities in `(0, 1)`.
    pub fn predict(&self, x: &Matrix<T>) -> Vec<f64> {
        self.trace(x).logits.iter().map(|l| sigmoid(l.as_f64())).collect()
    }

    /// Mean binary cross-entropy against `labels`; returns the loss, the
    /// input gradient, and (when `update`) applies one SGD step.
    fn step(&mut self, x: &Matrix<T>, labels: &[f64], update: bool) -> (f64, Matrix<T>) {
        let tr = self.trace(x);
        let n = x.rows();
        let mut loss = 0.0;
        let dlogit: Vec<T> = tr
            .logits
            .iter()
            .zip(labels)
            .map(|(&l, &y)| {
                let p = sigmoid(l.as_f64()).clamp(1e-12, 1.0 - 1e-12);
                loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                T::lit((p - y) / n as f64)
            })
            .collect();
        let leak = T::lit(LEAK);
        let mut grads_w = Vec::with_capacity(3);
        let mut grads_b = Vec::with_capacity(3);
        let mut d = Matrix::from_vec(n, 1, dlogit);
        let inputs = [x, &tr.act[0], &tr.act[1]];
        for layer in (0..3).rev() {
            let inp = inputs[layer];
            let mut gw = Matrix::zeros(inp.cols(), d.cols());
            let ld = d.cols();
            gemm_into(T::one(), inp.t(), d.view(), T::zero(), gw.as_mut_slice(), ld);
            let gb = d.column_means().into_iter().map(|m| m * T::from_usize_lossy(n)).collect::<Vec<_>>();
            let mut dx = Matrix::zeros(n, inp.cols());
            let ldx = inp.cols();
            gemm_into(T::one(), d.view(), self.w[layer].t(), T::zero(), dx.as_mut_slice(), ldx);
            if layer > 0 {
                let pre = &tr.pre[layer - 1];
                for (g, &p) in dx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= T::zero() {
                        *g *= leak;
                    }
                }
            }
            grads_w.push(gw);
            grads_b.push(gb);
            d = dx;
        }
        if update {
            let lr = T::lit(self.lr);
            for (layer, (gw, gb)) in (0..3).rev().zip(grads_w.iter().zip(&grads_b)) {
                for (w, &g) in self.w[layer].as_mut_slice().iter_mut().zip(gw.as_slice()) {
                    *w -= lr * g;
                }
                for (b, &g) in self.b[layer].iter_mut().zip(gb) {
                    *b -= lr * g;
                }
            }
        }
        (loss / n as f64, d)
    }
}

/// Options for [`align_unsupervised`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedOptions {
    /// Adversarial iterations, each one discriminator and one map update.
    pub adversarial_iters: usize,
    pub refinement_iters: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub dis_lr: f64,
    pub map_lr: f64,
    pub smoothing: f64,
    /// Independent random initializations; the run with the best
    /// pairing-free CSLS criterion is kept.
    pub restarts: usize,
    /// Iterations between criterion checks; the best snapshot of each run
    /// seeds its refinement.
    pub select_every: usize,
    pub seed: u64,
    pub collapse_threshold: f64,
    pub collapse_window: usize,
    pub collapse_patience: usize,
    pub csls: CslsOptions,
}

impl Default for UnsupervisedOptions {
    fn default() -> Self {
        UnsupervisedOptions {
            adversarial_iters: 2000,
            refinement_iters: 20,
            batch_size: 32,
            hidden: 128,
            dis_lr: 0.1,
            map_lr: 5.0,
            smoothing: 0.1,
            restarts: 3,
            select_every: 100,
            seed: 0,
            collapse_threshold: 0.999,
            collapse_window: 100,
            collapse_patience: 10,
            csls: CslsOptions::default(),
        }
    }
}

fn sample_rows<T: Scalar>(m: &Matrix<T>, n: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..m.rows())).collect();
    m.select_rows(&idx)
}

fn stack<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), data)
}

/// One adversarial run from a random orthogonal start, followed by
/// refinement. Returns the map and its selection criterion.
fn run<T: Scalar>(
    data: &AlignData<'_, T>,
    opts: &UnsupervisedOptions,
    seed: u64,
) -> Result<(Matrix<T>, f64), AlignError> {
    let h = data.fit_src.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Matrix::<T>::random_orthogonal(h, &mut rng);
    let mut dis = Discriminator::<T>::new(h, opts.hidden, opts.dis_lr, rng.random());
    let bs = opts.batch_size;
    let s = opts.smoothing;
    let mut labels = vec![1.0 - s; bs];
    labels.extend(std::iter::repeat_n(s, bs));
    let fool = vec![s; bs];
    let (mut correct, mut seen, mut saturated) = (0usize, 0usize, 0usize);
    let criterion = |w: &Matrix<T>| csls_translation_score(&data.fit_src.matmul(w), data.fit_tgt, &opts.csls);
    let mut best = (criterion(&w)?, w.clone());
    for it in 0..opts.adversarial_iters {
        // Discriminator update: mapped source rows vs. target rows.
        let xs = sample_rows(data.fit_src, bs, &mut rng).matmul(&w);
        let yt = sample_rows(data.fit_tgt, bs, &mut rng);
        let batch = stack(&xs, &yt);
        let preds = dis.predict(&batch);
        correct += preds.iter().enumerate().filter(|&(i, &p)| (p > 0.5) == (i < bs)).count();
        seen += 2 * bs;
        dis.step(&batch, &labels, true);

        // Map update: make mapped source rows look like targets.
        let xs = sample_rows(data.fit_src, bs, &mut rng);
        let (_, dmapped) = dis.step(&xs.matmul(&w), &fool, false);
        let mut gw = Matrix::zeros(h, h);
        gemm_into(T::one(), xs.t(), dmapped.view(), T::zero(), gw.as_mut_slice(), h);
        let lr = T::lit(opts.map_lr);
        for (v, &g) in w.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *v -= lr * g;
        }
        w = nearest_orthogonal(&w);

        if (it + 1) % opts.select_every == 0 {
            let c = criterion(&w)?;
            if c > best.0 {
                best = (c, w.clone());
            }
        }
        if (it + 1) % opts.collapse_window == 0 {
            let acc = correct as f64 / seen as f64;
            saturated = if acc >= opts.collapse_threshold { saturated + 1 } else { 0 };
            if saturated >= opts.collapse_patience {
                return Err(AlignError::Collapse { threshold: opts.collapse_threshold, patience: opts.collapse_patience });
            }
            log::debug!("adversarial iter {} discriminator accuracy {acc:.3}", it + 1);
            correct = 0;
            seen = 0;
        }
    }
    let mut w = best.1;
    for iteration in 1..=opts.refinement_iters {
        let mapped = data.fit_src.matmul(&w);
        let dict = build_dictionary(&mapped, data.fit_tgt, &opts.csls)
            .map_err(|_| AlignError::EmptyDictionary { iteration })?;
        w = procrustes_fit(data.fit_src, data.fit_tgt, &dict).map_err(|e| e.at(iteration))?;
    }
    let score = csls_translation_score(&data.fit_src.matmul(&w), data.fit_tgt, &opts.csls)?;
    Ok((w, score))
}

/// Adversarial initialization from a random orthogonal map, then CSLS /
/// Procrustes refinement. The fitting rows are never paired; held-out rows
/// are paired for scoring only.
pub fn align_unsupervised<T: Scalar>(
    data: &AlignData<'_, T>,
    opts: &UnsupervisedOptions,
) -> Result<(AlignmentMap<T>, SimilarityReport), AlignError> {
    data.check()?;
    if opts.adversarial_iters == 0 {
        return Err(AlignError::Config("adversarial_iters must be at least 1".into()));
    }
    if opts.restarts == 0 || opts.batch_size == 0 || opts.hidden == 0 || opts.collapse_window == 0 || opts.select_every == 0 {
        return Err(AlignError::Config(
            "restarts, batch_size, hidden, select_every and collapse_window must be positive".into(),
        ));
    }
    let mut best: Option<(Matrix<T>, f64)> = None;
    let mut last_err = None;
    for restart in 0..opts.restarts {
        let seed = opts.seed.wrapping_add(restart as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        match run(data, opts, seed) {
            Ok((w, score)) => {
                log::info!("unsupervised restart {restart}: criterion {score:.4}");
                if best.as_ref().is_none_or(|b| score > b.1) {
                    best = Some((w, score));
                }
            }
            Err(e) => {
                log::warn!("unsupervised restart {restart} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    let (w, _) = match best {
        Some(b) => b,
        None => return Err(last_err.expect("at least one restart ran")),
    };
    let report = SimilarityReport::score(data.eval_src, data.eval_tgt, &w);
    Ok((AlignmentMap::new(w, AlignMode::Unsupervised, opts.refinement_iters, opts.adversarial_iters), report))
}
