use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Vocabulary, EMBEDDING_DIM};
use crate::error::{Error, Result};

/// Frequency-subsampling rule applied to each token occurrence during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsampling {
    /// `min(1, sqrt(rate / f))`.
    Sqrt,
    /// `min(1, (sqrt(f / rate) + 1) · rate / f)`, the reference word2vec tool's rule.
    Word2vec,
}

impl Subsampling {
    pub fn keep_probability(self, token_freq: u64, total: u64, rate: f64) -> f64 {
        if rate <= 0.0 || total == 0 {
            return 1.0;
        }
        let f = token_freq as f64 / total as f64;
        let p = match self {
            Subsampling::Sqrt => (rate / f).sqrt(),
            Subsampling::Word2vec => ((f / rate).sqrt() + 1.0) * rate / f,
        };
        p.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbowParams {
    pub dim: usize,
    /// Context radius: up to `window` tokens on each side of the center.
    pub window: usize,
    pub downsample: f64,
    pub subsampling: Subsampling,
    pub negatives: usize,
    pub epochs: usize,
    /// Learning rate, decayed linearly to `min_alpha` over all epochs.
    pub alpha: f64,
    pub min_alpha: f64,
    pub seed: u64,
    /// 1 trains sequentially and is bit-reproducible; more workers train
    /// shard-local copies that are averaged after every epoch.
    pub workers: usize,
}

impl Default for CbowParams {
    fn default() -> Self {
        CbowParams {
            dim: EMBEDDING_DIM,
            window: 3,
            downsample: 1e-3,
            subsampling: Subsampling::Sqrt,
            negatives: 5,
            epochs: 5,
            alpha: 0.025,
            min_alpha: 1e-4,
            seed: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// V×D input vectors; row `i` embeds vocabulary index `i`.
    pub vectors: Array2<f64>,
    pub params: CbowParams,
}

impl EmbeddingMatrix {
    pub fn dimension(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(index)
    }
}

/// Loss and gradients of one negative-sampling CBOW example.
#[derive(Debug, Clone)]
pub struct CbowGradients {
    pub loss: f64,
    pub input: Array2<f64>,
    pub output: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln σ(u_center·h) - Σ ln σ(-u_neg·h)` with `h` the mean of the context
/// input vectors, and its exact gradients with respect to both tables.
pub fn cbow_loss_and_gradients(
    input: &Array2<f64>,
    output: &Array2<f64>,
    context: &[usize],
    center: usize,
    negatives: &[usize],
) -> CbowGradients {
    let mut h = Array1::<f64>::zeros(input.ncols());
    for &c in context {
        h += &input.row(c);
    }
    h /= context.len() as f64;

    let mut grad_input = Array2::zeros(input.raw_dim());
    let mut grad_output = Array2::zeros(output.raw_dim());
    let mut grad_h = Array1::<f64>::zeros(input.ncols());
    let mut loss = 0.0;
    let targets = std::iter::once((center, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (target, label) in targets {
        let u = output.row(target);
        let score = u.dot(&h);
        let s = sigmoid(score);
        loss -= if label == 1.0 { s.ln() } else { (1.0 - s).ln() };
        let d_score = s - label;
        grad_h.scaled_add(d_score, &u);
        grad_output.row_mut(target).scaled_add(d_score, &h);
    }
    let per_context = 1.0 / context.len() as f64;
    for &c in context {
        grad_input.row_mut(c).scaled_add(per_context, &grad_h);
    }
    CbowGradients {
        loss,
        input: grad_input,
        output: grad_output,
    }
}

/// Cumulative unigram^0.75 distribution for negative sampling.
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(vocab: &Vocabulary) -> Self {
        let mut acc = 0.0;
        let cumulative = vocab
            .frequencies
            .iter()
            .map(|&f| {
                acc += (f as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

struct Trainer<'a> {
    params: &'a CbowParams,
    vocab: &'a Vocabulary,
    negatives: NegativeTable,
    keep: Vec<f64>,
    total_work: f64,
}

impl Trainer<'_> {
    /// One pass over `streams`; `done` counts processed tokens for the learning-rate schedule.
    fn epoch(
        &self,
        streams: &[Vec<usize>],
        input: &mut Array2<f64>,
        output: &mut Array2<f64>,
        rng: &mut ChaCha8Rng,
        done: &mut f64,
    ) {
        let dim = input.ncols();
        let mut h = Array1::<f64>::zeros(dim);
        let mut neu1e = Array1::<f64>::zeros(dim);
        let mut kept = Vec::new();
        for stream in streams {
            kept.clear();
            kept.extend(stream.iter().copied().filter(|&t| rng.random::<f64>() < self.keep[t]));
            let progress = (*done / self.total_work).min(1.0);
            let alpha = (self.params.alpha - (self.params.alpha - self.params.min_alpha) * progress)
                .max(self.params.min_alpha);
            *done += stream.len() as f64;
            for pos in 0..kept.len() {
                let lo = pos.saturating_sub(self.params.window);
                let hi = (pos + self.params.window + 1).min(kept.len());
                let count = hi - lo - 1;
                if count == 0 {
                    continue;
                }
                h.fill(0.0);
                for (j, &c) in kept[lo..hi].iter().enumerate() {
                    if lo + j != pos {
                        h += &input.row(c);
                    }
                }
                h /= count as f64;
                neu1e.fill(0.0);
                let center = kept[pos];
                for k in 0..=self.params.negatives {
                    let (target, label) = if k == 0 {
                        (center, 1.0)
                    } else {
                        let n = self.negatives.sample(rng);
                        if n == center {
                            continue;
                        }
                        (n, 0.0)
                    };
                    let mut u = output.row_mut(target);
                    let g = (label - sigmoid(u.dot(&h))) * alpha;
                    neu1e.scaled_add(g, &u);
                    u.scaled_add(g, &h);
                }
                let share = 1.0 / count as f64;
                for (j, &c) in kept[lo..hi].iter().enumerate() {
                    if lo + j != pos {
                        input.row_mut(c).scaled_add(share, &neu1e);
                    }
                }
            }
        }
    }
}

/// Trains CBOW input vectors with negative sampling.
///
/// Input vectors start uniform in `[-0.5/D, 0.5/D]`, output vectors at zero.
/// With `workers == 1` the result is bit-identical for a fixed seed.
pub fn train_cbow<'a, S>(corpus: impl IntoIterator<Item = S>, vocab: &Vocabulary, params: &CbowParams) -> Result<EmbeddingMatrix>
where
    S: IntoIterator<Item = &'a String>,
{
    if params.dim == 0 || params.window == 0 {
        return Err(Error::InvalidArgument("embedding dimension and window must be positive".into()));
    }
    let streams: Vec<Vec<usize>> = corpus
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|t| vocab.index(t).ok_or_else(|| Error::InvalidArgument(format!("token `{t}` not in vocabulary"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let longest = streams.iter().map(Vec::len).max().unwrap_or(0);
    if params.window > longest {
        return Err(Error::WindowTooLarge { window: params.window, longest });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bound = 0.5 / params.dim as f64;
    let mut input = Array2::from_shape_simple_fn((vocab.len(), params.dim), || rng.random_range(-bound..bound));
    let mut output = Array2::<f64>::zeros((vocab.len(), params.dim));
    if vocab.len() < 2 || params.epochs == 0 {
        return Ok(EmbeddingMatrix { vectors: input, params: params.clone() });
    }

    let trainer = Trainer {
        params,
        vocab,
        negatives: NegativeTable::new(vocab),
        keep: vocab
            .frequencies
            .iter()
            .map(|&f| params.subsampling.keep_probability(f, vocab.total_tokens, params.downsample))
            .collect(),
        total_work: (params.epochs as u64 * streams.iter().map(|s| s.len() as u64).sum::<u64>()) as f64,
    };
    debug_assert_eq!(trainer.vocab.len(), input.nrows());

    let workers = params.workers.max(1).min(streams.len());
    if workers == 1 {
        let mut done = 0.0;
        for _ in 0..params.epochs {
            trainer.epoch(&streams, &mut input, &mut output, &mut rng, &mut done);
        }
    } else {
        let shard = streams.len().div_ceil(workers);
        let shards: Vec<&[Vec<usize>]> = streams.chunks(shard).collect();
        let seeds: Vec<u64> = (0..shards.len()).map(|_| rng.random()).collect();
        let mut rngs: Vec<ChaCha8Rng> = seeds.into_iter().map(ChaCha8Rng::seed_from_u64).collect();
        for epoch in 0..params.epochs {
            let base = (epoch * streams.iter().map(Vec::len).sum::<usize>()) as f64;
            let results: Vec<(Array2<f64>, Array2<f64>)> = shards
                .par_iter()
                .zip(rngs.par_iter_mut())
                .map(|(part, rng)| {
                    let (mut i, mut o) = (input.clone(), output.clone());
                    // Each shard sees the global schedule position of the epoch start.
                    let mut done = base;
                    trainer.epoch(part, &mut i, &mut o, rng, &mut done);
                    (i, o)
                })
                .collect();
            let n = results.len() as f64;
            input = results.iter().fold(Array2::zeros(input.raw_dim()), |acc, (i, _)| acc + i) / n;
            output = results.iter().fold(Array2::zeros(output.raw_dim()), |acc, (_, o)| acc + o) / n;
        }
    }
    debug_assert!(input.iter().all(|x| x.is_finite()));
    Ok(EmbeddingMatrix { vectors: input, params: params.clone() })
}

#[cfg(test)]
mod tests {
    use super::super::{build_vocabulary, cosine_similarity};
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = Array2::from_shape_simple_fn((6, 4), || rng.random_range(-0.8..0.8));
        let output = Array2::from_shape_simple_fn((6, 4), || rng.random_range(-0.8..0.8));
        let (context, center, negatives) = ([0, 2, 2, 5], 1, [3, 4]);
        let g = cbow_loss_and_gradients(&input, &output, &context, center, &negatives);
        let h = 1e-6;
        for ((r, c), &analytic) in g.input.indexed_iter() {
            let numeric = central_difference(
                |v| {
                    let mut p = input.clone();
                    p[[r, c]] = v;
                    cbow_loss_and_gradients(&p, &output, &context, center, &negatives).loss
                },
                input[[r, c]],
                h,
            );
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-5 || (analytic - numeric).abs() < 1e-10, "input[{r},{c}] {analytic} vs {numeric}");
        }
        for ((r, c), &analytic) in g.output.indexed_iter() {
            let numeric = central_difference(
                |v| {
                    let mut p = output.clone();
                    p[[r, c]] = v;
                    cbow_loss_and_gradients(&input, &p, &context, center, &negatives).loss
                },
                output[[r, c]],
                h,
            );
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-5 || (analytic - numeric).abs() < 1e-10, "output[{r},{c}] {analytic} vs {numeric}");
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = [toks("a b c a b c")];
        let vocab = build_vocabulary(&corpus).unwrap();
        let params = CbowParams { epochs: 0, dim: 8, ..Default::default() };
        let e = train_cbow(&corpus, &vocab, &params).unwrap();
        let bound = 0.5 / 8.0;
        assert!(e.vectors.iter().all(|x| x.abs() <= bound));
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let expected = Array2::from_shape_simple_fn((3, 8), || rng.random_range(-bound..bound));
        assert_eq!(e.vectors, expected);
    }

    #[test]
    fn one_token_vocabulary_is_noop() {
        let corpus = [toks("a a a a a")];
        let vocab = build_vocabulary(&corpus).unwrap();
        let e = train_cbow(&corpus, &vocab, &CbowParams::default()).unwrap();
        assert_eq!(e.vectors.nrows(), 1);
        assert!(e.vectors.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn window_larger_than_every_stream() {
        let corpus = [toks("a b"), toks("c")];
        let vocab = build_vocabulary(&corpus).unwrap();
        assert!(matches!(
            train_cbow(&corpus, &vocab, &CbowParams::default()),
            Err(Error::WindowTooLarge { window: 3, longest: 2 })
        ));
    }

    #[test]
    fn deterministic_single_worker() {
        let corpus = [toks("a b c d a b c d e f"), toks("c d e f a b")];
        let vocab = build_vocabulary(&corpus).unwrap();
        let params = CbowParams { epochs: 3, dim: 10, downsample: 0.0, ..Default::default() };
        assert_eq!(train_cbow(&corpus, &vocab, &params).unwrap(), train_cbow(&corpus, &vocab, &params).unwrap());
    }

    fn bigram_corpus() -> Vec<Vec<String>> {
        (0..20)
            .map(|_| toks(&"a b ".repeat(8)))
            .chain((0..20).map(|_| toks(&"c d ".repeat(8))))
            .collect()
    }

    #[test]
    fn multi_worker_trains() {
        let corpus = bigram_corpus();
        let vocab = build_vocabulary(&corpus).unwrap();
        let params = CbowParams { epochs: 200, workers: 4, ..Default::default() };
        let e = train_cbow(&corpus, &vocab, &params).unwrap();
        let row = |t: &str| e.row(vocab.index(t).unwrap()).to_vec();
        assert!(cosine_similarity(&row("a"), &row("b")).unwrap() > cosine_similarity(&row("a"), &row("c")).unwrap());
    }

    #[test]
    fn shared_contexts_beat_unrelated_pairs() {
        let corpus = bigram_corpus();
        let vocab = build_vocabulary(&corpus).unwrap();
        let params = CbowParams { epochs: 200, ..Default::default() };
        let e = train_cbow(&corpus, &vocab, &params).unwrap();
        let row = |t: &str| e.row(vocab.index(t).unwrap()).to_vec();
        let related = cosine_similarity(&row("a"), &row("b")).unwrap();
        for (x, y) in [("a", "c"), ("a", "d"), ("b", "c"), ("b", "d")] {
            let unrelated = cosine_similarity(&row(x), &row(y)).unwrap();
            assert!(related - unrelated >= 0.3, "{related} vs {x}/{y} {unrelated}");
        }
    }
}
