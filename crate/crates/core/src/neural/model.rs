use ndarray::{s, Array1, Array2, Array3, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{layer_backward, layer_forward, LayerTrace};
use super::loss::{softmax, weighted_cross_entropy, PROB_FLOOR};
use super::{ModelConfig, ModelParams};
use crate::corpus::ClassWeights;
use crate::embedding::EncodedSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Mean weighted loss of a batch, its gradients and the forward probabilities.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: ModelParams,
    pub probs: Array2<f64>,
}

struct ForwardTrace {
    layers: Vec<LayerTrace>,
    /// Inputs of every dense layer, then the logits.
    activations: Vec<Array2<f64>>,
    probs: Array2<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Model { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Model { config, params })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_parameters()
    }

    fn check_inputs(&self, inputs: &ArrayView3<f64>) -> Result<()> {
        let (l, b, d) = inputs.dim();
        if l != self.config.seq_len || d != self.config.input_dim || b == 0 {
            return Err(Error::Shape(format!(
                "model expects [{}, batch >= 1, {}] inputs, got [{l}, {b}, {d}]",
                self.config.seq_len, self.config.input_dim
            )));
        }
        Ok(())
    }

    fn run(&self, inputs: ArrayView3<f64>) -> ForwardTrace {
        let kind = self.config.cell;
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.params.rnn.len());
        for layer in &self.params.rnn {
            let input = layers.last().map_or(inputs, |t| t.outputs.view());
            layers.push(layer_forward(kind, &layer.directions, input, false));
        }
        let last = &layers.last().expect("at least one recurrent layer").outputs;
        let l = last.len_of(Axis(0));
        let u = self.config.units;
        // Forward direction's final state; the backward direction finishes at t = 0.
        let mut features = last.index_axis(Axis(0), l - 1).to_owned();
        if self.config.bidirectional {
            features.slice_mut(s![.., u..]).assign(&last.slice(s![0, .., u..]));
        }
        let mut activations = vec![features];
        for dense in &self.params.dense {
            let mut z = activations.last().expect("nonempty").dot(&dense.kernel);
            z += &dense.bias;
            activations.push(z);
        }
        let logits = activations.last().expect("nonempty");
        let mut probs = Array2::zeros(logits.raw_dim());
        for (mut p, z) in probs.rows_mut().into_iter().zip(logits.rows()) {
            p.assign(&softmax(z));
        }
        ForwardTrace { layers, activations, probs }
    }

    /// Class probabilities `[B, K]` for time-major `[L, B, D]` inputs.
    pub fn forward_batch(&self, inputs: &Array3<f64>) -> Result<Array2<f64>> {
        self.check_inputs(&inputs.view())?;
        Ok(self.run(inputs.view()).probs)
    }

    pub fn forward(&self, sample: &EncodedSample) -> Result<Array1<f64>> {
        let inputs = sample.matrix.view().insert_axis(Axis(1));
        self.check_inputs(&inputs)?;
        Ok(self.run(inputs).probs.row(0).to_owned())
    }

    /// Argmax labels, ties toward the lower class index, and the probabilities.
    pub fn predict(&self, inputs: &Array3<f64>) -> Result<(Vec<usize>, Array2<f64>)> {
        let probs = self.forward_batch(inputs)?;
        let labels = probs.rows().into_iter().map(|p| argmax(p.iter().copied())).collect();
        Ok((labels, probs))
    }

    /// Mean weighted cross-entropy over the batch and its exact gradients,
    /// by backpropagation through time.
    pub fn loss_and_gradients(&self, inputs: &Array3<f64>, labels: &[usize], weights: &ClassWeights) -> Result<BatchGradients> {
        self.check_inputs(&inputs.view())?;
        let b = inputs.len_of(Axis(1));
        let k = self.config.num_classes;
        if labels.len() != b {
            return Err(Error::Shape(format!("{} labels for a batch of {b}", labels.len())));
        }
        if weights.weights.len() != k {
            return Err(Error::Shape(format!("{} class weights for {k} classes", weights.weights.len())));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }

        let trace = self.run(inputs.view());
        let mut loss = 0.0;
        let mut d_logits = Array2::<f64>::zeros((b, k));
        for (i, &y) in labels.iter().enumerate() {
            let p = trace.probs.row(i);
            let w = weights.get(y);
            loss += weighted_cross_entropy(p, y, weights);
            // Below the floor the loss is constant in the logits.
            if p[y] >= PROB_FLOOR {
                let mut row = d_logits.row_mut(i);
                row.assign(&p);
                row[y] -= 1.0;
                row *= w / b as f64;
            }
        }
        loss /= b as f64;

        let mut grads = self.params.zeros_like();
        let mut delta = d_logits;
        for (j, dense) in self.params.dense.iter().enumerate().rev() {
            let input = &trace.activations[j];
            grads.dense[j].kernel = input.t().dot(&delta);
            grads.dense[j].bias = delta.sum_axis(Axis(0));
            delta = delta.dot(&dense.kernel.t());
        }

        let u = self.config.units;
        let last = trace.layers.last().expect("at least one recurrent layer");
        let mut d_out = Array3::<f64>::zeros(last.outputs.raw_dim());
        let l = d_out.len_of(Axis(0));
        d_out.slice_mut(s![l - 1, .., ..u]).assign(&delta.slice(s![.., ..u]));
        if self.config.bidirectional {
            d_out.slice_mut(s![0, .., u..]).assign(&delta.slice(s![.., u..]));
        }
        for (i, layer) in self.params.rnn.iter().enumerate().rev() {
            let input = if i == 0 { inputs.view() } else { trace.layers[i - 1].outputs.view() };
            d_out = layer_backward(
                self.config.cell,
                &layer.directions,
                input,
                &trace.layers[i],
                &d_out,
                &mut grads.rnn[i].directions,
            );
        }
        Ok(BatchGradients { loss, grads, probs: trace.probs })
    }
}

/// First index of the maximum; NaN never wins.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
