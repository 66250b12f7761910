use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::init::{glorot_uniform, orthogonal_blocks};
use super::{CellKind, ModelConfig};
use crate::error::{Error, Result};

/// Kernels of one recurrent direction. Gate blocks are laid out side by side
/// along the columns: `[z | r | n]` for GRU, `[i | f | g | o]` for LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    /// `input × gates·units`
    pub kernel: Array2<f64>,
    /// `units × gates·units`
    pub recurrent: Array2<f64>,
    pub bias: Array1<f64>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input: usize, units: usize) -> Self {
        let g = kind.gates() * units;
        CellParams {
            kernel: Array2::zeros((input, g)),
            recurrent: Array2::zeros((units, g)),
            bias: Array1::zeros(g),
        }
    }

    pub fn init(kind: CellKind, input: usize, units: usize, rng: &mut impl Rng) -> Self {
        let g = kind.gates() * units;
        let mut bias = Array1::zeros(g);
        if kind == CellKind::Lstm {
            bias.slice_mut(ndarray::s![units..2 * units]).fill(1.0);
        }
        CellParams {
            kernel: glorot_uniform(input, g, rng),
            recurrent: orthogonal_blocks(units, kind.gates(), rng),
            bias,
        }
    }

    pub fn units(&self) -> usize {
        self.recurrent.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.nrows()
    }

    pub(crate) fn check(&self, kind: CellKind, input: usize, units: usize) -> Result<()> {
        let g = kind.gates() * units;
        if self.kernel.dim() != (input, g) || self.recurrent.dim() != (units, g) || self.bias.len() != g {
            return Err(Error::Shape(format!(
                "{kind} cell with input {input} and {units} units needs kernel {input}x{g}, recurrent {units}x{g}, bias {g}; got {:?}, {:?}, {}",
                self.kernel.dim(),
                self.recurrent.dim(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

/// One recurrent layer: a forward cell and, when bidirectional, a backward one.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnLayerParams {
    pub directions: Vec<CellParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `inputs × outputs`
    pub kernel: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub rnn: Vec<RnnLayerParams>,
    pub dense: Vec<DenseParams>,
}

fn dense_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
    (0..config.dense_layers)
        .map(|k| {
            let input = if k == 0 { config.rnn_output_width() } else { config.units };
            let output = if k + 1 == config.dense_layers { config.num_classes } else { config.units };
            (input, output)
        })
        .collect()
}

fn rnn_input(config: &ModelConfig, layer: usize) -> usize {
    if layer == 0 {
        config.input_dim
    } else {
        config.rnn_output_width()
    }
}

impl ModelParams {
    /// Glorot-uniform input and dense kernels, orthogonal recurrent blocks,
    /// zero biases except an LSTM forget bias of 1.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let rnn = (0..config.rnn_layers)
            .map(|l| RnnLayerParams {
                directions: (0..config.directions())
                    .map(|_| CellParams::init(config.cell, rnn_input(config, l), config.units, rng))
                    .collect(),
            })
            .collect();
        let dense = dense_shapes(config)
            .into_iter()
            .map(|(i, o)| DenseParams {
                kernel: glorot_uniform(i, o, rng),
                bias: Array1::zeros(o),
            })
            .collect();
        ModelParams { rnn, dense }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        ModelParams {
            rnn: (0..config.rnn_layers)
                .map(|l| RnnLayerParams {
                    directions: (0..config.directions())
                        .map(|_| CellParams::zeros(config.cell, rnn_input(config, l), config.units))
                        .collect(),
                })
                .collect(),
            dense: dense_shapes(config)
                .into_iter()
                .map(|(i, o)| DenseParams {
                    kernel: Array2::zeros((i, o)),
                    bias: Array1::zeros(o),
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for mut t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Tensor names in the order of [`tensors`](Self::tensors).
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (l, layer) in self.rnn.iter().enumerate() {
            for (d, _) in layer.directions.iter().enumerate() {
                let dir = if d == 0 { "forward" } else { "backward" };
                for part in ["kernel", "recurrent", "bias"] {
                    names.push(format!("rnn.{l}.{dir}.{part}"));
                }
            }
        }
        for k in 0..self.dense.len() {
            names.push(format!("dense.{k}.kernel"));
            names.push(format!("dense.{k}.bias"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::new();
        for layer in &self.rnn {
            for c in &layer.directions {
                out.push(c.kernel.view().into_dyn());
                out.push(c.recurrent.view().into_dyn());
                out.push(c.bias.view().into_dyn());
            }
        }
        for d in &self.dense {
            out.push(d.kernel.view().into_dyn());
            out.push(d.bias.view().into_dyn());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        for layer in &mut self.rnn {
            for c in &mut layer.directions {
                out.push(c.kernel.view_mut().into_dyn());
                out.push(c.recurrent.view_mut().into_dyn());
                out.push(c.bias.view_mut().into_dyn());
            }
        }
        for d in &mut self.dense {
            out.push(d.kernel.view_mut().into_dyn());
            out.push(d.bias.view_mut().into_dyn());
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        if self.rnn.len() != config.rnn_layers || self.dense.len() != config.dense_layers {
            return Err(Error::Shape(format!(
                "parameters have {} recurrent and {} dense layers, config expects {} and {}",
                self.rnn.len(),
                self.dense.len(),
                config.rnn_layers,
                config.dense_layers
            )));
        }
        for (l, layer) in self.rnn.iter().enumerate() {
            if layer.directions.len() != config.directions() {
                return Err(Error::Shape(format!("recurrent layer {l} has {} directions", layer.directions.len())));
            }
            for c in &layer.directions {
                c.check(config.cell, rnn_input(config, l), config.units)?;
            }
        }
        for (k, (d, (i, o))) in self.dense.iter().zip(dense_shapes(config)).enumerate() {
            if d.kernel.dim() != (i, o) || d.bias.len() != o {
                return Err(Error::Shape(format!("dense layer {k} must be {i}x{o}, got {:?}", d.kernel.dim())));
            }
        }
        Ok(())
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (mut a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a += &b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for mut t in self.tensors_mut() {
            t *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn srnn_parameter_count() {
        let c = ModelConfig::new(CellKind::Srnn, false, 1, 64, 100, 1000, 2);
        let p = ModelParams::init(&c, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p.num_parameters(), 100 * 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert_eq!(p.num_parameters(), 10_690);
        p.check(&c).unwrap();
    }

    #[test]
    fn bidirectional_shapes() {
        let c = ModelConfig::new(CellKind::Gru, true, 3, 128, 100, 10, 24);
        let p = ModelParams::init(&c, &mut ChaCha8Rng::seed_from_u64(0));
        p.check(&c).unwrap();
        assert_eq!(p.rnn[1].directions[1].kernel.dim(), (256, 384));
        assert_eq!(p.dense[0].kernel.dim(), (256, 128));
        assert_eq!(p.dense[2].kernel.dim(), (128, 24));
        assert_eq!(p.names().len(), p.tensors().len());
        assert_eq!(p.names()[3], "rnn.0.backward.kernel");
        assert_ne!(p.rnn[0].directions[0], p.rnn[0].directions[1]);
    }

    #[test]
    fn lstm_forget_bias() {
        let c = ModelConfig::new(CellKind::Lstm, false, 1, 4, 3, 5, 2);
        let p = ModelParams::init(&c, &mut ChaCha8Rng::seed_from_u64(0));
        let b = &p.rnn[0].directions[0].bias;
        assert_eq!(b.as_slice().unwrap(), &[0., 0., 0., 0., 1., 1., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn check_rejects_wrong_shapes() {
        let c = ModelConfig::new(CellKind::Srnn, false, 1, 4, 3, 5, 2);
        let mut p = ModelParams::zeros(&c);
        p.dense[0].bias = Array1::zeros(3);
        assert!(p.check(&c).is_err());
    }
}
