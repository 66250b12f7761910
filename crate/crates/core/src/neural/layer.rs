use ndarray::{s, Array2, Array3, ArrayView3, Axis};

use super::cell::{step_backward, step_forward, StepCache};
use super::{CellKind, CellParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

/// Everything one direction of a layer needs for its backward pass.
pub(crate) struct DirectionTrace {
    reverse: bool,
    /// Caches in processing order.
    steps: Vec<StepCache>,
}

pub(crate) struct LayerTrace {
    pub outputs: Array3<f64>,
    directions: Vec<DirectionTrace>,
}

fn flatten(x: ArrayView3<f64>) -> Array2<f64> {
    let (l, b, d) = x.dim();
    x.as_standard_layout().into_owned().into_shape_with_order((l * b, d)).expect("contiguous")
}

fn run_direction(kind: CellKind, p: &CellParams, xs: ArrayView3<f64>, reverse: bool) -> (Array3<f64>, DirectionTrace) {
    let (l, b, _) = xs.dim();
    let u = p.units();
    let mut xw = flatten(xs).dot(&p.kernel);
    xw += &p.bias;
    let xw = xw.into_shape_with_order((l, b, p.kernel.ncols())).expect("contiguous");
    let mut out = Array3::zeros((l, b, u));
    let mut steps = Vec::with_capacity(l);
    let mut h = Array2::zeros((b, u));
    let mut c = (kind == CellKind::Lstm).then(|| Array2::zeros((b, u)));
    for k in 0..l {
        let t = if reverse { l - 1 - k } else { k };
        let cache = step_forward(kind, p, xw.index_axis(Axis(0), t), h, c);
        out.index_axis_mut(Axis(0), t).assign(&cache.h);
        h = cache.h.clone();
        c = cache.c.clone();
        steps.push(cache);
    }
    (out, DirectionTrace { reverse, steps })
}

/// Runs one layer over a time-major `[L, B, D]` batch with zero initial
/// state. `params` holds one cell (forward or backward) or two
/// (bidirectional: forward then backward). Bidirectional outputs put the
/// forward state first and the backward state, aligned by time step, second.
pub(crate) fn layer_forward(kind: CellKind, params: &[CellParams], xs: ArrayView3<f64>, reverse_single: bool) -> LayerTrace {
    let (l, b, _) = xs.dim();
    let u = params[0].units();
    let mut outputs = Array3::zeros((l, b, u * params.len()));
    let mut directions = Vec::with_capacity(params.len());
    for (d, p) in params.iter().enumerate() {
        let reverse = if params.len() == 1 { reverse_single } else { d == 1 };
        let (out, trace) = run_direction(kind, p, xs, reverse);
        outputs.slice_mut(s![.., .., d * u..(d + 1) * u]).assign(&out);
        directions.push(trace);
    }
    LayerTrace { outputs, directions }
}

/// Backpropagates `d_outputs` (same shape as the layer outputs) through the
/// layer, adding parameter gradients into `grads` and returning the gradient
/// with respect to the layer input.
pub(crate) fn layer_backward(
    kind: CellKind,
    params: &[CellParams],
    xs: ArrayView3<f64>,
    trace: &LayerTrace,
    d_outputs: &Array3<f64>,
    grads: &mut [CellParams],
) -> Array3<f64> {
    let (l, b, din) = xs.dim();
    let x_flat = flatten(xs);
    let mut dx = Array2::<f64>::zeros((l * b, din));
    for (d, (p, dir)) in params.iter().zip(&trace.directions).enumerate() {
        let u = p.units();
        let g = &mut grads[d];
        let dout = d_outputs.slice(s![.., .., d * u..(d + 1) * u]);
        let mut da_all = Array3::<f64>::zeros((l, b, p.kernel.ncols()));
        let mut dh_next = Array2::<f64>::zeros((b, u));
        let mut dc_next: Option<Array2<f64>> = None;
        for k in (0..l).rev() {
            let t = if dir.reverse { l - 1 - k } else { k };
            let dh = &dout.index_axis(Axis(0), t) + &dh_next;
            let (da, dh_prev, dc_prev) = step_backward(kind, p, &dir.steps[k], &dh, dc_next.as_ref(), &mut g.recurrent);
            da_all.index_axis_mut(Axis(0), t).assign(&da);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        let da_flat = da_all.into_shape_with_order((l * b, p.kernel.ncols())).expect("contiguous");
        g.kernel.scaled_add(1.0, &x_flat.t().dot(&da_flat));
        g.bias.scaled_add(1.0, &da_flat.sum_axis(Axis(0)));
        dx.scaled_add(1.0, &da_flat.dot(&p.kernel.t()));
    }
    dx.into_shape_with_order((l, b, din)).expect("contiguous")
}

/// Runs one recurrent layer over an `L × D` sequence. `Forward` and
/// `Backward` take one parameter set, `Bidirectional` two (forward, then
/// backward) and returns `L × 2U`.
pub fn run_layer(seq: &Array2<f64>, direction: Direction, cell: CellKind, params: &[CellParams]) -> Result<Array2<f64>> {
    let expected = if direction == Direction::Bidirectional { 2 } else { 1 };
    if params.len() != expected {
        return Err(Error::Shape(format!("{direction:?} layer needs {expected} parameter sets, got {}", params.len())));
    }
    if seq.nrows() == 0 {
        return Err(Error::Shape("sequence must have at least one step".into()));
    }
    let units = params[0].units();
    for p in params {
        p.check(cell, seq.ncols(), units)?;
    }
    let xs = seq.view().insert_axis(Axis(1));
    let trace = layer_forward(cell, params, xs, direction == Direction::Backward);
    Ok(trace.outputs.index_axis(Axis(1), 0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::super::{gru_cell, srnn_cell};
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(kind: CellKind, input: usize, units: usize, seed: u64) -> CellParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = kind.gates() * units;
        CellParams {
            kernel: Array2::from_shape_simple_fn((input, g), || rng.random_range(-0.7..0.7)),
            recurrent: Array2::from_shape_simple_fn((units, g), || rng.random_range(-0.7..0.7)),
            bias: Array1::from_shape_simple_fn(g, || rng.random_range(-0.3..0.3)),
        }
    }

    fn seq(l: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((l, d), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_step_equals_cell() {
        let p = random(CellKind::Gru, 4, 3, 1);
        let x = seq(1, 4, 2);
        let out = run_layer(&x, Direction::Forward, CellKind::Gru, std::slice::from_ref(&p)).unwrap();
        let expected = gru_cell(&x.row(0).to_owned(), &Array1::zeros(3), &p).unwrap();
        assert_eq!(out.row(0), expected);
    }

    #[test]
    fn forward_unrolls_cells() {
        let p = random(CellKind::Srnn, 4, 3, 3);
        let x = seq(5, 4, 4);
        let out = run_layer(&x, Direction::Forward, CellKind::Srnn, std::slice::from_ref(&p)).unwrap();
        let mut h = Array1::zeros(3);
        for t in 0..5 {
            h = srnn_cell(&x.row(t).to_owned(), &h, &p).unwrap();
            assert_relative_eq!(out.row(t), h.view(), epsilon = 1e-14);
        }
    }

    #[test]
    fn bidirectional_width_and_halves() {
        let (f, b) = (random(CellKind::Lstm, 4, 64, 5), random(CellKind::Lstm, 4, 64, 6));
        let x = seq(6, 4, 7);
        let both = run_layer(&x, Direction::Bidirectional, CellKind::Lstm, &[f.clone(), b.clone()]).unwrap();
        assert_eq!(both.dim(), (6, 128));
        let fwd = run_layer(&x, Direction::Forward, CellKind::Lstm, &[f]).unwrap();
        let bwd = run_layer(&x, Direction::Backward, CellKind::Lstm, &[b]).unwrap();
        assert_eq!(both.slice(s![.., ..64]), fwd);
        assert_eq!(both.slice(s![.., 64..]), bwd);
    }

    #[test]
    fn palindrome_with_tied_parameters() {
        for kind in [CellKind::Srnn, CellKind::Gru, CellKind::Lstm] {
            let p = random(kind, 3, 4, 8);
            let half = seq(3, 3, 9);
            let mut x = Array2::zeros((6, 3));
            for t in 0..3 {
                x.row_mut(t).assign(&half.row(t));
                x.row_mut(5 - t).assign(&half.row(t));
            }
            let out = run_layer(&x, Direction::Bidirectional, kind, &[p.clone(), p]).unwrap();
            for t in 0..6 {
                assert_eq!(out.slice(s![t, ..4]), out.slice(s![5 - t, 4..]), "{kind}");
            }
        }
    }

    #[test]
    fn errors() {
        let p = random(CellKind::Srnn, 4, 3, 1);
        assert!(run_layer(&seq(3, 4, 1), Direction::Bidirectional, CellKind::Srnn, std::slice::from_ref(&p)).is_err());
        assert!(run_layer(&seq(3, 5, 1), Direction::Forward, CellKind::Srnn, std::slice::from_ref(&p)).is_err());
        assert!(run_layer(&Array2::zeros((0, 4)), Direction::Forward, CellKind::Srnn, &[p]).is_err());
    }
}
