//! Single recurrent steps over a batch. `xw` is the input projection
//! `x·W + b` of the step, computed for the whole sequence at once by the layer.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};

use super::{CellKind, CellParams};
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub h_prev: Array2<f64>,
    pub c_prev: Option<Array2<f64>>,
    /// Activated gates: `h` for SRNN, `[z r n]` for GRU, `[i f g o]` for LSTM.
    pub gates: Array2<f64>,
    pub c: Option<Array2<f64>>,
    pub h: Array2<f64>,
}

pub(crate) fn step_forward(
    kind: CellKind,
    p: &CellParams,
    xw: ArrayView2<f64>,
    h_prev: Array2<f64>,
    c_prev: Option<Array2<f64>>,
) -> StepCache {
    let u = p.units();
    match kind {
        CellKind::Srnn => {
            let mut a = h_prev.dot(&p.recurrent);
            a += &xw;
            a.mapv_inplace(f64::tanh);
            StepCache { h: a.clone(), gates: a, h_prev, c_prev: None, c: None }
        }
        CellKind::Gru => {
            let mut zr = h_prev.dot(&p.recurrent.slice(s![.., ..2 * u]));
            zr += &xw.slice(s![.., ..2 * u]);
            zr.mapv_inplace(sigmoid);
            let rh = &zr.slice(s![.., u..]) * &h_prev;
            let mut n = rh.dot(&p.recurrent.slice(s![.., 2 * u..]));
            n += &xw.slice(s![.., 2 * u..]);
            n.mapv_inplace(f64::tanh);
            let mut h = Array2::zeros(h_prev.raw_dim());
            Zip::from(&mut h)
                .and(zr.slice(s![.., ..u]))
                .and(&n)
                .and(&h_prev)
                .for_each(|h, &z, &n, &hp| *h = (1.0 - z) * n + z * hp);
            let gates = concatenate![Axis(1), zr, n];
            StepCache { h, gates, h_prev, c_prev: None, c: None }
        }
        CellKind::Lstm => {
            let c_prev = c_prev.expect("LSTM step needs a cell state");
            let mut a = h_prev.dot(&p.recurrent);
            a += &xw;
            for (k, mut block) in a.axis_chunks_iter_mut(Axis(1), u).enumerate() {
                if k == 2 {
                    block.mapv_inplace(f64::tanh);
                } else {
                    block.mapv_inplace(sigmoid);
                }
            }
            let (i, f, g, o) = (
                a.slice(s![.., ..u]),
                a.slice(s![.., u..2 * u]),
                a.slice(s![.., 2 * u..3 * u]),
                a.slice(s![.., 3 * u..]),
            );
            let c = &f * &c_prev + &i * &g;
            let h = &o * &c.mapv(f64::tanh);
            StepCache { h, gates: a, h_prev, c_prev: Some(c_prev), c: Some(c) }
        }
    }
}

/// Backpropagates `dh` (and `dc` for LSTM) through one step. Accumulates the
/// recurrent-kernel gradient into `d_recurrent` and returns the gradient of
/// the pre-activations (= of `xw`), of `h_prev`, and of `c_prev`.
pub(crate) fn step_backward(
    kind: CellKind,
    p: &CellParams,
    cache: &StepCache,
    dh: &Array2<f64>,
    dc: Option<&Array2<f64>>,
    d_recurrent: &mut Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Option<Array2<f64>>) {
    let u = p.units();
    match kind {
        CellKind::Srnn => {
            let da = Zip::from(dh).and(&cache.h).map_collect(|&d, &h| d * (1.0 - h * h));
            d_recurrent.scaled_add(1.0, &cache.h_prev.t().dot(&da));
            let dh_prev = da.dot(&p.recurrent.t());
            (da, dh_prev, None)
        }
        CellKind::Gru => {
            let z = cache.gates.slice(s![.., ..u]);
            let r = cache.gates.slice(s![.., u..2 * u]);
            let n = cache.gates.slice(s![.., 2 * u..]);
            let hp = &cache.h_prev;
            let mut da = Array2::zeros(cache.gates.raw_dim());
            // Candidate branch.
            let dan = Zip::from(dh).and(z).and(n).map_collect(|&d, &z, &n| d * (1.0 - z) * (1.0 - n * n));
            let rh = &r * hp;
            d_recurrent.slice_mut(s![.., 2 * u..]).scaled_add(1.0, &rh.t().dot(&dan));
            let drh = dan.dot(&p.recurrent.slice(s![.., 2 * u..]).t());
            let dar = Zip::from(&drh).and(hp).and(r).map_collect(|&d, &h, &r| d * h * r * (1.0 - r));
            let daz = Zip::from(dh).and(hp).and(n).and(z).map_collect(|&d, &h, &n, &z| d * (h - n) * z * (1.0 - z));
            da.slice_mut(s![.., ..u]).assign(&daz);
            da.slice_mut(s![.., u..2 * u]).assign(&dar);
            da.slice_mut(s![.., 2 * u..]).assign(&dan);
            let dzr = da.slice(s![.., ..2 * u]);
            d_recurrent.slice_mut(s![.., ..2 * u]).scaled_add(1.0, &hp.t().dot(&dzr));
            let mut dh_prev = dzr.dot(&p.recurrent.slice(s![.., ..2 * u]).t());
            dh_prev += &(dh * &z);
            dh_prev += &(&drh * &r);
            (da, dh_prev, None)
        }
        CellKind::Lstm => {
            let c = cache.c.as_ref().expect("LSTM cache has a cell state");
            let c_prev = cache.c_prev.as_ref().expect("LSTM cache has a previous cell state");
            let g = &cache.gates;
            let (i, f, gg, o) = (
                g.slice(s![.., ..u]),
                g.slice(s![.., u..2 * u]),
                g.slice(s![.., 2 * u..3 * u]),
                g.slice(s![.., 3 * u..]),
            );
            let tc = c.mapv(f64::tanh);
            let mut dct = Zip::from(dh).and(o).and(&tc).map_collect(|&d, &o, &t| d * o * (1.0 - t * t));
            if let Some(dc) = dc {
                dct += dc;
            }
            let mut da = Array2::zeros(g.raw_dim());
            Zip::from(da.slice_mut(s![.., ..u]))
                .and(&dct)
                .and(gg)
                .and(i)
                .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
            Zip::from(da.slice_mut(s![.., u..2 * u]))
                .and(&dct)
                .and(c_prev)
                .and(f)
                .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
            Zip::from(da.slice_mut(s![.., 2 * u..3 * u]))
                .and(&dct)
                .and(i)
                .and(gg)
                .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
            Zip::from(da.slice_mut(s![.., 3 * u..]))
                .and(dh)
                .and(&tc)
                .and(o)
                .for_each(|d, &dh, &t, &o| *d = dh * t * o * (1.0 - o));
            d_recurrent.scaled_add(1.0, &cache.h_prev.t().dot(&da));
            let dh_prev = da.dot(&p.recurrent.t());
            let dc_prev = &dct * &f;
            (da, dh_prev, Some(dc_prev))
        }
    }
}

fn single_step(kind: CellKind, x: &Array1<f64>, h: &Array1<f64>, c: Option<&Array1<f64>>, p: &CellParams) -> Result<StepCache> {
    p.check(kind, x.len(), h.len())?;
    if let Some(c) = c {
        if c.len() != h.len() {
            return Err(Error::Shape(format!("cell state has {} units, hidden state {}", c.len(), h.len())));
        }
    }
    let xw = x.view().insert_axis(Axis(0)).dot(&p.kernel) + &p.bias;
    let row = |v: &Array1<f64>| v.clone().insert_axis(Axis(0));
    Ok(step_forward(kind, p, xw.view(), row(h), c.map(row)))
}

/// `tanh(x·W + h·U + b)`
pub fn srnn_cell(x: &Array1<f64>, h: &Array1<f64>, p: &CellParams) -> Result<Array1<f64>> {
    Ok(single_step(CellKind::Srnn, x, h, None, p)?.h.row(0).to_owned())
}

/// Gate blocks `[z r n]`; `h' = (1 - z)·n + z·h` with
/// `n = tanh(x·Wn + (r ⊙ h)·Un + bn)`.
pub fn gru_cell(x: &Array1<f64>, h: &Array1<f64>, p: &CellParams) -> Result<Array1<f64>> {
    Ok(single_step(CellKind::Gru, x, h, None, p)?.h.row(0).to_owned())
}

/// Gate blocks `[i f g o]`; `c' = f·c + i·g`, `h' = o·tanh(c')`.
pub fn lstm_cell(x: &Array1<f64>, h: &Array1<f64>, c: &Array1<f64>, p: &CellParams) -> Result<(Array1<f64>, Array1<f64>)> {
    let cache = single_step(CellKind::Lstm, x, h, Some(c), p)?;
    Ok((cache.h.row(0).to_owned(), cache.c.expect("LSTM state").row(0).to_owned()))
}
