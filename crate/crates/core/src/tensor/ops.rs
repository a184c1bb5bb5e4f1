//! Raw array kernels shared by the tape and the graph executor.
//!
//! Spike tensors are mostly zero, so the matmul kernels skip zero input rows
//! instead of multiplying through them.

use super::{Real, Shape, TimeTensor};
use crate::error::{Error, Result};

/// `out[t,b,m] = sum_n input[t,b,n] * weights[n,m]` over all time steps.
pub fn matmul_time_raw<E: Real>(input: &TimeTensor<E>, weights: &TimeTensor<E>) -> Result<TimeTensor<E>> {
    let in_shape = input.shape();
    let w_shape = weights.shape();
    if w_shape.steps != 1 || w_shape.batch != in_shape.units {
        return Err(Error::Dimension(format!(
            "matmul_time: input {} is not compatible with weights {}",
            in_shape, w_shape
        )));
    }
    let (n_in, n_out) = (w_shape.batch, w_shape.units);
    let out_shape = Shape::new(in_shape.steps, in_shape.batch, n_out);
    let mut out = vec![E::zero(); out_shape.len()];
    let w = weights.data();
    let x = input.data();
    let rows = in_shape.steps * in_shape.batch;
    for r in 0..rows {
        let xi = &x[r * n_in..(r + 1) * n_in];
        let oi = &mut out[r * n_out..(r + 1) * n_out];
        for (n, &v) in xi.iter().enumerate() {
            if v == E::zero() {
                continue;
            }
            let wn = &w[n * n_out..(n + 1) * n_out];
            for (o, &wv) in oi.iter_mut().zip(wn.iter()) {
                *o += v * wv;
            }
        }
    }
    TimeTensor::new(out_shape, out)
}

/// Input-side matmul gradient: `d_in[t,b,n] = sum_m g[t,b,m] * weights[n,m]`.
pub fn matmul_grad_input<E: Real>(grad: &TimeTensor<E>, weights: &TimeTensor<E>) -> TimeTensor<E> {
    let g_shape = grad.shape();
    let (n_in, n_out) = (weights.shape().batch, weights.shape().units);
    debug_assert_eq!(g_shape.units, n_out);
    let out_shape = Shape::new(g_shape.steps, g_shape.batch, n_in);
    let mut out = vec![E::zero(); out_shape.len()];
    let w = weights.data();
    let g = grad.data();
    let rows = g_shape.steps * g_shape.batch;
    for r in 0..rows {
        let gi = &g[r * n_out..(r + 1) * n_out];
        let oi = &mut out[r * n_in..(r + 1) * n_in];
        for (n, o) in oi.iter_mut().enumerate() {
            let wn = &w[n * n_out..(n + 1) * n_out];
            let mut acc = E::zero();
            for (&gv, &wv) in gi.iter().zip(wn.iter()) {
                acc += gv * wv;
            }
            *o = acc;
        }
    }
    TimeTensor::new(out_shape, out).expect("shape is consistent by construction")
}

/// Weight-side matmul gradient: `d_w[n,m] = sum_{t,b} input[t,b,n] * g[t,b,m]`.
pub fn matmul_grad_weights<E: Real>(grad: &TimeTensor<E>, input: &TimeTensor<E>) -> TimeTensor<E> {
    let g_shape = grad.shape();
    let in_shape = input.shape();
    let (n_in, n_out) = (in_shape.units, g_shape.units);
    let mut out = vec![E::zero(); n_in * n_out];
    let g = grad.data();
    let x = input.data();
    let rows = g_shape.steps * g_shape.batch;
    for r in 0..rows {
        let xi = &x[r * n_in..(r + 1) * n_in];
        let gi = &g[r * n_out..(r + 1) * n_out];
        for (n, &v) in xi.iter().enumerate() {
            if v == E::zero() {
                continue;
            }
            let on = &mut out[n * n_out..(n + 1) * n_out];
            for (o, &gv) in on.iter_mut().zip(gi.iter()) {
                *o += v * gv;
            }
        }
    }
    TimeTensor::matrix(n_in, n_out, out).expect("shape is consistent by construction")
}

/// Elementwise sum of two same-shape tensors.
pub fn add_raw<E: Real>(a: &TimeTensor<E>, b: &TimeTensor<E>) -> Result<TimeTensor<E>> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "add: shapes {} and {} differ",
            a.shape(),
            b.shape()
        )));
    }
    let data: Vec<E> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
    TimeTensor::new(a.shape(), data)
}

/// Accumulate `src` into `dst` (used for gradient fan-in).
pub fn accumulate<E: Real>(dst: &mut Option<TimeTensor<E>>, src: TimeTensor<E>) {
    match dst {
        None => *dst = Some(src),
        Some(cur) => {
            debug_assert_eq!(cur.shape(), src.shape());
            let data: Vec<E> = cur
                .data()
                .iter()
                .zip(src.data().iter())
                .map(|(&x, &y)| x + y)
                .collect();
            *cur = TimeTensor::new(cur.shape(), data).expect("shape preserved");
        }
    }
}
