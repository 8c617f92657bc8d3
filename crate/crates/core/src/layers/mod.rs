//! Graph-neural layers with explicit forward and backward passes.
//!
//! Every layer follows the same pattern: `*_forward` returns the output and
//! a cache of intermediates, `*_backward` consumes that cache plus the
//! upstream gradient, accumulates parameter gradients into a same-shaped
//! params struct and returns the gradient with respect to its input.

mod gat;
mod gcn;
mod nn4g;
mod sage;

pub use gat::{gat_attention, gat_backward, gat_forward, Attention, GatCache, GatLayerParams};
pub use gcn::{gcn_backward, gcn_forward, GcnCache, GcnLayerParams};
pub use nn4g::{nn4g_backward, nn4g_forward, Nn4gCache, Nn4gLayerParams};
pub use sage::{
    sage_backward, sage_forward, sample_neighbors, Aggregator, SageCache, SageLayerParams,
};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Default LeakyReLU negative slope.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Gathers embedding rows for `ids`.
pub fn embed_forward<T: Scalar>(ids: &[usize], table: &Tensor<T>) -> Result<Tensor<T>> {
    let d = table.cols();
    let mut data = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        if id >= table.rows() {
            return Err(Error::IndexOutOfRange {
                index: id,
                len: table.rows(),
            });
        }
        data.extend_from_slice(table.row(id));
    }
    Tensor::from_vec(&[ids.len(), d], data)
}

/// Scatter-adds row gradients back into the table gradient.
pub fn embed_backward<T: Scalar>(ids: &[usize], d_out: &Tensor<T>, grad_table: &mut Tensor<T>) -> Result<()> {
    if d_out.rows() != ids.len() || d_out.cols() != grad_table.cols() {
        return Err(shape_err("embed_backward"));
    }
    for (r, &id) in ids.iter().enumerate() {
        if id >= grad_table.rows() {
            return Err(Error::IndexOutOfRange {
                index: id,
                len: grad_table.rows(),
            });
        }
        for (g, &v) in grad_table.row_mut(id).iter_mut().zip(d_out.row(r)) {
            *g += v;
        }
    }
    Ok(())
}

/// Column-wise mean over nodes.
pub fn readout_mean<T: Scalar>(h: &Tensor<T>) -> Result<Tensor<T>> {
    let n = h.rows();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let d = h.cols();
    let mut acc = vec![0.0f64; d];
    for i in 0..n {
        for (a, &v) in acc.iter_mut().zip(h.row(i)) {
            *a += v.wide();
        }
    }
    Tensor::from_vec(&[1, d], acc.into_iter().map(|a| T::of(a / n as f64)).collect())
}

pub fn readout_mean_backward<T: Scalar>(d_out: &Tensor<T>, n: usize) -> Tensor<T> {
    let d = d_out.cols();
    let inv = T::of(1.0 / n as f64);
    let row: Vec<T> = d_out.data().iter().map(|&g| g * inv).collect();
    let mut out = Tensor::zeros(&[n, d]);
    for i in 0..n {
        out.row_mut(i).copy_from_slice(&row);
    }
    out
}
