use crate::error::{shape_err, Error, Result};
use crate::tensor::{
    leaky_relu, leaky_relu_backward, leaky_relu_deriv, leaky_relu_scalar, matmul, matmul_nt, matmul_tn,
    softmax_slice, Scalar, Tensor,
};

/// Single-head attention layer parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayerParams<T> {
    /// `d_in × d_out`
    pub w: Tensor<T>,
    /// `1 × 2·d_out`; the first half scores the centre node, the second half the neighbor.
    pub a: Tensor<T>,
}

/// Attention coefficients aligned with the neighbor lists they were computed on.
#[derive(Clone, Debug)]
pub struct Attention<T> {
    pub alpha: Vec<Vec<T>>,
    /// Raw scores `a · [W h_v ‖ W h_u]` before LeakyReLU.
    scores: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct GatCache<T> {
    input: Tensor<T>,
    projected: Tensor<T>,
    attention: Attention<T>,
    pre: Tensor<T>,
}

fn check_neighbors(adj: &[Vec<usize>], n: usize) -> Result<()> {
    if adj.len() != n {
        return Err(shape_err(format!("{} neighbor lists for {n} nodes", adj.len())));
    }
    for (v, list) in adj.iter().enumerate() {
        if let Some(&u) = list.iter().find(|&&u| u >= n) {
            return Err(Error::IndexOutOfRange { index: u, len: n });
        }
        if !list.contains(&v) {
            return Err(shape_err(format!("neighbor list of node {v} lacks a self-loop")));
        }
    }
    Ok(())
}

fn check_params<T: Scalar>(h: &Tensor<T>, p: &GatLayerParams<T>) -> Result<()> {
    if h.cols() != p.w.rows() || p.a.len() != 2 * p.w.cols() {
        return Err(shape_err(format!(
            "gat: H {:?}, W {:?}, a {:?}",
            h.shape(),
            p.w.shape(),
            p.a.shape()
        )));
    }
    Ok(())
}

fn attend<T: Scalar>(projected: &Tensor<T>, adj: &[Vec<usize>], a: &Tensor<T>, slope: T) -> Attention<T> {
    let d = projected.cols();
    let (a_self, a_nbr) = a.data().split_at(d);
    let dot = |coef: &[T], row: &[T]| -> f64 { coef.iter().zip(row).map(|(c, x)| c.wide() * x.wide()).sum() };
    let src: Vec<f64> = (0..projected.rows()).map(|v| dot(a_self, projected.row(v))).collect();
    let dst: Vec<f64> = (0..projected.rows()).map(|u| dot(a_nbr, projected.row(u))).collect();
    let slope = slope.wide();
    let mut alpha = Vec::with_capacity(adj.len());
    let mut scores = Vec::with_capacity(adj.len());
    for (v, list) in adj.iter().enumerate() {
        let s: Vec<f64> = list.iter().map(|&u| src[v] + dst[u]).collect();
        let e: Vec<f64> = s.iter().map(|&x| leaky_relu_scalar(x, slope)).collect();
        alpha.push(softmax_slice(&e).into_iter().map(T::of).collect());
        scores.push(s);
    }
    Attention { alpha, scores }
}

/// Normalized attention of every node over its neighbor list (self included).
pub fn gat_attention<T: Scalar>(
    h: &Tensor<T>,
    adj: &[Vec<usize>],
    p: &GatLayerParams<T>,
    slope: T,
) -> Result<Attention<T>> {
    check_params(h, p)?;
    check_neighbors(adj, h.rows())?;
    Ok(attend(&matmul(h, &p.w)?, adj, &p.a, slope))
}

/// `h'_v = σ(Σ_u α_vu W h_u)`.
pub fn gat_forward<T: Scalar>(
    h: &Tensor<T>,
    adj: &[Vec<usize>],
    p: &GatLayerParams<T>,
    slope: T,
) -> Result<(Tensor<T>, GatCache<T>)> {
    check_params(h, p)?;
    check_neighbors(adj, h.rows())?;
    let projected = matmul(h, &p.w)?;
    let attention = attend(&projected, adj, &p.a, slope);
    let d = projected.cols();
    let mut pre = Tensor::zeros(&[h.rows(), d]);
    let mut acc = vec![0.0f64; d];
    for (v, list) in adj.iter().enumerate() {
        acc.iter_mut().for_each(|x| *x = 0.0);
        for (&u, &w) in list.iter().zip(&attention.alpha[v]) {
            let w = w.wide();
            for (x, &g) in acc.iter_mut().zip(projected.row(u)) {
                *x += w * g.wide();
            }
        }
        for (o, &x) in pre.row_mut(v).iter_mut().zip(&acc) {
            *o = T::of(x);
        }
    }
    let pre = pre.ensure_finite("gat_forward")?;
    let out = leaky_relu(&pre, slope);
    Ok((
        out,
        GatCache {
            input: h.clone(),
            projected,
            attention,
            pre,
        },
    ))
}

/// Backpropagates through the aggregation, the attention softmax, the
/// attention vector and the shared projection. Returns `dH`.
pub fn gat_backward<T: Scalar>(
    adj: &[Vec<usize>],
    cache: &GatCache<T>,
    p: &GatLayerParams<T>,
    d_out: &Tensor<T>,
    slope: T,
    grad: &mut GatLayerParams<T>,
) -> Result<Tensor<T>> {
    let n = cache.projected.rows();
    let d = cache.projected.cols();
    let g = &cache.projected;
    let d_pre = leaky_relu_backward(&cache.pre, d_out, slope);
    let slope = slope.wide();

    let mut d_g = vec![0.0f64; n * d];
    let mut d_src = vec![0.0f64; n];
    let mut d_dst = vec![0.0f64; n];
    for (v, list) in adj.iter().enumerate() {
        let alpha = &cache.attention.alpha[v];
        let upstream = d_pre.row(v);
        let d_alpha: Vec<f64> = list
            .iter()
            .map(|&u| upstream.iter().zip(g.row(u)).map(|(a, b)| a.wide() * b.wide()).sum())
            .collect();
        let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, da)| a.wide() * da).sum();
        for (k, &u) in list.iter().enumerate() {
            let a_vu = alpha[k].wide();
            for (dg, &up) in d_g[u * d..(u + 1) * d].iter_mut().zip(upstream) {
                *dg += a_vu * up.wide();
            }
            let d_e = a_vu * (d_alpha[k] - weighted);
            let d_s = d_e * leaky_relu_deriv(cache.attention.scores[v][k], slope);
            d_src[v] += d_s;
            d_dst[u] += d_s;
        }
    }

    let (a_self, a_nbr) = p.a.data().split_at(d);
    let mut d_a = vec![0.0f64; 2 * d];
    for v in 0..n {
        for (c, &gv) in g.row(v).iter().enumerate() {
            d_a[c] += d_src[v] * gv.wide();
            d_a[d + c] += d_dst[v] * gv.wide();
            d_g[v * d + c] += d_src[v] * a_self[c].wide() + d_dst[v] * a_nbr[c].wide();
        }
    }
    for (ga, &x) in grad.a.data_mut().iter_mut().zip(&d_a) {
        *ga += T::of(x);
    }
    let d_g = Tensor::from_vec(&[n, d], d_g.into_iter().map(T::of).collect())?;
    grad.w.add_assign(&matmul_tn(&cache.input, &d_g)?)?;
    matmul_nt(&d_g, &p.w)
}
