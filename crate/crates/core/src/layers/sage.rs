use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{leaky_relu, leaky_relu_backward, matmul, matmul_nt, matmul_tn, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    Pooling,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Pooling => "pooling",
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "pooling" | "pool" => Ok(Aggregator::Pooling),
            other => Err(Error::Config(format!("unknown sage aggregator {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SageLayerParams<T> {
    /// `d_in × d_out`, applied to the aggregated vector.
    pub w: Tensor<T>,
    /// `d_in × d_in`, present for the pooling aggregator only.
    pub w_pool: Option<Tensor<T>>,
    pub sample_size: usize,
    pub aggregator: Aggregator,
}

#[derive(Clone, Debug)]
pub struct SageCache<T> {
    /// Per node: itself followed by its sampled neighbors.
    members: Vec<Vec<usize>>,
    input: Tensor<T>,
    aggregated: Tensor<T>,
    pre: Tensor<T>,
    pool: Option<PoolCache<T>>,
}

#[derive(Clone, Debug)]
struct PoolCache<T> {
    pre: Tensor<T>,
    /// Winning member per (node, channel) of the elementwise max.
    argmax: Vec<usize>,
}

/// Uniform sampling without replacement of at most `s` neighbors per node.
/// Nodes with degree ≤ `s` keep their full list. Neighbor lists must not
/// contain the node itself.
pub fn sample_neighbors(adj: &[Vec<usize>], s: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    adj.iter()
        .map(|list| {
            if list.len() <= s {
                list.clone()
            } else {
                let mut picks: Vec<usize> = sample(&mut rng, list.len(), s).into_iter().collect();
                picks.sort_unstable();
                picks.into_iter().map(|i| list[i]).collect()
            }
        })
        .collect()
}

/// GraphSage update `σ(W · agg(h_v, {h_u : u ∈ S_N(v)}))` with a mean or
/// max-pooling aggregator. `adj` excludes self-loops.
pub fn sage_forward<T: Scalar>(
    h: &Tensor<T>,
    adj: &[Vec<usize>],
    p: &SageLayerParams<T>,
    seed: u64,
    slope: T,
) -> Result<(Tensor<T>, SageCache<T>)> {
    let n = h.rows();
    let d_in = h.cols();
    if adj.len() != n || p.w.rows() != d_in {
        return Err(shape_err(format!("sage: H {:?}, W {:?}", h.shape(), p.w.shape())));
    }
    if let Some(&u) = adj.iter().flatten().find(|&&u| u >= n) {
        return Err(Error::IndexOutOfRange { index: u, len: n });
    }
    if p.sample_size == 0 {
        return Err(Error::Config("sage sample_size must be >= 1".into()));
    }
    let members: Vec<Vec<usize>> = sample_neighbors(adj, p.sample_size, seed)
        .into_iter()
        .enumerate()
        .map(|(v, mut s)| {
            s.retain(|&u| u != v);
            s.insert(0, v);
            s
        })
        .collect();

    let mut aggregated = Tensor::zeros(&[n, d_in]);
    let pool = match p.aggregator {
        Aggregator::Mean => {
            let mut acc = vec![0.0f64; d_in];
            for (v, group) in members.iter().enumerate() {
                acc.iter_mut().for_each(|x| *x = 0.0);
                for &u in group {
                    for (x, &hv) in acc.iter_mut().zip(h.row(u)) {
                        *x += hv.wide();
                    }
                }
                let inv = 1.0 / group.len() as f64;
                for (o, &x) in aggregated.row_mut(v).iter_mut().zip(&acc) {
                    *o = T::of(x * inv);
                }
            }
            None
        }
        Aggregator::Pooling => {
            let w_pool = p
                .w_pool
                .as_ref()
                .ok_or_else(|| shape_err("pooling aggregator without W_pool"))?;
            if w_pool.rows() != d_in || w_pool.cols() != d_in {
                return Err(shape_err(format!("sage: W_pool {:?}", w_pool.shape())));
            }
            let pool_pre = matmul(h, w_pool)?;
            let pooled = leaky_relu(&pool_pre, slope);
            let mut argmax = vec![0; n * d_in];
            for (v, group) in members.iter().enumerate() {
                for c in 0..d_in {
                    let mut best = group[0];
                    for &u in &group[1..] {
                        if pooled.at(u, c) > pooled.at(best, c) {
                            best = u;
                        }
                    }
                    argmax[v * d_in + c] = best;
                    aggregated.row_mut(v)[c] = pooled.at(best, c);
                }
            }
            Some(PoolCache { pre: pool_pre, argmax })
        }
    };
    let pre = matmul(&aggregated, &p.w)?;
    let out = leaky_relu(&pre, slope);
    Ok((
        out,
        SageCache {
            members,
            input: h.clone(),
            aggregated,
            pre,
            pool,
        },
    ))
}

pub fn sage_backward<T: Scalar>(
    cache: &SageCache<T>,
    p: &SageLayerParams<T>,
    d_out: &Tensor<T>,
    slope: T,
    grad: &mut SageLayerParams<T>,
) -> Result<Tensor<T>> {
    let n = cache.input.rows();
    let d_in = cache.input.cols();
    let d_pre = leaky_relu_backward(&cache.pre, d_out, slope);
    grad.w.add_assign(&matmul_tn(&cache.aggregated, &d_pre)?)?;
    let d_agg = matmul_nt(&d_pre, &p.w)?;
    match &cache.pool {
        None => {
            let mut d_h = vec![0.0f64; n * d_in];
            for (v, group) in cache.members.iter().enumerate() {
                let inv = 1.0 / group.len() as f64;
                for &u in group {
                    for (dh, &g) in d_h[u * d_in..(u + 1) * d_in].iter_mut().zip(d_agg.row(v)) {
                        *dh += g.wide() * inv;
                    }
                }
            }
            Tensor::from_vec(&[n, d_in], d_h.into_iter().map(T::of).collect())
        }
        Some(pool) => {
            let mut d_pooled = vec![0.0f64; n * d_in];
            for v in 0..n {
                for c in 0..d_in {
                    let u = pool.argmax[v * d_in + c];
                    d_pooled[u * d_in + c] += d_agg.at(v, c).wide();
                }
            }
            let d_pooled = Tensor::from_vec(&[n, d_in], d_pooled.into_iter().map(T::of).collect())?;
            let d_pool_pre = leaky_relu_backward(&pool.pre, &d_pooled, slope);
            let w_pool = p.w_pool.as_ref().ok_or_else(|| shape_err("missing W_pool"))?;
            let g_pool = grad
                .w_pool
                .as_mut()
                .ok_or_else(|| shape_err("missing W_pool gradient"))?;
            g_pool.add_assign(&matmul_tn(&cache.input, &d_pool_pre)?)?;
            matmul_nt(&d_pool_pre, w_pool)
        }
    }
}
