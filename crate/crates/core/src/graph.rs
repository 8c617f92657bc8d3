//! Per-document word graphs: sliding-window co-occurrence, PPMI edge
//! weights, top-k edge pruning and symmetric normalization.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored `(column, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// Nonzero entries of a square dense matrix.
    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Csr> {
        let n = dense.len();
        let mut trips = Vec::new();
        for (i, row) in dense.iter().enumerate() {
            if row.len() != n {
                return Err(Error::ShapeMismatch(format!("row {i} has length {}", row.len())));
            }
            trips.extend(row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (i, j, v)));
        }
        to_csr(&trips, n)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && self
                .triplets()
                .iter()
                .all(|&(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }
}

/// Assembles an `n×n` CSR matrix from `(row, col, weight)` triplets.
pub fn to_csr(triplets: &[(usize, usize, f64)], n: usize) -> Result<Csr> {
    let mut sorted = triplets.to_vec();
    for &(r, c, _) in &sorted {
        if r >= n || c >= n {
            return Err(Error::IndexOutOfRange {
                index: r.max(c),
                len: n,
            });
        }
    }
    sorted.sort_by_key(|&(r, c, _)| (r, c));
    if let Some(w) = sorted.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
        return Err(Error::DuplicateEntry {
            row: w[0].0,
            col: w[0].1,
        });
    }
    let mut indptr = vec![0; n + 1];
    for &(r, _, _) in &sorted {
        indptr[r + 1] += 1;
    }
    for i in 0..n {
        indptr[i + 1] += indptr[i];
    }
    Ok(Csr {
        nrows: n,
        ncols: n,
        indptr,
        indices: sorted.iter().map(|t| t.1).collect(),
        values: sorted.iter().map(|t| t.2).collect(),
    })
}

/// Sliding-window co-occurrence counts over token ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CooccurrenceStats {
    window_count: usize,
    pair_counts: HashMap<(usize, usize), usize>,
    unigram_counts: HashMap<usize, usize>,
}

fn pair_key(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl CooccurrenceStats {
    /// Builds stats from explicit counts; pair keys may be given in either order.
    pub fn from_counts(
        window_count: usize,
        unigrams: impl IntoIterator<Item = (usize, usize)>,
        pairs: impl IntoIterator<Item = ((usize, usize), usize)>,
    ) -> Self {
        CooccurrenceStats {
            window_count,
            unigram_counts: unigrams.into_iter().collect(),
            pair_counts: pairs
                .into_iter()
                .map(|((i, j), c)| (pair_key(i, j), c))
                .collect(),
        }
    }

    pub fn window_count(&self) -> usize {
        self.window_count
    }

    pub fn pair(&self, i: usize, j: usize) -> usize {
        self.pair_counts.get(&pair_key(i, j)).copied().unwrap_or(0)
    }

    pub fn unigram(&self, i: usize) -> usize {
        self.unigram_counts.get(&i).copied().unwrap_or(0)
    }
}

/// Counts windows of length `w`. Each unordered pair of distinct ids counts
/// once per window; a sequence shorter than `w` forms a single window.
pub fn cooccurrence(ids: &[usize], w: usize) -> CooccurrenceStats {
    let mut stats = CooccurrenceStats::default();
    if ids.is_empty() {
        return stats;
    }
    let w = w.max(1);
    let windows: Vec<&[usize]> = if ids.len() < w {
        vec![ids]
    } else {
        ids.windows(w).collect()
    };
    let mut distinct = Vec::with_capacity(w);
    for win in &windows {
        distinct.clear();
        for &t in *win {
            if !distinct.contains(&t) {
                distinct.push(t);
            }
        }
        for (a, &i) in distinct.iter().enumerate() {
            *stats.unigram_counts.entry(i).or_insert(0) += 1;
            for &j in &distinct[a + 1..] {
                *stats.pair_counts.entry(pair_key(i, j)).or_insert(0) += 1;
            }
        }
    }
    stats.window_count = windows.len();
    stats
}

/// Positive pointwise mutual information with natural log.
pub fn ppmi(stats: &CooccurrenceStats, i: usize, j: usize) -> f64 {
    let cij = stats.pair(i, j);
    if cij == 0 || stats.window_count == 0 {
        return 0.0;
    }
    let n = stats.window_count as f64;
    let pij = cij as f64 / n;
    let pi = stats.unigram(i) as f64 / n;
    let pj = stats.unigram(j) as f64 / n;
    (pij / (pi * pj)).ln().max(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphConfig {
    pub window_size: usize,
    pub ppmi_threshold: f64,
    pub top_k_per_node: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            window_size: 3,
            ppmi_threshold: 0.0,
            top_k_per_node: 16,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(Error::Config("window_size must be >= 2".into()));
        }
        if !(self.ppmi_threshold >= 0.0 && self.ppmi_threshold.is_finite()) {
            return Err(Error::Config("ppmi_threshold must be >= 0".into()));
        }
        if self.top_k_per_node == 0 {
            return Err(Error::Config("top_k_per_node must be >= 1".into()));
        }
        Ok(())
    }
}

/// Keeps, for every node, its `k` heaviest incident candidate edges (ties go
/// to the lower neighbor index). An edge survives if either endpoint keeps
/// it. Output is sorted by endpoint pair.
pub fn select_edges(n: usize, candidates: &[(usize, usize, f64)], k: usize) -> Vec<(usize, usize, f64)> {
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(a, b, _)) in candidates.iter().enumerate() {
        incident[a].push((e, b));
        incident[b].push((e, a));
    }
    let mut keep = vec![false; candidates.len()];
    for list in &mut incident {
        list.sort_by(|&(ea, na), &(eb, nb)| {
            candidates[eb]
                .2
                .total_cmp(&candidates[ea].2)
                .then(na.cmp(&nb))
        });
        for &(e, _) in list.iter().take(k) {
            keep[e] = true;
        }
    }
    let mut out: Vec<(usize, usize, f64)> = candidates
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&(a, b, w), _)| if a <= b { (a, b, w) } else { (b, a, w) })
        .collect();
    out.sort_by_key(|&(a, b, _)| (a, b));
    out
}

/// A document's word graph.
#[derive(Clone, Debug, PartialEq)]
pub struct TextGraph {
    /// Distinct token ids in first-occurrence order; node `v` is `nodes[v]`.
    pub nodes: Vec<usize>,
    /// Symmetric PPMI adjacency with zero diagonal.
    pub adjacency: Csr,
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
    pub normalized: Csr,
}

impl TextGraph {
    /// Builds the graph over `nodes` (distinct token ids) from precomputed stats.
    pub fn from_stats(nodes: Vec<usize>, stats: &CooccurrenceStats, cfg: &GraphConfig) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let n = nodes.len();
        let mut candidates = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let w = ppmi(stats, nodes[a], nodes[b]);
                if w > cfg.ppmi_threshold {
                    candidates.push((a, b, w));
                }
            }
        }
        let kept = select_edges(n, &candidates, cfg.top_k_per_node);
        let trips: Vec<_> = kept
            .iter()
            .flat_map(|&(a, b, w)| [(a, b, w), (b, a, w)])
            .collect();
        let adjacency = to_csr(&trips, n)?;
        let normalized = normalize(&adjacency);
        Ok(TextGraph {
            nodes,
            adjacency,
            normalized,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Adjacency lists; with `include_self` every node lists itself too.
    pub fn neighbor_lists(&self, include_self: bool) -> Vec<Vec<usize>> {
        (0..self.node_count())
            .map(|v| {
                let mut list: Vec<usize> = self.adjacency.row(v).map(|(u, _)| u).collect();
                if include_self {
                    if let Err(pos) = list.binary_search(&v) {
                        list.insert(pos, v);
                    }
                }
                list
            })
            .collect()
    }
}

/// Builds the word graph of one document.
pub fn build_graph(ids: &[usize], cfg: &GraphConfig) -> Result<TextGraph> {
    if ids.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let mut nodes = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &t in ids {
        if seen.insert(t) {
            nodes.push(t);
        }
    }
    let stats = cooccurrence(ids, cfg.window_size);
    TextGraph::from_stats(nodes, &stats, cfg)
}

/// Symmetric normalization with self-loops: `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn normalize(a: &Csr) -> Csr {
    let n = a.nrows();
    let degree: Vec<f64> = (0..n).map(|i| 1.0 + a.row(i).map(|(_, v)| v).sum::<f64>()).collect();
    let mut trips = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        let mut diag_seen = false;
        for (j, v) in a.row(i) {
            let v = if i == j {
                diag_seen = true;
                v + 1.0
            } else {
                v
            };
            trips.push((i, j, v / (degree[i] * degree[j]).sqrt()));
        }
        if !diag_seen {
            trips.push((i, i, 1.0 / degree[i]));
        }
    }
    to_csr(&trips, n).expect("normalize preserves a valid pattern")
}

/// Graph Laplacian `L = D - A`.
pub fn laplacian(a: &Csr) -> Csr {
    let n = a.nrows();
    let mut trips = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        let degree: f64 = a.row(i).map(|(_, v)| v).sum();
        let mut diag_seen = false;
        for (j, v) in a.row(i) {
            if i == j {
                diag_seen = true;
                trips.push((i, i, degree - v));
            } else {
                trips.push((i, j, -v));
            }
        }
        if !diag_seen {
            trips.push((i, i, degree));
        }
    }
    to_csr(&trips, n).expect("laplacian preserves a valid pattern")
}
