//! Evaluation against ground truth: optimal cluster matching, clustering
//! MSE and purity, and held-out perplexity for topic models.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::lda::{Corpus, LdaState};
use crate::rng::{sample_categorical, RandomStream};

/// Result of a minimum-cost assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Column matched to each row; `None` for rows left over when there
    /// are more rows than columns.
    pub assignment: Vec<Option<usize>>,
    /// Summed cost of the real (row, column) pairs.
    pub cost: f64,
    /// Rows or columns that had to be matched to padding.
    pub unmatched: usize,
    /// Cost used for padded cells of a rectangular matrix.
    pub padding: Option<f64>,
}

impl Matching {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Minimum-cost matching of every row of an `a × b` matrix (row-major,
/// `a <= b`) to a distinct column, by the O(a²b) shortest augmenting path
/// method with row/column potentials.
fn hungarian_rect(cost: &[f64], a: usize, b: usize) -> Vec<usize> {
    debug_assert!(a <= b);
    // 1-based arrays with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; a + 1];
    let mut v = vec![0.0; b + 1];
    let mut p = vec![0usize; b + 1];
    let mut way = vec![0usize; b + 1];
    let mut minv = vec![inf; b + 1];
    let mut used = vec![false; b + 1];
    for i in 1..=a {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=b {
                if !used[j] {
                    let cur = cost[(i0 - 1) * b + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=b {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; a];
    for j in 1..=b {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Least total cost of matching `min(|rows|, |cols|)` pairs drawn from the
/// given rows and columns of a `width`-column matrix.
fn best_partial(cost: &[f64], width: usize, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    if rows.len() <= cols.len() {
        let sub: Vec<f64> = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| cost[r * width + c]))
            .collect();
        let m = hungarian_rect(&sub, rows.len(), cols.len());
        m.iter().enumerate().map(|(i, &j)| sub[i * cols.len() + j]).sum()
    } else {
        let sub: Vec<f64> = cols
            .iter()
            .flat_map(|&c| rows.iter().map(move |&r| cost[r * width + c]))
            .collect();
        let m = hungarian_rect(&sub, cols.len(), rows.len());
        m.iter().enumerate().map(|(i, &j)| sub[i * rows.len() + j]).sum()
    }
}

/// Optimal assignment, choosing the lexicographically smallest one among
/// ties with "unmatched" ordered after every real column: rows are fixed
/// one at a time to the lowest choice that still admits an optimal
/// completion.
fn lexicographic_optimum(cost: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    let all_rows: Vec<usize> = (0..rows).collect();
    let mut free_cols: Vec<usize> = (0..cols).collect();
    let best = best_partial(cost, cols, &all_rows, &free_cols);
    let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-9 * scale * rows.max(cols) as f64;
    let mut out = Vec::with_capacity(rows);
    let mut prefix_cost = 0.0;
    for r in 0..rows {
        let rest_rows = &all_rows[r + 1..];
        let mut pick = None;
        for (k, &c) in free_cols.iter().enumerate() {
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            let total = prefix_cost + cost[r * cols + c] + best_partial(cost, cols, rest_rows, &rest_cols);
            if total <= best + tol {
                pick = Some(k);
                break;
            }
        }
        match pick {
            Some(k) => {
                let c = free_cols.remove(k);
                prefix_cost += cost[r * cols + c];
                out.push(Some(c));
            }
            // only reachable while rows outnumber the columns left
            None => out.push(None),
        }
    }
    out
}

/// Minimum-cost assignment of rows to columns.
///
/// Rectangular inputs are treated as padded to square with `1e3 ×` the
/// largest absolute entry (at least 1); padded pairs are reported as
/// unmatched and excluded from `cost`. Among optimal assignments the
/// lexicographically smallest one is returned.
pub fn hungarian_min_cost(cost: &[f64], rows: usize, cols: usize) -> Result<Matching> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("cost matrix must be nonempty"));
    }
    if cost.len() != rows * cols {
        return Err(Error::invalid(format!(
            "{} entries for a {rows}×{cols} matrix",
            cost.len()
        )));
    }
    if let Some(x) = cost.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite cost {x}")));
    }
    let padding = (rows != cols)
        .then(|| 1e3 * cost.iter().fold(1.0f64, |a, c| a.max(c.abs())));
    let assignment = lexicographic_optimum(cost, rows, cols);
    let cost_sum = assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r * cols + c]))
        .sum();
    Ok(Matching {
        assignment,
        cost: cost_sum,
        unmatched: rows.abs_diff(cols),
        padding,
    })
}

/// Matched clustering error.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMse {
    /// Mean squared Euclidean distance over matched pairs.
    pub mse: f64,
    /// `(inferred index, true index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Number of clusters left unmatched because the counts differ.
    pub unmatched: usize,
    /// Padding cost those clusters would add, reported on its own.
    pub unmatched_penalty: f64,
}

/// Matches inferred to true centers by minimum total Euclidean distance,
/// then averages squared distances over the matched pairs.
pub fn cluster_mse(inferred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<ClusterMse> {
    if inferred.is_empty() || truth.is_empty() {
        return Err(Error::invalid("center sets must be nonempty"));
    }
    let dim = truth[0].len();
    if inferred.iter().chain(truth).any(|c| c.len() != dim) {
        return Err(Error::invalid("centers differ in dimension"));
    }
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let cost: Vec<f64> = inferred
        .iter()
        .flat_map(|a| truth.iter().map(move |b| sq(a, b).sqrt()))
        .collect();
    let m = hungarian_min_cost(&cost, inferred.len(), truth.len())?;
    let pairs: Vec<(usize, usize)> = m.pairs().collect();
    let mse = pairs
        .iter()
        .map(|&(i, j)| sq(&inferred[i], &truth[j]))
        .sum::<f64>()
        / pairs.len() as f64;
    Ok(ClusterMse {
        mse,
        unmatched: m.unmatched,
        unmatched_penalty: m.padding.unwrap_or(0.0) * m.unmatched as f64,
        pairs,
    })
}

/// Cluster-by-class counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[i][j]`: members of cluster `i` in class `j`.
    pub counts: Vec<Vec<usize>>,
    pub total: usize,
}

impl ContingencyTable {
    pub fn new<A: Ord + Copy, B: Ord + Copy>(clusters: &[A], classes: &[B]) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::invalid("purity of an empty assignment"));
        }
        if clusters.len() != classes.len() {
            return Err(Error::invalid(format!(
                "{} assignments but {} labels",
                clusters.len(),
                classes.len()
            )));
        }
        let ai = dense_index(clusters);
        let bi = dense_index(classes);
        let mut counts = vec![vec![0; bi.len()]; ai.len()];
        for (x, y) in clusters.iter().zip(classes) {
            counts[ai[x]][bi[y]] += 1;
        }
        Ok(ContingencyTable {
            counts,
            total: clusters.len(),
        })
    }

    /// `Σ_i (N_i / N) · max_j N_ij / N_i`.
    pub fn purity(&self) -> f64 {
        let hit: usize = self
            .counts
            .iter()
            .map(|row| row.iter().copied().max().unwrap_or(0))
            .sum();
        hit as f64 / self.total as f64
    }
}

fn dense_index<T: Ord + Copy>(xs: &[T]) -> BTreeMap<T, usize> {
    let mut map = BTreeMap::new();
    for &x in xs {
        map.entry(x).or_insert(0);
    }
    for (i, v) in map.values_mut().enumerate() {
        *v = i;
    }
    map
}

pub fn purity<A: Ord + Copy, B: Ord + Copy>(clusters: &[A], classes: &[B]) -> Result<f64> {
    Ok(ContingencyTable::new(clusters, classes)?.purity())
}

/// Smoothed topic-word estimate of one chain, enough to score held-out text.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicSnapshot {
    pub topics: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    /// `phi[w * K + k] = (n_wk + eta) / (n_k + V eta)`
    pub phi: Vec<f64>,
}

impl TopicSnapshot {
    pub fn from_state(state: &LdaState) -> Self {
        TopicSnapshot {
            topics: state.topics(),
            vocab_size: state.corpus().vocab_size(),
            alpha: state.config().alpha,
            phi: state.phi_hat(),
        }
    }
}

/// Number of clamped passes used to fold in each held-out document.
pub const FOLD_IN_PASSES: usize = 50;

/// Topic counts of a held-out document after `passes` Gibbs sweeps with
/// `phi` frozen: each token is drawn from `phi_k[w] · (n_dk + alpha)`.
pub fn fold_in(snapshot: &TopicSnapshot, doc: &[usize], passes: usize, rng: &mut RandomStream) -> Vec<u32> {
    let k = snapshot.topics;
    let mut counts = vec![0u32; k];
    let mut z: Vec<usize> = doc.iter().map(|_| rng.random_range(0..k)).collect();
    for &t in &z {
        counts[t] += 1;
    }
    let mut weights = vec![0.0; k];
    for _ in 0..passes {
        for (i, &w) in doc.iter().enumerate() {
            counts[z[i]] -= 1;
            for j in 0..k {
                weights[j] = snapshot.phi[w * k + j] * (counts[j] as f64 + snapshot.alpha);
            }
            let t = sample_categorical(&weights, rng).expect("phi entries are positive");
            z[i] = t;
            counts[t] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerplexityNorm {
    /// `(1/D_test) Σ_d (1/n_d) ln p(w_d)`.
    #[default]
    PerDocument,
    /// `Σ_d ln p(w_d) / Σ_d n_d`.
    PerToken,
}

impl std::str::FromStr for PerplexityNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-document" | "per_document" => Ok(PerplexityNorm::PerDocument),
            "per-token" | "per_token" => Ok(PerplexityNorm::PerToken),
            other => Err(Error::invalid(format!("unknown perplexity normalization `{other}`"))),
        }
    }
}

/// Perplexity given fold-in counts `doc_topic[s][d]` for every chain `s`
/// and test document `d`. Chains are mixed inside the log:
/// `ln p(w_d) = Σ_w ln (1/S) Σ_s Σ_k theta^s_{k|d} phi^s_{w|k}` with
/// `theta^s_{k|d} = (alpha + N_kd) / (K alpha + n_d)`.
pub fn perplexity_from_counts(
    test: &Corpus,
    chains: &[TopicSnapshot],
    doc_topic: &[Vec<Vec<u32>>],
    norm: PerplexityNorm,
) -> Result<f64> {
    check_chains(test, chains)?;
    if doc_topic.len() != chains.len() || doc_topic.iter().any(|c| c.len() != test.num_docs()) {
        return Err(Error::invalid("fold-in counts do not match chains and documents"));
    }
    let s = chains.len() as f64;
    let mut acc = 0.0;
    let mut docs = 0usize;
    let mut tokens = 0usize;
    for d in 0..test.num_docs() {
        let doc = test.doc(d);
        if doc.is_empty() {
            continue;
        }
        let n_d = doc.len() as f64;
        let thetas: Vec<Vec<f64>> = chains
            .iter()
            .zip(doc_topic)
            .map(|(c, counts)| {
                let denom = c.topics as f64 * c.alpha + n_d;
                counts[d].iter().map(|&n| (c.alpha + n as f64) / denom).collect()
            })
            .collect();
        let mut log_p = 0.0;
        for &w in doc {
            let mut p = 0.0;
            for (c, theta) in chains.iter().zip(&thetas) {
                let k = c.topics;
                p += (0..k).map(|j| theta[j] * c.phi[w * k + j]).sum::<f64>();
            }
            log_p += (p / s).ln();
        }
        match norm {
            PerplexityNorm::PerDocument => acc += log_p / n_d,
            PerplexityNorm::PerToken => acc += log_p,
        }
        docs += 1;
        tokens += doc.len();
    }
    if docs == 0 {
        return Err(Error::invalid("test corpus has no tokens"));
    }
    let mean = match norm {
        PerplexityNorm::PerDocument => acc / docs as f64,
        PerplexityNorm::PerToken => acc / tokens as f64,
    };
    Ok((-mean).exp())
}

/// Folds every test document into every chain, then scores it.
pub fn perplexity(
    test: &Corpus,
    chains: &[TopicSnapshot],
    passes: usize,
    norm: PerplexityNorm,
    rng: &mut RandomStream,
) -> Result<f64> {
    check_chains(test, chains)?;
    let doc_topic: Vec<Vec<Vec<u32>>> = chains
        .iter()
        .map(|c| test.docs().iter().map(|doc| fold_in(c, doc, passes, rng)).collect())
        .collect();
    perplexity_from_counts(test, chains, &doc_topic, norm)
}

fn check_chains(test: &Corpus, chains: &[TopicSnapshot]) -> Result<()> {
    let first = chains
        .first()
        .ok_or_else(|| Error::invalid("perplexity needs at least one chain"))?;
    let v = first.vocab_size;
    if chains.iter().any(|c| c.vocab_size != v || c.phi.len() != v * c.topics) {
        return Err(Error::invalid("chains disagree on vocabulary size"));
    }
    let mut bad: Vec<usize> = test.docs().iter().flatten().copied().filter(|&w| w >= v).collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::UnknownWord(bad));
    }
    Ok(())
}
