//! Node- and graph-level network statistics computed on graph draws.
//!
//! All statistics are deterministic. Spectral quantities use power
//! iteration (tolerance 1e-10, capped iterations) with deterministic
//! starting vectors so repeated runs agree bit-for-bit.

use std::collections::HashSet;

use crate::graphs::GraphSample;
use crate::par::map_slice;
use crate::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

/// Per-node statistics for a single graph.
#[derive(Clone, Debug)]
pub struct NodeStats {
    pub degree: Vec<f64>,
    pub eigenvector_centrality: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub closeness: Vec<f64>,
    pub clustering: Vec<f64>,
    pub support: Vec<f64>,
    /// BFS distance from the seed node; None when unreachable.
    pub distance_from_seed: Vec<Option<f64>>,
}

/// Graph-level statistics; None marks quantities that are undefined on
/// the given graph (e.g. anything on an empty graph).
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStats {
    pub max_eigenvalue: Option<f64>,
    pub avg_path_length: Option<f64>,
    pub proximity: Option<f64>,
    /// Diameter of the giant component.
    pub diameter: Option<f64>,
    /// Global clustering: 3 * triangles / wedges.
    pub clustering: Option<f64>,
    pub n_components: Option<f64>,
    pub giant_fraction: Option<f64>,
    pub eigenvector_cut: Option<f64>,
    pub density: Option<f64>,
}

/// How the Fiedler vector is turned into a bipartition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutSplit {
    /// Nodes at or below the median go to the low side (default; keeps
    /// the two sides balanced).
    Median,
    /// Split by sign of the Fiedler entry (zero goes to the low side).
    Sign,
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Connected components as (label per node, component node lists sorted
/// by decreasing size then smallest member).
fn components(adj: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = adj.len();
    let mut label = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![s];
        label[s] = id;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = id;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    // Order: giant first; ties broken by smallest member for determinism.
    let mut order: Vec<usize> = (0..comps.len()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(comps[c].len()), comps[c][0]));
    let remap: Vec<usize> = {
        let mut r = vec![0; comps.len()];
        for (new_id, &old_id) in order.iter().enumerate() {
            r[old_id] = new_id;
        }
        r
    };
    let label: Vec<usize> = label.into_iter().map(|l| remap[l]).collect();
    let comps: Vec<Vec<usize>> = order.into_iter().map(|c| comps[c].clone()).collect();
    (label, comps)
}

fn edge_set(g: &GraphSample) -> HashSet<(usize, usize)> {
    g.edges.iter().copied().collect()
}

fn has_edge(set: &HashSet<(usize, usize)>, u: usize, v: usize) -> bool {
    set.contains(&(u.min(v), u.max(v)))
}

/// Power iteration for the dominant eigenpair of A restricted to the
/// node subset, using the shift A + I so bipartite components cannot
/// oscillate. Returns (eigenvalue of A, eigenvector with unit inf-norm).
fn dominant_eigenpair(adj: &[Vec<usize>], nodes: &[usize]) -> Option<(f64, Vec<f64>)> {
    if nodes.is_empty() {
        return None;
    }
    let sub = subset_adjacency(adj, nodes);
    let k = nodes.len();
    let mut v = vec![1.0 / k as f64; k];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        // w = (A + I) v on the subset.
        let mut w = v.clone();
        for (i, nbs) in sub.iter().enumerate() {
            for &j in nbs {
                w[i] += v[j];
            }
        }
        let norm = w.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if norm == 0.0 {
            return Some((0.0, v));
        }
        for x in w.iter_mut() {
            *x /= norm;
        }
        let diff = w.iter().zip(&v).fold(0.0f64, |a, (&x, &y)| a.max((x - y).abs()));
        v = w;
        lambda = norm - 1.0;
        if diff < POWER_TOL {
            break;
        }
    }
    // Rayleigh refinement of the eigenvalue under A alone.
    let mut av = vec![0.0; k];
    for (i, nbs) in sub.iter().enumerate() {
        for &j in nbs {
            av[i] += v[j];
        }
    }
    let num: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
    let den: f64 = v.iter().map(|x| x * x).sum();
    if den > 0.0 {
        lambda = num / den;
    }
    Some((lambda, v))
}

/// Adjacency of the induced subgraph on `nodes`, re-indexed 0..k.
fn subset_adjacency(adj: &[Vec<usize>], nodes: &[usize]) -> Vec<Vec<usize>> {
    let mut pos = vec![usize::MAX; adj.len()];
    for (i, &v) in nodes.iter().enumerate() {
        pos[v] = i;
    }
    nodes
        .iter()
        .map(|&u| adj[u].iter().filter_map(|&nb| (pos[nb] != usize::MAX).then(|| pos[nb])).collect())
        .collect()
}

/// Deterministic starting vector for the Fiedler iteration: centered
/// positions within the component. Public so oracles can project the
/// same vector onto the exact eigenspace.
pub fn fiedler_start(k: usize) -> Vec<f64> {
    let mean = (k as f64 - 1.0) / 2.0;
    (0..k).map(|i| i as f64 - mean).collect()
}

/// Fiedler vector (eigenvector of the second-smallest Laplacian
/// eigenvalue) of the induced subgraph on `nodes`, via power iteration
/// on cI - L with the constant vector deflated. Returns entries aligned
/// with `nodes`.
fn fiedler_vector(adj: &[Vec<usize>], nodes: &[usize]) -> Option<Vec<f64>> {
    let k = nodes.len();
    if k < 2 {
        return None;
    }
    let sub = subset_adjacency(adj, nodes);
    let deg: Vec<f64> = sub.iter().map(|nbs| nbs.len() as f64).collect();
    // L v = deg.*v - A v on the subset.
    let lap_matvec = |v: &[f64]| -> Vec<f64> {
        let mut w: Vec<f64> = v.iter().zip(&deg).map(|(&x, &d)| d * x).collect();
        for (i, nbs) in sub.iter().enumerate() {
            for &j in nbs {
                w[i] -= v[j];
            }
        }
        w
    };

    // Lanczos with full reorthogonalization on the space orthogonal to
    // the constant kernel. On a connected component the deflated
    // spectrum starts at lambda_2, so the smallest Ritz pair is the
    // Fiedler pair. When the Krylov space is exhausted (small graphs)
    // this is exact; on a degenerate lambda_2 the Ritz vector is the
    // projection of the start vector onto the eigenspace, matching the
    // deterministic start convention.
    let max_steps = (k - 1).min(300);
    let mut q = fiedler_start(k);
    normalize_deflated(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for step in 0..max_steps {
        let mut w = lap_matvec(&q);
        if step > 0 {
            let b = betas[step - 1];
            for (x, p) in w.iter_mut().zip(&basis[step - 1]) {
                *x -= b * p;
            }
        }
        let a: f64 = w.iter().zip(&q).map(|(x, y)| x * y).sum();
        for (x, p) in w.iter_mut().zip(&q) {
            *x -= a * p;
        }
        alphas.push(a);
        // Full reorthogonalization (also re-deflates the constant).
        let mean = w.iter().sum::<f64>() / k as f64;
        for x in w.iter_mut() {
            *x -= mean;
        }
        for p in &basis {
            let d: f64 = w.iter().zip(p).map(|(x, y)| x * y).sum();
            for (x, pv) in w.iter_mut().zip(p) {
                *x -= d * pv;
            }
        }
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b < POWER_TOL {
            break;
        }
        betas.push(b);
        for x in w.iter_mut() {
            *x /= b;
        }
        q = w;
        basis.push(q.clone());
    }

    // Smallest Ritz pair of the tridiagonal.
    let j = alphas.len();
    let mut t = nalgebra::DMatrix::zeros(j, j);
    for i in 0..j {
        t[(i, i)] = alphas[i];
        if i + 1 < j {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t.clone());
    // Re-derive each column's eigenvalue as its Rayleigh quotient:
    // SymmetricEigen's eigenvalue/column pairing is unreliable for
    // matrices with repeated eigenvalues (observed in nalgebra 0.33).
    let ritz: Vec<f64> = (0..j)
        .map(|c| {
            let v = eig.eigenvectors.column(c);
            (v.transpose() * &t * v)[(0, 0)] / v.norm_squared()
        })
        .collect();
    // Smallest Ritz value whose Ritz vector has non-negligible overlap
    // with the start vector (first Lanczos coefficient). Pairs seeded
    // only by round-off noise are skipped so the selection matches the
    // exact-arithmetic projection convention.
    let best = (0..j)
        .filter(|&c| eig.eigenvectors[(0, c)].abs() >= 1e-8)
        .min_by(|&a, &b| ritz[a].partial_cmp(&ritz[b]).unwrap())
        .or_else(|| (0..j).min_by(|&a, &b| ritz[a].partial_cmp(&ritz[b]).unwrap()))?;
    let s = eig.eigenvectors.column(best);
    let mut v = vec![0.0; k];
    for (coef, p) in s.iter().zip(&basis) {
        for (x, pv) in v.iter_mut().zip(p) {
            *x += coef * pv;
        }
    }
    normalize_deflated(&mut v);
    // Deterministic orientation: positive alignment with the start
    // vector (the first Lanczos coefficient is nonzero on an unreduced
    // tridiagonal, so this is well defined).
    let start = fiedler_start(k);
    let align: f64 = v.iter().zip(&start).map(|(x, s)| x * s).sum();
    if align < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    Some(v)
}

/// Remove the constant component and scale to unit 2-norm.
fn normalize_deflated(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Bipartition the component by the Fiedler vector and return the share
/// of the component's edges crossing the split.
pub fn eigenvector_cut_value(
    g: &GraphSample,
    split: CutSplit,
) -> Option<f64> {
    let adj = g.adjacency();
    let (_, comps) = components(&adj);
    let giant = comps.first()?;
    if giant.len() < 2 {
        return None;
    }
    let fiedler = fiedler_vector(&adj, giant)?;
    cut_share_from_vector(g, giant, &fiedler, split)
}

/// Shared by the implementation and the exact-eigendecomposition oracle:
/// given a Fiedler vector over `giant`, apply the split rule and count
/// crossing edges among the component's edges.
pub fn cut_share_from_vector(
    g: &GraphSample,
    giant: &[usize],
    fiedler: &[f64],
    split: CutSplit,
) -> Option<f64> {
    let threshold = match split {
        CutSplit::Median => median(fiedler),
        CutSplit::Sign => 0.0,
    };
    // Ties at the threshold go to the low side deterministically; the
    // tolerance absorbs round-off on entries that are exactly tied in
    // exact arithmetic (the vector has unit norm, so 1e-9 is relative).
    let low: HashSet<usize> = giant
        .iter()
        .zip(fiedler)
        .filter(|(_, &f)| f <= threshold + 1e-9)
        .map(|(&u, _)| u)
        .collect();
    let members: HashSet<usize> = giant.iter().copied().collect();
    let mut total = 0usize;
    let mut cross = 0usize;
    for &(u, v) in &g.edges {
        if members.contains(&u) && members.contains(&v) {
            total += 1;
            if low.contains(&u) != low.contains(&v) {
                cross += 1;
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(cross as f64 / total as f64)
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Brandes accumulation of shortest-path betweenness; each unordered
/// pair counted once.
pub fn betweenness(g: &GraphSample) -> Vec<f64> {
    let adj = g.adjacency();
    let n = g.n;
    let mut bc = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::new();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![-1i64; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            stack.push(u);
            for &v in &adj[u] {
                if dist[v] < 0 {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if dist[v] == dist[u] + 1 {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &u in &preds[w] {
                delta[u] += sigma[u] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    for x in bc.iter_mut() {
        *x /= 2.0;
    }
    bc
}

/// Diffusion centrality: row sums of sum_{t=1..T} (qA)^t, computed by
/// iterated matrix-vector products.
pub fn diffusion_centrality(g: &GraphSample, q: f64, t: usize) -> Result<Vec<f64>> {
    if q <= 0.0 || t == 0 {
        return Err(Error::Validation("diffusion centrality needs q > 0 and T >= 1".into()));
    }
    let adj = g.adjacency();
    let n = g.n;
    let mut w = vec![1.0; n];
    let mut acc = vec![0.0; n];
    for _ in 0..t {
        let mut next = vec![0.0; n];
        for u in 0..n {
            for &v in &adj[u] {
                next[u] += q * w[v];
            }
        }
        for (a, x) in acc.iter_mut().zip(&next) {
            *a += x;
        }
        w = next;
    }
    Ok(acc)
}

/// All node statistics for one graph. The seed for distance-from-seed
/// defaults to the smallest node id.
pub fn compute_node_stats(g: &GraphSample, seed_node: Option<usize>) -> Result<NodeStats> {
    let n = g.n;
    let adj = g.adjacency();
    let edges = edge_set(g);
    let seed = seed_node.unwrap_or(0);
    if n > 0 && seed >= n {
        return Err(Error::Validation(format!("seed node {seed} out of range (n = {n})")));
    }

    let degree: Vec<f64> = adj.iter().map(|a| a.len() as f64).collect();

    // Eigenvector centrality on the giant component, unit inf-norm,
    // zeros elsewhere.
    let (_, comps) = components(&adj);
    let mut eigen = vec![0.0; n];
    if let Some(giant) = comps.first() {
        if let Some((_, v)) = dominant_eigenpair(&adj, giant) {
            for (&node, &val) in giant.iter().zip(&v) {
                eigen[node] = val;
            }
        }
    }

    let betw = betweenness(g);

    let closeness: Vec<f64> = (0..n)
        .map(|u| {
            if n < 2 {
                return 0.0;
            }
            let dist = bfs(&adj, u);
            let total: f64 = dist
                .iter()
                .enumerate()
                .filter(|&(v, _)| v != u)
                .map(|(_, d)| d.map_or(0.0, |x| 1.0 / x as f64))
                .sum();
            total / (n - 1) as f64
        })
        .collect();

    let mut triangles = vec![0.0f64; n];
    for u in 0..n {
        let nb = &adj[u];
        for a in 0..nb.len() {
            for b in (a + 1)..nb.len() {
                if has_edge(&edges, nb[a], nb[b]) {
                    triangles[u] += 1.0;
                }
            }
        }
    }
    let clustering: Vec<f64> = (0..n)
        .map(|u| {
            let d = degree[u];
            if d < 2.0 {
                0.0
            } else {
                triangles[u] / (d * (d - 1.0) / 2.0)
            }
        })
        .collect();

    let support: Vec<f64> = (0..n)
        .map(|u| {
            if adj[u].is_empty() {
                return 0.0;
            }
            let supported = adj[u]
                .iter()
                .filter(|&&v| adj[u].iter().any(|&w| w != v && has_edge(&edges, v, w)))
                .count();
            supported as f64 / adj[u].len() as f64
        })
        .collect();

    let distance_from_seed: Vec<Option<f64>> = if n == 0 {
        Vec::new()
    } else {
        bfs(&adj, seed).into_iter().map(|d| d.map(|x| x as f64)).collect()
    };

    Ok(NodeStats {
        degree,
        eigenvector_centrality: eigen,
        betweenness: betw,
        closeness,
        clustering,
        support,
        distance_from_seed,
    })
}

/// All graph-level statistics for one graph.
pub fn compute_graph_stats(g: &GraphSample) -> GraphStats {
    compute_graph_stats_with(g, CutSplit::Median)
}

pub fn compute_graph_stats_with(g: &GraphSample, split: CutSplit) -> GraphStats {
    let n = g.n;
    if n == 0 {
        return GraphStats {
            max_eigenvalue: None,
            avg_path_length: None,
            proximity: None,
            diameter: None,
            clustering: None,
            n_components: None,
            giant_fraction: None,
            eigenvector_cut: None,
            density: None,
        };
    }
    let adj = g.adjacency();
    let (_, comps) = components(&adj);
    let giant = &comps[0];

    let all_nodes: Vec<usize> = (0..n).collect();
    let max_eigenvalue = dominant_eigenpair(&adj, &all_nodes).map(|(l, _)| l);

    // Single BFS pass per node feeds path length, proximity, diameter.
    let mut finite_pairs = 0u64;
    let mut path_sum = 0.0;
    let mut inv_sum = 0.0;
    let mut diameter_val: u32 = 0;
    let giant_set: HashSet<usize> = giant.iter().copied().collect();
    for u in 0..n {
        let dist = bfs(&adj, u);
        for v in 0..n {
            if v == u {
                continue;
            }
            if let Some(d) = dist[v] {
                finite_pairs += 1;
                path_sum += d as f64;
                inv_sum += 1.0 / d as f64;
                if giant_set.contains(&u) && d > diameter_val {
                    diameter_val = d;
                }
            }
        }
    }
    let avg_path_length = if finite_pairs > 0 {
        Some(path_sum / finite_pairs as f64)
    } else {
        None
    };
    let proximity = if n >= 2 {
        Some(inv_sum / (n as f64 * (n as f64 - 1.0)))
    } else {
        None
    };
    let diameter = if giant.len() >= 2 && !g.edges.is_empty() {
        Some(diameter_val as f64)
    } else if giant.len() == 1 {
        Some(0.0)
    } else {
        None
    };

    // Global clustering: 3 * triangles / wedges.
    let edges = edge_set(g);
    let mut tri3 = 0.0;
    let mut wedges = 0.0;
    for u in 0..n {
        let d = adj[u].len() as f64;
        wedges += d * (d - 1.0) / 2.0;
        for a in 0..adj[u].len() {
            for b in (a + 1)..adj[u].len() {
                if has_edge(&edges, adj[u][a], adj[u][b]) {
                    tri3 += 1.0;
                }
            }
        }
    }
    let clustering = if wedges > 0.0 { Some(tri3 / wedges) } else { Some(0.0) };

    GraphStats {
        max_eigenvalue,
        avg_path_length,
        proximity,
        diameter,
        clustering,
        n_components: Some(comps.len() as f64),
        giant_fraction: Some(giant.len() as f64 / n as f64),
        eigenvector_cut: eigenvector_cut_value(g, split),
        density: Some(g.density()),
    }
}

/// Names of node statistics, in the column order used for output.
pub const NODE_STAT_NAMES: [&str; 7] = [
    "degree",
    "eigenvector_centrality",
    "betweenness",
    "closeness",
    "clustering",
    "support",
    "distance_from_seed",
];

/// Names of graph statistics, in output order.
pub const GRAPH_STAT_NAMES: [&str; 9] = [
    "max_eigenvalue",
    "avg_path_length",
    "proximity",
    "diameter",
    "clustering",
    "n_components",
    "giant_fraction",
    "eigenvector_cut",
    "density",
];

impl NodeStats {
    /// Column-ordered view matching [`NODE_STAT_NAMES`]; missing
    /// distances become NaN for aggregation purposes.
    pub fn column(&self, idx: usize) -> Vec<f64> {
        match idx {
            0 => self.degree.clone(),
            1 => self.eigenvector_centrality.clone(),
            2 => self.betweenness.clone(),
            3 => self.closeness.clone(),
            4 => self.clustering.clone(),
            5 => self.support.clone(),
            6 => self
                .distance_from_seed
                .iter()
                .map(|d| d.unwrap_or(f64::NAN))
                .collect(),
            _ => panic!("no node statistic with index {idx}"),
        }
    }
}

impl GraphStats {
    pub fn value(&self, idx: usize) -> Option<f64> {
        match idx {
            0 => self.max_eigenvalue,
            1 => self.avg_path_length,
            2 => self.proximity,
            3 => self.diameter,
            4 => self.clustering,
            5 => self.n_components,
            6 => self.giant_fraction,
            7 => self.eigenvector_cut,
            8 => self.density,
            _ => panic!("no graph statistic with index {idx}"),
        }
    }
}

/// Mean and sample standard deviation, ignoring NaN entries (which mark
/// undefined per-draw values such as unreachable seed distances).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Posterior mean/sd of every node statistic over a set of graph draws;
/// result\[stat\]\[node\] = (mean, sd).
pub fn posterior_node_summaries(per_draw: &[NodeStats]) -> Result<Vec<Vec<(f64, f64)>>> {
    let first = per_draw
        .first()
        .ok_or_else(|| Error::Validation("need at least one graph draw".into()))?;
    let n = first.degree.len();
    let mut out = Vec::with_capacity(NODE_STAT_NAMES.len());
    for s in 0..NODE_STAT_NAMES.len() {
        let cols: Vec<Vec<f64>> = per_draw.iter().map(|d| d.column(s)).collect();
        let mut per_node = Vec::with_capacity(n);
        for i in 0..n {
            let series: Vec<f64> = cols.iter().map(|c| c[i]).collect();
            per_node.push(mean_sd(&series));
        }
        out.push(per_node);
    }
    Ok(out)
}

/// Posterior mean/sd of every graph statistic; result\[stat\] = (mean,
/// sd, number of draws where the statistic was defined).
pub fn posterior_graph_summaries(per_draw: &[GraphStats]) -> Result<Vec<(f64, f64, usize)>> {
    if per_draw.is_empty() {
        return Err(Error::Validation("need at least one graph draw".into()));
    }
    let mut out = Vec::with_capacity(GRAPH_STAT_NAMES.len());
    for s in 0..GRAPH_STAT_NAMES.len() {
        let series: Vec<f64> = per_draw.iter().filter_map(|d| d.value(s)).collect();
        let (m, sd) = mean_sd(&series);
        out.push((m, sd, series.len()));
    }
    Ok(out)
}

/// Batch node statistics over many graphs (parallel per graph).
pub fn node_stats_batch(graphs: &[GraphSample], seed_node: Option<usize>) -> Result<Vec<NodeStats>> {
    map_slice(graphs, |g| compute_node_stats(g, seed_node))
        .into_iter()
        .collect()
}

/// Batch graph statistics over many graphs (parallel per graph).
pub fn graph_stats_batch(graphs: &[GraphSample]) -> Vec<GraphStats> {
    map_slice(graphs, compute_graph_stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn triangle() -> GraphSample {
        GraphSample::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn path3() -> GraphSample {
        GraphSample::new(3, vec![(0, 1), (1, 2)]).unwrap()
    }

    fn star4() -> GraphSample {
        GraphSample::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    /// Two triangles joined by a single bridge edge: 6 nodes, 7 edges.
    fn two_triangles_bridge() -> GraphSample {
        GraphSample::new(
            6,
            vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)],
        )
        .unwrap()
    }

    #[test]
    fn triangle_node_stats() {
        let s = compute_node_stats(&triangle(), None).unwrap();
        for i in 0..3 {
            assert_eq!(s.degree[i], 2.0);
            assert_eq!(s.clustering[i], 1.0);
            assert_eq!(s.support[i], 1.0);
            assert_eq!(s.betweenness[i], 0.0);
            assert_relative_eq!(s.closeness[i], 1.0, max_relative = 1e-12);
            assert_relative_eq!(s.eigenvector_centrality[i], 1.0, epsilon = 1e-8);
        }
        assert_eq!(s.distance_from_seed, vec![Some(0.0), Some(1.0), Some(1.0)]);
    }

    #[test]
    fn star_betweenness() {
        let s = compute_node_stats(&star4(), None).unwrap();
        assert_relative_eq!(s.betweenness[0], 3.0, max_relative = 1e-12);
        for leaf in 1..4 {
            assert_eq!(s.betweenness[leaf], 0.0);
        }
    }

    #[test]
    fn path_closeness() {
        let s = compute_node_stats(&path3(), None).unwrap();
        assert_relative_eq!(s.closeness[1], 1.0, max_relative = 1e-12);
        assert_relative_eq!(s.closeness[0], 0.75, max_relative = 1e-12);
    }

    #[test]
    fn triangle_graph_stats() {
        let g = compute_graph_stats(&triangle());
        assert_relative_eq!(g.max_eigenvalue.unwrap(), 2.0, epsilon = 1e-8);
        assert_eq!(g.diameter, Some(1.0));
        assert_eq!(g.clustering, Some(1.0));
        assert_eq!(g.n_components, Some(1.0));
        assert_eq!(g.giant_fraction, Some(1.0));
        assert_relative_eq!(g.proximity.unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn bridge_cut_is_one_seventh() {
        let cut = eigenvector_cut_value(&two_triangles_bridge(), CutSplit::Median).unwrap();
        assert_relative_eq!(cut, 1.0 / 7.0, max_relative = 1e-9);
        // The sign split agrees here: the Fiedler vector separates the
        // two cliques around zero.
        let cut_sign = eigenvector_cut_value(&two_triangles_bridge(), CutSplit::Sign).unwrap();
        assert_relative_eq!(cut_sign, 1.0 / 7.0, max_relative = 1e-9);
    }

    #[test]
    fn complete_k4_balanced_cut() {
        let k4 = GraphSample::new(4, (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))))
            .unwrap();
        let cut = eigenvector_cut_value(&k4, CutSplit::Median).unwrap();
        assert_relative_eq!(cut, 4.0 / 6.0, max_relative = 1e-9);
    }

    #[test]
    fn diffusion_centrality_cases() {
        // q = 1, T = 1 is the degree vector.
        let dc = diffusion_centrality(&star4(), 1.0, 1).unwrap();
        assert_eq!(dc, vec![3.0, 1.0, 1.0, 1.0]);
        // Path, q = 1, T = 2: row sums of A + A^2, checked against the
        // 3x3 matrix-power computation A1 = [1,2,1], A^2 1 = [2,2,2].
        let dc = diffusion_centrality(&path3(), 1.0, 2).unwrap();
        assert_eq!(dc, vec![3.0, 4.0, 3.0]);
        // q -> 0 limit.
        let dc = diffusion_centrality(&path3(), 1e-12, 2).unwrap();
        assert!(dc.iter().all(|&x| x < 1e-9));
        assert!(diffusion_centrality(&path3(), 0.0, 2).is_err());
    }

    #[test]
    fn eigenvector_centrality_residual_on_giant() {
        // Giant = bridge graph plus an isolated pair elsewhere.
        let mut edges = two_triangles_bridge().edges;
        edges.push((6, 7));
        let g = GraphSample::new(8, edges).unwrap();
        let s = compute_node_stats(&g, None).unwrap();
        let gstats = compute_graph_stats(&g);
        // Residual check A v = lambda v on the giant component. The
        // isolated pair has the smaller eigenvalue (1 < lambda_giant).
        let adj = g.adjacency();
        let lambda = gstats.max_eigenvalue.unwrap();
        for u in 0..6 {
            let av: f64 = adj[u].iter().map(|&v| s.eigenvector_centrality[v]).sum();
            assert!(
                (av - lambda * s.eigenvector_centrality[u]).abs() < 1e-7,
                "residual at node {u}"
            );
        }
        // Zeros off the giant component.
        assert_eq!(s.eigenvector_centrality[6], 0.0);
        assert_eq!(s.eigenvector_centrality[7], 0.0);
    }

    #[test]
    fn disconnected_counts_and_missing_distances() {
        let g = GraphSample::new(5, vec![(0, 1), (1, 2)]).unwrap();
        let gs = compute_graph_stats(&g);
        assert_eq!(gs.n_components, Some(3.0));
        assert_relative_eq!(gs.giant_fraction.unwrap(), 0.6, max_relative = 1e-12);
        let ns = compute_node_stats(&g, None).unwrap();
        assert_eq!(ns.distance_from_seed[3], None);
        assert_eq!(ns.distance_from_seed[4], None);
    }

    #[test]
    fn empty_graph_all_missing() {
        let g = GraphSample::new(0, vec![]).unwrap();
        let gs = compute_graph_stats(&g);
        assert_eq!(gs.max_eigenvalue, None);
        assert_eq!(gs.avg_path_length, None);
        assert_eq!(gs.eigenvector_cut, None);
    }

    #[test]
    fn summaries_single_graph_sd_zero() {
        let stats = vec![compute_node_stats(&triangle(), None).unwrap()];
        let summ = posterior_node_summaries(&stats).unwrap();
        assert_eq!(summ[0][0], (2.0, 0.0));
        let gsumm = posterior_graph_summaries(&[compute_graph_stats(&triangle())]).unwrap();
        assert_eq!(gsumm[5], (1.0, 0.0, 1)); // one component
    }

    #[test]
    fn lln_mean_degree_approaches_row_sums() {
        use rand::SeedableRng;
        let mut p = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    p[i][j] = 0.2 + 0.05 * ((i + j) as f64);
                }
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = 2000;
        let graphs: Vec<GraphSample> = (0..s)
            .map(|_| crate::graphs::sample_graph(&p, &mut rng).unwrap())
            .collect();
        let stats = node_stats_batch(&graphs, None).unwrap();
        let summ = posterior_node_summaries(&stats).unwrap();
        for i in 0..5 {
            let expect: f64 = p[i].iter().sum();
            let (mean, sd) = summ[0][i];
            let se = sd / (s as f64).sqrt();
            assert!(
                (mean - expect).abs() < 3.0 * se.max(0.01),
                "node {i}: mean {mean} vs {expect}"
            );
        }
    }

    #[test]
    fn edge_frequency_matches_probability() {
        use rand::SeedableRng;
        let mut p = vec![vec![0.0; 3]; 3];
        p[1][2] = 0.4;
        p[2][1] = 0.4;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let s = 4000;
        let hits = (0..s)
            .filter(|_| {
                crate::graphs::sample_graph(&p, &mut rng)
                    .unwrap()
                    .edges
                    .contains(&(1, 2))
            })
            .count();
        let freq = hits as f64 / s as f64;
        let se = (0.4f64 * 0.6 / s as f64).sqrt();
        assert!((freq - 0.4).abs() < 3.0 * se);
    }
}
