//! Link probabilities and graph draws from a fitted parameter point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::impute::impute_non_ard;
use crate::likelihood::{degree_from_nu, nu_from_degree};
use crate::model::ArdDataset;
use crate::sampler::PosteriorDraws;
use crate::sphere::UnitVector;
use crate::{Error, Result};

/// Undirected, unweighted graph stored as a sorted edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    pub n: usize,
    /// Unordered pairs with u < v, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
}

impl GraphSample {
    /// Builds a graph, normalizing edge orientation and rejecting
    /// self-loops, duplicates, and out-of-range endpoints.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut normd: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Validation(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Validation(format!("edge ({a},{b}) out of range (n={n})")));
            }
            normd.push((a.min(b), a.max(b)));
        }
        normd.sort_unstable();
        normd.dedup();
        Ok(GraphSample { n, edges: normd })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Neighbor lists, sorted per node.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        adj
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / (self.n as f64 * (self.n as f64 - 1.0))
    }
}

/// Result of the probability construction: the clamped matrix plus how
/// many cells exceeded 1 before clamping.
pub struct LinkProbabilities {
    pub p: Vec<Vec<f64>>,
    pub clamped_cells: usize,
}

/// Pairwise link probabilities P_ij proportional to
/// exp(nu_i + nu_j + zeta z_i'z_j), normalized so the off-diagonal sum
/// equals the total expected degree, then clamped to [0, 1] with a zero
/// diagonal. Computed in log space with max-subtraction so large nu
/// cannot overflow. The pre-clamp row-sum identity is asserted.
pub fn link_probability_matrix(
    nu: &[f64],
    z: &[UnitVector],
    zeta: f64,
    expected_degrees: &[f64],
) -> Result<LinkProbabilities> {
    let n = nu.len();
    if z.len() != n || expected_degrees.len() != n {
        return Err(Error::Validation("nu, z, expected_degrees lengths differ".into()));
    }
    if n < 2 {
        return Ok(LinkProbabilities { p: vec![vec![0.0; n]; n], clamped_cells: 0 });
    }
    let total_degree: f64 = expected_degrees.iter().sum();

    // Scores and their running maximum.
    let mut score = vec![vec![f64::NEG_INFINITY; n]; n];
    let mut max_s = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = nu[i] + nu[j] + zeta * z[i].dot(&z[j]);
            score[i][j] = s;
            score[j][i] = s;
            if s > max_s {
                max_s = s;
            }
        }
    }
    let mut denom = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                denom += (score[i][j] - max_s).exp();
            }
        }
    }
    let scale = total_degree / denom;

    let mut p = vec![vec![0.0; n]; n];
    let mut pre_clamp_sum = 0.0;
    let mut clamped_cells = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let raw = (score[i][j] - max_s).exp() * scale;
            pre_clamp_sum += raw;
            if raw > 1.0 {
                clamped_cells += 1;
                p[i][j] = 1.0;
            } else {
                p[i][j] = raw;
            }
        }
    }
    let rel = (pre_clamp_sum - total_degree).abs() / total_degree.max(1e-300);
    if !rel.is_finite() || rel > 1e-9 {
        return Err(Error::Numerical(format!(
            "link normalization identity violated: sum {pre_clamp_sum} vs {total_degree}"
        )));
    }
    Ok(LinkProbabilities { p, clamped_cells })
}

/// Independent Bernoulli draw per unordered pair.
pub fn sample_graph<R: Rng + ?Sized>(p: &[Vec<f64>], rng: &mut R) -> Result<GraphSample> {
    let n = p.len();
    let mut edges = Vec::new();
    for i in 0..n {
        if p[i].len() != n {
            return Err(Error::Validation("probability matrix not square".into()));
        }
        for j in (i + 1)..n {
            let pij = p[i][j];
            if !(0.0..=1.0).contains(&pij) {
                return Err(Error::Validation(format!("P[{i}][{j}] = {pij} outside [0,1]")));
            }
            if rng.gen::<f64>() < pij {
                edges.push((i, j));
            }
        }
    }
    GraphSample::new(n, edges)
}

/// One posterior graph plus its provenance.
pub struct PosteriorGraph {
    pub graph: GraphSample,
    /// Index of the retained draw the graph came from.
    pub draw_index: usize,
    /// True when the draw was reused because S exceeded the number of
    /// retained draws.
    pub reused: bool,
    /// Full-population nu and z (ARD values followed by imputed ones, in
    /// node-id order), kept so statistics can be cross-referenced.
    pub nu: Vec<f64>,
    pub z: Vec<UnitVector>,
}

/// For each requested graph: pick a retained draw (cycling, flagged as
/// reused past the end), recover nu from the draw's degrees, impute
/// (nu, z) for census-only nodes, build the probability matrix over the
/// full population, and take one Bernoulli graph draw. Deterministic
/// given the chain's seed.
pub fn draw_posterior_graphs(
    draws: &PosteriorDraws,
    data: &ArdDataset,
    count: usize,
) -> Result<Vec<PosteriorGraph>> {
    if draws.draws.is_empty() {
        return Err(Error::Validation("no retained draws".into()));
    }
    let n = data.n_nodes();
    let ard_index = &data.ard_index;
    let non_ard = data.non_ard_index();
    let k_nn = draws.config.knn_k.min(data.n_ard());
    let mut rng = ChaCha20Rng::seed_from_u64(draws.seed ^ 0x6772_6170_6873_u64);

    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let draw_index = s % draws.draws.len();
        let params = &draws.draws[draw_index];
        let dim = params.dim();

        let nu_ard = nu_from_degree(&params.d, params.zeta, n, dim)?;
        let (nu_imp, z_imp) = if non_ard.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            impute_non_ard(&nu_ard, &params.z, &data.covariate_distance, k_nn)?
        };

        let mut nu_full = vec![0.0; n];
        let mut z_full: Vec<Option<UnitVector>> = vec![None; n];
        for (pos, &i) in ard_index.iter().enumerate() {
            nu_full[i] = nu_ard[pos];
            z_full[i] = Some(params.z[pos].clone());
        }
        for (pos, &j) in non_ard.iter().enumerate() {
            nu_full[j] = nu_imp[pos];
            z_full[j] = Some(z_imp[pos].clone());
        }
        let z_full: Vec<UnitVector> = z_full.into_iter().map(Option::unwrap).collect();

        let d_full = degree_from_nu(&nu_full, params.zeta, n, dim)?;
        let probs = link_probability_matrix(&nu_full, &z_full, params.zeta, &d_full)?;
        let graph = sample_graph(&probs.p, &mut rng)?;
        out.push(PosteriorGraph {
            graph,
            draw_index,
            reused: s >= draws.draws.len(),
            nu: nu_full,
            z: z_full,
        });
    }
    Ok(out)
}
