//! Domain types for ARD data and model parameters, plus validation,
//! prevalence fixing, and chain initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sphere::{uniform_unit_vector, UnitVector};
use crate::{Error, Result};

/// One village worth of inputs: ARD counts for the sampled nodes, census
/// trait indicators for everyone, and the covariate distance matrix used
/// to impute latent parameters for the non-ARD nodes.
#[derive(Clone, Debug)]
pub struct ArdDataset {
    /// m x K ARD counts; stored as floats but validated to be nonnegative
    /// integers so malformed inputs can be reported with row/column.
    pub y: Vec<Vec<f64>>,
    /// n x K binary trait indicators from the census.
    pub census_traits: Vec<Vec<u8>>,
    /// Per-group census counts N_k (column sums of `census_traits`).
    pub group_sizes: Vec<u32>,
    /// (n - m) x m covariate distances: rows are non-ARD nodes in
    /// increasing node-id order, columns follow `ard_index`.
    pub covariate_distance: Vec<Vec<f64>>,
    /// Node ids (0-based, into the census) holding ARD responses.
    pub ard_index: Vec<usize>,
    /// Degrees reported via the friend-list elicitation, when collected.
    pub reported_degrees: Option<Vec<f64>>,
    /// Fraction of ties made with members of group k, summed over k;
    /// only used as a scale calibration when no census is trusted.
    pub total_prop: Option<f64>,
    /// Trait column names (shared by survey and census files).
    pub trait_names: Vec<String>,
}

impl ArdDataset {
    pub fn n_nodes(&self) -> usize {
        self.census_traits.len()
    }

    pub fn n_ard(&self) -> usize {
        self.y.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// ARD sampling share psi = m / n.
    pub fn sampling_share(&self) -> f64 {
        self.n_ard() as f64 / self.n_nodes() as f64
    }

    /// Node ids without ARD, in increasing order (the row order of
    /// `covariate_distance`).
    pub fn non_ard_index(&self) -> Vec<usize> {
        let mut in_ard = vec![false; self.n_nodes()];
        for &i in &self.ard_index {
            if i < in_ard.len() {
                in_ard[i] = true;
            }
        }
        (0..self.n_nodes()).filter(|&i| !in_ard[i]).collect()
    }

    /// Census trait indicator restricted to the ARD sample (m x K).
    pub fn ard_traits(&self) -> Vec<&[u8]> {
        self.ard_index
            .iter()
            .map(|&i| self.census_traits[i].as_slice())
            .collect()
    }
}

/// Checks every structural invariant of a dataset and returns it
/// unchanged when valid. Villages sampled below `min_sampling_share`
/// are rejected (flagged excluded) with a recognizable message.
pub fn validate_dataset(raw: ArdDataset, min_sampling_share: f64) -> Result<ArdDataset> {
    let n = raw.n_nodes();
    let m = raw.n_ard();
    let k = raw.n_groups();
    let mut violations: Vec<String> = Vec::new();

    if m > n {
        violations.push(format!("m = {m} ARD rows exceed n = {n} census rows"));
    }
    for (i, row) in raw.y.iter().enumerate() {
        if row.len() != k {
            violations.push(format!("ARD row {i} has {} columns, expected {k}", row.len()));
            continue;
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
                violations.push(format!("ARD count at row {i}, col {j} is invalid ({v})"));
            }
        }
    }
    for (i, row) in raw.census_traits.iter().enumerate() {
        if row.len() != k {
            violations.push(format!(
                "census row {i} has {} columns, expected {k}",
                row.len()
            ));
        } else {
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    violations.push(format!("census trait at row {i}, col {j} is not binary"));
                }
            }
        }
    }
    for (kk, &nk) in raw.group_sizes.iter().enumerate() {
        let col_sum: u32 = raw
            .census_traits
            .iter()
            .filter(|r| r.len() == k)
            .map(|r| u32::from(r[kk]))
            .sum();
        if nk != col_sum {
            violations.push(format!(
                "group size N_{kk} = {nk} does not match census column sum {col_sum}"
            ));
        }
    }
    if raw.covariate_distance.len() != n - m.min(n) {
        violations.push(format!(
            "distance matrix has {} rows, expected n - m = {}",
            raw.covariate_distance.len(),
            n - m.min(n)
        ));
    }
    for (i, row) in raw.covariate_distance.iter().enumerate() {
        if row.len() != m {
            violations.push(format!(
                "distance row {i} has {} columns, expected m = {m}",
                row.len()
            ));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                violations.push(format!("distance at row {i}, col {j} is invalid ({v})"));
            }
        }
    }
    let mut seen = vec![false; n];
    for &i in &raw.ard_index {
        if i >= n {
            violations.push(format!("ard_index entry {i} out of range (n = {n})"));
        } else if seen[i] {
            violations.push(format!("ard_index entry {i} duplicated"));
        } else {
            seen[i] = true;
        }
    }
    if raw.ard_index.len() != m {
        violations.push(format!(
            "ard_index has {} entries, expected m = {m}",
            raw.ard_index.len()
        ));
    }
    if let Some(deg) = &raw.reported_degrees {
        if deg.len() != m {
            violations.push(format!(
                "reported_degrees has {} entries, expected m = {m}",
                deg.len()
            ));
        }
        for (i, &d) in deg.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                violations.push(format!("reported degree for ARD row {i} is invalid ({d})"));
            }
        }
    }
    if k < 3 {
        violations.push(format!("K = {k} trait groups; at least 3 anchors are required"));
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations.join("; ")));
    }
    if raw.sampling_share() < min_sampling_share {
        return Err(Error::Validation(format!(
            "village excluded: sampling share {:.3} below floor {:.3}",
            raw.sampling_share(),
            min_sampling_share
        )));
    }
    Ok(raw)
}

/// One full parameter point of the latent surface model, sized to the
/// modeled (ARD) node set.
#[derive(Clone, Debug)]
pub struct ModelParams {
    /// Latent positions on S^{D-1}.
    pub z: Vec<UnitVector>,
    /// Gregariousness effects; derived from `d` via the degree identity
    /// when draws are retained.
    pub nu: Vec<f64>,
    /// Expected degrees d_i > 0.
    pub d: Vec<f64>,
    /// beta_k = log b_k, log tie share of group k.
    pub beta: Vec<f64>,
    /// Trait-group centers on the sphere.
    pub centers: Vec<UnitVector>,
    /// Trait-group concentrations eta_k >= 0.
    pub eta: Vec<f64>,
    /// Intensity of the latent-distance component.
    pub zeta: f64,
    pub mu_d: f64,
    pub sigma2_d: f64,
    pub mu_beta: f64,
    pub sigma2_beta: f64,
    /// Indices of anchored groups (centers held fixed for orientation).
    pub fixed_centers: Vec<usize>,
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.z.first().map(UnitVector::dim).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed_centers.len() < 3 {
            return Err(Error::Validation(format!(
                "need >= 3 anchored centers (identification Condition 1), got {}",
                self.fixed_centers.len()
            )));
        }
        for &k in &self.fixed_centers {
            if k >= self.centers.len() {
                return Err(Error::Validation(format!("anchored group {k} out of range")));
            }
        }
        if self.sigma2_d <= 0.0 || self.sigma2_beta <= 0.0 {
            return Err(Error::Validation("sigma2 hyperparameters must be positive".into()));
        }
        if self.zeta <= 0.0 {
            return Err(Error::Validation("zeta must be positive".into()));
        }
        if self.d.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Validation("degrees must be positive".into()));
        }
        if self.eta.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::Validation("eta must be nonnegative".into()));
        }
        Ok(())
    }

    /// Soft checks: DGP-side identification Condition 4 (some eta distinct)
    /// is reported as a warning rather than an error since it constrains
    /// the generating process, not the data.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.eta.len() > 1 {
            let first = self.eta[0];
            if self.eta.iter().all(|&e| (e - first).abs() < 1e-12) {
                w.push("all eta_k equal; identification Condition 4 requires some to differ".into());
            }
        }
        w
    }
}

/// Prior for the trait concentrations eta_k.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaPrior {
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl EtaPrior {
    pub fn mean(&self) -> f64 {
        match *self {
            EtaPrior::Gamma { shape, rate } => shape / rate,
            EtaPrior::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }
}

/// Hyperprior for a location hyperparameter (mu_d, mu_beta).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocationHyperPrior {
    Flat,
    Normal { mean: f64, var: f64 },
}

/// Hyperprior for a variance hyperparameter (sigma2_d, sigma2_beta).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceHyperPrior {
    Flat,
    ScaledInvChiSq { df: f64, scale: f64 },
}

/// How node degrees enter the model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DegreeMode {
    /// Reported degrees are trusted and held fixed.
    Observed,
    /// Degrees are sampled (Metropolis step on log d_i).
    Estimated,
    /// All degrees pinned at a common average value.
    PinnedAverage { value: f64 },
}

/// Priors, chain settings, and model-mode switches for one run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PriorConfig {
    /// Gamma(shape, rate) prior on zeta.
    pub gamma_zeta: (f64, f64),
    pub eta_prior: EtaPrior,
    pub mu_d_prior: LocationHyperPrior,
    pub sigma2_d_prior: VarianceHyperPrior,
    pub mu_beta_prior: LocationHyperPrior,
    pub sigma2_beta_prior: VarianceHyperPrior,
    /// Latent dimension p; positions live in D = p + 1 ambient coordinates.
    pub p: usize,
    /// Chain length T (even; burn-in is the first T/2 sweeps).
    pub t: usize,
    /// Number of posterior graph draws S.
    pub n_graph_draws: usize,
    /// Sweeps per jump-scale adaptation window.
    pub adapt_window: usize,
    /// Neighbors used by the covariate kNN imputation.
    pub knn_k: usize,
    /// Thinning applied to retained draws.
    pub thin: usize,
    pub degree_mode: DegreeMode,
    /// When true, b_k is fixed at the census share N_k / n and beta_k is
    /// not sampled.
    pub census_mode: bool,
    /// Add explicit z_i | i in G_k ~ vMF(center_k, eta_k) density terms
    /// to the posterior. The baseline posterior ties positions to the
    /// data only through the Poisson rates; these extra terms sharpen
    /// the center step but allow an eta -> infinity collapse when a
    /// group's members can sit exactly on its center, so they are off
    /// by default.
    pub use_trait_positions: bool,
    /// Villages sampled below this share are excluded.
    pub min_sampling_share: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            gamma_zeta: (0.5, 0.5),
            eta_prior: EtaPrior::Gamma { shape: 5.0, rate: 0.1 },
            mu_d_prior: LocationHyperPrior::Flat,
            sigma2_d_prior: VarianceHyperPrior::Flat,
            mu_beta_prior: LocationHyperPrior::Flat,
            sigma2_beta_prior: VarianceHyperPrior::Flat,
            p: 2,
            t: 3000,
            n_graph_draws: 100,
            adapt_window: 50,
            knn_k: 5,
            thin: 5,
            degree_mode: DegreeMode::Estimated,
            census_mode: true,
            use_trait_positions: false,
            min_sampling_share: 0.2,
        }
    }
}

impl PriorConfig {
    /// Ambient dimension of the latent sphere.
    pub fn ambient_dim(&self) -> usize {
        self.p + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.t % 2 != 0 {
            return Err(Error::Validation(format!(
                "chain length T must be even (burn-in is T/2), got {}",
                self.t
            )));
        }
        let (gs, gr) = self.gamma_zeta;
        if gs <= 0.0 || gr <= 0.0 {
            return Err(Error::Validation("gamma_zeta shape/rate must be positive".into()));
        }
        if let EtaPrior::Gamma { shape, rate } = self.eta_prior {
            if shape <= 0.0 || rate <= 0.0 {
                return Err(Error::Validation("eta prior shape/rate must be positive".into()));
            }
        }
        if let EtaPrior::Uniform { lo, hi } = self.eta_prior {
            if !(lo >= 0.0 && hi > lo) {
                return Err(Error::Validation("eta uniform bounds must satisfy 0 <= lo < hi".into()));
            }
        }
        if self.p < 1 {
            return Err(Error::Validation("latent dimension p must be >= 1".into()));
        }
        if self.thin == 0 || self.adapt_window == 0 || self.knn_k == 0 {
            return Err(Error::Validation("thin, adapt_window, knn_k must be positive".into()));
        }
        Ok(())
    }
}

/// Census-based group prevalences b_k = N_k / n. Groups with N_k = 0 are
/// reported back so callers can drop them (with a warning).
pub struct GroupPrevalence {
    pub b: Vec<f64>,
    /// Indices of empty groups (b would be zero).
    pub dropped: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn fix_group_prevalence(census_traits: &[Vec<u8>], group_sizes: &[u32]) -> GroupPrevalence {
    let n = census_traits.len().max(1);
    let mut b = Vec::with_capacity(group_sizes.len());
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    for (k, &nk) in group_sizes.iter().enumerate() {
        let bk = nk as f64 / n as f64;
        if nk == 0 {
            dropped.push(k);
            warnings.push(format!("group {k} has zero census members and is dropped"));
        } else if nk as usize == n {
            warnings.push(format!("group {k} contains every node (b = 1, degenerate)"));
        }
        b.push(bk);
    }
    GroupPrevalence { b, dropped, warnings }
}

/// Greedy farthest-point spread of `k` centers on S^{dim-1}: anchors come
/// first and later picks maximize the minimum angle to everything chosen.
pub fn spread_centers<R: Rng + ?Sized>(
    k: usize,
    dim: usize,
    rng: &mut R,
    fixed: &[(usize, UnitVector)],
) -> Vec<UnitVector> {
    let pool: Vec<UnitVector> = (0..256).map(|_| uniform_unit_vector(dim, rng)).collect();
    let mut centers: Vec<Option<UnitVector>> = vec![None; k];
    for (idx, u) in fixed {
        centers[*idx] = Some(u.clone());
    }
    for slot in 0..k {
        if centers[slot].is_some() {
            continue;
        }
        let chosen: Vec<&UnitVector> = centers.iter().flatten().collect();
        let best = pool
            .iter()
            .max_by(|a, b| {
                let da = chosen.iter().map(|c| 1.0 - c.dot(a)).fold(f64::INFINITY, f64::min);
                let db = chosen.iter().map(|c| 1.0 - c.dot(b)).fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db).unwrap()
            })
            .cloned()
            .unwrap_or_else(|| UnitVector::basis(dim, slot % dim));
        centers[slot] = Some(best);
    }
    centers.into_iter().map(Option::unwrap).collect()
}

/// Deterministic (given the RNG stream) starting point for the sampler.
///
/// Degrees come from reported values when present, else from the row-sum
/// heuristic y_i. / sum_k b_k. Latent positions start at the prevalence-
/// weighted mean direction of the centers of groups the node reports
/// knowing, falling back to a uniform draw.
pub fn initialize_params<R: Rng + ?Sized>(
    data: &ArdDataset,
    priors: &PriorConfig,
    anchors: &[(usize, UnitVector)],
    rng: &mut R,
) -> Result<ModelParams> {
    if anchors.len() < 3 {
        return Err(Error::Validation(format!(
            "need >= 3 anchored centers (identification Condition 1), got {}",
            anchors.len()
        )));
    }
    let m = data.n_ard();
    let k = data.n_groups();
    let dim = priors.ambient_dim();
    let prev = fix_group_prevalence(&data.census_traits, &data.group_sizes);
    let b_floor: Vec<f64> = prev.b.iter().map(|&b| b.max(1e-6)).collect();
    let sum_b: f64 = b_floor.iter().sum();

    let d: Vec<f64> = match (&priors.degree_mode, &data.reported_degrees) {
        (DegreeMode::Observed, Some(deg)) => deg.iter().map(|&x| x.max(1e-6)).collect(),
        (DegreeMode::PinnedAverage { value }, _) => vec![value.max(1e-6); m],
        (_, Some(deg)) => deg.iter().map(|&x| x.max(1e-6)).collect(),
        _ => data
            .y
            .iter()
            .map(|row| (row.iter().sum::<f64>() / sum_b).max(1.0))
            .collect(),
    };

    let centers = spread_centers(k, dim, rng, anchors);

    let mut z = Vec::with_capacity(m);
    for row in &data.y {
        let mut acc = vec![0.0; dim];
        let mut total = 0.0;
        for (kk, &count) in row.iter().enumerate() {
            if count > 0.0 {
                let w = count / b_floor[kk];
                total += w;
                for (a, c) in acc.iter_mut().zip(centers[kk].coords()) {
                    *a += w * c;
                }
            }
        }
        let zi = if total > 0.0 {
            UnitVector::normalized(acc).unwrap_or_else(|_| uniform_unit_vector(dim, rng))
        } else {
            uniform_unit_vector(dim, rng)
        };
        z.push(zi);
    }

    let total_d: f64 = d.iter().sum();
    let beta: Vec<f64> = if priors.census_mode {
        b_floor.iter().map(|&b| b.ln()).collect()
    } else {
        (0..k)
            .map(|kk| {
                let col: f64 = data.y.iter().map(|row| row[kk]).sum();
                ((col / total_d.max(1.0)).max(1e-6)).ln()
            })
            .collect()
    };

    let eta = vec![priors.eta_prior.mean(); k];
    let zeta = priors.gamma_zeta.0 / priors.gamma_zeta.1;
    let log_d: Vec<f64> = d.iter().map(|x| x.ln()).collect();
    let mu_d = log_d.iter().sum::<f64>() / m.max(1) as f64;
    let sigma2_d = variance(&log_d).max(0.25);
    let mu_beta = beta.iter().sum::<f64>() / k.max(1) as f64;
    let sigma2_beta = variance(&beta).max(0.25);

    let params = ModelParams {
        nu: vec![0.0; m],
        z,
        d,
        beta,
        centers,
        eta,
        zeta,
        mu_d,
        sigma2_d,
        mu_beta,
        sigma2_beta,
        fixed_centers: anchors.iter().map(|(i, _)| *i).collect(),
    };
    params.validate()?;
    Ok(params)
}

fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}
