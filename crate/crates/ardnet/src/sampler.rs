//! Metropolis-within-Gibbs sampler for the latent surface model, with
//! adaptive jump scales during burn-in, anchored-center alignment, and
//! convergence diagnostics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::likelihood::{nu_from_degree, LAMBDA_FLOOR};
use crate::model::{
    ArdDataset, DegreeMode, EtaPrior, LocationHyperPrior, ModelParams, PriorConfig,
    VarianceHyperPrior,
};
use crate::sphere::{
    ln_gamma, procrustes_align, sample_vmf, uniform_unit_vector, vmf_log_norm_const, UnitVector,
};
use crate::{Error, Result};

/// Per-block random-walk scales.
#[derive(Clone, Copy, Debug)]
pub struct JumpScales {
    pub z: f64,
    pub d: f64,
    pub beta: f64,
    pub eta: f64,
    pub zeta: f64,
}

impl Default for JumpScales {
    fn default() -> Self {
        // Initial proposal scale 0.1 for every block, then adapted.
        JumpScales { z: 0.1, d: 0.1, beta: 0.1, eta: 0.1, zeta: 0.1 }
    }
}

/// Acceptance rates observed in one adaptation window.
#[derive(Clone, Copy, Debug)]
pub struct AcceptanceWindow {
    /// Last sweep index (1-based) covered by the window.
    pub sweep: usize,
    pub z: f64,
    pub d: f64,
    pub beta: f64,
    pub eta: f64,
    pub zeta: f64,
    /// Log posterior at the end of the window.
    pub log_posterior: f64,
}

/// Which parameter blocks a run updates; reduced models pin the rest.
#[derive(Clone, Copy, Debug)]
pub struct UpdateMask {
    pub z: bool,
    pub centers: bool,
    pub d: bool,
    pub beta: bool,
    pub eta: bool,
    pub zeta: bool,
    pub hypers: bool,
    /// Include latent positions in the likelihood at all; false gives
    /// the degree-only (beta) model with rates d_i * b_k.
    pub latent_in_likelihood: bool,
}

impl Default for UpdateMask {
    fn default() -> Self {
        UpdateMask {
            z: true,
            centers: true,
            d: true,
            beta: true,
            eta: true,
            zeta: true,
            hypers: true,
            latent_in_likelihood: true,
        }
    }
}

/// Output of a completed run.
pub struct PosteriorDraws {
    /// Retained, thinned draws; `nu` is filled from the degree identity.
    pub draws: Vec<ModelParams>,
    pub acceptance_log: Vec<AcceptanceWindow>,
    pub jump_scales: JumpScales,
    pub seed: u64,
    pub config: PriorConfig,
    /// Whether the run used the reduced beta-model likelihood.
    pub beta_model: bool,
}

/// scale *= exp(accept - 0.3), clamped to [1e-4, 1e4]. Only called
/// during burn-in; the kernel is frozen afterwards.
pub fn adapt_jump_scale(window_acceptance: f64, current_scale: f64) -> f64 {
    (current_scale * (window_acceptance - 0.3).exp()).clamp(1e-4, 1e4)
}

/// Conjugate draw of a vMF center given weighted member directions and
/// an optional vMF prior (direction, concentration). The posterior is
/// vMF(normalize(r), |r|) with r = eta * sum w_i z_i + kappa0 mu0; a
/// zero resultant collapses to the uniform distribution.
pub fn update_center_gibbs<R: Rng + ?Sized>(
    members: &[(&UnitVector, f64)],
    eta: f64,
    prior: Option<(&UnitVector, f64)>,
    rng: &mut R,
) -> Result<UnitVector> {
    let dim = members
        .first()
        .map(|(z, _)| z.dim())
        .or_else(|| prior.map(|(mu, _)| mu.dim()))
        .ok_or_else(|| Error::Validation("center update needs members or a prior".into()))?;
    let mut r = vec![0.0; dim];
    for (z, w) in members {
        for (acc, c) in r.iter_mut().zip(z.coords()) {
            *acc += eta * w * c;
        }
    }
    if let Some((mu, kappa0)) = prior {
        for (acc, c) in r.iter_mut().zip(mu.coords()) {
            *acc += kappa0 * c;
        }
    }
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Ok(uniform_unit_vector(dim, rng));
    }
    let mean = UnitVector::normalized(r)?;
    sample_vmf(&mean, norm, rng)
}

/// Internal evaluation context holding what the blocks need repeatedly.
struct Ctx<'a> {
    y: &'a [Vec<f64>],
    dim: usize,
    log_c0: f64,
    /// ARD row indices belonging to each trait group.
    members: Vec<Vec<usize>>,
    use_trait_positions: bool,
    latent_in_likelihood: bool,
}

impl<'a> Ctx<'a> {
    fn new(data: &'a ArdDataset, priors: &PriorConfig, mask: &UpdateMask) -> Result<Self> {
        let k = data.n_groups();
        let mut members = vec![Vec::new(); k];
        for (row, traits) in data.ard_traits().iter().enumerate() {
            for (kk, &t) in traits.iter().enumerate() {
                if t == 1 {
                    members[kk].push(row);
                }
            }
        }
        Ok(Ctx {
            y: &data.y,
            dim: priors.ambient_dim(),
            log_c0: vmf_log_norm_const(0.0, priors.ambient_dim())?,
            members,
            use_trait_positions: priors.use_trait_positions && mask.latent_in_likelihood,
            latent_in_likelihood: mask.latent_in_likelihood,
        })
    }

    /// Poisson log-likelihood of cell (i, k).
    fn cell(
        &self,
        p: &ModelParams,
        i: usize,
        k: usize,
        log_c_zeta: f64,
        log_c_eta_k: f64,
    ) -> Result<f64> {
        let log_lam = if self.latent_in_likelihood {
            let cos_t = p.z[i].dot(&p.centers[k]);
            let kap = (p.zeta * p.zeta
                + p.eta[k] * p.eta[k]
                + 2.0 * p.zeta * p.eta[k] * cos_t)
                .max(0.0)
                .sqrt();
            p.d[i].ln() + p.beta[k] + log_c_zeta + log_c_eta_k
                - self.log_c0
                - vmf_log_norm_const(kap, self.dim)?
        } else {
            p.d[i].ln() + p.beta[k]
        };
        let lam = log_lam.exp().max(LAMBDA_FLOOR);
        let y = self.y[i][k];
        Ok(y * lam.ln() - lam - ln_gamma(y + 1.0))
    }

    fn row(&self, p: &ModelParams, i: usize, log_c_zeta: f64, log_c_eta: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for k in 0..p.centers.len() {
            s += self.cell(p, i, k, log_c_zeta, log_c_eta[k])?;
        }
        Ok(s)
    }

    fn col(&self, p: &ModelParams, k: usize, log_c_zeta: f64, log_c_eta_k: f64) -> Result<f64> {
        let mut s = 0.0;
        for i in 0..p.z.len() {
            s += self.cell(p, i, k, log_c_zeta, log_c_eta_k)?;
        }
        Ok(s)
    }

    fn total(&self, p: &ModelParams, log_c_zeta: f64, log_c_eta: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for i in 0..p.z.len() {
            s += self.row(p, i, log_c_zeta, log_c_eta)?;
        }
        Ok(s)
    }

    /// Membership vMF terms touching group k.
    fn membership_col(&self, p: &ModelParams, k: usize, log_c_eta_k: f64) -> f64 {
        if !self.use_trait_positions {
            return 0.0;
        }
        self.members[k]
            .iter()
            .map(|&i| log_c_eta_k + p.eta[k] * p.z[i].dot(&p.centers[k]))
            .sum()
    }

    /// Membership terms touching node i's position.
    fn membership_row_dot(&self, p: &ModelParams, i: usize, z: &UnitVector) -> f64 {
        if !self.use_trait_positions {
            return 0.0;
        }
        let mut s = 0.0;
        for (k, mem) in self.members.iter().enumerate() {
            if mem.binary_search(&i).is_ok() {
                s += p.eta[k] * z.dot(&p.centers[k]);
            }
        }
        s
    }
}

fn normal_lp(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + var.ln())
}

fn eta_lp(eta: f64, prior: &EtaPrior) -> f64 {
    match *prior {
        EtaPrior::Gamma { shape, rate } => {
            if eta <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (shape - 1.0) * eta.ln() - rate * eta
            }
        }
        EtaPrior::Uniform { lo, hi } => {
            if (lo..=hi).contains(&eta) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, block: &str, rng: &mut R) -> Result<bool> {
    if log_ratio.is_nan() {
        return Err(Error::Numerical(format!(
            "NaN in log-posterior during the {block} block"
        )));
    }
    Ok(log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp())
}

#[derive(Clone)]
struct BlockCounter {
    accepted: u64,
    proposed: u64,
}

impl BlockCounter {
    fn new() -> Self {
        BlockCounter { accepted: 0, proposed: 0 }
    }
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }
    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
    fn reset(&mut self) -> f64 {
        let r = self.rate();
        self.accepted = 0;
        self.proposed = 0;
        r
    }
}

/// Draw sigma^2 ~ ScaledInvChiSq(df, scale).
fn draw_scaled_inv_chisq<R: Rng + ?Sized>(df: f64, scale: f64, rng: &mut R) -> f64 {
    let g = rand_distr::Gamma::new(0.5 * df, 2.0).expect("valid chi-square df");
    let chi2: f64 = rng.sample(g);
    df * scale / chi2.max(1e-300)
}

/// Run the full sampler: Metropolis-within-Gibbs sweeps with adaptation
/// during the first T/2 sweeps, anchor re-alignment after every sweep,
/// and retention of every `thin`-th post-burn-in draw.
pub fn run_chain(
    data: &ArdDataset,
    priors: &PriorConfig,
    anchors: &[(usize, UnitVector)],
    seed: u64,
) -> Result<PosteriorDraws> {
    run_chain_masked(data, priors, anchors, seed, &UpdateMask::default(), None)
}

/// As [`run_chain`] but with explicit block masks (for reduced models)
/// and an optional starting point.
pub fn run_chain_masked(
    data: &ArdDataset,
    priors: &PriorConfig,
    anchors: &[(usize, UnitVector)],
    seed: u64,
    mask: &UpdateMask,
    init: Option<ModelParams>,
) -> Result<PosteriorDraws> {
    priors.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = match init {
        Some(p) => p,
        None => crate::model::initialize_params(data, priors, anchors, &mut rng)?,
    };
    params.validate()?;
    if !mask.latent_in_likelihood {
        params.zeta = 0.0;
    }
    // Anchored centers start exactly at their targets.
    let anchor_targets: Vec<(usize, UnitVector)> = anchors.to_vec();
    for (k, target) in &anchor_targets {
        params.centers[*k] = target.clone();
    }
    let mask = resolve_mask(mask, priors, data);
    let ctx = Ctx::new(data, priors, &mask)?;

    let t_total = priors.t;
    let burn_in = t_total / 2;
    let m = data.n_ard();
    let k_groups = data.n_groups();
    let n = data.n_nodes();
    let dim = priors.ambient_dim();

    let mut scales = JumpScales::default();
    // Per-group eta scales: group posteriors differ enough in spread
    // that one shared scale starves the slowest group.
    let mut eta_scales = vec![scales.eta; k_groups];
    let mut eta_counters = vec![BlockCounter::new(); k_groups];
    let mut counters = [
        BlockCounter::new(), // z
        BlockCounter::new(), // d
        BlockCounter::new(), // beta
        BlockCounter::new(), // eta
        BlockCounter::new(), // zeta
    ];
    let mut acceptance_log = Vec::new();
    let mut draws: Vec<ModelParams> = Vec::new();

    let mut log_c_zeta = vmf_log_norm_const(params.zeta, dim)?;
    let mut log_c_eta: Vec<f64> = params
        .eta
        .iter()
        .map(|&e| vmf_log_norm_const(e, dim))
        .collect::<Result<Vec<_>>>()?;

    for sweep in 1..=t_total {
        // --- z block: vMF random-walk MH per node -----------------------
        if mask.z {
            let kappa_prop = scales.z.powi(-2);
            for i in 0..m {
                let proposal = sample_vmf(&params.z[i], kappa_prop, &mut rng)?;
                let old = ctx.row(&params, i, log_c_zeta, &log_c_eta)?
                    + ctx.membership_row_dot(&params, i, &params.z[i]);
                let saved = std::mem::replace(&mut params.z[i], proposal);
                let new = ctx.row(&params, i, log_c_zeta, &log_c_eta)?
                    + ctx.membership_row_dot(&params, i, &params.z[i]);
                let ok = mh_accept(new - old, "z", &mut rng)?;
                if !ok {
                    params.z[i] = saved;
                }
                counters[0].record(ok);
            }
        }

        // --- center block: conjugate Gibbs for non-anchored groups ------
        if mask.centers {
            for k in 0..k_groups {
                if params.fixed_centers.contains(&k) {
                    continue;
                }
                // With trait-position terms the census members of the
                // group are vMF data for the center; otherwise weight
                // respondents by their reported counts toward the group.
                let member_dirs: Vec<(&UnitVector, f64)> =
                    if ctx.use_trait_positions && !ctx.members[k].is_empty() {
                        ctx.members[k].iter().map(|&i| (&params.z[i], 1.0)).collect()
                    } else {
                        (0..m)
                            .filter(|&i| data.y[i][k] > 0.0)
                            .map(|i| (&params.z[i], data.y[i][k]))
                            .collect()
                    };
                if member_dirs.is_empty() {
                    continue;
                }
                params.centers[k] =
                    update_center_gibbs(&member_dirs, params.eta[k], None, &mut rng)?;
            }
        }

        // --- d block: random walk on log d_i -----------------------------
        if mask.d {
            for i in 0..m {
                let step: f64 = rng.sample(rand_distr::StandardNormal);
                let log_d_new = params.d[i].ln() + scales.d * step;
                let old = ctx.row(&params, i, log_c_zeta, &log_c_eta)?
                    + normal_lp(params.d[i].ln(), params.mu_d, params.sigma2_d);
                let saved = params.d[i];
                params.d[i] = log_d_new.exp();
                let new = ctx.row(&params, i, log_c_zeta, &log_c_eta)?
                    + normal_lp(log_d_new, params.mu_d, params.sigma2_d);
                let ok = mh_accept(new - old, "d", &mut rng)?;
                if !ok {
                    params.d[i] = saved;
                }
                counters[1].record(ok);
            }
        }

        // --- beta block: random walk on beta_k ---------------------------
        if mask.beta {
            for k in 0..k_groups {
                let step: f64 = rng.sample(rand_distr::StandardNormal);
                let beta_new = params.beta[k] + scales.beta * step;
                let old = ctx.col(&params, k, log_c_zeta, log_c_eta[k])?
                    + normal_lp(params.beta[k], params.mu_beta, params.sigma2_beta);
                let saved = params.beta[k];
                params.beta[k] = beta_new;
                let new = ctx.col(&params, k, log_c_zeta, log_c_eta[k])?
                    + normal_lp(beta_new, params.mu_beta, params.sigma2_beta);
                let ok = mh_accept(new - old, "beta", &mut rng)?;
                if !ok {
                    params.beta[k] = saved;
                }
                counters[2].record(ok);
            }
        }

        // --- eta block: untransformed Normal random walk ------------------
        if mask.eta {
            for k in 0..k_groups {
                let step: f64 = rng.sample(rand_distr::StandardNormal);
                let eta_new = params.eta[k] + eta_scales[k] * step;
                if eta_new < 0.0 {
                    counters[3].record(false);
                    eta_counters[k].record(false);
                    continue;
                }
                let prior_new = eta_lp(eta_new, &priors.eta_prior);
                if prior_new == f64::NEG_INFINITY {
                    counters[3].record(false);
                    eta_counters[k].record(false);
                    continue;
                }
                let log_c_new = vmf_log_norm_const(eta_new, dim)?;
                let old = ctx.col(&params, k, log_c_zeta, log_c_eta[k])?
                    + ctx.membership_col(&params, k, log_c_eta[k])
                    + eta_lp(params.eta[k], &priors.eta_prior);
                let saved = params.eta[k];
                params.eta[k] = eta_new;
                let new = ctx.col(&params, k, log_c_zeta, log_c_new)?
                    + ctx.membership_col(&params, k, log_c_new)
                    + prior_new;
                let ok = mh_accept(new - old, "eta", &mut rng)?;
                if ok {
                    log_c_eta[k] = log_c_new;
                } else {
                    params.eta[k] = saved;
                }
                counters[3].record(ok);
                eta_counters[k].record(ok);
            }
        }

        // --- zeta block: untransformed Normal random walk -----------------
        if mask.zeta {
            let step: f64 = rng.sample(rand_distr::StandardNormal);
            let zeta_new = params.zeta + scales.zeta * step;
            if zeta_new <= 0.0 {
                counters[4].record(false);
            } else {
                let (gs, gr) = priors.gamma_zeta;
                let log_c_new = vmf_log_norm_const(zeta_new, dim)?;
                let old = ctx.total(&params, log_c_zeta, &log_c_eta)?
                    + (gs - 1.0) * params.zeta.ln()
                    - gr * params.zeta;
                let saved = params.zeta;
                params.zeta = zeta_new;
                let new = ctx.total(&params, log_c_new, &log_c_eta)?
                    + (gs - 1.0) * zeta_new.ln()
                    - gr * zeta_new;
                let ok = mh_accept(new - old, "zeta", &mut rng)?;
                if ok {
                    log_c_zeta = log_c_new;
                } else {
                    params.zeta = saved;
                }
                counters[4].record(ok);
            }
        }

        // --- hyperparameter conjugate draws -------------------------------
        if mask.hypers {
            update_hypers(&mut params, priors, &mask, &mut rng);
        }

        // --- re-align anchors ---------------------------------------------
        if mask.latent_in_likelihood && !anchor_targets.is_empty() {
            let anchor_idx: Vec<usize> = anchor_targets.iter().map(|(k, _)| *k).collect();
            let targets: Vec<UnitVector> =
                anchor_targets.iter().map(|(_, u)| u.clone()).collect();
            let (rot, rotated_centers) =
                procrustes_align(&params.centers, &anchor_idx, &targets)?;
            params.centers = rotated_centers;
            for zi in params.z.iter_mut() {
                *zi = rot.apply(zi);
            }
            // Pin anchors exactly to kill floating-point drift.
            for (k, target) in &anchor_targets {
                params.centers[*k] = target.clone();
            }
        }

        // --- adaptation window ---------------------------------------------
        if sweep % priors.adapt_window == 0 {
            let rates = [
                counters[0].reset(),
                counters[1].reset(),
                counters[2].reset(),
                counters[3].reset(),
                counters[4].reset(),
            ];
            let lp = ctx.total(&params, log_c_zeta, &log_c_eta)?;
            acceptance_log.push(AcceptanceWindow {
                sweep,
                z: rates[0],
                d: rates[1],
                beta: rates[2],
                eta: rates[3],
                zeta: rates[4],
                log_posterior: lp,
            });
            if sweep <= burn_in {
                if mask.z && rates[0].is_finite() {
                    // Larger acceptance means steps are too small; for z
                    // the scale maps inversely into the vMF concentration.
                    scales.z = adapt_jump_scale(rates[0], scales.z);
                }
                if mask.d && rates[1].is_finite() {
                    scales.d = adapt_jump_scale(rates[1], scales.d);
                }
                if mask.beta && rates[2].is_finite() {
                    scales.beta = adapt_jump_scale(rates[2], scales.beta);
                }
                if mask.eta {
                    for (scale, counter) in eta_scales.iter_mut().zip(eta_counters.iter_mut()) {
                        let rate = counter.reset();
                        if rate.is_finite() {
                            *scale = adapt_jump_scale(rate, *scale);
                        }
                    }
                }
                if mask.zeta && rates[4].is_finite() {
                    scales.zeta = adapt_jump_scale(rates[4], scales.zeta);
                }
            }
        }

        // --- retain ----------------------------------------------------------
        if sweep > burn_in && (sweep - burn_in - 1) % priors.thin == 0 {
            let mut retained = params.clone();
            retained.nu = nu_from_degree(&retained.d, retained.zeta.max(0.0), n, dim)?;
            draws.push(retained);
        }
    }

    if draws.is_empty() {
        // T = 0 (or no post-burn-in sweeps): return the initial state.
        params.nu = nu_from_degree(&params.d, params.zeta.max(0.0), n, dim)?;
        draws.push(params);
    }

    // Report the geometric mean of the per-group eta scales.
    if !eta_scales.is_empty() {
        scales.eta = (eta_scales.iter().map(|s| s.ln()).sum::<f64>()
            / eta_scales.len() as f64)
            .exp();
    }

    Ok(PosteriorDraws {
        draws,
        acceptance_log,
        jump_scales: scales,
        seed,
        config: priors.clone(),
        beta_model: !mask.latent_in_likelihood,
    })
}

/// Apply model-mode switches from the config onto the requested mask.
fn resolve_mask(mask: &UpdateMask, priors: &PriorConfig, data: &ArdDataset) -> UpdateMask {
    let mut m = *mask;
    if priors.census_mode {
        m.beta = false;
    }
    match priors.degree_mode {
        DegreeMode::Observed if data.reported_degrees.is_some() => m.d = false,
        DegreeMode::PinnedAverage { .. } => m.d = false,
        _ => {}
    }
    if !m.latent_in_likelihood {
        m.z = false;
        m.centers = false;
        m.eta = false;
        m.zeta = false;
    }
    m
}

fn update_hypers<R: Rng + ?Sized>(
    params: &mut ModelParams,
    priors: &PriorConfig,
    mask: &UpdateMask,
    rng: &mut R,
) {
    // mu_d, sigma2_d from the log-degrees.
    if mask.d {
        let xs: Vec<f64> = params.d.iter().map(|d| d.ln()).collect();
        let (mu, s2) = conjugate_location(
            &xs,
            params.sigma2_d,
            &priors.mu_d_prior,
            &priors.sigma2_d_prior,
            rng,
        );
        params.mu_d = mu;
        params.sigma2_d = s2;
    }
    // mu_beta, sigma2_beta from the betas.
    if mask.beta {
        let (mu, s2) = conjugate_location(
            &params.beta,
            params.sigma2_beta,
            &priors.mu_beta_prior,
            &priors.sigma2_beta_prior,
            rng,
        );
        params.mu_beta = mu;
        params.sigma2_beta = s2;
    }
}

/// Draw (mu, sigma^2) for a Normal location-scale pair given data `xs`.
/// With flat hyperpriors: mu ~ N(xbar, sigma^2/n) and
/// sigma^2 ~ ScaledInvChiSq(n-1, s^2); informative hyperpriors combine
/// in the standard conjugate way.
fn conjugate_location<R: Rng + ?Sized>(
    xs: &[f64],
    sigma2: f64,
    mu_prior: &LocationHyperPrior,
    s2_prior: &VarianceHyperPrior,
    rng: &mut R,
) -> (f64, f64) {
    let count = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / count;

    let (post_mean, post_var) = match *mu_prior {
        LocationHyperPrior::Flat => (xbar, sigma2 / count),
        LocationHyperPrior::Normal { mean, var } => {
            let prec = 1.0 / var + count / sigma2;
            (((mean / var) + (count * xbar / sigma2)) / prec, 1.0 / prec)
        }
    };
    let step: f64 = rng.sample(rand_distr::StandardNormal);
    let mu = post_mean + post_var.sqrt() * step;

    let new_sigma2 = if xs.len() < 2 {
        sigma2
    } else {
        let ss: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
        match *s2_prior {
            VarianceHyperPrior::Flat => {
                let df = count - 1.0;
                draw_scaled_inv_chisq(df, ss / df, rng)
            }
            VarianceHyperPrior::ScaledInvChiSq { df, scale } => {
                let post_df = df + count - 1.0;
                draw_scaled_inv_chisq(post_df, (df * scale + ss) / post_df, rng)
            }
        }
    };
    (mu, new_sigma2.max(1e-12))
}

/// Split-R-hat and effective sample size per tracked scalar.
#[derive(Clone, Debug)]
pub struct DiagEntry {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
    pub mean: f64,
    pub sd: f64,
    /// Set when the series is (numerically) constant and R-hat/ESS are
    /// meaningless.
    pub degenerate: bool,
}

pub struct ChainDiagnostics {
    pub entries: Vec<DiagEntry>,
}

impl ChainDiagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.degenerate)
            .map(|e| e.rhat)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Diagnostics over one or more chains fit to the same data. Tracks
/// zeta, every eta_k, mu_d, sigma2_d, and an evenly spaced subsample of
/// up to five degrees.
pub fn summarize_chain(chains: &[&PosteriorDraws]) -> Result<ChainDiagnostics> {
    if chains.is_empty() {
        return Err(Error::Validation("need at least one chain".into()));
    }
    let min_len = chains.iter().map(|c| c.draws.len()).min().unwrap();
    if min_len < 10 {
        return Err(Error::Validation(format!(
            "need >= 10 retained draws per chain, got {min_len}"
        )));
    }
    let k_groups = chains[0].draws[0].eta.len();
    let m = chains[0].draws[0].d.len();

    let mut selectors: Vec<(String, Box<dyn Fn(&ModelParams) -> f64>)> = Vec::new();
    selectors.push(("zeta".into(), Box::new(|p| p.zeta)));
    for k in 0..k_groups {
        selectors.push((format!("eta_{k}"), Box::new(move |p| p.eta[k])));
    }
    selectors.push(("mu_d".into(), Box::new(|p| p.mu_d)));
    selectors.push(("sigma2_d".into(), Box::new(|p| p.sigma2_d)));
    let n_track = m.min(5);
    for j in 0..n_track {
        let i = j * m / n_track.max(1);
        selectors.push((format!("d_{i}"), Box::new(move |p| p.d[i])));
    }

    let mut entries = Vec::new();
    for (name, f) in selectors {
        let series: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.draws[..min_len].iter().map(|p| f(p)).collect())
            .collect();
        entries.push(diagnose_scalar(&name, &series));
    }
    Ok(ChainDiagnostics { entries })
}

fn diagnose_scalar(name: &str, chains: &[Vec<f64>]) -> DiagEntry {
    // Split each chain in half.
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        let mid = c.len() / 2;
        halves.push(&c[..mid]);
        halves.push(&c[mid..c.len() - c.len() % 2]);
    }
    let n = halves[0].len() as f64;
    let m_seq = halves.len() as f64;
    let all: Vec<f64> = halves.iter().flat_map(|h| h.iter().copied()).collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let sd_all = {
        let v = all.iter().map(|x| (x - grand).powi(2)).sum::<f64>()
            / (all.len() as f64 - 1.0).max(1.0);
        v.sqrt()
    };
    if sd_all < 1e-12 * (1.0 + grand.abs()) {
        return DiagEntry {
            name: name.into(),
            rhat: f64::NAN,
            ess: f64::NAN,
            mean: grand,
            sd: sd_all,
            degenerate: true,
        };
    }

    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / h.len() as f64)
        .collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, &mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / m_seq;
    let b = n / (m_seq - 1.0).max(1.0)
        * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let var_plus = (n - 1.0) / n * w + b / n;
    let rhat = (var_plus / w.max(1e-300)).sqrt();

    // ESS via pairwise-summed autocorrelations averaged across halves
    // (initial positive sequence truncation).
    let mut rho_sum = 0.0;
    let max_lag = (halves[0].len() / 2).max(1);
    let mut t = 1;
    while t + 1 < max_lag {
        let rho_t = mean_autocorr(&halves, t, w, &means);
        let rho_t1 = mean_autocorr(&halves, t + 1, w, &means);
        if rho_t + rho_t1 <= 0.0 {
            break;
        }
        rho_sum += rho_t + rho_t1;
        t += 2;
    }
    let ess = (m_seq * n) / (1.0 + 2.0 * rho_sum).max(1.0);

    DiagEntry { name: name.into(), rhat, ess, mean: grand, sd: sd_all, degenerate: false }
}

fn mean_autocorr(halves: &[&[f64]], lag: usize, w: f64, means: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (h, &mu) in halves.iter().zip(means) {
        let n = h.len();
        if lag >= n {
            continue;
        }
        let cov: f64 = (0..n - lag)
            .map(|t| (h[t] - mu) * (h[t + lag] - mu))
            .sum::<f64>()
            / (n - lag) as f64;
        acc += cov;
    }
    (acc / halves.len() as f64) / w.max(1e-300)
}
