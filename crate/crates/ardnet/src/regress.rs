//! OLS with optional cluster block bootstrap standard deviations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// Block-bootstrap standard deviations (present when clusters given).
    pub bootstrap_sd: Option<Vec<f64>>,
    pub residual_sd: f64,
}

fn solve_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = x.clone().qr();
    let r = qr.r();
    // Rank check on the triangular factor.
    let tol = 1e-10 * r.diagonal().amax().max(1.0);
    if r.diagonal().iter().any(|d| d.abs() < tol) {
        return Err(Error::Validation("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
}

/// OLS of y on X (X should already contain an intercept column if one is
/// wanted). With `clusters`, standard deviations come from a block
/// bootstrap that resamples whole clusters with replacement.
pub fn ols_regress(
    y: &[f64],
    x: &[Vec<f64>],
    clusters: Option<&[usize]>,
    n_bootstrap: usize,
    seed: u64,
) -> Result<OlsFit> {
    let v = y.len();
    if x.len() != v || v == 0 {
        return Err(Error::Validation("y and X row counts differ".into()));
    }
    let q = x[0].len();
    if x.iter().any(|r| r.len() != q) {
        return Err(Error::Validation("ragged design matrix".into()));
    }
    if v <= q {
        return Err(Error::Validation(format!("need more rows ({v}) than columns ({q})")));
    }
    let xm = DMatrix::from_fn(v, q, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let beta = solve_ols(&xm, &yv)?;
    let resid = &yv - &xm * &beta;
    let residual_sd = (resid.norm_squared() / (v - q) as f64).sqrt();

    let bootstrap_sd = match clusters {
        None => None,
        Some(ids) => {
            if ids.len() != v {
                return Err(Error::Validation("cluster id count mismatch".into()));
            }
            let mut cluster_rows: std::collections::BTreeMap<usize, Vec<usize>> =
                std::collections::BTreeMap::new();
            for (row, &c) in ids.iter().enumerate() {
                cluster_rows.entry(c).or_default().push(row);
            }
            let blocks: Vec<&Vec<usize>> = cluster_rows.values().collect();
            let n_blocks = blocks.len();
            if n_blocks < 2 {
                return Err(Error::Validation("need >= 2 clusters to bootstrap".into()));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut draws: Vec<Vec<f64>> = Vec::with_capacity(n_bootstrap);
            for _ in 0..n_bootstrap {
                let mut rows = Vec::with_capacity(v);
                for _ in 0..n_blocks {
                    let b = rng.gen_range(0..n_blocks);
                    rows.extend_from_slice(blocks[b]);
                }
                let xb = DMatrix::from_fn(rows.len(), q, |i, j| x[rows[i]][j]);
                let yb = DVector::from_fn(rows.len(), |i, _| y[rows[i]]);
                if let Ok(b) = solve_ols(&xb, &yb) {
                    draws.push(b.iter().copied().collect());
                }
            }
            if draws.len() < n_bootstrap / 2 {
                return Err(Error::Numerical(
                    "too many bootstrap replicates were rank deficient".into(),
                ));
            }
            let mut sds = Vec::with_capacity(q);
            for j in 0..q {
                let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let var = col.iter().map(|b| (b - mean).powi(2)).sum::<f64>()
                    / (col.len() - 1) as f64;
                sds.push(var.sqrt());
            }
            Some(sds)
        }
    };

    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        bootstrap_sd,
        residual_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_linear_recovery() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let design: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let fit = ols_regress(&y, &design, None, 0, 0).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficients[1], 3.0, epsilon = 1e-10);
        assert!(fit.residual_sd < 1e-10);
    }

    #[test]
    fn duplicated_rows_same_coefficients() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|&x| x).collect();
        let design: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let fit_a = ols_regress(&y, &design, None, 0, 0).unwrap();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let d2: Vec<Vec<f64>> = design.iter().chain(&design).cloned().collect();
        let fit_b = ols_regress(&y2, &d2, None, 0, 0).unwrap();
        for (a, b) in fit_a.coefficients.iter().zip(&fit_b.coefficients) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let design: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        assert!(ols_regress(&y, &design, None, 0, 0).is_err());
    }

    #[test]
    fn bootstrap_sd_reasonable() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let n_clusters = 40;
        let per = 5;
        let mut y = Vec::new();
        let mut design = Vec::new();
        let mut ids = Vec::new();
        for c in 0..n_clusters {
            let shock: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.5;
            for _ in 0..per {
                let x: f64 = rng.gen_range(-1.0..1.0);
                let eps: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.2;
                y.push(1.0 + 1.5 * x + shock + eps);
                design.push(vec![1.0, x]);
                ids.push(c);
            }
        }
        let fit = ols_regress(&y, &design, Some(&ids), 400, 11).unwrap();
        let sds = fit.bootstrap_sd.unwrap();
        assert!((fit.coefficients[1] - 1.5).abs() < 3.0 * sds[1]);
        assert!(sds[1] > 0.0 && sds[1] < 0.5);
    }
}
