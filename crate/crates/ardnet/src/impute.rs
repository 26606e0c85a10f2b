//! Weighted k-nearest-neighbor imputation of (nu, z) for nodes without
//! ARD responses, using a precomputed covariate distance matrix.

use crate::par::map_indexed;
use crate::sphere::UnitVector;
use crate::{Error, Result};

const WEIGHT_EPS: f64 = 1e-9;

/// Extend the latent parameters from the m ARD nodes to the n - m
/// census-only nodes. Row j of `covariate_distance` holds the distances
/// from non-ARD node j to each ARD node (column order = ARD order).
///
/// For each node the k nearest ARD nodes are selected (ties broken by
/// lower ARD index), weighted by 1/(distance + 1e-9) normalized to sum
/// to one; nu is the weighted average and z the renormalized weighted
/// resultant. An exactly cancelling resultant falls back to the nearest
/// neighbor's position.
pub fn impute_non_ard(
    ard_nu: &[f64],
    ard_z: &[UnitVector],
    covariate_distance: &[Vec<f64>],
    k: usize,
) -> Result<(Vec<f64>, Vec<UnitVector>)> {
    let m = ard_nu.len();
    if ard_z.len() != m {
        return Err(Error::Validation("nu and z lengths differ".into()));
    }
    if k == 0 || k > m {
        return Err(Error::Validation(format!("k = {k} must be in 1..=m ({m})")));
    }
    for (j, row) in covariate_distance.iter().enumerate() {
        if row.len() != m {
            return Err(Error::Validation(format!(
                "distance row {j} has {} columns, expected {m}",
                row.len()
            )));
        }
    }
    let dim = ard_z.first().map(UnitVector::dim).unwrap_or(0);

    let results = map_indexed(covariate_distance.len(), |j| {
        let row = &covariate_distance[j];
        // Stable selection of the k smallest distances; sort is by
        // (distance, index) so equal distances favor lower ARD index.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            row[a].partial_cmp(&row[b]).unwrap().then(a.cmp(&b))
        });
        let picked = &order[..k];

        let mut weights: Vec<f64> = picked.iter().map(|&i| 1.0 / (row[i] + WEIGHT_EPS)).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }

        let nu_j: f64 = picked.iter().zip(&weights).map(|(&i, &w)| w * ard_nu[i]).sum();
        let mut resultant = vec![0.0; dim];
        for (&i, &w) in picked.iter().zip(&weights) {
            for (acc, c) in resultant.iter_mut().zip(ard_z[i].coords()) {
                *acc += w * c;
            }
        }
        let z_j = UnitVector::normalized(resultant)
            .unwrap_or_else(|_| ard_z[picked[0]].clone());
        (nu_j, z_j)
    });

    Ok(results.into_iter().unzip())
}
