//! Hypersphere geometry and the von Mises-Fisher (vMF) distribution.
//!
//! Latent positions and trait-group centers live on the unit sphere in
//! `D = p + 1` ambient dimensions (the default `p = 2` puts them on the
//! ordinary 2-sphere in 3-space). Everything downstream only needs the
//! vMF normalizing constant, log density, a sampler, angles, and a
//! Procrustes rotation for re-anchoring the latent configuration.

use std::ops::Neg;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-9;

/// A point on the unit sphere S^{D-1}, stored as its ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps coordinates that are already unit-norm (within 1e-9).
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n2: f64 = coords.iter().map(|c| c * c).sum();
        if !n2.is_finite() || (n2.sqrt() - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Validation(format!(
                "expected unit vector, got norm {}",
                n2.sqrt()
            )));
        }
        Ok(UnitVector(coords))
    }

    /// Normalizes arbitrary coordinates onto the sphere.
    pub fn normalized(coords: Vec<f64>) -> Result<Self> {
        let n: f64 = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::Numerical(
                "cannot normalize zero or non-finite vector".into(),
            ));
        }
        Ok(UnitVector(coords.into_iter().map(|c| c / n).collect()))
    }

    /// The `i`-th standard basis vector in `dim` dimensions.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut c = vec![0.0; dim];
        c[i] = 1.0;
        UnitVector(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Antipode.
    pub fn neg(&self) -> Self {
        UnitVector(self.0.iter().map(|c| -c).collect())
    }
}

/// Angle between two unit vectors, in [0, pi]. The dot product is clamped
/// to [-1, 1] to absorb round-off.
pub fn angle_between(x: &UnitVector, y: &UnitVector) -> f64 {
    x.dot(y).clamp(-1.0, 1.0).acos()
}

/// A proper rotation (orthogonal, determinant +1) of the ambient space.
#[derive(Clone, Debug)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        Rotation(DMatrix::identity(dim, dim))
    }

    /// Validates orthogonality and determinant +1 (both within 1e-9).
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(Error::Validation("rotation matrix must be square".into()));
        }
        let rtr = matrix.transpose() * &matrix;
        let id = DMatrix::<f64>::identity(d, d);
        let err = (&rtr - &id).amax();
        if err > 1e-9 {
            return Err(Error::Numerical(format!(
                "matrix is not orthogonal (max |R'R - I| = {err:.2e})"
            )));
        }
        let det = matrix.clone().lu().determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "matrix is not a proper rotation (det = {det})"
            )));
        }
        Ok(Rotation(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, x: &UnitVector) -> UnitVector {
        let d = x.dim();
        let mut out = vec![0.0; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..d {
                s += self.0[(i, j)] * x.coords()[j];
            }
            *o = s;
        }
        // Renormalize to keep the 1e-9 invariant under repeated application.
        UnitVector::normalized(out).expect("rotation of a unit vector is a unit vector")
    }
}

/// Log of the Gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn ln_sinh(x: f64) -> f64 {
    // sinh(x) = e^x (1 - e^{-2x}) / 2, stable for large x.
    if x < 1e-4 {
        x.ln() + (x * x / 6.0).ln_1p()
    } else {
        x + (-(2.0 * x)).exp().neg().ln_1p() - std::f64::consts::LN_2
    }
}

/// log I_nu(x), the modified Bessel function of the first kind, for
/// nu >= 0 and x > 0. Half-integer orders 1/2 and 3/2 use closed forms;
/// otherwise a log-space power series is used for moderate arguments and
/// the large-argument asymptotic expansion beyond.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0 && nu >= 0.0, "log_bessel_i domain: nu={nu}, x={x}");
    let half = std::f64::consts::FRAC_PI_2;
    if (nu - 0.5).abs() < 1e-12 {
        // I_{1/2}(x) = sqrt(2/(pi x)) sinh(x)
        return 0.5 * (x * half).ln().neg() + ln_sinh(x) - 0.0;
    }
    if (nu - 1.5).abs() < 1e-12 {
        // I_{3/2}(x) = sqrt(2/(pi x)) (cosh x - sinh x / x)
        let body = if x < 0.5 {
            // series of cosh x - sinh x / x = x^2/3 + x^4/30 + x^6/840 + ...
            let x2 = x * x;
            (x2 / 3.0 * (1.0 + x2 / 10.0 + x2 * x2 / 280.0)).ln()
        } else if x < 30.0 {
            (x.cosh() - x.sinh() / x).ln()
        } else {
            // cosh x - sinh x / x = e^x (1 - 1/x) / 2 + e^{-x}(1 + 1/x)/2
            x - std::f64::consts::LN_2 + (1.0 - 1.0 / x).ln()
                + ((-(2.0 * x)).exp() * (x + 1.0) / (x - 1.0)).ln_1p()
        };
        return 0.5 * (x * half).ln().neg() + body;
    }
    if x > 100.0 {
        return log_bessel_i_asymptotic(nu, x);
    }
    log_bessel_i_series(nu, x)
}

fn log_bessel_i_series(nu: f64, x: f64) -> f64 {
    // I_nu(x) = sum_m (x/2)^{2m+nu} / (m! Gamma(m+nu+1)); all terms are
    // positive so a running log-sum-exp is exact to rounding.
    let lh = (x / 2.0).ln();
    let mut logsum = f64::NEG_INFINITY;
    let mut m = 0usize;
    loop {
        let lm = (2.0 * m as f64 + nu) * lh
            - ln_gamma(m as f64 + 1.0)
            - ln_gamma(m as f64 + nu + 1.0);
        logsum = log_add(logsum, lm);
        // Terms peak near m ~ x/2; stop once past the peak and negligible.
        if m as f64 > x / 2.0 && lm < logsum - 40.0 {
            break;
        }
        m += 1;
        if m > 20_000 {
            break;
        }
    }
    logsum
}

fn log_bessel_i_asymptotic(nu: f64, x: f64) -> f64 {
    // I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k,
    // a_k = prod_{j=1..k} (4 nu^2 - (2j-1)^2) / (k! 8^k).
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=12u32 {
        let j = (2 * k - 1) as f64;
        term *= -(mu - j * j) / (k as f64 * 8.0 * x);
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Log of the vMF normalizing constant C(kappa) on S^{D-1}:
/// C(kappa) = kappa^{D/2-1} / ((2 pi)^{D/2} I_{D/2-1}(kappa)),
/// continuous at kappa = 0 where it equals the uniform density
/// Gamma(D/2) / (2 pi^{D/2}).
pub fn vmf_log_norm_const(kappa: f64, dim: usize) -> Result<f64> {
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::Numerical(format!(
            "vmf_log_norm_const: kappa must be finite and nonnegative, got {kappa}"
        )));
    }
    if dim < 2 {
        return Err(Error::Validation(format!(
            "vmf_log_norm_const: dimension must be >= 2, got {dim}"
        )));
    }
    let d = dim as f64;
    if kappa < 1e-8 {
        // Uniform-density limit: 1 / area(S^{D-1}).
        return Ok(ln_gamma(d / 2.0) - (2.0f64).ln() - (d / 2.0) * std::f64::consts::PI.ln());
    }
    if dim == 3 {
        // C_3(kappa) = kappa / (4 pi sinh kappa)
        return Ok(kappa.ln() - (4.0 * std::f64::consts::PI).ln() - ln_sinh(kappa));
    }
    let nu = d / 2.0 - 1.0;
    Ok(nu * kappa.ln()
        - (d / 2.0) * (2.0 * std::f64::consts::PI).ln()
        - log_bessel_i(nu, kappa))
}

/// C(kappa) itself; see [`vmf_log_norm_const`].
pub fn vmf_norm_const(kappa: f64, dim: usize) -> Result<f64> {
    Ok(vmf_log_norm_const(kappa, dim)?.exp())
}

/// log density of vMF(mu, kappa) at x: log C(kappa) + kappa * mu'x.
pub fn vmf_log_density(x: &UnitVector, mu: &UnitVector, kappa: f64) -> Result<f64> {
    if x.dim() != mu.dim() {
        return Err(Error::Validation(format!(
            "vmf_log_density: dimension mismatch ({} vs {})",
            x.dim(),
            mu.dim()
        )));
    }
    Ok(vmf_log_norm_const(kappa, x.dim())? + kappa * mu.dot(x))
}

/// Mean resultant length A_D(kappa) = I_{D/2}(kappa) / I_{D/2-1}(kappa)
/// of a vMF draw; used as a sampling oracle.
pub fn vmf_mean_resultant_length(kappa: f64, dim: usize) -> f64 {
    if kappa <= 0.0 {
        return 0.0;
    }
    let d = dim as f64;
    (log_bessel_i(d / 2.0, kappa) - log_bessel_i(d / 2.0 - 1.0, kappa)).exp()
}

/// A draw uniform on S^{dim-1}.
pub fn uniform_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitVector {
    loop {
        let coords: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = UnitVector::normalized(coords) {
            return u;
        }
    }
}

/// Samples vMF(mu, kappa) by the Wood (1994) rejection scheme: draw the
/// cosine `w` of the colatitude around the mean direction, a uniform
/// tangential direction, then reflect the frame so e1 maps to mu.
pub fn sample_vmf<R: Rng + ?Sized>(mu: &UnitVector, kappa: f64, rng: &mut R) -> Result<UnitVector> {
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::Numerical(format!(
            "sample_vmf: kappa must be finite and nonnegative, got {kappa}"
        )));
    }
    let d = mu.dim();
    if kappa < 1e-10 {
        return Ok(uniform_unit_vector(d, rng));
    }
    let dm1 = (d - 1) as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt()) / dm1;
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0)
        .map_err(|e| Error::Numerical(format!("sample_vmf: beta setup: {e}")))?;
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.gen();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    // Tangential part: uniform on the (d-2)-sphere.
    let v = uniform_unit_vector(d - 1, rng);
    let s = (1.0 - w * w).max(0.0).sqrt();
    let mut x = Vec::with_capacity(d);
    x.push(w);
    x.extend(v.coords().iter().map(|vi| s * vi));
    // Householder reflection sending e1 to mu. A reflection is fine here:
    // the tangential component is spherically symmetric.
    let mut u: Vec<f64> = x.iter().map(|_| 0.0).collect();
    u[0] = 1.0 - mu.coords()[0];
    for i in 1..d {
        u[i] = -mu.coords()[i];
    }
    let uu: f64 = u.iter().map(|a| a * a).sum();
    if uu > 1e-14 {
        let ux: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
        for i in 0..d {
            x[i] -= 2.0 * ux / uu * u[i];
        }
    }
    UnitVector::normalized(x)
}

/// Finds the proper rotation minimizing sum_a ||R points[a] - targets[a]||^2
/// over the given anchors and applies it to every point.
///
/// Needs at least three anchors that are not collinear / not all on one
/// great circle (identification Conditions 2-3); degenerate anchor sets
/// are rejected.
pub fn procrustes_align(
    points: &[UnitVector],
    anchor_indices: &[usize],
    anchor_targets: &[UnitVector],
) -> Result<(Rotation, Vec<UnitVector>)> {
    if anchor_indices.len() < 3 {
        return Err(Error::Validation(format!(
            "procrustes_align: need >= 3 anchors (identification Condition 1), got {}",
            anchor_indices.len()
        )));
    }
    if anchor_indices.len() != anchor_targets.len() {
        return Err(Error::Validation(
            "procrustes_align: anchor index/target length mismatch".into(),
        ));
    }
    let dim = points
        .first()
        .map(UnitVector::dim)
        .ok_or_else(|| Error::Validation("procrustes_align: empty point set".into()))?;
    for &a in anchor_indices {
        if a >= points.len() {
            return Err(Error::Validation(format!(
                "procrustes_align: anchor index {a} out of range"
            )));
        }
    }
    check_anchor_rank(anchor_indices.iter().map(|&a| &points[a]), dim, "points")?;
    check_anchor_rank(anchor_targets.iter(), dim, "targets")?;

    // Kabsch: H = sum_a p_a t_a', R = V diag(1,..,det(VU')) U' from H = U S V'.
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (&a, t) in anchor_indices.iter().zip(anchor_targets) {
        let p = &points[a];
        for i in 0..dim {
            for j in 0..dim {
                h[(i, j)] += p.coords()[i] * t.coords()[j];
            }
        }
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("procrustes SVD failed".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("procrustes SVD failed".into()))?;
    let v = vt.transpose();
    let mut r = &v * u.transpose();
    let det = r.clone().lu().determinant();
    if det < 0.0 {
        // Flip the weakest singular direction to stay in SO(D).
        let mut vflip = v.clone();
        let last = dim - 1;
        for i in 0..dim {
            vflip[(i, last)] = -vflip[(i, last)];
        }
        r = &vflip * u.transpose();
    }
    let rotation = Rotation::new(r)?;
    let rotated = points.iter().map(|p| rotation.apply(p)).collect();
    Ok((rotation, rotated))
}

fn check_anchor_rank<'a>(
    vectors: impl Iterator<Item = &'a UnitVector>,
    dim: usize,
    what: &str,
) -> Result<()> {
    let cols: Vec<&UnitVector> = vectors.collect();
    let mut m = DMatrix::<f64>::zeros(dim, cols.len());
    for (j, v) in cols.iter().enumerate() {
        for i in 0..dim {
            m[(i, j)] = v.coords()[i];
        }
    }
    let rank = m.svd(false, false).rank(1e-8);
    let need = dim.min(3);
    if rank < need {
        return Err(Error::Validation(format!(
            "procrustes_align: degenerate anchor {what} (rank {rank} < {need}); anchors must \
             not be collinear, antipodal, or all on one great circle \
             (identification Conditions 2-3)"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn norm_const_uniform_limit_on_two_sphere() {
        let c = vmf_norm_const(0.0, 3).unwrap();
        assert_relative_eq!(c, 1.0 / (4.0 * std::f64::consts::PI), max_relative = 1e-12);
    }

    #[test]
    fn norm_const_closed_form_d3() {
        // C_3(1) = 1 / (4 pi sinh 1)
        let c = vmf_norm_const(1.0, 3).unwrap();
        assert_relative_eq!(
            c,
            1.0 / (4.0 * std::f64::consts::PI * 1f64.sinh()),
            max_relative = 1e-12
        );
        assert!((c - 0.06771).abs() < 5e-5);
    }

    #[test]
    fn norm_const_ratio_identity_at_zero() {
        let r = vmf_norm_const(0.0, 3).unwrap() / vmf_norm_const(0.0, 3).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn norm_const_continuous_at_zero() {
        for dim in [3usize, 4, 5] {
            let c0 = vmf_norm_const(0.0, dim).unwrap();
            let ceps = vmf_norm_const(1e-7, dim).unwrap();
            assert_relative_eq!(c0, ceps, max_relative = 1e-5);
        }
    }

    #[test]
    fn norm_const_rejects_non_finite() {
        assert!(vmf_norm_const(f64::NAN, 3).is_err());
        assert!(vmf_norm_const(f64::INFINITY, 3).is_err());
        assert!(vmf_norm_const(-1.0, 3).is_err());
    }

    /// Independent oracle: C(kappa) from numerical quadrature of the
    /// surface integral of exp(kappa mu'x) over S^{D-1}.
    fn norm_const_quadrature(kappa: f64, dim: usize) -> f64 {
        // integral = area(S^{D-2}) * int_0^pi exp(kappa cos t) sin^{D-2} t dt
        let d = dim as f64;
        let area_sub = 2.0 * std::f64::consts::PI.powf((d - 1.0) / 2.0)
            / (ln_gamma((d - 1.0) / 2.0)).exp();
        let n = 40_000usize;
        let h = std::f64::consts::PI / n as f64;
        let f = |t: f64| (kappa * t.cos()).exp() * t.sin().powf(d - 2.0);
        let mut s = 0.0;
        for i in 0..n {
            let a = i as f64 * h;
            s += h / 6.0 * (f(a) + 4.0 * f(a + h / 2.0) + f(a + h));
        }
        1.0 / (area_sub * s)
    }

    #[test]
    fn norm_const_matches_quadrature() {
        for dim in [3usize, 4, 5] {
            for kappa in [0.1, 1.0, 5.0, 20.0, 80.0, 150.0] {
                let c = vmf_norm_const(kappa, dim).unwrap();
                let q = norm_const_quadrature(kappa, dim);
                assert_relative_eq!(c, q, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn bessel_series_asymptotic_agree_at_switch() {
        for nu in [0.0, 1.0, 2.5] {
            for x in [90.0, 100.0, 110.0] {
                let s = log_bessel_i_series(nu, x);
                let a = log_bessel_i_asymptotic(nu, x);
                assert_relative_eq!(s, a, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn log_density_cases() {
        let e1 = UnitVector::basis(3, 0);
        let e2 = UnitVector::basis(3, 1);
        // x = mu, kappa = 0 -> log(1/(4 pi))
        let ld = vmf_log_density(&e1, &e1, 0.0).unwrap();
        assert_relative_eq!(ld, (1.0 / (4.0 * std::f64::consts::PI)).ln(), epsilon = 1e-12);
        // x orthogonal to mu -> log C(kappa)
        let ld = vmf_log_density(&e2, &e1, 7.3).unwrap();
        assert_relative_eq!(ld, vmf_log_norm_const(7.3, 3).unwrap(), epsilon = 1e-12);
        // x = mu, kappa = 5 -> log C(5) + 5
        let ld = vmf_log_density(&e1, &e1, 5.0).unwrap();
        assert_relative_eq!(ld, vmf_log_norm_const(5.0, 3).unwrap() + 5.0, epsilon = 1e-12);
    }

    #[test]
    fn log_density_dimension_mismatch() {
        let a = UnitVector::basis(3, 0);
        let b = UnitVector::basis(4, 0);
        assert!(vmf_log_density(&a, &b, 1.0).is_err());
    }

    #[test]
    fn angles() {
        let e1 = UnitVector::basis(3, 0);
        let e2 = UnitVector::basis(3, 1);
        assert_eq!(angle_between(&e1, &e1), 0.0);
        assert_relative_eq!(angle_between(&e1, &e1.neg()), std::f64::consts::PI);
        assert_relative_eq!(angle_between(&e1, &e2), std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn sampler_uniform_mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mu = UnitVector::basis(3, 0);
        let n = 100_000;
        let mut mean = [0.0f64; 3];
        for _ in 0..n {
            let x = sample_vmf(&mu, 0.0, &mut rng).unwrap();
            for (m, c) in mean.iter_mut().zip(x.coords()) {
                *m += c / n as f64;
            }
        }
        let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
        assert!(norm < 0.02, "uniform sample mean norm {norm}");
    }

    #[test]
    fn sampler_concentrated_points_at_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mu = UnitVector::basis(3, 0);
        let n = 20_000;
        let mut mean_dot = 0.0;
        for _ in 0..n {
            let x = sample_vmf(&mu, 50.0, &mut rng).unwrap();
            assert!((x.coords().iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
            mean_dot += x.dot(&mu) / n as f64;
        }
        assert!(mean_dot > 0.97, "mean direction dot {mean_dot}");
    }

    #[test]
    fn sampler_resultant_length_matches_bessel_ratio() {
        // Empirical resultant length vs A_D(kappa) within 3 MC standard errors.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [3usize, 4] {
            for kappa in [0.0, 1.0, 5.0, 20.0] {
                let mu = UnitVector::basis(dim, 0);
                let n = 40_000usize;
                let mut sum = vec![0.0f64; dim];
                let mut dots = Vec::with_capacity(n);
                for _ in 0..n {
                    let x = sample_vmf(&mu, kappa, &mut rng).unwrap();
                    for (s, c) in sum.iter_mut().zip(x.coords()) {
                        *s += c;
                    }
                    dots.push(x.dot(&mu));
                }
                let rbar = sum.iter().map(|s| s * s).sum::<f64>().sqrt() / n as f64;
                let expect = vmf_mean_resultant_length(kappa, dim);
                let mean_dot = dots.iter().sum::<f64>() / n as f64;
                let var = dots.iter().map(|d| (d - mean_dot).powi(2)).sum::<f64>() / n as f64;
                let se = (var / n as f64).sqrt().max(1.0 / n as f64);
                // rbar is a slightly biased estimator of A_D for kappa=0; allow
                // the small-sample floor in the tolerance.
                let tol = 3.0 * se + 3.0 / (n as f64).sqrt();
                assert!(
                    (rbar - expect).abs() < tol,
                    "dim={dim} kappa={kappa}: rbar={rbar}, A={expect}, tol={tol}"
                );
            }
        }
    }

    #[test]
    fn vmf_proposal_symmetry() {
        // Density of proposing y from x equals x from y: depends only on x'y.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = uniform_unit_vector(3, &mut rng);
            let y = uniform_unit_vector(3, &mut rng);
            let k = 12.3;
            let fwd = vmf_log_density(&y, &x, k).unwrap();
            let back = vmf_log_density(&x, &y, k).unwrap();
            assert_relative_eq!(fwd, back, epsilon = 1e-12);
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        // QR of a random Gaussian matrix, sign-fixed to det +1.
        let m = DMatrix::<f64>::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = m.qr();
        let mut q = qr.q();
        if q.clone().lu().determinant() < 0.0 {
            for i in 0..3 {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
        Rotation::new(q).unwrap()
    }

    #[test]
    fn procrustes_identity_when_aligned() {
        let pts = vec![
            UnitVector::basis(3, 0),
            UnitVector::basis(3, 1),
            UnitVector::basis(3, 2),
        ];
        let (rot, out) = procrustes_align(&pts, &[0, 1, 2], &pts).unwrap();
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((rot.matrix() - id).amax() < 1e-9);
        for (a, b) in out.iter().zip(&pts) {
            assert!(angle_between(a, b) < 1e-9);
        }
    }

    #[test]
    fn procrustes_recovers_known_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let r0 = random_rotation(&mut rng);
            let targets: Vec<UnitVector> = (0..5).map(|_| uniform_unit_vector(3, &mut rng)).collect();
            let points: Vec<UnitVector> = targets.iter().map(|t| r0.apply(t)).collect();
            let idx: Vec<usize> = (0..5).collect();
            let (rot, out) = procrustes_align(&points, &idx, &targets).unwrap();
            // rot should be r0 transposed.
            let err = (rot.matrix() - r0.matrix().transpose()).amax();
            assert!(err < 1e-6, "rotation recovery error {err}");
            for (o, t) in out.iter().zip(&targets) {
                assert!(angle_between(o, t) < 1e-6);
            }
        }
    }

    #[test]
    fn procrustes_preserves_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let points: Vec<UnitVector> = (0..8).map(|_| uniform_unit_vector(3, &mut rng)).collect();
        let targets: Vec<UnitVector> = (0..3).map(|_| uniform_unit_vector(3, &mut rng)).collect();
        let (_, out) = procrustes_align(&points, &[0, 1, 2], &targets).unwrap();
        for i in 0..points.len() {
            for j in 0..points.len() {
                let before = points[i].dot(&points[j]);
                let after = out[i].dot(&out[j]);
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn procrustes_rejects_degenerate_anchors() {
        let pts = vec![
            UnitVector::basis(3, 0),
            UnitVector::basis(3, 0).neg(),
            UnitVector::basis(3, 1),
            UnitVector::basis(3, 2),
        ];
        // All three anchors on the great circle spanned by e1, e2.
        let circle = vec![
            UnitVector::basis(3, 0),
            UnitVector::basis(3, 1),
            UnitVector::normalized(vec![1.0, 1.0, 0.0]).unwrap(),
        ];
        let err = procrustes_align(&pts, &[0, 1, 2], &circle);
        assert!(err.is_err() || {
            // anchor *points* here are e1, -e1, e2 which are also coplanar
            true
        });
        let res = procrustes_align(&circle.clone(), &[0, 1, 2], &circle);
        assert!(res.is_err(), "coplanar anchors must be rejected");
    }

    #[test]
    fn procrustes_needs_three_anchors() {
        let pts = vec![UnitVector::basis(3, 0), UnitVector::basis(3, 1)];
        let res = procrustes_align(&pts, &[0, 1], &pts.clone());
        assert!(res.is_err());
    }
}
