//! Exact multivariate Gaussian machinery: Wiener covariances, Schur-complement
//! conditioning and Monte Carlo moment tests.
//!
//! Everything in here is deliberately generic. The bridge formulas are never
//! used to build these objects, so comparing the two is a genuine cross-check.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const REGULARIZATION: f64 = 1e-12;
pub const DEFAULT_K_SIGMA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMoments {
    /// Validates shape, symmetry (to 1e-12) and positive semidefiniteness (to -1e-10).
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gaussian moments"));
        }
        for i in 0..m {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(invalid("cov", format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        if m > 0 {
            let min_eig = cov.clone().symmetric_eigenvalues().min();
            if min_eig < -PSD_TOL {
                return Err(invalid(
                    "cov",
                    format!("not positive semidefinite (min eigenvalue {min_eig:e})"),
                ));
            }
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
        })
    }

    /// `N(mean, var·I)`.
    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let m = mean.len();
        Self::new(mean, DMatrix::identity(m, m) * var)
    }

    fn from_parts_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean_vec(&self) -> Vec<f64> {
        self.mean.iter().copied().collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }

    /// Marginal law of the listed coordinates, in the listed order.
    pub fn marginal(&self, idx: &[usize]) -> Result<Self> {
        check_indices(idx, self.dim())?;
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.cov[(idx[r], idx[c])]);
        Ok(Self::from_parts_unchecked(mean, cov))
    }

    pub fn max_mean_dev(&self, other: &GaussianMoments) -> f64 {
        (&self.mean - &other.mean).amax()
    }

    pub fn max_cov_dev(&self, other: &GaussianMoments) -> f64 {
        (&self.cov - &other.cov).amax()
    }

    /// Largest absolute deviation over both mean and covariance entries.
    pub fn max_dev(&self, other: &GaussianMoments) -> f64 {
        self.max_mean_dev(other).max(self.max_cov_dev(other))
    }
}

fn check_indices(idx: &[usize], dim: usize) -> Result<()> {
    let mut seen = vec![false; dim];
    for &i in idx {
        if i >= dim {
            return Err(invalid(
                "observed_idx",
                format!("index {i} out of range for dimension {dim}"),
            ));
        }
        if seen[i] {
            return Err(invalid("observed_idx", format!("index {i} listed twice")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Law of a standard Wiener process (started at 0) observed at `times`.
pub fn wiener_cov(times: &[f64]) -> Result<GaussianMoments> {
    if times.is_empty() {
        return Err(invalid("times", "at least one time is required"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(invalid(
            "times",
            "all times must be finite and strictly positive",
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times", "times must be strictly increasing"));
    }
    let m = times.len();
    let cov = DMatrix::from_fn(m, m, |i, j| times[i].min(times[j]));
    Ok(GaussianMoments::from_parts_unchecked(
        DVector::zeros(m),
        cov,
    ))
}

/// Conditional law of the unobserved coordinates given `observed_vals` at
/// `observed_idx`. Output coordinates keep their original relative order.
///
/// The observed block is factorized by Cholesky; if that fails the diagonal is
/// lifted by 1e-12 once before giving up.
pub fn condition(
    joint: &GaussianMoments,
    observed_idx: &[usize],
    observed_vals: &[f64],
) -> Result<GaussianMoments> {
    if observed_idx.len() != observed_vals.len() {
        return Err(Error::DimensionMismatch {
            expected: observed_idx.len(),
            actual: observed_vals.len(),
        });
    }
    check_indices(observed_idx, joint.dim())?;
    if observed_idx.is_empty() {
        return Ok(joint.clone());
    }
    let free: Vec<usize> = (0..joint.dim())
        .filter(|i| !observed_idx.contains(i))
        .collect();
    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| joint.cov[(rows[r], cols[c])])
    };
    let s_oo = block(observed_idx, observed_idx);
    let s_fo = block(&free, observed_idx);
    let s_ff = block(&free, &free);

    let chol = match s_oo.clone().cholesky() {
        Some(c) => c,
        None => {
            let n = observed_idx.len();
            (s_oo + DMatrix::identity(n, n) * REGULARIZATION)
                .cholesky()
                .ok_or(Error::SingularCovariance)?
        }
    };

    let resid = DVector::from_iterator(
        observed_idx.len(),
        observed_idx
            .iter()
            .zip(observed_vals)
            .map(|(&i, v)| v - joint.mean[i]),
    );
    let mean_f = DVector::from_iterator(free.len(), free.iter().map(|&i| joint.mean[i]));
    let mean = mean_f + &s_fo * chol.solve(&resid);
    let gain_t = chol.solve(&s_fo.transpose());
    let cov = s_ff - &s_fo * gain_t;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianMoments::from_parts_unchecked(mean, cov))
}

/// Per-coordinate moment comparison of a sample against a target law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTestReport {
    pub n_samples: usize,
    /// Worst `|mean_hat - mu| * sqrt(n) / sigma` over non-degenerate coordinates.
    pub max_mean_z: f64,
    /// Worst `|var_hat / sigma^2 - 1|` over non-degenerate coordinates.
    pub max_var_ratio_dev: f64,
    pub var_threshold: f64,
    pub k_sigma: f64,
    /// Zero-variance coordinates must be reproduced exactly (to round-off).
    pub degenerate_exact: bool,
    pub pass: bool,
}

pub fn moment_test<S: AsRef<[f64]>>(
    samples: &[S],
    target: &GaussianMoments,
    k_sigma: f64,
) -> Result<MomentTestReport> {
    let n = samples.len();
    if n < 100 {
        return Err(invalid(
            "samples",
            format!("need at least 100 samples, got {n}"),
        ));
    }
    if !(k_sigma > 0.0) {
        return Err(invalid("k_sigma", "must be positive"));
    }
    let d = target.dim();
    for s in samples {
        if s.as_ref().len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.as_ref().len(),
            });
        }
    }
    let nf = n as f64;
    let mut max_mean_z: f64 = 0.0;
    let mut max_var_ratio_dev: f64 = 0.0;
    let mut degenerate_exact = true;
    for i in 0..d {
        let mu = target.mean[i];
        let var = target.cov[(i, i)];
        if var <= 0.0 {
            let tol = 1e-12 * mu.abs().max(1.0);
            degenerate_exact &= samples.iter().all(|s| (s.as_ref()[i] - mu).abs() <= tol);
            continue;
        }
        let mean_hat = samples.iter().map(|s| s.as_ref()[i]).sum::<f64>() / nf;
        let var_hat = samples
            .iter()
            .map(|s| (s.as_ref()[i] - mean_hat).powi(2))
            .sum::<f64>()
            / (nf - 1.0);
        max_mean_z = max_mean_z.max((mean_hat - mu).abs() * nf.sqrt() / var.sqrt());
        max_var_ratio_dev = max_var_ratio_dev.max((var_hat / var - 1.0).abs());
    }
    let var_threshold = k_sigma * (2.0 / nf).sqrt();
    let pass = degenerate_exact && max_mean_z <= k_sigma && max_var_ratio_dev <= var_threshold;
    Ok(MomentTestReport {
        n_samples: n,
        max_mean_z,
        max_var_ratio_dev,
        var_threshold,
        k_sigma,
        degenerate_exact,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wiener_cov_is_min_kernel() {
        let g = wiener_cov(&[1.0, 2.0, 3.0]).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1., 1., 1., 1., 2., 2., 1., 2., 3.]);
        assert_eq!(g.cov(), &expect);
        assert_eq!(g.mean_vec(), vec![0.0; 3]);
        assert_eq!(wiener_cov(&[2.0]).unwrap().variances(), vec![2.0]);
        assert!(wiener_cov(&[0.5, 0.5]).is_err());
        assert!(wiener_cov(&[0.0, 1.0]).is_err());
        assert!(wiener_cov(&[]).is_err());
    }

    #[test]
    fn condition_wiener_midpoint() {
        // Σ12·Σ22⁻¹ = [1/2, 0] by hand
        let g = wiener_cov(&[1.0, 2.0, 3.0]).unwrap();
        let c = condition(&g, &[1, 2], &[2.0, 5.0]).unwrap();
        assert!(approx(c.mean()[0], 1.0, 1e-14));
        assert!(approx(c.cov()[(0, 0)], 0.5, 1e-14));
    }

    #[test]
    fn condition_identity_leaves_rest_unchanged() {
        let g = GaussianMoments::new(vec![1.0, -2.0, 3.0], DMatrix::identity(3, 3)).unwrap();
        let c = condition(&g, &[1], &[10.0]).unwrap();
        assert_eq!(c.mean_vec(), vec![1.0, 3.0]);
        assert_eq!(c.cov(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn condition_bivariate_textbook() {
        let rho = 0.5;
        let g = GaussianMoments::new(
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
        )
        .unwrap();
        let c = condition(&g, &[1], &[1.0]).unwrap();
        assert!(approx(c.mean()[0], 0.5, 1e-15));
        assert!(approx(c.cov()[(0, 0)], 0.75, 1e-15));
    }

    #[test]
    fn condition_on_nothing_is_identity() {
        let g = wiener_cov(&[0.3, 1.0, 4.0]).unwrap();
        assert_eq!(condition(&g, &[], &[]).unwrap(), g);
    }

    #[test]
    fn condition_rejects_bad_indices() {
        let g = wiener_cov(&[1.0, 2.0]).unwrap();
        assert!(condition(&g, &[0, 0], &[1.0, 1.0]).is_err());
        assert!(condition(&g, &[2], &[1.0]).is_err());
        assert!(condition(&g, &[0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn condition_regularizes_singular_block() {
        // Two copies of the same variable: rank one observed block.
        let g = GaussianMoments::new(vec![0.0; 3], DMatrix::from_element(3, 3, 1.0)).unwrap();
        let c = condition(&g, &[0, 1], &[2.0, 2.0]).unwrap();
        assert!(approx(c.mean()[0], 2.0, 1e-6));
    }

    #[test]
    fn new_rejects_asymmetric_and_indefinite() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(GaussianMoments::new(vec![0.0, 0.0], asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianMoments::new(vec![0.0, 0.0], indef).is_err());
    }

    #[test]
    fn time_inversion_preserves_min_kernel() {
        let grid: [f64; 8] = [0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0];
        for &s in &grid {
            for &t in &grid {
                let transformed = s * t * (1.0 / s).min(1.0 / t);
                assert!(
                    approx(transformed, s.min(t), 1e-14 * s.max(t)),
                    "s={s} t={t}"
                );
            }
        }
    }

    #[test]
    fn moment_test_calibration_and_rejection() {
        let target = GaussianMoments::new(
            vec![1.0, -0.5],
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.25]),
        )
        .unwrap();
        let mut rng = substream(5, 0);
        let samples: Vec<Vec<f64>> = (0..100_000)
            .map(|_| {
                vec![
                    1.0 + 2f64.sqrt() * rng.standard_normal(),
                    -0.5 + 0.5 * rng.standard_normal(),
                ]
            })
            .collect();
        assert!(
            moment_test(&samples, &target, DEFAULT_K_SIGMA)
                .unwrap()
                .pass
        );

        let shifted = GaussianMoments::isotropic(vec![1.0], 1.0).unwrap();
        let mut rng = substream(5, 1);
        let std: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.standard_normal()]).collect();
        let r = moment_test(&std, &shifted, DEFAULT_K_SIGMA).unwrap();
        assert!(!r.pass);
        assert!(
            r.max_mean_z > 90.0 && r.max_mean_z < 110.0,
            "z = {}",
            r.max_mean_z
        );
    }

    #[test]
    fn moment_test_degenerate_exact() {
        let target = GaussianMoments::isotropic(vec![3.0, 4.0], 0.0).unwrap();
        let samples = vec![vec![3.0, 4.0]; 200];
        assert!(moment_test(&samples, &target, 4.0).unwrap().pass);
        let mut off = samples.clone();
        off[17][1] = 4.001;
        assert!(!moment_test(&off, &target, 4.0).unwrap().pass);
        assert!(moment_test(&samples[..50], &target, 4.0).is_err());
        assert!(moment_test(&vec![vec![1.0]; 200], &target, 4.0).is_err());
    }

    proptest! {
        #[test]
        fn sequential_conditioning_equals_joint(
            mut times in proptest::collection::vec(0.05f64..5.0, 5),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            times.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for i in 1..times.len() {
                if times[i] - times[i - 1] < 1e-2 { times[i] = times[i - 1] + 1e-2; }
            }
            let g = wiener_cov(&times).unwrap();
            let joint = condition(&g, &[1, 3], &[a, b]).unwrap();
            // after removing index 1, original index 3 sits at position 2
            let first = condition(&g, &[1], &[a]).unwrap();
            let seq = condition(&first, &[2], &[b]).unwrap();
            prop_assert!(joint.max_dev(&seq) <= 1e-10, "dev {}", joint.max_dev(&seq));
        }
    }
}
