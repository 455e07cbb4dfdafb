//! Closed-form linear-Gaussian algebra.
//!
//! Everything the filter needs to do with Gaussians in one place: prediction
//! and measurement updates, scaled products and powers in information
//! (precision) form, mixture moment matching, and the Gaussian Hellinger
//! distance. All normalizers are accumulated in log domain; products over
//! sensors or measurements would underflow otherwise. Covariances are
//! symmetrized after every operation so that positive-definiteness checks do
//! not fail on floating-point drift; the checks themselves are factorization
//! successes, never tolerance fudges or silent repairs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LOG_2_PI: f64 = 1.837_877_066_409_345_3;

/// Symmetrize a square matrix in place: `M ← (M + Mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    debug_assert_eq!(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Cholesky factorization that reports failure as a typed error.
///
/// Factorization success is the positive-definiteness check used throughout
/// the crate.
pub(crate) fn cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite { context })
}

/// `log Σ exp(vᵢ)` without overflow; `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max; // empty, all -inf, or a NaN/inf poisoned input
    }
    let sum: f64 = vals.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

pub(crate) fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// A (multivariate) Gaussian density with validated invariants: the
/// covariance is symmetric and positive-definite, and its order matches the
/// mean's dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl Gaussian {
    /// Build a Gaussian, symmetrizing the covariance and verifying it is
    /// positive-definite.
    pub fn new(mean: DVector<f64>, mut covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() || covariance.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        symmetrize(&mut covariance);
        cholesky(&covariance, "covariance")?;
        Ok(Self { mean, covariance })
    }

    /// Convenience constructor for one-dimensional Gaussians.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, variance))
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log of the density evaluated at `x`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let chol = cholesky(&self.covariance, "covariance")?;
        let diff = x - &self.mean;
        let maha = diff.dot(&chol.solve(&diff));
        Ok(-0.5 * (self.dim() as f64 * LOG_2_PI + log_det_from_cholesky(&chol) + maha))
    }

    /// Draw one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let chol = Cholesky::new(self.covariance.clone())
            .expect("covariance PD by construction");
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + chol.l() * z
    }

    /// Information-form parameters `(Λ, h, g)` with
    /// `log p(x) = g + hᵀx − ½xᵀΛx`: `Λ = Σ⁻¹`, `h = Λμ`,
    /// `g = −½hᵀμ − ½(d·log 2π − log det Λ)`.
    fn canonical(&self) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
        let chol = cholesky(&self.covariance, "covariance")?;
        let mut precision = chol.inverse();
        symmetrize(&mut precision);
        let shift = &precision * &self.mean;
        let log_det_precision = -log_det_from_cholesky(&chol);
        let g = -0.5 * shift.dot(&self.mean)
            - 0.5 * (self.dim() as f64 * LOG_2_PI - log_det_precision);
        Ok((precision, shift, g))
    }
}

/// A weighted sum of Gaussians; weights are positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, Gaussian)>,
}

impl GaussianMixture {
    /// Build a mixture from non-negative (possibly unnormalized) weights;
    /// zero-weight components are dropped and the rest renormalized.
    pub fn from_weighted(components: Vec<(f64, Gaussian)>) -> Result<Self> {
        let dim = match components.first() {
            Some((_, g)) => g.dim(),
            None => return Err(Error::EmptyMixture),
        };
        let mut kept = Vec::with_capacity(components.len());
        let mut total = 0.0;
        for (w, g) in components {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "mixture weight {w} is not a finite non-negative number"
                )));
            }
            if g.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: g.dim() });
            }
            if w > 0.0 {
                total += w;
                kept.push((w, g));
            }
        }
        if kept.is_empty() || total <= 0.0 {
            return Err(Error::EmptyMixture);
        }
        for (w, _) in &mut kept {
            *w /= total;
        }
        Ok(Self { components: kept })
    }

    pub fn components(&self) -> &[(f64, Gaussian)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    /// The component with the largest weight (first such on ties).
    pub fn best_component(&self) -> &Gaussian {
        let mut best = 0;
        for (i, (w, _)) in self.components.iter().enumerate().skip(1) {
            if *w > self.components[best].0 {
                best = i;
            }
        }
        &self.components[best].1
    }
}

/// A linear-Gaussian transition or measurement map `x ↦ 𝒩(M·x, noise)`.
///
/// `noise` must be symmetric positive-semi-definite (the all-zero matrix is
/// allowed for deterministic dynamics); strict definiteness is verified where
/// it is actually required, e.g. on the innovation covariance of an update.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianMap {
    matrix: DMatrix<f64>,
    noise: DMatrix<f64>,
}

impl LinearGaussianMap {
    pub fn new(matrix: DMatrix<f64>, mut noise: DMatrix<f64>) -> Result<Self> {
        if noise.nrows() != noise.ncols() || noise.nrows() != matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: noise.nrows(),
            });
        }
        symmetrize(&mut noise);
        Ok(Self { matrix, noise })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    /// Input dimension the map applies to.
    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Output dimension (state after transition, or measurement).
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Propagate a Gaussian through linear dynamics: returns
/// `𝒩(A·mean, A·cov·Aᵀ + R)`.
pub fn predict_gaussian(g: &Gaussian, motion: &LinearGaussianMap) -> Result<Gaussian> {
    if motion.input_dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: motion.input_dim() });
    }
    let mean = motion.matrix() * g.mean();
    let cov = motion.matrix() * g.covariance() * motion.matrix().transpose() + motion.noise();
    Gaussian::new(mean, cov)
}

/// Quantities of a Kalman measurement update that depend only on the prior
/// and the sensor map, shared by every measurement scored against that prior:
/// the predicted measurement, the innovation-covariance factorization, the
/// gain, and the (measurement-independent) posterior covariance.
#[derive(Debug, Clone)]
pub struct UpdateCache {
    predicted: DVector<f64>,
    chol_innovation: Cholesky<f64, Dyn>,
    gain: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
    prior_mean: DVector<f64>,
    log_norm: f64,
    measurement_dim: usize,
}

impl UpdateCache {
    pub fn new(prior: &Gaussian, sensor_map: &LinearGaussianMap) -> Result<Self> {
        if sensor_map.input_dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                got: sensor_map.input_dim(),
            });
        }
        let c = sensor_map.matrix();
        let cross = prior.covariance() * c.transpose(); // Σ Cᵀ
        let mut innovation_cov = c * &cross + sensor_map.noise();
        symmetrize(&mut innovation_cov);
        let chol_innovation = cholesky(&innovation_cov, "innovation covariance")?;
        let gain = &cross * chol_innovation.inverse();
        // Joseph form keeps the posterior covariance positive-definite under
        // roundoff.
        let identity = DMatrix::identity(prior.dim(), prior.dim());
        let i_kc = &identity - &gain * c;
        let mut posterior_cov = &i_kc * prior.covariance() * i_kc.transpose()
            + &gain * sensor_map.noise() * gain.transpose();
        symmetrize(&mut posterior_cov);
        let measurement_dim = sensor_map.output_dim();
        let log_norm = -0.5
            * (measurement_dim as f64 * LOG_2_PI + log_det_from_cholesky(&chol_innovation));
        Ok(Self {
            predicted: c * prior.mean(),
            chol_innovation,
            gain,
            posterior_cov,
            prior_mean: prior.mean().clone(),
            log_norm,
            measurement_dim,
        })
    }

    /// Log marginal likelihood `log ∫ g(z|x) p(x) dx = log 𝒩(z; Cμ, CΣCᵀ+R)`.
    pub fn log_likelihood(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.measurement_dim {
            return Err(Error::DimensionMismatch {
                expected: self.measurement_dim,
                got: z.len(),
            });
        }
        let nu = z - &self.predicted;
        Ok(self.log_norm - 0.5 * nu.dot(&self.chol_innovation.solve(&nu)))
    }

    /// Posterior mean for measurement `z`; the covariance is shared.
    pub fn posterior_mean(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.prior_mean + &self.gain * (z - &self.predicted)
    }

    pub fn posterior_covariance(&self) -> &DMatrix<f64> {
        &self.posterior_cov
    }

    /// Full conditioned Gaussian for measurement `z`.
    pub fn posterior(&self, z: &DVector<f64>) -> Result<Gaussian> {
        Gaussian::new(self.posterior_mean(z), self.posterior_cov.clone())
    }
}

/// Condition a Gaussian prior on measurement `z` through a linear-Gaussian
/// sensor map. Returns the posterior and the log marginal likelihood
/// `log ∫ g(z|x) p(x) dx`.
pub fn update_gaussian(
    g: &Gaussian,
    sensor_map: &LinearGaussianMap,
    z: &DVector<f64>,
) -> Result<(Gaussian, f64)> {
    let cache = UpdateCache::new(g, sensor_map)?;
    let log_lik = cache.log_likelihood(z)?;
    Ok((cache.posterior(z)?, log_lik))
}

/// Normalized scaled product `∏ pᵢ(x)^{αᵢ}`, computed in information form.
///
/// Returns the normalized Gaussian and `log η = log ∫ ∏ pᵢ(x)^{αᵢ} dx`.
/// Exponents may be negative (division); if the combined precision
/// `Λ = Σ αᵢΛᵢ` is not positive-definite the division is invalid and an
/// error is returned for the caller to decide a fallback.
pub fn power_product(terms: &[(Gaussian, f64)]) -> Result<(Gaussian, f64)> {
    let dim = match terms.first() {
        Some((g, _)) => g.dim(),
        None => return Err(Error::EmptyMixture),
    };
    let mut precision = DMatrix::zeros(dim, dim);
    let mut shift = DVector::zeros(dim);
    let mut log_g = 0.0;
    for (g, alpha) in terms {
        if g.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: g.dim() });
        }
        let (p, h, gi) = g.canonical()?;
        precision += p * *alpha;
        shift += h * *alpha;
        log_g += gi * *alpha;
    }
    symmetrize(&mut precision);
    let chol = cholesky(&precision, "combined precision")?;
    let mean = chol.solve(&shift);
    let mut covariance = chol.inverse();
    symmetrize(&mut covariance);
    let log_det_precision = log_det_from_cholesky(&chol);
    let log_eta =
        log_g + 0.5 * shift.dot(&mean) + 0.5 * (dim as f64 * LOG_2_PI - log_det_precision);
    Ok((Gaussian::new(mean, covariance)?, log_eta))
}

/// Single-Gaussian moment match of a mixture: exact mean and covariance,
/// including the spread-of-means term.
pub fn weak_marginal(gm: &GaussianMixture) -> Result<Gaussian> {
    let dim = gm.dim();
    let mut mean = DVector::zeros(dim);
    for (w, g) in gm.components() {
        mean += g.mean() * *w;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (w, g) in gm.components() {
        let d = g.mean() - &mean;
        cov += (g.covariance() + &d * d.transpose()) * *w;
    }
    Gaussian::new(mean, cov)
}

/// Hellinger distance between two Gaussians, in `[0, 1]`; zero iff they are
/// identical.
pub fn hellinger_distance(g1: &Gaussian, g2: &Gaussian) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { expected: g1.dim(), got: g2.dim() });
    }
    let mut avg = (g1.covariance() + g2.covariance()) * 0.5;
    symmetrize(&mut avg);
    let chol_avg = cholesky(&avg, "average covariance")?;
    let chol_1 = cholesky(g1.covariance(), "covariance")?;
    let chol_2 = cholesky(g2.covariance(), "covariance")?;
    let diff = g1.mean() - g2.mean();
    let log_bc = 0.25 * log_det_from_cholesky(&chol_1) + 0.25 * log_det_from_cholesky(&chol_2)
        - 0.5 * log_det_from_cholesky(&chol_avg)
        - 0.125 * diff.dot(&chol_avg.solve(&diff));
    let h_sq = (1.0 - log_bc.exp()).clamp(0.0, 1.0);
    Ok(h_sq.sqrt())
}
