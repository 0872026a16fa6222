//! Wide-sense-stationary graph processes.
//!
//! A process is a decomposition `S = V Λ Vᴴ` together with a mean coefficient
//! `μ` and a power spectral density `p`. Its ensemble mean is `μ v_1` and its
//! covariance is `V diag(p) Vᴴ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::spectral::SpectralDecomposition;
use crate::{Complex64, Error, Result};

/// Negative PSD entries down to this (times `max(1, max p)`) are rounding and
/// get clamped to zero.
const NEG_PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct WssProcess {
    decomposition: SpectralDecomposition,
    mu: f64,
    psd: DVector<f64>,
}

impl WssProcess {
    pub fn new(decomposition: SpectralDecomposition, mu: f64, psd: DVector<f64>) -> Result<Self> {
        if psd.len() != decomposition.n() {
            return Err(Error::DimensionMismatch { expected: decomposition.n(), found: psd.len() });
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu = {mu} is not finite")));
        }
        let psd = validate_psd(psd)?;
        Ok(Self { decomposition, mu, psd })
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn psd(&self) -> &DVector<f64> {
        &self.psd
    }

    /// `μ v_1`.
    pub fn ensemble_mean(&self) -> DVector<f64> {
        self.decomposition.perron_vector() * self.mu
    }

    /// `C_x = V diag(p) Vᴴ`.
    pub fn covariance(&self) -> DMatrix<Complex64> {
        let v = self.decomposition.eigenvectors();
        let n = v.nrows();
        let scaled = DMatrix::from_fn(n, n, |i, j| v[(i, j)] * self.psd[j]);
        scaled * v.adjoint()
    }

    /// `C_x` as a real matrix; fails when the PSD does not give a real
    /// covariance (on the directed cycle `p` must match on conjugate pairs).
    pub fn real_covariance(&self) -> Result<DMatrix<f64>> {
        if let Some(v) = self.decomposition.real_eigenvectors() {
            let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.psd[j]);
            return Ok(scaled * v.transpose());
        }
        real_matrix(&self.covariance(), self.psd.amax())
    }

    /// Precomputes the square root used for sampling.
    pub fn sampler(&self) -> Result<Sampler> {
        let sqrt_p = self.psd.map(f64::sqrt);
        let root = if let Some(v) = self.decomposition.real_eigenvectors() {
            let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * sqrt_p[j]);
            scaled * v.transpose()
        } else {
            let v = self.decomposition.eigenvectors();
            let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * sqrt_p[j]);
            real_matrix(&(scaled * v.adjoint()), sqrt_p.amax())?
        };
        Ok(Sampler { mean: self.ensemble_mean(), root })
    }
}

fn validate_psd(mut psd: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(bad) = psd.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidPsd(format!("entry {bad} is not finite")));
    }
    let floor = -NEG_PSD_TOL * psd.amax().max(1.0);
    if let Some((i, p)) = psd.iter().enumerate().find(|(_, p)| **p < floor) {
        return Err(Error::InvalidPsd(format!("p[{i}] = {p:e} is negative")));
    }
    psd.iter_mut().for_each(|p| *p = p.max(0.0));
    Ok(psd)
}

fn real_matrix(m: &DMatrix<Complex64>, scale: f64) -> Result<DMatrix<f64>> {
    let worst = m.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if worst > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidPsd(format!(
            "covariance is not real (imaginary part {worst:e}); the PSD must agree on conjugate eigenvalue pairs"
        )));
    }
    Ok(m.map(|c| c.re))
}

/// Draws `x = μ v_1 + B w` with `B = V diag(√p) Vᴴ` and `w` standard normal.
#[derive(Debug, Clone)]
pub struct Sampler {
    mean: DVector<f64>,
    root: DMatrix<f64>,
}

impl Sampler {
    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The symmetric square root `B` of the covariance.
    pub fn root(&self) -> &DMatrix<f64> {
        &self.root
    }

    /// Fills `x` with a draw, using `w` as scratch for the white noise.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut DVector<f64>, x: &mut DVector<f64>) {
        w.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        x.copy_from(&self.mean);
        x.gemv(1.0, &self.root, w, 1.0);
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut w = DVector::zeros(self.n());
        let mut x = DVector::zeros(self.n());
        self.sample_into(rng, &mut w, &mut x);
        x
    }
}

/// `p_n = a_0² / |1 - a λ_n|²`, the PSD of the Gaussian Markov random field
/// with covariance `a_0² (I - aS)⁻¹ (I - aS)⁻ᴴ`.
pub fn gmrf_psd(d: &SpectralDecomposition, a: f64, a0: f64) -> Result<DVector<f64>> {
    let mut p = DVector::zeros(d.n());
    for (n, l) in d.eigenvalues().iter().enumerate() {
        let gap = (Complex64::ONE - l * a).norm();
        if gap < 1e-12 {
            return Err(Error::SingularPrecision { index: n, gap });
        }
        p[n] = a0 * a0 / (gap * gap);
    }
    Ok(p)
}

/// GMRF PSD with `a_0` chosen so that `p_1 = p1_target`. Returns the PSD and
/// `a_0`.
pub fn gmrf_psd_calibrated(d: &SpectralDecomposition, a: f64, p1_target: f64) -> Result<(DVector<f64>, f64)> {
    if !(p1_target >= 0.0 && p1_target.is_finite()) {
        return Err(Error::InvalidParameter(format!("target p1 = {p1_target} must be nonnegative")));
    }
    let unit = gmrf_psd(d, a, 1.0)?;
    let a0 = (p1_target / unit[0]).sqrt();
    Ok((unit * (a0 * a0), a0))
}

/// Which value the DC entry of [`logspace_psd`] takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcRule {
    /// `p_1 = p1`, so that the SNR refers to the DC power.
    #[default]
    KeepP1,
    /// The log-spaced formula at `n = 1` too, giving `p_1 = 10 · p1`.
    Literal,
}

/// `p_n = p1 · 10^{3(n-1)/(N-1) + 1}` for `n ≥ 2`: log-spaced between
/// `10 p1` and `10⁴ p1`.
pub fn logspace_psd(n: usize, p1: f64, dc: DcRule) -> Result<DVector<f64>> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("log-spaced PSD needs N >= 2, got {n}")));
    }
    if !(p1 >= 0.0 && p1.is_finite()) {
        return Err(Error::InvalidParameter(format!("p1 = {p1} must be nonnegative")));
    }
    let denom = (n - 1) as f64;
    let mut p = DVector::from_fn(n, |i, _| p1 * 10f64.powf(3.0 * i as f64 / denom + 1.0));
    if dc == DcRule::KeepP1 {
        p[0] = p1;
    }
    Ok(p)
}

/// DC power for a given SNR: `p_1 = μ² 10^{-SNR/10}`.
pub fn snr_to_p1(mu: f64, snr_db: f64) -> Result<f64> {
    if mu == 0.0 || !mu.is_finite() || !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("SNR undefined for mu = {mu}, snr_db = {snr_db}")));
    }
    Ok(mu * mu * 10f64.powf(-snr_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WssCheck {
    /// Relative energy of the sample mean outside `span(v_1)`.
    pub mean_alignment: f64,
    /// Relative Frobenius energy off the diagonal of `Vᴴ C V`.
    pub offdiag_energy: f64,
    pub pass: bool,
}

/// Checks both stationarity conditions on empirical (or exact) moments.
pub fn verify_wss(
    sample_mean: &DVector<f64>,
    sample_cov: &DMatrix<f64>,
    d: &SpectralDecomposition,
    tol: f64,
) -> Result<WssCheck> {
    let n = d.n();
    if sample_mean.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: sample_mean.len() });
    }
    if sample_cov.nrows() != n || sample_cov.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: sample_cov.nrows() });
    }
    let v1 = d.perron_vector();
    let residual = sample_mean - &v1 * v1.dot(sample_mean);
    let mean_alignment = residual.norm() / sample_mean.norm().max(tol);

    let v = d.eigenvectors();
    let spectral = v.adjoint() * sample_cov.map(|c| Complex64::new(c, 0.0)) * v;
    let off: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| spectral[(i, j)].norm_sqr())
        .sum();
    let total = sample_cov.norm();
    let offdiag_energy = if total > 0.0 { off.sqrt() / total } else { 0.0 };
    Ok(WssCheck {
        mean_alignment,
        offdiag_energy,
        pass: mean_alignment <= tol && offdiag_energy <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{adjacency_shift, directed_cycle, erdos_renyi, Graph};
    use crate::seeds::rng_from_seed;
    use crate::spectral::decompose;
    use approx::assert_relative_eq;

    fn k3() -> SpectralDecomposition {
        decompose(&adjacency_shift(&Graph::complete(3).unwrap()).unwrap()).unwrap()
    }

    fn cycle(n: usize) -> SpectralDecomposition {
        decompose(&adjacency_shift(&directed_cycle(n).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn means() {
        let p = WssProcess::new(cycle(9), 3.0, DVector::zeros(9)).unwrap();
        assert!(p.ensemble_mean().iter().all(|m| (m - 1.0).abs() < 1e-14));
        let p = WssProcess::new(k3(), 3f64.sqrt(), DVector::zeros(3)).unwrap();
        assert!(p.ensemble_mean().iter().all(|m| (m - 1.0).abs() < 1e-14));
        let p = WssProcess::new(k3(), 0.0, DVector::zeros(3)).unwrap();
        assert_eq!(p.ensemble_mean(), DVector::zeros(3));
    }

    #[test]
    fn covariance_examples() {
        let p = WssProcess::new(k3(), 1.0, DVector::from_element(3, 1.0)).unwrap();
        assert!((p.real_covariance().unwrap() - DMatrix::identity(3, 3)).amax() < 1e-14);

        let d = k3();
        let v1 = d.perron_vector();
        let p = WssProcess::new(d, 1.0, DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        assert!((p.real_covariance().unwrap() - &v1 * v1.transpose()).amax() < 1e-14);

        let psd = DVector::from_vec(vec![0.3, 1.7, 0.2]);
        let d = k3();
        let v = d.real_eigenvectors().unwrap();
        let p = WssProcess::new(d, 1.0, psd.clone()).unwrap();
        let back = v.transpose() * p.real_covariance().unwrap() * &v;
        for n in 0..3 {
            assert_relative_eq!(back[(n, n)], psd[n], epsilon = 1e-12);
        }
    }

    #[test]
    fn psd_validation() {
        assert!(matches!(
            WssProcess::new(k3(), 1.0, DVector::from_vec(vec![1.0, -0.1, 0.0])),
            Err(Error::InvalidPsd(_))
        ));
        assert!(WssProcess::new(k3(), 1.0, DVector::from_vec(vec![1.0, f64::NAN, 0.0])).is_err());
        let p = WssProcess::new(k3(), 1.0, DVector::from_vec(vec![1.0, -1e-13, 0.0])).unwrap();
        assert_eq!(p.psd()[1], 0.0);
    }

    #[test]
    fn noiseless_draws_are_the_mean() {
        let p = WssProcess::new(k3(), 2.0, DVector::zeros(3)).unwrap();
        let s = p.sampler().unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..5 {
            assert_eq!(s.sample(&mut rng), p.ensemble_mean());
        }
    }

    #[test]
    fn white_draws_have_identity_covariance() {
        let d = decompose(&adjacency_shift(&erdos_renyi(5, 0.6, &mut rng_from_seed(2)).unwrap()).unwrap()).unwrap();
        let p = WssProcess::new(d, 0.0, DVector::from_element(5, 1.0)).unwrap();
        let s = p.sampler().unwrap();
        let mut rng = rng_from_seed(3);
        let mut acc = DMatrix::<f64>::zeros(5, 5);
        let draws = 100_000;
        for _ in 0..draws {
            let x = s.sample(&mut rng);
            acc.ger(1.0, &x, &x, 1.0);
        }
        acc /= draws as f64;
        assert!((acc - DMatrix::identity(5, 5)).amax() < 0.05);
    }

    #[test]
    fn empirical_mean_within_clt_band() {
        let g = erdos_renyi(8, 0.5, &mut rng_from_seed(5)).unwrap();
        let d = decompose(&adjacency_shift(&g).unwrap()).unwrap();
        let p = WssProcess::new(d, 3.0, logspace_psd(8, 0.09, DcRule::KeepP1).unwrap()).unwrap();
        let s = p.sampler().unwrap();
        let cov = p.real_covariance().unwrap();
        let mut rng = rng_from_seed(6);
        let draws = 100_000;
        let mut sum = DVector::<f64>::zeros(8);
        for _ in 0..draws {
            sum += s.sample(&mut rng);
        }
        let mean = sum / draws as f64;
        let band = 4.0 * (cov.diagonal().max() / draws as f64).sqrt();
        assert!((mean - p.ensemble_mean()).amax() <= band);
    }

    #[test]
    fn cycle_needs_conjugate_symmetric_psd() {
        let ok = WssProcess::new(cycle(4), 1.0, DVector::from_vec(vec![1.0, 2.0, 2.0, 3.0])).unwrap();
        let s = ok.sampler().unwrap();
        assert!((s.root() * s.root() - ok.real_covariance().unwrap()).amax() < 1e-12);
        let bad = WssProcess::new(cycle(4), 1.0, DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0])).unwrap();
        assert!(matches!(bad.sampler(), Err(Error::InvalidPsd(_))));
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let p = WssProcess::new(k3(), 1.0, DVector::from_vec(vec![0.5, 1.0, 2.0])).unwrap();
        let s = p.sampler().unwrap();
        assert_eq!(s.sample(&mut rng_from_seed(11)), s.sample(&mut rng_from_seed(11)));
    }

    #[test]
    fn gmrf_examples() {
        let d = k3();
        let white = gmrf_psd(&d, 0.0, 0.7).unwrap();
        assert!(white.iter().all(|p| (p - 0.49).abs() < 1e-15));
        let p = gmrf_psd(&d, 0.99 / d.lambda1(), 1.0).unwrap();
        assert_relative_eq!(p[0], 1e4, max_relative = 1e-10);
        assert!(matches!(gmrf_psd(&d, 1.0 / d.lambda1(), 1.0), Err(Error::SingularPrecision { index: 0, .. })));
        let (p, a0) = gmrf_psd_calibrated(&d, 0.99 / d.lambda1(), 0.9).unwrap();
        assert_relative_eq!(p[0], 0.9, max_relative = 1e-12);
        assert_relative_eq!(a0, (0.9f64).sqrt() * 0.01, max_relative = 1e-10);
    }

    #[test]
    fn gmrf_psd_matches_dense_covariance() {
        let g = erdos_renyi(6, 0.6, &mut rng_from_seed(9)).unwrap();
        let s = adjacency_shift(&g).unwrap();
        let d = decompose(&s).unwrap();
        let a = 0.5 / d.lambda1();
        let p = WssProcess::new(d.clone(), 0.0, gmrf_psd(&d, a, 1.3).unwrap()).unwrap();
        let inv = (DMatrix::identity(6, 6) - s.matrix() * a).try_inverse().unwrap();
        let dense = &inv * inv.transpose() * (1.3 * 1.3);
        assert!((p.real_covariance().unwrap() - dense).amax() < 1e-10);
    }

    #[test]
    fn logspace_examples() {
        let p = logspace_psd(2, 1.0, DcRule::KeepP1).unwrap();
        assert_relative_eq!(p[0], 1.0);
        assert_relative_eq!(p[1], 1e4, max_relative = 1e-14);
        let p = logspace_psd(4, 1.0, DcRule::KeepP1).unwrap();
        for (n, want) in [(1, 1e2), (2, 1e3), (3, 1e4)] {
            assert_relative_eq!(p[n], want, max_relative = 1e-14);
        }
        assert_relative_eq!(logspace_psd(4, 1.0, DcRule::Literal).unwrap()[0], 10.0);
        assert_eq!(logspace_psd(5, 0.0, DcRule::KeepP1).unwrap(), DVector::zeros(5));
        assert!(logspace_psd(1, 1.0, DcRule::KeepP1).is_err());
    }

    #[test]
    fn snr_examples() {
        assert_relative_eq!(snr_to_p1(3.0, 10.0).unwrap(), 0.9, max_relative = 1e-15);
        assert_relative_eq!(snr_to_p1(1.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(snr_to_p1(2.0, 20.0).unwrap(), 0.04, max_relative = 1e-15);
        assert!(snr_to_p1(0.0, 10.0).is_err());
    }

    #[test]
    fn wss_check_on_exact_and_broken_moments() {
        let g = erdos_renyi(7, 0.5, &mut rng_from_seed(12)).unwrap();
        let d = decompose(&adjacency_shift(&g).unwrap()).unwrap();
        let p = WssProcess::new(d.clone(), 2.0, logspace_psd(7, 1.0, DcRule::KeepP1).unwrap()).unwrap();
        let ok = verify_wss(&p.ensemble_mean(), &p.real_covariance().unwrap(), &d, 1e-10).unwrap();
        assert!(ok.pass && ok.offdiag_energy <= 1e-12);

        let v2 = d.real_eigenvectors().unwrap().column(1).into_owned();
        let bad = verify_wss(&v2, &p.real_covariance().unwrap(), &d, 0.05).unwrap();
        assert_relative_eq!(bad.mean_alignment, 1.0, epsilon = 1e-12);
        assert!(!bad.pass);
    }

    #[test]
    fn wss_check_on_empirical_moments() {
        let g = erdos_renyi(6, 0.6, &mut rng_from_seed(13)).unwrap();
        let d = decompose(&adjacency_shift(&g).unwrap()).unwrap();
        let p = WssProcess::new(d.clone(), 3.0, logspace_psd(6, 0.009, DcRule::KeepP1).unwrap()).unwrap();
        let s = p.sampler().unwrap();
        let mut rng = rng_from_seed(14);
        let draws = 100_000;
        let mut sum = DVector::<f64>::zeros(6);
        let mut outer = DMatrix::<f64>::zeros(6, 6);
        for _ in 0..draws {
            let x = s.sample(&mut rng);
            outer.ger(1.0, &x, &x, 1.0);
            sum += x;
        }
        let mean = sum / draws as f64;
        let cov = outer / draws as f64 - &mean * mean.transpose();
        let check = verify_wss(&mean, &cov, &d, 0.05).unwrap();
        assert!(check.pass, "{check:?}");
    }
}
