//! Mean estimators: the graph shift average and linear shift-invariant filters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::graphs::ShiftOperator;
use crate::spectral::{real_part, SpectralDecomposition};
use crate::{Complex64, Error, Result};

/// A polynomial graph filter given by its taps `h`, its frequency response
/// `h̃ = Ψ h`, or both.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    taps: Option<DVector<f64>>,
    freq_response: Option<DVector<Complex64>>,
}

impl FilterSpec {
    pub fn from_taps(taps: DVector<f64>) -> Self {
        Self { taps: Some(taps), freq_response: None }
    }

    pub fn from_response(freq_response: DVector<Complex64>) -> Self {
        Self { taps: None, freq_response: Some(freq_response) }
    }

    /// Both representations; they must agree on `eigenvalues` to `1e-8`
    /// relative.
    pub fn with_both(taps: DVector<f64>, freq_response: DVector<Complex64>, eigenvalues: &DVector<Complex64>) -> Result<Self> {
        let from_taps = frequency_response(taps.as_slice(), eigenvalues);
        if from_taps.len() != freq_response.len() {
            return Err(Error::DimensionMismatch { expected: from_taps.len(), found: freq_response.len() });
        }
        let scale = freq_response.iter().map(|c| c.norm()).fold(f64::MIN_POSITIVE, f64::max);
        let gap = (&from_taps - &freq_response).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if gap > 1e-8 * scale {
            return Err(Error::InvalidParameter(format!(
                "taps and frequency response disagree by {gap:e}"
            )));
        }
        Ok(Self { taps: Some(taps), freq_response: Some(freq_response) })
    }

    pub fn taps(&self) -> Option<&DVector<f64>> {
        self.taps.as_ref()
    }

    pub fn freq_response(&self) -> Option<&DVector<Complex64>> {
        self.freq_response.as_ref()
    }

    /// `h̃`, computed from the taps when only those are stored.
    pub fn response_on(&self, eigenvalues: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        match (&self.freq_response, &self.taps) {
            (Some(h), _) => {
                if h.len() != eigenvalues.len() {
                    return Err(Error::DimensionMismatch { expected: eigenvalues.len(), found: h.len() });
                }
                Ok(h.clone())
            }
            (None, Some(t)) => Ok(frequency_response(t.as_slice(), eigenvalues)),
            (None, None) => Err(Error::InvalidParameter("filter has neither taps nor a response".into())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&FilterJson::from(self)).expect("filter serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FilterJson = serde_json::from_str(text)?;
        if raw.taps.is_none() && raw.freq_response.is_none() {
            return Err(Error::Malformed("filter needs taps or freq_response".into()));
        }
        Ok(Self {
            taps: raw.taps.map(DVector::from_vec),
            freq_response: raw
                .freq_response
                .map(|v| DVector::from_iterator(v.len(), v.iter().map(|[re, im]| Complex64::new(*re, *im)))),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct FilterJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    taps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    freq_response: Option<Vec<[f64; 2]>>,
}

impl From<&FilterSpec> for FilterJson {
    fn from(f: &FilterSpec) -> Self {
        Self {
            taps: f.taps.as_ref().map(|t| t.iter().copied().collect()),
            freq_response: f.freq_response.as_ref().map(|h| h.iter().map(|c| [c.re, c.im]).collect()),
        }
    }
}

fn check_depth_and_root(lambda1: f64, depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::InvalidParameter("diffusion depth L must be at least 1".into()));
    }
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda1 = {lambda1} must be positive")));
    }
    Ok(())
}

/// Mixing weights of the normalized diffusion recurrence.
///
/// With `α_j = Σ_{ℓ≤j} λ_1^ℓ` and `u_j = α_j⁻¹ Σ_{ℓ≤j} S^ℓ x`,
///
/// ```text
/// u_{j+1} = w_{j+1} x + (1 - w_{j+1}) S u_j / λ_1,    w_{j+1} = 1 / α_{j+1}
/// ```
///
/// and `w_{j+1} = w_j / (w_j + λ_1)` stays in `[0, 1]` for any `λ_1 > 0`, so
/// nothing overflows however large `λ_1^L` gets. Once `λ_1^L` leaves the double
/// range `w` underflows to zero, which only drops terms below `1e-308`. Entry `j` of the result is
/// `w_{j+1}` for `j = 0..L-1`.
pub fn diffusion_weights(lambda1: f64, depth: usize) -> Vec<f64> {
    let mut w = 1.0;
    (1..depth)
        .map(|_| {
            w /= w + lambda1;
            w
        })
        .collect()
}

/// One node update of the recurrence, given the in-neighbor sum
/// `Σ_j s_kj u_j`. Shared with the distributed simulator so both agree bit for
/// bit.
#[inline]
pub(crate) fn diffusion_update(w: f64, observation: f64, neighbor_sum: f64, lambda1: f64) -> f64 {
    w * observation + (1.0 - w) * (neighbor_sum / lambda1)
}

/// `μ̂_L = (Σ_{ℓ<L} λ_1^ℓ)⁻¹ Σ_{ℓ<L} S^ℓ x`, by `L - 1` sparse shift
/// applications.
pub fn graph_shift_average(s: &ShiftOperator, lambda1: f64, x: &DVector<f64>, depth: usize) -> Result<DVector<f64>> {
    if x.len() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), found: x.len() });
    }
    check_depth_and_root(lambda1, depth)?;
    let mut averager = ShiftAverager::new(s, lambda1, depth)?;
    let mut out = DVector::zeros(s.n());
    averager.run(x, &mut out);
    Ok(out)
}

/// Reusable buffers for evaluating the shift average on many signals.
#[derive(Debug, Clone)]
pub struct ShiftAverager<'a> {
    shift: &'a ShiftOperator,
    lambda1: f64,
    weights: Vec<f64>,
    scratch: DVector<f64>,
}

impl<'a> ShiftAverager<'a> {
    pub fn new(shift: &'a ShiftOperator, lambda1: f64, depth: usize) -> Result<Self> {
        check_depth_and_root(lambda1, depth)?;
        Ok(Self {
            shift,
            lambda1,
            weights: diffusion_weights(lambda1, depth),
            scratch: DVector::zeros(shift.n()),
        })
    }

    /// Writes `μ̂_L` for signal `x` into `out`.
    pub fn run(&mut self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(x);
        for &w in &self.weights {
            self.shift.apply_into(out, &mut self.scratch);
            for ((o, &xk), &t) in out.iter_mut().zip(x.iter()).zip(self.scratch.iter()) {
                *o = diffusion_update(w, xk, t, self.lambda1);
            }
        }
    }
}

fn normalizer(h: &DVector<Complex64>) -> Result<Complex64> {
    let h1 = h[0];
    let scale = h.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !(h1.norm() > 1e-12 * scale) {
        return Err(Error::DegenerateNormalization(h1.norm()));
    }
    Ok(h1)
}

/// `z = h̃_1⁻¹ V diag(h̃) Vᴴ x`, computed in the spectral domain.
pub fn filtered_estimator(d: &SpectralDecomposition, f: &FilterSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != d.n() {
        return Err(Error::DimensionMismatch { expected: d.n(), found: x.len() });
    }
    let h = f.response_on(d.eigenvalues())?;
    let h1 = normalizer(&h)?;
    let v = d.eigenvectors();
    let mut xt = v.ad_mul(&x.map(|c| Complex64::new(c, 0.0)));
    for (c, hn) in xt.iter_mut().zip(h.iter()) {
        *c *= hn / h1;
    }
    real_part(&(v * xt), 1e-10)
}

/// `z = (Σ h_ℓ λ_1^ℓ)⁻¹ Σ h_ℓ S^ℓ x`, computed in the vertex domain by Horner's
/// scheme on the shift.
pub fn filtered_estimator_taps(s: &ShiftOperator, lambda1: f64, taps: &[f64], x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), found: x.len() });
    }
    let Some((&last, rest)) = taps.split_last() else {
        return Err(Error::InvalidParameter("empty tap vector".into()));
    };
    let h1 = rest.iter().rev().fold(last, |acc, &h| acc * lambda1 + h);
    let scale = taps.iter().map(|t| t.abs() * lambda1.abs().max(1.0).powi(taps.len() as i32 - 1)).fold(0.0, f64::max);
    if !(h1.abs() > 1e-12 * scale) {
        return Err(Error::DegenerateNormalization(h1.abs()));
    }
    let mut y = x * last;
    let mut sy = DVector::zeros(s.n());
    for &h in rest.iter().rev() {
        s.apply_into(&y, &mut sy);
        y.copy_from(&sy);
        y.axpy(h, x, 1.0);
    }
    Ok(y / h1)
}

/// The minimum-MSE unbiased estimator `z = v_1 (v_1ᴴ x)`.
pub fn optimal_mse_estimator(d: &SpectralDecomposition, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != d.n() {
        return Err(Error::DimensionMismatch { expected: d.n(), found: x.len() });
    }
    let v1 = d.perron_vector();
    let c = v1.dot(x);
    Ok(v1 * c)
}

/// Response `(√ν_max, 0, ..., 0)` maximizing the log-determinant objective
/// under `‖h̃‖² ≤ ν_max`.
pub fn optimal_logdet_response(n: usize, nu_max: f64) -> Result<FilterSpec> {
    if n == 0 {
        return Err(Error::InvalidSize("filter needs at least one frequency".into()));
    }
    if !(nu_max > 0.0 && nu_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("nu_max = {nu_max} must be positive")));
    }
    let mut h = DVector::from_element(n, Complex64::ZERO);
    h[0] = Complex64::new(nu_max.sqrt(), 0.0);
    Ok(FilterSpec::from_response(h))
}

/// `h̃_n = Σ_ℓ h_ℓ λ_n^ℓ` by Horner's scheme.
pub fn frequency_response(taps: &[f64], eigenvalues: &DVector<Complex64>) -> DVector<Complex64> {
    eigenvalues.map(|l| taps.iter().rev().fold(Complex64::ZERO, |acc, &h| acc * l + h))
}

#[derive(Debug, Clone)]
pub struct TapSynthesis {
    pub taps: DVector<f64>,
    /// `‖Ψ h - h̃‖_2`.
    pub residual: f64,
    /// Ratio of extreme singular values of the (real-stacked) Vandermonde.
    pub condition: f64,
    /// Set when `condition > 1e12`.
    pub ill_conditioned: bool,
}

/// Least-squares taps `h` (length `N`) with `Ψ h ≈ h̃`.
pub fn synthesize_taps(eigenvalues: &DVector<Complex64>, target: &DVector<Complex64>) -> Result<TapSynthesis> {
    let n = eigenvalues.len();
    if target.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: target.len() });
    }
    if n == 0 {
        return Err(Error::InvalidSize("empty spectrum".into()));
    }
    let scale = eigenvalues[0].norm().max(f64::MIN_POSITIVE);
    let mut clashing = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (eigenvalues[i] - eigenvalues[j]).norm() <= 1e-9 * scale {
                clashing.push(i);
                clashing.push(j);
            }
        }
    }
    if !clashing.is_empty() {
        clashing.sort_unstable();
        clashing.dedup();
        return Err(Error::RankDeficient {
            reason: "repeated eigenvalues make the Vandermonde singular".into(),
            indices: clashing,
        });
    }

    let psi = DMatrix::from_fn(n, n, |r, c| eigenvalues[r].powu(c as u32));
    let stacked = DMatrix::from_fn(2 * n, n, |r, c| if r < n { psi[(r, c)].re } else { psi[(r - n, c)].im });
    let rhs = DVector::from_fn(2 * n, |r, _| if r < n { target[r].re } else { target[r - n].im });
    let svd = stacked.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let taps = svd
        .solve(&rhs, smax * f64::EPSILON)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let fitted = frequency_response(taps.as_slice(), eigenvalues);
    let residual = (fitted - target).norm();
    if condition > 1e12 {
        log::warn!("tap synthesis is ill-conditioned (condition estimate {condition:e})");
    }
    Ok(TapSynthesis { taps, residual, condition, ill_conditioned: condition > 1e12 })
}
