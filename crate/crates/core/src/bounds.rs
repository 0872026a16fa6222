//! Closed-form second-order statistics of the estimators and the resulting
//! Chebyshev error bounds.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use crate::io::fmt_f64;
use crate::spectral::SpectralDecomposition;
use crate::{Complex64, Error, Result};

/// Below this distance from 1 the geometric sum is added term by term.
const NEAR_ONE: f64 = 1e-9;

/// `Σ_{ℓ<L} λ^ℓ`, multiplied by `λ_1^{-(L-1)}` when `λ_1 > 1` so that neither
/// the numerator nor the denominator of `q_n` can overflow.
fn scaled_geometric_sum(lambda: Complex64, lambda1: f64, depth: usize) -> Complex64 {
    let scaled = lambda1 > 1.0;
    let c = if scaled { lambda1.powi(-(depth as i32 - 1)) } else { 1.0 };
    if (Complex64::ONE - lambda).norm() <= NEAR_ONE {
        let mut term = Complex64::new(c, 0.0);
        let mut sum = Complex64::ZERO;
        for _ in 0..depth {
            sum += term;
            term *= lambda;
        }
        return sum;
    }
    if scaled {
        let r = lambda / lambda1;
        (Complex64::new(c, 0.0) - lambda * r.powu(depth as u32 - 1)) / (Complex64::ONE - lambda)
    } else {
        (Complex64::ONE - lambda.powu(depth as u32)) / (Complex64::ONE - lambda)
    }
}

/// PSD of the depth-`L` shift average:
/// `q_n = p_n |Σ_{ℓ<L} λ_n^ℓ|² / |Σ_{ℓ<L} λ_1^ℓ|²`, with `q_1 = p_1`.
pub fn estimator_psd(p: &DVector<f64>, eigenvalues: &DVector<Complex64>, lambda1: f64, depth: usize) -> Result<DVector<f64>> {
    if p.len() != eigenvalues.len() {
        return Err(Error::DimensionMismatch { expected: eigenvalues.len(), found: p.len() });
    }
    if depth == 0 {
        return Err(Error::InvalidParameter("diffusion depth L must be at least 1".into()));
    }
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda1 = {lambda1} must be positive")));
    }
    let den = scaled_geometric_sum(Complex64::new(lambda1, 0.0), lambda1, depth).norm_sqr();
    let mut q = DVector::zeros(p.len());
    for (n, (pn, l)) in p.iter().zip(eigenvalues.iter()).enumerate() {
        q[n] = if n == 0 {
            *pn
        } else {
            pn * (scaled_geometric_sum(*l, lambda1, depth).norm_sqr() / den)
        };
    }
    Ok(q)
}

/// PSD of a normalized LSI filter estimator: `r_n = p_n |h̃_n|² / |h̃_1|²`,
/// with `r_1 = p_1`.
pub fn filtered_psd(p: &DVector<f64>, freq_response: &DVector<Complex64>) -> Result<DVector<f64>> {
    if p.len() != freq_response.len() {
        return Err(Error::DimensionMismatch { expected: freq_response.len(), found: p.len() });
    }
    let h1 = freq_response[0].norm_sqr();
    if h1 == 0.0 {
        return Err(Error::DegenerateNormalization(0.0));
    }
    Ok(DVector::from_fn(p.len(), |n, _| {
        if n == 0 {
            p[0]
        } else {
            p[n] * (freq_response[n].norm_sqr() / h1)
        }
    }))
}

/// `Σ_n psd_n |v_{k,n}|²`, the variance at node `k` of a signal whose
/// spectral-domain covariance is `diag(psd)`.
pub fn node_variance(psd: &DVector<f64>, d: &SpectralDecomposition, k: usize) -> Result<f64> {
    if k >= d.n() {
        return Err(Error::IndexOutOfRange { index: k, n: d.n() });
    }
    if psd.len() != d.n() {
        return Err(Error::DimensionMismatch { expected: d.n(), found: psd.len() });
    }
    let row = d.eigenvectors().row(k);
    Ok(psd.iter().zip(row.iter()).map(|(p, v)| p * v.norm_sqr()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevBound {
    /// `variance / ε²`.
    pub raw: f64,
    /// `min(raw, 1)`.
    pub clipped: f64,
}

pub fn chebyshev_bound(variance: f64, epsilon: f64) -> Result<ChebyshevBound> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    let raw = variance / (epsilon * epsilon);
    Ok(ChebyshevBound { raw, clipped: raw.min(1.0) })
}

/// Mean squared error `tr C_z = Σ_n r_n`.
pub fn mse(r: &DVector<f64>) -> f64 {
    r.sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDet {
    Finite(f64),
    /// Some `r_n` is zero: the covariance ellipsoid has collapsed.
    Degenerate,
}

/// `Σ_n ln r_n`.
pub fn log_det(r: &DVector<f64>) -> LogDet {
    if r.iter().any(|x| !(*x > 0.0)) {
        LogDet::Degenerate
    } else {
        LogDet::Finite(r.iter().map(|x| x.ln()).sum())
    }
}

/// The `L → ∞` floor `p_1 v_{k,1}² / ε²` of the fixed-size bound.
pub fn consensus_limit(p1: f64, v_k1: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    Ok(p1 * v_k1 * v_k1 / (epsilon * epsilon))
}

/// `p_1 / (N ε²) + Σ_{n≥2} q_n |v_{k,n}|² / ε²`: the exact bound with the DC
/// term replaced by its value on a perfectly balanced Perron vector. It
/// dominates the exact bound whenever `v_{k,1}² ≤ 1/N`.
pub fn split_bound(q: &DVector<f64>, d: &SpectralDecomposition, k: usize, epsilon: f64) -> Result<f64> {
    let mut tail = q.clone();
    tail[0] = 0.0;
    let n = d.n() as f64;
    let v = node_variance(&tail, d, k)?;
    Ok(chebyshev_bound(q[0] / n + v, epsilon)?.raw)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// 0-based.
    pub node: usize,
    pub epsilon: f64,
    pub variance: f64,
    /// `variance / ε²`.
    pub chebyshev: f64,
    pub clipped: f64,
    /// The estimator PSD the variance was computed from.
    #[serde(skip)]
    pub q_or_r: DVector<f64>,
}

impl BoundReport {
    pub fn new(psd: DVector<f64>, d: &SpectralDecomposition, node: usize, epsilon: f64) -> Result<Self> {
        let variance = node_variance(&psd, d, node)?;
        let b = chebyshev_bound(variance, epsilon)?;
        Ok(Self { node, epsilon, variance, chebyshev: b.raw, clipped: b.clipped, q_or_r: psd })
    }
}

/// CSV with columns `node,epsilon,variance,bound_raw,bound_clipped`, nodes
/// 1-based.
pub fn bound_reports_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from("node,epsilon,variance,bound_raw,bound_clipped\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.node + 1,
            fmt_f64(r.epsilon),
            fmt_f64(r.variance),
            fmt_f64(r.chebyshev),
            fmt_f64(r.clipped)
        )
        .expect("writing to a string");
    }
    out
}

/// Relative slack granted to the dominance checks for rounding in the sums.
pub const DOMINANCE_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DominanceViolations {
    /// Frequencies with `q_n > p_n`.
    pub psd: usize,
    /// Nodes whose estimator variance exceeds the signal variance.
    pub variance: usize,
}

impl DominanceViolations {
    pub fn total(&self) -> usize {
        self.psd + self.variance
    }
}

impl std::ops::AddAssign for DominanceViolations {
    fn add_assign(&mut self, rhs: Self) {
        self.psd += rhs.psd;
        self.variance += rhs.variance;
    }
}

/// Counts violations of `q_n ≤ p_n` and of
/// `node_variance(q, k) ≤ node_variance(p, k)` over all `n` and `k`.
pub fn dominance_violations(p: &DVector<f64>, q: &DVector<f64>, d: &SpectralDecomposition) -> Result<DominanceViolations> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    let psd = p.iter().zip(q.iter()).filter(|(p, q)| **q > **p * (1.0 + DOMINANCE_RTOL)).count();
    let mut variance = 0;
    for k in 0..d.n() {
        let vq = node_variance(q, d, k)?;
        let vp = node_variance(p, d, k)?;
        if vq > vp * (1.0 + DOMINANCE_RTOL) {
            variance += 1;
        }
    }
    Ok(DominanceViolations { psd, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::frequency_response;
    use crate::graphs::{adjacency_shift, directed_cycle, erdos_renyi, Graph};
    use crate::process::WssProcess;
    use crate::seeds::rng_from_seed;
    use crate::spectral::decompose;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn cvec(xs: &[f64]) -> DVector<Complex64> {
        DVector::from_iterator(xs.len(), xs.iter().map(|&x| Complex64::new(x, 0.0)))
    }

    #[test]
    fn complete_graph_psd_by_hand() {
        let q = estimator_psd(&DVector::from_element(3, 1.0), &cvec(&[2.0, -1.0, -1.0]), 2.0, 3).unwrap();
        assert_eq!(q[0], 1.0);
        assert_relative_eq!(q[1], 1.0 / 49.0, max_relative = 1e-14);
        assert_relative_eq!(q[2], 1.0 / 49.0, max_relative = 1e-14);
    }

    #[test]
    fn depth_one_leaves_psd_unchanged() {
        let p = DVector::from_vec(vec![0.9, 2.0, 7.0]);
        let q = estimator_psd(&p, &cvec(&[2.0, -1.0, 0.5]), 2.0, 1).unwrap();
        assert_eq!(q, p);
    }

    #[test]
    fn cycle_removes_everything_but_dc() {
        let n = 12;
        let d = decompose(&adjacency_shift(&directed_cycle(n).unwrap()).unwrap()).unwrap();
        let p = DVector::from_fn(n, |i, _| 1.0 + i as f64);
        let q = estimator_psd(&p, d.eigenvalues(), 1.0, n).unwrap();
        assert_eq!(q[0], p[0]);
        assert!(q.iter().skip(1).all(|x| *x < 1e-28), "{q}");
        // L = N divides every node variance by N relative to L = 1.
        let q1 = estimator_psd(&DVector::from_element(n, 1.0), d.eigenvalues(), 1.0, 1).unwrap();
        let mut e1 = DVector::zeros(n);
        e1[0] = 1.0;
        let qn = estimator_psd(&e1, d.eigenvalues(), 1.0, n).unwrap();
        for k in 0..n {
            assert_relative_eq!(node_variance(&qn, &d, k).unwrap(), node_variance(&q1, &d, k).unwrap() / n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn geometric_forms_agree_with_direct_sums() {
        for (l, l1, depth) in [(0.7, 3.0, 9), (-2.5, 3.0, 12), (1.0 + 1e-11, 2.0, 5), (0.3, 0.8, 6), (0.99999, 1.0, 40)] {
            let p = DVector::from_element(2, 1.0);
            let q = estimator_psd(&p, &cvec(&[l1, l]), l1, depth).unwrap();
            let num: f64 = (0..depth).map(|i| l.powi(i as i32)).sum();
            let den: f64 = (0..depth).map(|i| l1.powi(i as i32)).sum();
            assert_relative_eq!(q[1], (num / den).powi(2), max_relative = 1e-9);
        }
    }

    #[test]
    fn large_depth_stays_finite() {
        let q = estimator_psd(&DVector::from_element(2, 1.0), &cvec(&[50.0, 49.0]), 50.0, 1000).unwrap();
        assert!(q[1].is_finite() && q[1] < 1.0);
    }

    #[test]
    fn psd_matches_dense_brute_force() {
        let g = erdos_renyi(10, 0.4, &mut rng_from_seed(3)).unwrap();
        let s = adjacency_shift(&g).unwrap();
        let d = decompose(&s).unwrap();
        let p = DVector::from_fn(10, |i, _| 0.5 + i as f64);
        let q = estimator_psd(&p, d.eigenvalues(), d.lambda1(), 10).unwrap();
        let proc = WssProcess::new(d.clone(), 0.0, p).unwrap();
        let mut m = DMatrix::<f64>::identity(10, 10);
        let mut power = DMatrix::<f64>::identity(10, 10);
        let mut alpha = 1.0;
        for l in 1..10 {
            power = s.matrix() * power;
            m += &power;
            alpha += d.lambda1().powi(l);
        }
        m /= alpha;
        let c = &m * proc.real_covariance().unwrap() * m.transpose();
        let v = d.real_eigenvectors().unwrap();
        let diag = (v.transpose() * c * v).diagonal();
        // The dense product cannot resolve entries below its own rounding
        // level, about N ε max(p).
        let floor = 10.0 * f64::EPSILON * 9.5;
        for n in 0..10 {
            assert!((diag[n] - q[n]).abs() <= 1e-8 * diag[n].abs() + floor, "n = {n}: {} vs {}", diag[n], q[n]);
        }
    }

    #[test]
    fn filtered_psd_examples() {
        let p = DVector::from_vec(vec![0.9, 3.0, 5.0]);
        assert_eq!(filtered_psd(&p, &cvec(&[1.0, 1.0, 1.0])).unwrap(), p);
        assert_eq!(filtered_psd(&p, &cvec(&[1.0, 0.0, 0.0])).unwrap(), DVector::from_vec(vec![0.9, 0.0, 0.0]));
        assert!(filtered_psd(&p, &cvec(&[0.0, 1.0, 1.0])).is_err());

        let l = cvec(&[2.0, -1.0, -1.0]);
        let h = frequency_response(&[1.0, 1.0, 1.0], &l);
        let r = filtered_psd(&p, &h).unwrap();
        let q = estimator_psd(&p, &l, 2.0, 3).unwrap();
        assert!((r - q).amax() < 1e-15);
    }

    #[test]
    fn node_variance_examples() {
        let n = 6;
        let d = decompose(&adjacency_shift(&directed_cycle(n).unwrap()).unwrap()).unwrap();
        let mut e1 = DVector::zeros(n);
        e1[0] = 1.0;
        for k in 0..n {
            assert_relative_eq!(node_variance(&e1, &d, k).unwrap(), 1.0 / 6.0, max_relative = 1e-14);
            assert_eq!(node_variance(&DVector::zeros(n), &d, k).unwrap(), 0.0);
        }
        assert!(matches!(node_variance(&e1, &d, n), Err(Error::IndexOutOfRange { .. })));

        let g = erdos_renyi(8, 0.5, &mut rng_from_seed(1)).unwrap();
        let d = decompose(&adjacency_shift(&g).unwrap()).unwrap();
        let p = DVector::from_fn(8, |i, _| 1.0 / (1.0 + i as f64));
        let c = WssProcess::new(d.clone(), 1.0, p.clone()).unwrap().real_covariance().unwrap();
        for k in 0..8 {
            assert_relative_eq!(node_variance(&p, &d, k).unwrap(), c[(k, k)], max_relative = 1e-12);
        }
    }

    #[test]
    fn chebyshev_examples() {
        let b = chebyshev_bound(0.9, 1.0).unwrap();
        assert_eq!((b.raw, b.clipped), (0.9, 0.9));
        assert_eq!(chebyshev_bound(0.0, 1.0).unwrap().raw, 0.0);
        let b = chebyshev_bound(5.0, 2.0).unwrap();
        assert_eq!((b.raw, b.clipped), (1.25, 1.0));
        assert!(chebyshev_bound(1.0, 0.0).is_err());

        // iid case on a cycle: σ² / (N ε²)
        let n = 10;
        let d = decompose(&adjacency_shift(&directed_cycle(n).unwrap()).unwrap()).unwrap();
        let mut p = DVector::zeros(n);
        p[0] = 2.0;
        let v = node_variance(&p, &d, 3).unwrap();
        assert_relative_eq!(chebyshev_bound(v, 0.5).unwrap().raw, 2.0 / (10.0 * 0.25), max_relative = 1e-13);
    }

    #[test]
    fn mse_and_log_det() {
        assert_eq!(mse(&DVector::from_vec(vec![0.9, 0.0, 0.0])), 0.9);
        assert_eq!(mse(&DVector::from_vec(vec![1.0, 2.0])), 3.0);
        assert_eq!(log_det(&DVector::from_element(4, 1.0)), LogDet::Finite(0.0));
        assert_eq!(log_det(&DVector::from_vec(vec![0.9, 0.0])), LogDet::Degenerate);
        match log_det(&DVector::from_vec(vec![2.0, 2.0])) {
            LogDet::Finite(v) => assert_relative_eq!(v, 2.0 * 2f64.ln()),
            LogDet::Degenerate => panic!("finite expected"),
        }
    }

    #[test]
    fn consensus_limit_examples() {
        assert_relative_eq!(consensus_limit(0.9, 1.0 / 3f64.sqrt(), 1.0).unwrap(), 0.3, max_relative = 1e-14);
        assert_eq!(consensus_limit(0.9, 0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(consensus_limit(2.0, 1.0 / 8f64.sqrt(), 1.0).unwrap(), 0.25, max_relative = 1e-14);
        assert!(consensus_limit(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn report_csv() {
        let d = decompose(&adjacency_shift(&Graph::complete(3).unwrap()).unwrap()).unwrap();
        let r = BoundReport::new(DVector::from_vec(vec![0.9, 0.0, 0.0]), &d, 1, 1.0).unwrap();
        assert_relative_eq!(r.variance, 0.3, max_relative = 1e-14);
        let csv = bound_reports_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("node,epsilon,variance,bound_raw,bound_clipped"));
        assert!(lines.next().unwrap().starts_with("2,1.0000000000000000e0,"));
    }

    #[test]
    fn dominance_on_a_random_graph() {
        let g = erdos_renyi(20, 0.2, &mut rng_from_seed(2)).unwrap();
        let d = decompose(&adjacency_shift(&g).unwrap()).unwrap();
        let p = DVector::from_fn(20, |i, _| 1.0 + i as f64);
        let q = estimator_psd(&p, d.eigenvalues(), d.lambda1(), 20).unwrap();
        assert_eq!(dominance_violations(&p, &q, &d).unwrap().total(), 0);
        let inflated = &q * 2.0 + &p;
        assert!(dominance_violations(&p, &inflated, &d).unwrap().total() > 0);
    }
}
