//! Perron-first eigendecomposition, graph Fourier transform and spectral
//! diagnostics.
//!
//! Eigenpairs are ordered with the Perron root first, then by decreasing
//! modulus. Ties in modulus go to the smaller `|arg λ|`, then to the eigenvalue
//! with positive imaginary part, then to the lower solver index. On the
//! directed cycle of size 4 this yields `(1, i, -i, -1)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::graphs::{ShiftKind, ShiftOperator};
use crate::{Complex64, Error, Result};

/// Relative tolerance for treating two moduli or two arguments as equal when
/// ordering eigenvalues.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvectors: DMatrix<Complex64>,
    eigenvalues: DVector<Complex64>,
    source_kind: ShiftKind,
    real: bool,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V`, one eigenvector per column.
    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigenvectors
    }

    pub fn eigenvalues(&self) -> &DVector<Complex64> {
        &self.eigenvalues
    }

    pub fn source_kind(&self) -> ShiftKind {
        self.source_kind
    }

    /// True when `V` and `λ` are real (symmetric shifts).
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0].re
    }

    /// `v_1`, real with a positive entry sum.
    pub fn perron_vector(&self) -> DVector<f64> {
        self.eigenvectors.column(0).map(|c| c.re)
    }

    /// Real eigenvector matrix, when the decomposition is real.
    pub fn real_eigenvectors(&self) -> Option<DMatrix<f64>> {
        self.real.then(|| self.eigenvectors.map(|c| c.re))
    }

    /// Real eigenvalues, when the decomposition is real.
    pub fn real_eigenvalues(&self) -> Option<DVector<f64>> {
        self.real.then(|| self.eigenvalues.map(|c| c.re))
    }

    /// `‖V Λ Vᴴ - S‖_max`.
    pub fn reconstruction_error(&self, s: &ShiftOperator) -> f64 {
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(self.n(), self.n(), |i, j| v[(i, j)] * self.eigenvalues[j]);
        let rebuilt = scaled * v.adjoint();
        rebuilt
            .iter()
            .zip(s.matrix().iter())
            .map(|(a, b)| (a - Complex64::new(*b, 0.0)).norm())
            .fold(0.0, f64::max)
    }

    /// `‖Vᴴ V - I‖_max`.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.eigenvectors.adjoint() * &self.eigenvectors;
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (g[(i, j)] - if i == j { Complex64::ONE } else { Complex64::ZERO }).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump {
            kind: ShiftKind,
            eigenvalues: Vec<[f64; 2]>,
            eigenvectors: Vec<Vec<[f64; 2]>>,
        }
        let dump = Dump {
            kind: self.source_kind,
            eigenvalues: self.eigenvalues.iter().map(|c| [c.re, c.im]).collect(),
            eigenvectors: self
                .eigenvectors
                .row_iter()
                .map(|r| r.iter().map(|c| [c.re, c.im]).collect())
                .collect(),
        };
        serde_json::to_string(&dump).expect("spectral serialization cannot fail")
    }
}

/// Decomposes a symmetric shift, or the directed-cycle adjacency, as
/// `S = V Λ Vᴴ`.
pub fn decompose(s: &ShiftOperator) -> Result<SpectralDecomposition> {
    if s.kind() == ShiftKind::DirectedCycleAdjacency {
        return decompose_cycle(s);
    }
    if !s.is_symmetric(1e-12) {
        return Err(Error::UnsupportedShift(
            "only symmetric shifts and the directed cycle can be decomposed".into(),
        ));
    }
    let n = s.n();
    let m = s.matrix();
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;

    let lambda: Vec<Complex64> = eig.eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)).collect();
    let order = perron_first_order(&lambda);
    let lambda1 = lambda[order[0]].re;
    let max_mod = lambda.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if lambda1 < max_mod - 1e-10 * max_mod.max(1.0) {
        return Err(Error::UnsupportedShift(format!(
            "largest eigenvalue {lambda1:e} does not dominate the spectral radius {max_mod:e}"
        )));
    }

    let mut v = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_perron_sign(&mut v);
    Ok(SpectralDecomposition {
        eigenvectors: v.map(|x| Complex64::new(x, 0.0)),
        eigenvalues: DVector::from_iterator(n, order.iter().map(|&i| lambda[i])),
        source_kind: s.kind(),
        real: true,
    })
}

/// Flips `v_1` so its entries sum to a positive number, or, if the sum is
/// zero, so its first nonzero entry is positive.
fn fix_perron_sign(v: &mut DMatrix<f64>) {
    let col = v.column(0);
    let sum: f64 = col.iter().sum();
    let flip = if sum != 0.0 {
        sum < 0.0
    } else {
        col.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.column_mut(0).neg_mut();
    }
}

/// Ordering of eigenvalue indices: the largest real part first (the Perron
/// root of a nonnegative shift), then the rest by the tie rules above.
fn perron_first_order(lambda: &[Complex64]) -> Vec<usize> {
    let perron = (0..lambda.len())
        .max_by(|&a, &b| lambda[a].re.total_cmp(&lambda[b].re).then(b.cmp(&a)))
        .expect("nonempty spectrum");
    let mut rest: Vec<usize> = (0..lambda.len()).filter(|&i| i != perron).collect();
    rest.sort_by(|&a, &b| lambda[b].norm().total_cmp(&lambda[a].norm()).then(a.cmp(&b)));

    // Regroup runs of (numerically) equal modulus by argument.
    let scale = lambda.iter().map(|l| l.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut start = 0;
    while start < rest.len() {
        let mut end = start + 1;
        while end < rest.len()
            && lambda[rest[end - 1]].norm() - lambda[rest[end]].norm() <= TIE_TOL * scale
        {
            end += 1;
        }
        rest[start..end].sort_by(|&a, &b| tie_key(lambda[a]).total_cmp(&tie_key(lambda[b])).then(a.cmp(&b)));
        start = end;
    }
    std::iter::once(perron).chain(rest).collect()
}

/// Sort key inside a modulus tie: `|arg|`, with the upper half-plane first
/// when two arguments have equal magnitude.
fn tie_key(l: Complex64) -> f64 {
    let arg = l.arg();
    let quantized = (arg.abs() / (TIE_TOL * PI)).round() * 2.0;
    quantized + if arg < 0.0 { 1.0 } else { 0.0 }
}

fn decompose_cycle(s: &ShiftOperator) -> Result<SpectralDecomposition> {
    let n = s.n();
    let m = s.matrix();
    let is_cycle = s.nnz() == n && (0..n).all(|k| m[((k + 1) % n, k)] == 1.0);
    if !is_cycle {
        return Err(Error::UnsupportedShift("matrix is not the directed-cycle adjacency".into()));
    }
    // Frequencies in Perron-first order: 0, N-1, 1, N-2, 2, ...
    let mut freqs = vec![0usize];
    for j in 1..=n / 2 {
        if n - j != j {
            freqs.push(n - j);
        }
        freqs.push(j);
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut v = DMatrix::<Complex64>::zeros(n, n);
    let mut lambda = DVector::<Complex64>::zeros(n);
    for (col, &f) in freqs.iter().enumerate() {
        // v_f[k] = e^{2πi k f / N} / √N and S v_f = e^{-2πi f / N} v_f.
        lambda[col] = unit_root(n, (n - f) % n);
        for k in 0..n {
            v[(k, col)] = unit_root(n, (k * f) % n) * scale;
        }
    }
    Ok(SpectralDecomposition {
        eigenvectors: v,
        eigenvalues: lambda,
        source_kind: s.kind(),
        real: false,
    })
}

/// `e^{2πi j / N}`, evaluated on the reduced angle so that quarter turns are
/// as exact as the trigonometric functions allow.
fn unit_root(n: usize, j: usize) -> Complex64 {
    let j = j % n;
    if j == 0 {
        return Complex64::ONE;
    }
    if 2 * j == n {
        return Complex64::new(-1.0, 0.0);
    }
    if 4 * j == n {
        return Complex64::I;
    }
    if 4 * j == 3 * n {
        return -Complex64::I;
    }
    let theta = if 2 * j < n {
        2.0 * PI * j as f64 / n as f64
    } else {
        -2.0 * PI * (n - j) as f64 / n as f64
    };
    Complex64::from_polar(1.0, theta)
}

fn check_len(d: &SpectralDecomposition, found: usize) -> Result<()> {
    if found != d.n() {
        return Err(Error::DimensionMismatch { expected: d.n(), found });
    }
    Ok(())
}

/// `x̃ = Vᴴ x`.
pub fn gft(d: &SpectralDecomposition, x: &DVector<f64>) -> Result<DVector<Complex64>> {
    check_len(d, x.len())?;
    Ok(d.eigenvectors.ad_mul(&x.map(|v| Complex64::new(v, 0.0))))
}

/// `x = V x̃`.
pub fn igft(d: &SpectralDecomposition, xt: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    check_len(d, xt.len())?;
    Ok(&d.eigenvectors * xt)
}

/// Real part of `v`, after checking that the imaginary part is below
/// `tol · max(1, ‖v‖_∞)`.
pub fn real_part(v: &DVector<Complex64>, tol: f64) -> Result<DVector<f64>> {
    let scale = v.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let worst = v.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if worst > tol * scale {
        return Err(Error::Numerical(format!("expected a real signal, imaginary part reaches {worst:e}")));
    }
    Ok(v.map(|c| c.re))
}

/// `‖x - S x / λ_1‖_1`.
pub fn total_variation(s: &ShiftOperator, lambda1: f64, x: &DVector<f64>) -> Result<f64> {
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda1 = {lambda1} must be positive")));
    }
    if x.len() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), found: x.len() });
    }
    let sx = s.apply(x);
    Ok(x.iter().zip(sx.iter()).map(|(a, b)| (a - b / lambda1).abs()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Lambda1AboveOne,
    Lambda1EqualOne,
    Lambda1BelowOne,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRegime {
    pub lambda1: f64,
    /// `|λ_n| / λ_1` for `n = 2..N`.
    pub ratios: Vec<f64>,
    pub regime: Regime,
    /// Positions (0-based, in the Perron-first ordering) of the non-Perron
    /// eigenvalues with `|λ_n| / λ_1 ≥ threshold`.
    pub flagged: Vec<usize>,
    /// `λ_2` lies within `1e-12 · λ_1` of `λ_1`.
    pub near_degenerate: bool,
}

pub fn classify_spectrum(d: &SpectralDecomposition, ratio_threshold: f64) -> SpectrumRegime {
    let lambda1 = d.lambda1();
    let ratios: Vec<f64> = d
        .eigenvalues
        .iter()
        .skip(1)
        .map(|l| if lambda1 > 0.0 { l.norm() / lambda1 } else { 0.0 })
        .collect();
    let regime = if (lambda1 - 1.0).abs() <= 1e-12 {
        Regime::Lambda1EqualOne
    } else if lambda1 > 1.0 {
        Regime::Lambda1AboveOne
    } else {
        Regime::Lambda1BelowOne
    };
    let flagged = ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| **r >= ratio_threshold)
        .map(|(i, _)| i + 1)
        .collect();
    let near_degenerate = d.n() > 1 && (d.eigenvalues[1] - d.eigenvalues[0]).norm() <= 1e-12 * lambda1.abs();
    SpectrumRegime { lambda1, ratios, regime, flagged, near_degenerate }
}
