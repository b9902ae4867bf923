//! Real polynomials in shifted monomial bases, companion-matrix root finding,
//! falling-factorial conversion and partial-fraction expansion of strictly
//! proper rational functions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("roots of the zero polynomial are undefined")]
    ZeroPolynomial,
    #[error("constant polynomial has no roots")]
    ConstantPolynomial,
    #[error("rational function is not strictly proper: numerator degree {numerator} >= {poles} poles")]
    Improper { numerator: usize, poles: usize },
    #[error("non-finite coefficient in polynomial")]
    NonFinite,
}

/// `Σ coeffs[j] · (z − center)^j`, ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<f64>,
    pub center: f64,
}

impl Poly {
    pub fn monomial(coeffs: Vec<f64>) -> Self {
        Self::shifted(coeffs, 0.0)
    }

    pub fn shifted(coeffs: Vec<f64>, center: f64) -> Self {
        let mut p = Poly { coeffs, center };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly {
            coeffs: Vec::new(),
            center: 0.0,
        }
    }

    /// Monic polynomial `Π (z − r)` over real roots.
    pub fn from_real_roots(roots: &[f64]) -> Self {
        let mut coeffs = vec![1.0];
        for &r in roots {
            coeffs = mul_coeffs(&coeffs, &[-r, 1.0]);
        }
        Poly::monomial(coeffs)
    }

    /// Drops exactly-zero leading coefficients; the zero polynomial has none.
    pub fn trim(&mut self) {
        while self.coeffs.last() == Some(&0.0) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, z: f64) -> f64 {
        let t = z - self.center;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let t = z - self.center;
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * t + c)
    }

    /// Re-expresses the polynomial in powers of `(z − center)`.
    pub fn taylor_shift(&self, center: f64) -> Poly {
        let delta = center - self.center;
        let mut c = self.coeffs.clone();
        let n = c.len();
        // repeated synthetic division by (t − delta)
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                c[j] += delta * c[j + 1];
            }
        }
        Poly::shifted(c, center)
    }

    pub fn to_monomial(&self) -> Poly {
        if self.center == 0.0 {
            self.clone()
        } else {
            self.taylor_shift(0.0)
        }
    }

    /// Product; both operands are brought to this polynomial's basis.
    pub fn mul(&self, other: &Poly) -> Poly {
        let rhs = other.in_basis(self.center);
        Poly::shifted(mul_coeffs(&self.coeffs, &rhs.coeffs), self.center)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let rhs = other.in_basis(self.center);
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..len)
            .map(|j| self.coeffs.get(j).unwrap_or(&0.0) + rhs.coeffs.get(j).unwrap_or(&0.0))
            .collect();
        Poly::shifted(coeffs, self.center)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Poly {
        Poly::shifted(self.coeffs.iter().map(|c| c * factor).collect(), self.center)
    }

    pub fn derivative(&self) -> Poly {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, c)| c * j as f64)
            .collect();
        Poly::shifted(coeffs, self.center)
    }

    /// `P(k + 1) − P(k)` for a monomial-basis polynomial.
    pub fn forward_difference(&self) -> Poly {
        let p = self.to_monomial();
        let d = p.coeffs.len();
        let mut out = vec![0.0; d.saturating_sub(1)];
        for (j, &a) in p.coeffs.iter().enumerate() {
            for (i, slot) in out.iter_mut().enumerate().take(j) {
                *slot += a * linalg::binomial(j as u64, i as u64);
            }
        }
        Poly::monomial(out)
    }

    fn in_basis(&self, center: f64) -> Poly {
        if self.center == center {
            self.clone()
        } else {
            self.taylor_shift(center)
        }
    }
}

fn mul_coeffs(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `(t − 1)^s`, ascending.
pub fn shifted_power_coeffs(s: usize) -> Vec<f64> {
    (0..=s)
        .map(|j| {
            let sign = if (s - j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * linalg::binomial(s as u64, j as u64)
        })
        .collect()
}

/// Convolution of two coefficient sequences.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    mul_coeffs(a, b)
}

/// Free-function form of [`Poly::taylor_shift`].
pub fn taylor_shift(poly: &Poly, center: f64) -> Poly {
    poly.taylor_shift(center)
}

/// All complex roots (with multiplicity) of a polynomial of degree >= 1.
///
/// Exact zero trailing coefficients are peeled off as exact zero roots; the
/// remainder goes through a balanced companion matrix and one guarded
/// Newton polish per root.
pub fn poly_roots(poly: &Poly) -> Result<Vec<Complex64>, PolyError> {
    let p = poly.to_monomial();
    if p.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(PolyError::NonFinite);
    }
    let degree = p.degree().ok_or(PolyError::ZeroPolynomial)?;
    if degree == 0 {
        return Err(PolyError::ConstantPolynomial);
    }
    let zeros = p.coeffs.iter().take_while(|&&c| c == 0.0).count();
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    let reduced: Vec<f64> = p.coeffs[zeros..].to_vec();
    let d = reduced.len() - 1;
    if d == 0 {
        return Ok(roots);
    }
    let lead = reduced[d];
    let monic: Vec<f64> = reduced.iter().map(|c| c / lead).collect();
    let mut companion = DMatrix::zeros(d, d);
    for i in 1..d {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        companion[(i, d - 1)] = -monic[i];
    }
    linalg::balance(&mut companion);
    let reduced_poly = Poly::monomial(monic);
    let deriv = reduced_poly.derivative();
    for r in linalg::eigenvalues(&companion) {
        roots.push(polish(&reduced_poly, &deriv, r));
    }
    Ok(roots)
}

fn polish(p: &Poly, dp: &Poly, z: Complex64) -> Complex64 {
    let f = p.eval_complex(z);
    let df = dp.eval_complex(z);
    if df.norm() == 0.0 {
        return z;
    }
    let candidate = z - f / df;
    if p.eval_complex(candidate).norm() < f.norm() {
        candidate
    } else {
        z
    }
}

/// Tolerances that make the simple/conjugate/repeated classification computable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyTolerance {
    /// Roots closer than this are one multiplicity group.
    pub cluster: f64,
    /// Imaginary parts below this (relative to `max(1, |z|)`) are snapped to zero.
    pub imag: f64,
}

impl Default for ClassifyTolerance {
    fn default() -> Self {
        ClassifyTolerance {
            cluster: 1e-6,
            imag: 1e-8,
        }
    }
}

/// A distinct root and how many times it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootGroup {
    pub value: Complex64,
    pub multiplicity: usize,
}

/// Snaps nearly real roots, then merges clusters into multiplicity groups.
///
/// Complex roots are grouped in the upper half plane and mirrored, so the
/// output is closed under conjugation.
pub fn group_roots(roots: &[Complex64], tol: &ClassifyTolerance) -> Vec<RootGroup> {
    let mut real = Vec::new();
    let mut upper = Vec::new();
    for &r in roots {
        if r.im.abs() <= tol.imag * r.norm().max(1.0) {
            real.push(Complex64::new(r.re, 0.0));
        } else if r.im > 0.0 {
            upper.push(r);
        }
    }
    let mut groups = cluster(&real, tol.cluster);
    for g in cluster(&upper, tol.cluster) {
        groups.push(g);
        groups.push(RootGroup {
            value: g.value.conj(),
            multiplicity: g.multiplicity,
        });
    }
    groups
}

fn cluster(values: &[Complex64], radius: f64) -> Vec<RootGroup> {
    let mut members: Vec<Vec<Complex64>> = Vec::new();
    for &v in values {
        match members
            .iter_mut()
            .find(|m| m.iter().any(|u| (u - v).norm() < radius))
        {
            Some(m) => m.push(v),
            None => members.push(vec![v]),
        }
    }
    members
        .into_iter()
        .map(|m| RootGroup {
            value: m.iter().sum::<Complex64>() / m.len() as f64,
            multiplicity: m.len(),
        })
        .collect()
}

/// Coefficients `κ` with `Σ_r b_r C(k, r) = Σ_j κ_j k^j`.
pub fn falling_to_monomial(b: &[f64]) -> Vec<f64> {
    let mut kappa = vec![0.0; b.len()];
    let mut falling = vec![1.0]; // k (k-1) ... (k-r+1), ascending powers
    for (r, &br) in b.iter().enumerate() {
        let scale = br / linalg::factorial(r);
        for (j, &c) in falling.iter().enumerate() {
            kappa[j] += scale * c;
        }
        falling = mul_coeffs(&falling, &[-(r as f64), 1.0]);
    }
    kappa
}

/// Simple complex-conjugate pole pair, stored through its upper member
/// `m e^{i angle}` with residue `|K| e^{i phase}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateTerm {
    pub modulus: f64,
    pub angle: f64,
    pub magnitude: f64,
    pub phase: f64,
}

impl ConjugateTerm {
    pub fn pole(&self) -> Complex64 {
        Complex64::from_polar(self.modulus, self.angle)
    }

    pub fn residue(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }
}

/// Pole of multiplicity `coeffs.len() >= 2`; `coeffs[h − 1]` multiplies
/// `1 / (z − pole)^h`. Complex poles are stored once (upper half plane) and
/// stand for themselves plus their conjugate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedTerm {
    pub pole: Complex64,
    pub coeffs: Vec<Complex64>,
}

impl RepeatedTerm {
    pub fn multiplicity(&self) -> usize {
        self.coeffs.len()
    }

    fn is_complex(&self) -> bool {
        self.pole.im != 0.0
    }
}

/// `f(z) = K₀/z + Σ K/(z−λ) + Σ pairs + Σ repeated`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PartialFractionExpansion {
    pub impulse: f64,
    pub simple_real: Vec<(f64, f64)>,
    pub conjugate_pairs: Vec<ConjugateTerm>,
    pub repeated: Vec<RepeatedTerm>,
}

impl PartialFractionExpansion {
    /// Evaluates the rational function at a non-pole point.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(self.impulse, 0.0) / z;
        for &(pole, k) in &self.simple_real {
            acc += k / (z - pole);
        }
        for t in &self.conjugate_pairs {
            acc += t.residue() / (z - t.pole()) + t.residue().conj() / (z - t.pole().conj());
        }
        for t in &self.repeated {
            for (h, &k) in t.coeffs.iter().enumerate() {
                let power = (h + 1) as i32;
                acc += k / (z - t.pole).powi(power);
                if t.is_complex() {
                    acc += k.conj() / (z - t.pole.conj()).powi(power);
                }
            }
        }
        acc
    }

    /// Inverse Z-transform of `z · f(z)` at sample `k`: impulse, geometric,
    /// damped cosine and polynomial-times-geometric modes.
    pub fn inverse_z(&self, k: u64) -> f64 {
        let kf = k as f64;
        let mut acc = if k == 0 { self.impulse } else { 0.0 };
        for &(pole, coeff) in &self.simple_real {
            acc += coeff * pole.powf(kf);
        }
        for t in &self.conjugate_pairs {
            acc += 2.0 * t.magnitude * t.modulus.powf(kf) * (t.angle * kf + t.phase).cos();
        }
        for t in &self.repeated {
            for (h, &coeff) in t.coeffs.iter().enumerate() {
                // C(k, h) λ^{k-h}; vanishes for k < h
                if k < h as u64 {
                    continue;
                }
                let weight = linalg::binomial(k, h as u64);
                let mode = coeff * t.pole.powu((k - h as u64) as u32) * weight;
                acc += if t.is_complex() { 2.0 * mode.re } else { mode.re };
            }
        }
        acc
    }

    /// Largest pole modulus across all terms (0 for a pure impulse).
    pub fn spectral_radius(&self) -> f64 {
        let simple = self.simple_real.iter().map(|(p, _)| p.abs());
        let pairs = self.conjugate_pairs.iter().map(|t| t.modulus);
        let rep = self.repeated.iter().map(|t| t.pole.norm());
        simple.chain(pairs).chain(rep).fold(0.0, f64::max)
    }
}

/// Expands `numerator / Π (z − λ)` over the given root multiset.
pub fn partial_fractions(
    numerator: &Poly,
    denominator_roots: &[Complex64],
    tol: &ClassifyTolerance,
) -> Result<PartialFractionExpansion, PolyError> {
    let num = numerator.to_monomial();
    let poles = denominator_roots.len();
    if let Some(d) = num.degree() {
        if d >= poles {
            return Err(PolyError::Improper {
                numerator: d,
                poles,
            });
        }
    }
    let mut out = PartialFractionExpansion::default();
    if num.is_zero() {
        return Ok(out);
    }
    let groups = group_roots(denominator_roots, tol);
    for (idx, g) in groups.iter().enumerate() {
        if g.value.im < 0.0 {
            continue;
        }
        let coeffs = local_expansion(&num, &groups, idx);
        let is_real = g.value.im == 0.0;
        match (g.multiplicity, is_real) {
            (1, true) if g.value.re == 0.0 => out.impulse = coeffs[0].re,
            (1, true) => out.simple_real.push((g.value.re, coeffs[0].re)),
            (1, false) => out.conjugate_pairs.push(ConjugateTerm {
                modulus: g.value.norm(),
                angle: g.value.arg(),
                magnitude: coeffs[0].norm(),
                phase: coeffs[0].arg(),
            }),
            _ => {
                let mut ks = coeffs;
                if is_real {
                    ks.iter_mut().for_each(|k| k.im = 0.0);
                }
                out.repeated.push(RepeatedTerm {
                    pole: g.value,
                    coeffs: ks,
                });
            }
        }
    }
    Ok(out)
}

/// Laurent coefficients of `numerator / Π (z − μ)^m` at group `idx`:
/// returns `K_1 .. K_m` where `K_h` multiplies `(z − λ)^{-h}`.
fn local_expansion(numerator: &Poly, groups: &[RootGroup], idx: usize) -> Vec<Complex64> {
    let lambda = groups[idx].value;
    let m = groups[idx].multiplicity;
    // numerator Taylor coefficients at λ, first m terms
    let num = complex_taylor(&numerator.coeffs, lambda, m);
    // deflated denominator Π_{μ≠λ} (λ − μ + t)^{m_μ}, truncated to m terms
    let mut den = vec![Complex64::new(0.0, 0.0); m];
    den[0] = Complex64::new(1.0, 0.0);
    for (j, g) in groups.iter().enumerate() {
        if j == idx {
            continue;
        }
        let offset = lambda - g.value;
        for _ in 0..g.multiplicity {
            for i in (0..m).rev() {
                let carry = if i > 0 { den[i - 1] } else { Complex64::new(0.0, 0.0) };
                den[i] = den[i] * offset + carry;
            }
        }
    }
    // series division: g = num / den
    let mut series = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        let mut v = num[i];
        for j in 0..i {
            v -= series[j] * den[i - j];
        }
        series[i] = v / den[0];
    }
    // g_j multiplies (z−λ)^{j−m}, i.e. K_{m−j}
    series.reverse();
    series
}

fn complex_taylor(coeffs: &[f64], center: Complex64, terms: usize) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let n = c.len();
    let mut out = vec![Complex64::new(0.0, 0.0); terms];
    for slot in out.iter_mut().take(terms.min(n)) {
        // one synthetic-division pass yields the next Taylor coefficient
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (0..c.len()).rev() {
            acc = acc * center + c[j];
            c[j] = acc;
        }
        *slot = c[0];
        c.remove(0);
    }
    out
}
