//! Deadbeat consensus prediction from one agent's output window.
//!
//! Pipeline: s-th order differenced Hankel scan → minimal polynomial pair →
//! Z-domain numerator φ → split into consensus (β₀..β_{s−1}) and
//! disagreement (β_s..) parts → polynomial consensus item and modal
//! disagreement expansion.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, PerronSystem, Trajectory};
use crate::linalg;
use crate::polyalg::{self, ClassifyTolerance, PartialFractionExpansion, Poly, PolyError};

/// `|p(1)|` below this means a `(t − 1)` factor survived in `p`.
pub const P_AT_ONE_TOL: f64 = 1e-6;
/// Oracle conditioning above which a warning is raised.
pub const ORACLE_CONDITION_WARN: f64 = 1e8;

#[derive(Debug, Error, PartialEq)]
pub enum PredictorError {
    #[error("window of {available} samples is too short; {required} required")]
    ShortWindow { available: usize, required: usize },
    #[error("state order must be at least 1")]
    ZeroOrder,
    #[error("no rank drop up to degree {max_degree}: window of {available} samples exhausted")]
    UndetectableDegree { max_degree: usize, available: usize },
    #[error("first rank drop at degree {degree} has a {nullity}-dimensional null space")]
    AmbiguousDegree { degree: usize, nullity: usize },
    #[error("null vector at degree {degree} has a vanishing leading entry")]
    DegenerateNullVector { degree: usize },
    #[error("p(1) = {value} vanishes; decomposition is singular")]
    SingularDecomposition { value: f64 },
    #[error("spectral precondition failed: {0}")]
    Spectrum(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Pipeline stages, numbered in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Window,
    RankScan,
    NullVector,
    Phi,
    Split,
    ConsensusItem,
    Disagreement,
}

impl Step {
    pub fn line(self) -> u8 {
        match self {
            Step::Window => 1,
            Step::RankScan => 2,
            Step::NullVector => 10,
            Step::Phi => 11,
            Step::Split => 12,
            Step::ConsensusItem => 13,
            Step::Disagreement => 14,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} ({:?})", self.line(), self)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{step}: {source}")]
pub struct MdcpError {
    pub step: Step,
    #[source]
    pub source: PredictorError,
}

trait AtStep<T> {
    fn at(self, step: Step) -> Result<T, MdcpError>;
}

impl<T, E: Into<PredictorError>> AtStep<T> for Result<T, E> {
    fn at(self, step: Step) -> Result<T, MdcpError> {
        self.map_err(|e| MdcpError {
            step,
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// `σ_min < rank_tol · σ_max` declares a singular value numerically zero.
    pub rank_tol: f64,
    /// A Hankel matrix with `σ_max ≤ zero_tol · max|x|` is the zero matrix.
    pub zero_tol: f64,
    /// Scan on overdetermined `scan_columns × (D̂+1)` Hankel matrices when
    /// the window is long enough, square ones otherwise. More columns average
    /// out rounding in both the rank test and the null vector, at the cost of
    /// consuming more samples.
    pub scan_columns: Option<usize>,
    pub classify: ClassifyTolerance,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            rank_tol: 1e-11,
            zero_tol: 1e-12,
            scan_columns: None,
            classify: ClassifyTolerance::default(),
        }
    }
}

/// First-order output samples `x_i(0..T)` of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryWindow {
    pub agent: usize,
    pub samples: Vec<f64>,
    pub eps: f64,
}

impl MemoryWindow {
    pub fn from_trajectory(trajectory: &Trajectory, agent: usize) -> Self {
        MemoryWindow {
            agent,
            samples: trajectory.output(agent),
            eps: trajectory.eps,
        }
    }

    pub fn truncated(&self, len: usize) -> Self {
        MemoryWindow {
            agent: self.agent,
            samples: self.samples[..len.min(self.samples.len())].to_vec(),
            eps: self.eps,
        }
    }
}

/// Samples needed for the Hankel test at degree `d`.
pub fn required_samples(d: usize, s: usize) -> usize {
    2 * d + s + 1
}

/// s-th order forward difference of `x` at index `m`.
fn difference(x: &[f64], m: usize, s: usize) -> f64 {
    (0..=s)
        .map(|h| {
            let sign = if (s - h) % 2 == 0 { 1.0 } else { -1.0 };
            sign * linalg::binomial(s as u64, h as u64) * x[m + h]
        })
        .sum()
}

/// `(d+1)×(d+1)` Hankel matrix of s-th differences, `Γ[r][j] = Δˢx(k0 + j + r)`.
pub fn build_hankel(
    samples: &[f64],
    k0: usize,
    d: usize,
    s: usize,
) -> Result<DMatrix<f64>, PredictorError> {
    if s == 0 {
        return Err(PredictorError::ZeroOrder);
    }
    let required = k0 + required_samples(d, s);
    if samples.len() < required {
        return Err(PredictorError::ShortWindow {
            available: samples.len(),
            required,
        });
    }
    let diffs: Vec<f64> = (0..=2 * d).map(|m| difference(samples, k0 + m, s)).collect();
    Ok(DMatrix::from_fn(d + 1, d + 1, |r, j| diffs[r + j]))
}

/// Minimal polynomial pair `q(t) = (t − 1)^s p(t)` of one agent's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalPolyPair {
    pub degree: usize,
    pub s: usize,
    /// Monic coefficients of `p`, ascending (`degree + 1` entries).
    pub zeta: Vec<f64>,
    /// Monic coefficients of `q`, ascending (`degree + s + 1` entries).
    pub alpha: Vec<f64>,
    /// Normalized singular values (descending) of `Γ(degree − 1)`; empty at degree 0.
    pub previous_singular_values: Vec<f64>,
    /// Normalized singular values (descending) of `Γ(degree)`.
    pub singular_values: Vec<f64>,
    pub rank_tol: f64,
    /// Samples used by the scan up to and including the rank drop.
    pub samples_consumed: usize,
    /// Column count when the drop was found on an overdetermined Hankel.
    pub hankel_columns: Option<usize>,
}

impl MinimalPolyPair {
    pub fn p(&self) -> Poly {
        Poly::monomial(self.zeta.clone())
    }

    pub fn q(&self) -> Poly {
        Poly::monomial(self.alpha.clone())
    }

    /// Γ(D̄−1) full rank and Γ(D̄) with a one-dimensional null space.
    pub fn rank_drop_is_minimal(&self) -> bool {
        let nullity = |sv: &[f64]| sv.iter().filter(|&&v| v <= self.rank_tol).count();
        let prev_full = nullity(&self.previous_singular_values) == 0;
        let here = if self.degree == 0 {
            // the 1×1 zero matrix
            1
        } else {
            nullity(&self.singular_values)
        };
        prev_full && here == 1
    }

    /// Largest `|Σ_j α_j x(k + j)|` over the window, relative to `max|x|`.
    pub fn annihilation_residual(&self, samples: &[f64]) -> f64 {
        let scale = linalg::max_abs(samples).max(f64::MIN_POSITIVE);
        let len = self.alpha.len();
        samples
            .windows(len)
            .map(|w| w.iter().zip(&self.alpha).map(|(x, a)| x * a).sum::<f64>().abs())
            .fold(0.0, f64::max)
            / scale
    }
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let top = values.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| v / top).collect()
}

/// Scans `D̂ = 0, 1, …` until the square Hankel matrix loses rank.
///
/// `D̂ = 0` only succeeds when the differenced stream is numerically zero,
/// i.e. the agent already sits on a polynomial of degree `< s`.
pub fn find_minimal_pair(
    window: &MemoryWindow,
    s: usize,
    config: &PredictorConfig,
) -> Result<MinimalPolyPair, PredictorError> {
    if s == 0 {
        return Err(PredictorError::ZeroOrder);
    }
    let x = &window.samples;
    if x.len() < required_samples(0, s) {
        return Err(PredictorError::ShortWindow {
            available: x.len(),
            required: required_samples(0, s),
        });
    }
    let mut previous: Vec<f64> = Vec::new();
    let mut d = 0;
    while required_samples(d, s) <= x.len() {
        let tall = config
            .scan_columns
            .map(|c| c.max(d + 1))
            .filter(|&c| x.len() >= d + c + s);
        let used = match tall {
            Some(c) => d + c + s,
            None => required_samples(d, s),
        };
        let scale = linalg::max_abs(&x[..used]).max(f64::MIN_POSITIVE);
        let gamma = match tall {
            Some(c) => difference_hankel(x, d, c, s),
            None => build_hankel(x, 0, d, s)?,
        };
        let svd = linalg::right_svd(&gamma);
        let sv = normalized(&svd.values);
        let is_zero = svd.largest() <= config.zero_tol * scale;
        let nullity = if is_zero {
            d + 1
        } else if d == 0 {
            0
        } else {
            svd.nullity(config.rank_tol * svd.largest())
        };
        if nullity > 1 {
            return Err(PredictorError::AmbiguousDegree { degree: d, nullity });
        }
        if nullity == 1 {
            let raw = if is_zero {
                DVector::from_element(1, 1.0)
            } else {
                svd.smallest_vector()
            };
            let last = raw[d];
            if last.abs() < 1e-12 * raw.amax() {
                return Err(PredictorError::DegenerateNullVector { degree: d });
            }
            let zeta: Vec<f64> = raw.iter().map(|v| v / last).collect();
            let alpha = polyalg::convolve(&zeta, &polyalg::shifted_power_coeffs(s));
            return Ok(MinimalPolyPair {
                degree: d,
                s,
                zeta,
                alpha,
                previous_singular_values: previous,
                singular_values: if is_zero { vec![0.0] } else { sv },
                rank_tol: config.rank_tol,
                samples_consumed: used,
                hankel_columns: tall,
            });
        }
        previous = sv;
        d += 1;
    }
    Err(PredictorError::UndetectableDegree {
        max_degree: d.saturating_sub(1),
        available: x.len(),
    })
}

/// `cols × (d+1)` matrix with entries `Δˢx(j + r)`.
fn difference_hankel(x: &[f64], d: usize, cols: usize, s: usize) -> DMatrix<f64> {
    let diffs: Vec<f64> = (0..d + cols).map(|m| difference(x, m, s)).collect();
    DMatrix::from_fn(cols, d + 1, |j, r| diffs[r + j])
}

/// Numerator `φ` of `x(z) = z·φ(z) / q(z)`; coefficient of `z^j` is
/// `Σ_{h=0}^{D−j} α_{h+j+1} x(h)` with `D = D̄ + s − 1`.
pub fn build_phi(pair: &MinimalPolyPair, samples: &[f64]) -> Result<Poly, PredictorError> {
    let top = pair.alpha.len() - 2; // D̄ + s − 1
    if samples.len() < top + 1 {
        return Err(PredictorError::ShortWindow {
            available: samples.len(),
            required: top + 1,
        });
    }
    let coeffs = (0..=top)
        .map(|j| {
            (0..=top - j)
                .map(|h| pair.alpha[h + j + 1] * samples[h])
                .sum()
        })
        .collect();
    Ok(Poly::monomial(coeffs))
}

/// `φ = p · Σ_{j<s} β_j (z−1)^j + Σ_{j≥s} β_j (z−1)^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub beta_low: Vec<f64>,
    pub beta_high: Vec<f64>,
}

impl Decomposition {
    /// Recombines both parts into a monomial polynomial.
    pub fn recombine(&self, p: &Poly) -> Poly {
        let low = Poly::shifted(self.beta_low.clone(), 1.0);
        let mut high = vec![0.0; self.beta_low.len()];
        high.extend_from_slice(&self.beta_high);
        p.mul(&low).add(&Poly::shifted(high, 1.0)).to_monomial()
    }
}

pub fn fit_decomposition(phi: &Poly, p: &Poly, s: usize) -> Result<Decomposition, PredictorError> {
    let ft = phi.taylor_shift(1.0).coeffs;
    let pt = p.taylor_shift(1.0).coeffs;
    let p1 = pt.first().copied().unwrap_or(0.0);
    if p1.abs() <= P_AT_ONE_TOL {
        return Err(PredictorError::SingularDecomposition { value: p1 });
    }
    let f = |j: usize| ft.get(j).copied().unwrap_or(0.0);
    let pc = |j: usize| pt.get(j).copied().unwrap_or(0.0);
    let mut beta_low = Vec::with_capacity(s);
    for j in 0..s {
        let acc: f64 = (0..j).map(|m| pc(j - m) * beta_low[m]).sum();
        beta_low.push((f(j) - acc) / p1);
    }
    let prod = polyalg::convolve(&pt, &beta_low);
    let top = ft.len().max(prod.len()).max(pt.len() + s - 1);
    let beta_high = (s..top)
        .map(|j| f(j) - prod.get(j).copied().unwrap_or(0.0))
        .collect();
    Ok(Decomposition {
        beta_low,
        beta_high,
    })
}

/// Polynomial consensus item in every order, monomial in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusPrediction {
    pub eps: f64,
    pub orders: Vec<Poly>,
}

impl ConsensusPrediction {
    pub fn eval(&self, order: usize, k: f64) -> f64 {
        self.orders[order - 1].eval(k)
    }

    /// `{order → κ ascending}`.
    pub fn to_map(&self) -> BTreeMap<String, Vec<f64>> {
        self.orders
            .iter()
            .enumerate()
            .map(|(l, p)| {
                let mut c = p.coeffs.clone();
                c.resize(self.orders.len() - l, 0.0);
                ((l + 1).to_string(), c)
            })
            .collect()
    }
}

/// `b_r = β_{s−1−r}` in the binomial basis, then forward differences for
/// the higher orders.
pub fn consensus_item(beta_low: &[f64], s: usize, eps: f64) -> ConsensusPrediction {
    let b: Vec<f64> = (0..s).map(|r| beta_low[s - 1 - r]).collect();
    let mut orders = vec![Poly::monomial(polyalg::falling_to_monomial(&b))];
    for _ in 1..s {
        let next = orders.last().unwrap().forward_difference().scale(1.0 / eps);
        orders.push(next);
    }
    ConsensusPrediction { eps, orders }
}

/// Modal disagreement `x_i(z) − consensus(z)` and its inverse transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementPrediction {
    pub eps: f64,
    pub s: usize,
    pub expansion: PartialFractionExpansion,
}

impl DisagreementPrediction {
    pub fn first_order(&self, k: u64) -> f64 {
        self.expansion.inverse_z(k)
    }

    /// Order `ℓ` via `(ℓ−1)`-fold forward differencing divided by `ε^{ℓ−1}`.
    pub fn eval(&self, order: usize, k: u64) -> f64 {
        let m = order - 1;
        let sum: f64 = (0..=m)
            .map(|h| {
                let sign = if (m - h) % 2 == 0 { 1.0 } else { -1.0 };
                sign * linalg::binomial(m as u64, h as u64) * self.first_order(k + h as u64)
            })
            .sum();
        sum / self.eps.powi(m as i32)
    }

    pub fn modal_terms(&self) -> ModalTerms {
        let e = &self.expansion;
        ModalTerms {
            impulse: e.impulse,
            real: e.simple_real.iter().map(|&(l, k)| [l, k]).collect(),
            conjugate: e
                .conjugate_pairs
                .iter()
                .map(|t| [t.modulus, t.angle, t.magnitude, t.phase])
                .collect(),
            repeated: e
                .repeated
                .iter()
                .map(|t| RepeatedJson {
                    pole: [t.pole.re, t.pole.im],
                    multiplicity: t.multiplicity(),
                    coeffs: t.coeffs.iter().map(|c| [c.re, c.im]).collect(),
                })
                .collect(),
        }
    }
}

/// Flat export of the disagreement modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalTerms {
    pub impulse: f64,
    /// `[λ, K]`
    pub real: Vec<[f64; 2]>,
    /// `[m, angle, |K|, phase]`
    pub conjugate: Vec<[f64; 4]>,
    pub repeated: Vec<RepeatedJson>,
}

/// `[λ, multiplicity, [K…]]` with complex values as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedJson {
    pub pole: [f64; 2],
    pub multiplicity: usize,
    pub coeffs: Vec<[f64; 2]>,
}

/// Expands `Σ_{j≥s} β_j (z−1)^{j−s} / p(z)` over the roots of `p`; the
/// disagreement transform is `z` times that, so zero roots of `p` become
/// impulse trains.
pub fn predict_disagreement(
    beta_high: &[f64],
    pair: &MinimalPolyPair,
    eps: f64,
    tol: &ClassifyTolerance,
) -> Result<DisagreementPrediction, PredictorError> {
    let numerator = Poly::shifted(beta_high.to_vec(), 1.0).to_monomial();
    let roots = if pair.degree == 0 {
        Vec::new()
    } else {
        polyalg::poly_roots(&pair.p())?
    };
    let expansion = partial_fractions_or_zero(&numerator, &roots, tol)?;
    Ok(DisagreementPrediction {
        eps,
        s: pair.s,
        expansion,
    })
}

fn partial_fractions_or_zero(
    numerator: &Poly,
    roots: &[num_complex::Complex64],
    tol: &ClassifyTolerance,
) -> Result<PartialFractionExpansion, PolyError> {
    if numerator.is_zero() {
        return Ok(PartialFractionExpansion::default());
    }
    polyalg::partial_fractions(numerator, roots, tol)
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdcpResult {
    pub agent: usize,
    pub pair: MinimalPolyPair,
    pub phi: Poly,
    pub decomposition: Decomposition,
    pub consensus: ConsensusPrediction,
    pub disagreement: DisagreementPrediction,
}

impl MdcpResult {
    pub fn samples_consumed(&self) -> usize {
        self.pair.samples_consumed
    }

    /// Predicted `x_i^(order)(k)`.
    pub fn predict(&self, order: usize, k: u64) -> f64 {
        self.consensus.eval(order, k as f64) + self.disagreement.eval(order, k)
    }

    pub fn export(&self) -> PredictionJson {
        PredictionJson {
            agent: self.agent,
            degree: self.pair.degree,
            samples_consumed: self.samples_consumed(),
            consensus: self.consensus.to_map(),
            disagreement: self.disagreement.modal_terms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionJson {
    pub agent: usize,
    pub degree: usize,
    pub samples_consumed: usize,
    pub consensus: BTreeMap<String, Vec<f64>>,
    pub disagreement: ModalTerms,
}

/// Runs the whole pipeline on one window.
pub fn mdcp_run(
    window: &MemoryWindow,
    s: usize,
    config: &PredictorConfig,
) -> Result<MdcpResult, MdcpError> {
    if s == 0 {
        return Err(PredictorError::ZeroOrder).at(Step::Window);
    }
    if window.samples.len() < required_samples(0, s) {
        return Err(PredictorError::ShortWindow {
            available: window.samples.len(),
            required: required_samples(0, s),
        })
        .at(Step::Window);
    }
    let pair = find_minimal_pair(window, s, config).map_err(|e| {
        let step = match e {
            PredictorError::DegenerateNullVector { .. } => Step::NullVector,
            _ => Step::RankScan,
        };
        MdcpError { step, source: e }
    })?;
    let phi = build_phi(&pair, &window.samples).at(Step::Phi)?;
    let decomposition = fit_decomposition(&phi, &pair.p(), s).at(Step::Split)?;
    let consensus = consensus_item(&decomposition.beta_low, s, window.eps);
    let disagreement =
        predict_disagreement(&decomposition.beta_high, &pair, window.eps, &config.classify)
            .at(Step::Disagreement)?;
    Ok(MdcpResult {
        agent: window.agent,
        pair,
        phi,
        decomposition,
        consensus,
        disagreement,
    })
}

/// Long-run polynomials from the spectral projector onto the eigenvalue-one
/// generalized eigenspace, independent of the prediction pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralOracle {
    /// `polys[agent][order − 1]`, monomial in `k`.
    pub polys: Vec<Vec<Poly>>,
    /// Condition number of the biorthogonal pairing of left/right bases.
    pub condition: f64,
    pub ill_conditioned: bool,
}

impl SpectralOracle {
    pub fn eval(&self, agent: usize, order: usize, k: f64) -> f64 {
        self.polys[agent][order - 1].eval(k)
    }
}

/// With `P = R (LᵀR)⁻¹ Lᵀ` and `N = (W − I) P`, the long-run state is
/// `Σ_h C(k, h) Nʰ P X(0)`.
pub fn spectral_oracle(system: &PerronSystem, x0: &[f64]) -> Result<SpectralOracle, PredictorError> {
    let dim = system.dim();
    if x0.len() != dim {
        return Err(PredictorError::Spectrum(format!(
            "initial state has length {}, expected {dim}",
            x0.len()
        )));
    }
    let report = dynamics::spectral_check(system);
    if report.count_at_one != system.s || report.geometric_multiplicity_at_one != 1 {
        return Err(PredictorError::Spectrum(format!(
            "{} eigenvalues at one (geometric multiplicity {}), expected {}",
            report.count_at_one, report.geometric_multiplicity_at_one, system.s
        )));
    }
    let a = &system.w - DMatrix::identity(dim, dim);
    let right = dynamics::generalized_eigenspace(&a);
    let left = dynamics::generalized_eigenspace(&a.transpose());
    let pairing = left.transpose() * &right;
    let condition = linalg::condition_number(&pairing);
    let ill_conditioned = condition > ORACLE_CONDITION_WARN;
    if ill_conditioned {
        log::warn!("eigenvalue-one projector is ill-conditioned (cond = {condition:.3e})");
    }
    let inv = pairing
        .try_inverse()
        .ok_or_else(|| PredictorError::Spectrum("singular left/right pairing".into()))?;
    let projector = &right * inv * left.transpose();
    let nil = &a * &projector;
    let mut term = &projector * DVector::from_column_slice(x0);
    let m = right.ncols();
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m {
        weights.push(term.clone());
        term = &nil * term;
    }
    let n = system.n;
    let polys = (0..n)
        .map(|i| {
            (0..system.s)
                .map(|l| {
                    let b: Vec<f64> = weights.iter().map(|w| w[l * n + i]).collect();
                    Poly::monomial(polyalg::falling_to_monomial(&b))
                })
                .collect()
        })
        .collect();
    Ok(SpectralOracle {
        polys,
        condition,
        ill_conditioned,
    })
}
