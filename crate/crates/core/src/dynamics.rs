//! Closed-loop high-order consensus dynamics: the Perron matrix, its
//! spectrum, simulation, the weighted-average consensus trajectory, the
//! per-agent disagreement and the consensus-window-launch-time.
//!
//! States are stacked order-major: `X = [X^(1); X^(2); …; X^(s)]`, so entry
//! `(ℓ − 1)·n + i` holds `x_i^(ℓ)`. Agents are zero-based, orders one-based.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{self, GraphError, LeftEigenvector, NetworkBackbone};
use crate::linalg;
use crate::polyalg::{self, Poly};

/// Distance from `1 + 0i` within which an eigenvalue counts as "at one".
pub const AT_ONE_TOL: f64 = 1e-7;
/// Moduli above `1 + UNIT_CIRCLE_TOL` count as unstable.
pub const UNIT_CIRCLE_TOL: f64 = 1e-9;
/// Relative singular-value threshold for ranks taken on `W − I`.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid system parameters: {0}")]
    InvalidParameters(String),
    #[error("state vector has length {got}, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("aggregate disagreement {last} still exceeds sigma={sigma} at the horizon k={horizon}")]
    HorizonTooShort { horizon: usize, sigma: f64, last: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Closed-loop matrix of an `s`-order, `n`-agent system under the relative
/// damping protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronSystem {
    pub s: usize,
    pub n: usize,
    pub eps: f64,
    pub omega: f64,
    pub gains: Vec<f64>,
    pub w: DMatrix<f64>,
}

impl PerronSystem {
    pub fn dim(&self) -> usize {
        self.s * self.n
    }
}

/// Assembles the block Perron matrix: identity diagonal blocks, `εI` on the
/// super-diagonal, and last block row `[ωc₀L, …, ωc_{s−2}L, I + ωc_{s−1}L]`.
pub fn build_perron(
    backbone: &NetworkBackbone,
    s: usize,
    eps: f64,
    omega: f64,
    gains: &[f64],
) -> Result<PerronSystem, DynamicsError> {
    let bad = |m: String| Err(DynamicsError::InvalidParameters(m));
    if s == 0 {
        return bad("order s must be at least 1".into());
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return bad(format!("sampling time must be positive, got {eps}"));
    }
    if !(omega < 0.0 && omega.is_finite()) {
        return bad(format!("external coupling must be negative, got {omega}"));
    }
    if gains.len() != s {
        return bad(format!("expected {s} internal gains, got {}", gains.len()));
    }
    if let Some(c) = gains.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return bad(format!("internal gains must be positive, got {c}"));
    }
    let n = backbone.n();
    let lap = backbone.laplacian();
    let mut w = DMatrix::identity(s * n, s * n);
    for b in 0..s - 1 {
        for i in 0..n {
            w[(b * n + i, (b + 1) * n + i)] = eps;
        }
    }
    let last = (s - 1) * n;
    for (l, &c) in gains.iter().enumerate() {
        let mut block = w.view_mut((last, l * n), (n, n));
        block += lap * (omega * c);
    }
    Ok(PerronSystem {
        s,
        n,
        eps,
        omega,
        gains: gains.to_vec(),
        w,
    })
}

/// Spectrum summary of a Perron matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub order: usize,
    /// Full spectrum; the generalized eigenspace at one contributes exact ones.
    pub eigenvalues: Vec<Complex64>,
    pub count_at_one: usize,
    pub max_modulus_excluding_one: f64,
    /// `sn − rank(W − I)`.
    pub geometric_multiplicity_at_one: usize,
    /// Dimension of the generalized eigenspace at one.
    pub algebraic_multiplicity_at_one: usize,
    /// `|tr(W restricted to that subspace)/m − 1|`, the well-conditioned
    /// centroid of the (numerically split) Jordan cluster.
    pub cluster_centroid_error: f64,
    /// Some mode lies outside the unit circle.
    pub unstable_mode: bool,
}

impl SpectralReport {
    /// Exactly `s` eigenvalues at one, a single eigenvector there, and all
    /// remaining modes strictly inside the unit circle.
    pub fn converges(&self) -> bool {
        self.count_at_one == self.order
            && self.geometric_multiplicity_at_one == 1
            && self.max_modulus_excluding_one < 1.0
    }
}

/// Eigen-analysis of `W` with the eigenvalue-one cluster deflated first.
///
/// A defective eigenvalue of multiplicity `s` is split by roughly
/// `ε_mach^{1/s}` in any direct eigensolve, so the generalized eigenspace at
/// one is grown by projected null-space steps, its centroid checked, and the
/// rest of the spectrum taken from the orthogonal complement.
pub fn spectral_check(system: &PerronSystem) -> SpectralReport {
    let dim = system.dim();
    let a = &system.w - DMatrix::identity(dim, dim);
    let geometric = dim - linalg::numerical_rank(&a, RANK_TOL);

    let basis = generalized_eigenspace(&a);
    let m = basis.ncols();
    let complement = if m == 0 {
        DMatrix::identity(dim, dim)
    } else {
        linalg::null_space(&basis.transpose(), RANK_TOL)
    };
    let centroid_error = if m == 0 {
        f64::INFINITY
    } else {
        let block = basis.transpose() * &system.w * &basis;
        (block.trace() / m as f64 - 1.0).abs()
    };
    let rest = linalg::eigenvalues(&(complement.transpose() * &system.w * &complement));

    let mut eigenvalues = Vec::with_capacity(dim);
    let mut count_at_one = 0;
    if centroid_error <= AT_ONE_TOL {
        eigenvalues.extend(std::iter::repeat_n(Complex64::new(1.0, 0.0), m));
        count_at_one = m;
    } else {
        // report the raw cluster when it does not sit at one
        let block = basis.transpose() * &system.w * &basis;
        eigenvalues.extend(linalg::eigenvalues(&block));
    }
    let mut max_other = 0.0_f64;
    for &ev in &rest {
        if (ev - Complex64::new(1.0, 0.0)).norm() <= AT_ONE_TOL {
            count_at_one += 1;
        } else {
            max_other = max_other.max(ev.norm());
        }
        eigenvalues.push(ev);
    }
    if centroid_error > AT_ONE_TOL {
        for ev in &eigenvalues[..m] {
            max_other = max_other.max(ev.norm());
        }
    }
    SpectralReport {
        order: system.s,
        eigenvalues,
        count_at_one,
        max_modulus_excluding_one: max_other,
        geometric_multiplicity_at_one: geometric,
        algebraic_multiplicity_at_one: m,
        cluster_centroid_error: centroid_error,
        unstable_mode: max_other > 1.0 + UNIT_CIRCLE_TOL,
    }
}

/// Orthonormal basis of `⋃_j ker (W − I)^j`, grown as
/// `N_{j+1} = ker((I − Q_j Q_jᵀ)(W − I))`.
pub(crate) fn generalized_eigenspace(a: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = a.nrows();
    let mut basis = linalg::null_space(a, RANK_TOL);
    while basis.ncols() > 0 && basis.ncols() < dim {
        let projector = DMatrix::identity(dim, dim) - &basis * basis.transpose();
        let next = linalg::null_space(&(projector * a), RANK_TOL);
        if next.ncols() <= basis.ncols() {
            break;
        }
        basis = next;
    }
    basis
}

/// Simulated state sequence `X(0..=K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub s: usize,
    pub n: usize,
    pub eps: f64,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// `x_agent^(order)(k)`, order one-based.
    pub fn value(&self, k: usize, agent: usize, order: usize) -> f64 {
        self.states[k][(order - 1) * self.n + agent]
    }

    /// First-order output stream of one agent over the whole horizon.
    pub fn output(&self, agent: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[agent]).collect()
    }

    /// Largest `‖X(k) − W X(k−1)‖∞ / ‖X(k)‖∞` over the trajectory.
    pub fn replay_residual(&self, system: &PerronSystem) -> f64 {
        self.states
            .windows(2)
            .map(|pair| {
                let diff = &pair[1] - &system.w * &pair[0];
                diff.amax() / pair[1].amax().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `k,agent,order,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,agent,order,value\n");
        for (k, x) in self.states.iter().enumerate() {
            for order in 1..=self.s {
                for agent in 0..self.n {
                    let v = x[(order - 1) * self.n + agent];
                    let _ = writeln!(out, "{k},{agent},{order},{v}");
                }
            }
        }
        out
    }
}

/// `X(k) = W X(k − 1)` for `k = 1..=horizon`.
pub fn simulate(
    system: &PerronSystem,
    x0: &[f64],
    horizon: usize,
) -> Result<Trajectory, DynamicsError> {
    if x0.len() != system.dim() {
        return Err(DynamicsError::StateLength {
            got: x0.len(),
            expected: system.dim(),
        });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(DVector::from_column_slice(x0));
    for k in 0..horizon {
        let mut next = DVector::zeros(system.dim());
        system.w.mul_to(&states[k], &mut next);
        states.push(next);
    }
    Ok(Trajectory {
        s: system.s,
        n: system.n,
        eps: system.eps,
        states,
    })
}

/// Weighted-average consensus trajectory in every order.
///
/// Order `ℓ` evaluates to `Σ_j C(k, j) · weights[ℓ−1][j]` with
/// `weights[ℓ−1][j] = ε^j pᵀX^(ℓ+j)(0)`; this is the exact evolution of
/// `pᵀX^(ℓ)(k)` under the sampled dynamics, because `pᵀL = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusProjection {
    pub eps: f64,
    pub weights: Vec<Vec<f64>>,
}

impl ConsensusProjection {
    pub fn order_count(&self) -> usize {
        self.weights.len()
    }

    pub fn eval(&self, order: usize, k: u64) -> f64 {
        self.weights[order - 1]
            .iter()
            .enumerate()
            .map(|(j, w)| w * linalg::binomial(k, j as u64))
            .sum()
    }

    pub fn at(&self, k: u64) -> Vec<f64> {
        (1..=self.order_count()).map(|l| self.eval(l, k)).collect()
    }

    /// The order-`ℓ` trajectory as a monomial polynomial in `k`.
    pub fn polynomial(&self, order: usize) -> Poly {
        Poly::monomial(polyalg::falling_to_monomial(&self.weights[order - 1]))
    }
}

pub fn consensus_projection(
    p: &LeftEigenvector,
    x0: &[f64],
    eps: f64,
    s: usize,
) -> Result<ConsensusProjection, DynamicsError> {
    let n = p.0.len();
    if x0.len() != s * n {
        return Err(DynamicsError::StateLength {
            got: x0.len(),
            expected: s * n,
        });
    }
    let averages: Vec<f64> = (0..s).map(|l| p.weigh(&x0[l * n..(l + 1) * n])).collect();
    let weights = (0..s)
        .map(|l| {
            (0..s - l)
                .map(|j| eps.powi(j as i32) * averages[l + j])
                .collect()
        })
        .collect();
    Ok(ConsensusProjection { eps, weights })
}

/// The consensus vector `℘_c(k)` (one entry per order).
pub fn consensus_vector(
    backbone: &NetworkBackbone,
    x0: &[f64],
    k: u64,
    eps: f64,
    s: usize,
) -> Result<Vec<f64>, DynamicsError> {
    let p = graph::left_eigenvector(backbone)?;
    Ok(consensus_projection(&p, x0, eps, s)?.at(k))
}

/// `℘(k) = X(k) − ℘_c(k) ⊗ 1ₙ`, stored in the same order-major layout as `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisagreementSeries {
    pub s: usize,
    pub n: usize,
    pub eps: f64,
    pub values: Vec<DVector<f64>>,
}

impl DisagreementSeries {
    pub fn value(&self, k: usize, agent: usize, order: usize) -> f64 {
        self.values[k][(order - 1) * self.n + agent]
    }

    /// `Σ_ℓ Σ_i |℘_i^(ℓ)(k)|` for every `k`.
    pub fn aggregate(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.iter().map(|x| x.abs()).sum()).collect()
    }
}

pub fn disagreement_series(
    trajectory: &Trajectory,
    backbone: &NetworkBackbone,
) -> Result<DisagreementSeries, DynamicsError> {
    let p = graph::left_eigenvector(backbone)?;
    let (s, n) = (trajectory.s, trajectory.n);
    let projection = consensus_projection(&p, trajectory.states[0].as_slice(), trajectory.eps, s)?;
    let values = trajectory
        .states
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let c = projection.at(k as u64);
            let mut d = x.clone();
            for l in 0..s {
                for i in 0..n {
                    d[l * n + i] -= c[l];
                }
            }
            d
        })
        .collect();
    Ok(DisagreementSeries {
        s,
        n,
        eps: trajectory.eps,
        values,
    })
}

/// Disagreement obtained by propagating `℘(0)` with `W` directly.
///
/// Since `W (1 ⊗ c(k)) = 1 ⊗ c(k + 1)`, the disagreement obeys
/// `℘(k + 1) = W ℘(k)` exactly. Propagating it avoids subtracting the
/// polynomially growing consensus from a simulated state, which loses all
/// accuracy once `|X(k)|` is large.
pub fn propagate_disagreement(
    system: &PerronSystem,
    p: &LeftEigenvector,
    x0: &[f64],
    horizon: usize,
) -> Result<DisagreementSeries, DynamicsError> {
    let (s, n) = (system.s, system.n);
    let projection = consensus_projection(p, x0, system.eps, s)?;
    let c0 = projection.at(0);
    let mut d0 = x0.to_vec();
    for l in 0..s {
        for i in 0..n {
            d0[l * n + i] -= c0[l];
        }
    }
    let traj = simulate(system, &d0, horizon)?;
    Ok(DisagreementSeries {
        s,
        n,
        eps: system.eps,
        values: traj.states,
    })
}

/// Consensus-window-launch-time of a disagreement series.
pub fn cwlt(series: &DisagreementSeries, sigma: f64) -> Result<f64, DynamicsError> {
    cwlt_from_aggregate(&series.aggregate(), sigma, series.eps)
}

/// `ε · (1 + last k with aggregate(k) > σ)`, or 0 when never exceeded.
///
/// Entry-time reading: the window is launched once the aggregate stays at
/// or below `σ` for the rest of the simulated horizon.
pub fn cwlt_from_aggregate(aggregate: &[f64], sigma: f64, eps: f64) -> Result<f64, DynamicsError> {
    let horizon = aggregate.len().saturating_sub(1);
    if let Some(&last) = aggregate.last() {
        if last > sigma {
            return Err(DynamicsError::HorizonTooShort {
                horizon,
                sigma,
                last,
            });
        }
    }
    Ok(match aggregate.iter().rposition(|&v| v > sigma) {
        Some(k) => eps * (k + 1) as f64,
        None => 0.0,
    })
}

/// Reference case study: 4th order, five agents, ε = 0.1, ω = −0.2.
pub mod reference {
    pub const ORDER: usize = 4;
    pub const EPS: f64 = 0.1;
    pub const OMEGA: f64 = -0.2;
    pub const GAINS: [f64; 4] = [6.0, 6.0, 17.0, 2.0];
    #[rustfmt::skip]
    pub const X0: [f64; 20] = [
        1.9660, 2.5108, 6.1604, 4.7329, 3.5166,
        8.3083, 5.8526, 5.4972, 9.1719, 2.8584,
        7.5720, 7.5373, 3.8045, 5.6782, 0.7585,
        0.5395, 5.3080, 7.7917, 9.3401, 1.2991,
    ];
}

/// The reference five-agent Perron system.
pub fn reference_system() -> PerronSystem {
    build_perron(
        &graph::reference_topology(),
        reference::ORDER,
        reference::EPS,
        reference::OMEGA,
        &reference::GAINS,
    )
    .expect("reference parameters are valid")
}
