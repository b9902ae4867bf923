//! Experiment drivers: the five-agent case study and random-network
//! consensus-window-launch-time ensembles.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EnsembleConfig, ExperimentConfig};
use crate::dynamics::{self, reference, DynamicsError, PerronSystem};
use crate::graph::{self, GraphError, RandomModel};
use crate::predictor::{self, MdcpError, MemoryWindow, PredictorConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mdcp(#[from] MdcpError),
}

/// How ensemble jobs are scheduled; results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

fn map_jobs<T, F>(count: usize, execution: Execution, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution == Execution::Parallel {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(job).collect();
    }
    let _ = execution;
    (0..count).map(job).collect()
}

// ---------------------------------------------------------------------------
// case study

pub mod expected {
    pub const DEGREE: usize = 10;
    pub const ZETA: [f64; 11] = [
        0.0000, 0.7209, -3.2848, 7.5597, -10.8951, 9.8706, -4.0706, -2.6171, 5.2873, -3.5668,
        1.0000,
    ];
    pub const ALPHA: [f64; 15] = [
        0.0000, 0.7209, -6.1685, 25.0245, -63.7266, 112.6697, -142.4475, 124.0291, -59.0453,
        -14.2656, 53.3886, -49.1670, 25.5545, -7.5668, 1.0000,
    ];
    pub const BETA: [f64; 4] = [0.0048, 0.0538, 0.6762, 3.7570];
    pub const KAPPA: [f64; 4] = [3.757019522, 0.6508490022, 0.02451822315, 0.000794850061];
    /// Absolute tolerance against four-decimal printed constants.
    pub const PRINTED_TOL: f64 = 1e-3;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: String,
    /// Deviation in the metric the tolerance applies to.
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, expected: String, actual: String, error: f64, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            expected,
            actual,
            error,
            tolerance,
            pass: error <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub omega: f64,
    pub degree: usize,
    pub checks: Vec<Check>,
}

impl CaseStudyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<4} {:<28} err={:<10.3e} tol={:<8.1e} expected={} actual={}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.error,
                c.tolerance,
                c.expected,
                c.actual
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyOptions {
    pub omega: f64,
    pub horizon: usize,
    /// Range `0..=residual_horizon` of the deadbeat identity check.
    pub residual_horizon: usize,
    pub predictor: PredictorConfig,
}

impl Default for CaseStudyOptions {
    fn default() -> Self {
        CaseStudyOptions {
            omega: reference::OMEGA,
            horizon: 200,
            residual_horizon: 200,
            predictor: PredictorConfig {
                scan_columns: Some(60),
                ..PredictorConfig::default()
            },
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn relative_diff(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let num = (0..n).map(|i| (get(a, i) - get(b, i)).abs()).fold(0.0, f64::max);
    let den = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    num / den.max(f64::MIN_POSITIVE)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Simulates the five-agent system, runs the predictor on agent 0 and
/// checks every reference intermediate.
pub fn reproduce_case_study(options: &CaseStudyOptions) -> Result<CaseStudyReport, BenchError> {
    use expected::*;
    let backbone = graph::reference_topology();
    let system = dynamics::build_perron(
        &backbone,
        reference::ORDER,
        reference::EPS,
        options.omega,
        &reference::GAINS,
    )?;
    let horizon = options.horizon.max(options.residual_horizon + reference::ORDER);
    let trajectory = dynamics::simulate(&system, &reference::X0, horizon)?;
    let window = MemoryWindow::from_trajectory(&trajectory, 0).truncated(options.horizon + 1);
    let run = predictor::mdcp_run(&window, reference::ORDER, &options.predictor)?;

    let p = graph::left_eigenvector(&backbone)?;
    let oracle = dynamics::consensus_projection(&p, &reference::X0, reference::EPS, reference::ORDER)?;

    let mut checks = Vec::new();
    let degree = run.pair.degree;
    checks.push(Check::new(
        "degree",
        DEGREE.to_string(),
        degree.to_string(),
        (degree as f64 - DEGREE as f64).abs(),
        0.0,
    ));
    checks.push(Check::new(
        "zeta",
        fmt_vec(&ZETA),
        fmt_vec(&run.pair.zeta),
        max_abs_diff(&run.pair.zeta, &ZETA),
        PRINTED_TOL,
    ));
    checks.push(Check::new(
        "alpha",
        fmt_vec(&ALPHA),
        fmt_vec(&run.pair.alpha),
        max_abs_diff(&run.pair.alpha, &ALPHA),
        PRINTED_TOL,
    ));
    let beta = &run.decomposition.beta_low;
    checks.push(Check::new(
        "beta",
        fmt_vec(&BETA),
        fmt_vec(beta),
        max_abs_diff(beta, &BETA),
        PRINTED_TOL,
    ));
    let mut kappa = run.consensus.orders[0].coeffs.clone();
    kappa.resize(reference::ORDER, 0.0);
    checks.push(Check::new(
        "consensus cubic",
        fmt_vec(&KAPPA),
        fmt_vec(&kappa),
        max_abs_diff(&kappa, &KAPPA),
        PRINTED_TOL,
    ));
    let exact = oracle.polynomial(1).coeffs;
    checks.push(Check::new(
        "cubic vs weighted average",
        fmt_vec(&exact),
        fmt_vec(&kappa),
        relative_diff(&kappa, &exact),
        1e-6,
    ));
    checks.push(Check::new(
        "rank drop minimal",
        "true".into(),
        run.pair.rank_drop_is_minimal().to_string(),
        if run.pair.rank_drop_is_minimal() { 0.0 } else { 1.0 },
        0.0,
    ));
    let first: f64 = (0..=options.residual_horizon as u64)
        .map(|k| (run.predict(1, k) - trajectory.value(k as usize, 0, 1)).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "deadbeat identity order 1",
        "0".into(),
        format!("{first:.3e}"),
        first,
        1e-5,
    ));
    let higher: f64 = (2..=reference::ORDER)
        .flat_map(|l| (0..=options.residual_horizon as u64).map(move |k| (l, k)))
        .map(|(l, k)| (run.predict(l, k) - trajectory.value(k as usize, 0, l)).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "deadbeat identity orders 2+",
        "0".into(),
        format!("{higher:.3e}"),
        higher,
        1e-4,
    ));
    Ok(CaseStudyReport {
        omega: options.omega,
        degree,
        checks,
    })
}

// ---------------------------------------------------------------------------
// ensembles

/// Shared settings of one ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub s: usize,
    pub eps: f64,
    pub omega: f64,
    pub gains: Vec<f64>,
    pub horizon: usize,
    pub sigma: f64,
    pub predictor: PredictorConfig,
    pub ensemble: EnsembleConfig,
}

impl EnsembleParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        EnsembleParams {
            s: cfg.s,
            eps: cfg.eps,
            omega: cfg.omega,
            gains: cfg.gains.clone(),
            horizon: cfg.horizon,
            sigma: cfg.sigma,
            predictor: cfg.predictor,
            ensemble: cfg.ensemble.clone(),
        }
    }
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self::from_config(&ExperimentConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSample {
    pub index: usize,
    pub seed: u64,
    /// Graphs discarded because no ω reduction made them converge.
    pub resamples: u32,
    pub omega: f64,
    /// Routine-protocol launch time; `None` when the horizon was too short.
    pub m_prime: Option<f64>,
    /// Per-agent predictor launch time; `None` where the predictor failed.
    pub m: Vec<Option<f64>>,
    pub degrees: Vec<Option<usize>>,
    /// Per agent: full rank one step before the detected degree and a
    /// one-dimensional null space at it.
    pub rank_drop_minimal: Vec<Option<bool>>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub model: String,
    pub param: String,
    pub networks: usize,
    pub agents: usize,
    pub base_seed: u64,
    pub sigma: f64,
    pub samples: Vec<NetworkSample>,
    /// Mean routine launch time over networks with a recorded value.
    pub m_prime_bar: f64,
    /// Mean predictor launch time over all recorded agent values.
    pub m_bar: f64,
    pub failed_networks: usize,
    pub failed_agents: usize,
    pub total_resamples: u32,
    pub metadata: Vec<String>,
}

impl EnsembleReport {
    /// `(M̄′, M̄)` recomputed from the stored samples.
    pub fn recompute_averages(&self) -> (f64, f64) {
        averages(&self.samples)
    }

    /// Predictor launches strictly before the routine protocol for every
    /// recorded agent of every network.
    pub fn predictor_always_earlier(&self) -> bool {
        self.samples.iter().all(|s| match s.m_prime {
            Some(mp) => s.m.iter().flatten().all(|&m| m < mp),
            None => true,
        })
    }
}

fn averages(samples: &[NetworkSample]) -> (f64, f64) {
    let mp: Vec<f64> = samples.iter().filter_map(|s| s.m_prime).collect();
    let m: Vec<f64> = samples
        .iter()
        .filter(|s| s.m_prime.is_some())
        .flat_map(|s| s.m.iter().flatten().copied())
        .collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    (mean(&mp), mean(&m))
}

/// Perron system for `backbone` with ω shrunk geometrically until the
/// closed loop converges; `None` if it never does.
pub fn stabilized_system(
    backbone: &graph::NetworkBackbone,
    params: &EnsembleParams,
) -> Result<Option<PerronSystem>, DynamicsError> {
    let mut omega = params.omega;
    for _ in 0..=params.ensemble.max_shrink_steps {
        let system = dynamics::build_perron(backbone, params.s, params.eps, omega, &params.gains)?;
        if dynamics::spectral_check(&system).converges() {
            return Ok(Some(system));
        }
        omega *= params.ensemble.omega_shrink;
    }
    Ok(None)
}

fn run_network(
    model: RandomModel,
    params: &EnsembleParams,
    index: usize,
    seed: u64,
) -> Result<NetworkSample, BenchError> {
    let e = &params.ensemble;
    let n = e.agents;
    let mut resamples = 0;
    let (system, backbone) = loop {
        let backbone = graph::generate_random(model, n, graph::derived_seed(seed, resamples))?;
        if let Some(system) = stabilized_system(&backbone, params)? {
            break (system, backbone);
        }
        resamples += 1;
        if resamples > e.max_resamples {
            return Ok(NetworkSample {
                index,
                seed,
                resamples,
                omega: f64::NAN,
                m_prime: None,
                m: Vec::new(),
                degrees: Vec::new(),
                rank_drop_minimal: Vec::new(),
                failure: Some("no stabilizing coupling found".into()),
            });
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = e.init_range;
    let x0: Vec<f64> = (0..system.dim()).map(|_| rng.random_range(lo..=hi)).collect();
    let trajectory = dynamics::simulate(&system, &x0, params.horizon)?;
    let p = graph::left_eigenvector(&backbone)?;
    let series = dynamics::propagate_disagreement(&system, &p, &x0, params.horizon)?;
    let (m_prime, failure) = match dynamics::cwlt(&series, params.sigma) {
        Ok(t) => (Some(t), None),
        Err(err) => (None, Some(err.to_string())),
    };
    let mut m = Vec::with_capacity(n);
    let mut degrees = Vec::with_capacity(n);
    let mut minimal = Vec::with_capacity(n);
    for agent in 0..n {
        let window = MemoryWindow::from_trajectory(&trajectory, agent);
        match predictor::mdcp_run(&window, params.s, &params.predictor) {
            Ok(run) => {
                m.push(Some(params.eps * run.samples_consumed() as f64));
                degrees.push(Some(run.pair.degree));
                minimal.push(Some(run.pair.rank_drop_is_minimal()));
            }
            Err(err) => {
                log::debug!("network {index} agent {agent}: {err}");
                m.push(None);
                degrees.push(None);
                minimal.push(None);
            }
        }
    }
    Ok(NetworkSample {
        index,
        seed,
        resamples,
        omega: system.omega,
        m_prime,
        m,
        degrees,
        rank_drop_minimal: minimal,
        failure,
    })
}

/// Runs `networks` independent samples of `model`; deterministic in
/// `base_seed` regardless of `execution`.
pub fn run_ensemble(
    model: RandomModel,
    params: &EnsembleParams,
    base_seed: u64,
    execution: Execution,
) -> Result<EnsembleReport, BenchError> {
    let e = &params.ensemble;
    let results = map_jobs(e.networks, execution, |j| {
        run_network(model, params, j, graph::derived_seed(base_seed, j as u32))
    });
    let samples = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (m_prime_bar, m_bar) = averages(&samples);
    let failed_networks = samples.iter().filter(|s| s.m_prime.is_none()).count();
    let failed_agents = samples
        .iter()
        .filter(|s| s.m_prime.is_some())
        .map(|s| s.m.iter().filter(|m| m.is_none()).count())
        .sum();
    let total_resamples = samples.iter().map(|s| s.resamples).sum();
    Ok(EnsembleReport {
        model: model.name().to_string(),
        param: model.param_label(),
        networks: e.networks,
        agents: e.agents,
        base_seed,
        sigma: params.sigma,
        samples,
        m_prime_bar,
        m_bar,
        failed_networks,
        failed_agents,
        total_resamples,
        metadata: vec![
            "M: predictor launch time = eps * samples consumed by the square Hankel scan (2D+s+1)".into(),
            "M': routine launch time = eps * (1 + last k with aggregate disagreement > sigma)".into(),
            format!(
                "gains: omega={} shrunk by {} until convergence, c={:?}, eps={}",
                params.omega, e.omega_shrink, params.gains, params.eps
            ),
            format!(
                "initial states uniform in [{}, {}] for all {} orders",
                e.init_range[0], e.init_range[1], params.s
            ),
            "random graphs: undirected, bidirectional unit weights, resampled until connected".into(),
        ],
    })
}

/// Runs every configured model, each with its own derived seed.
pub fn run_suite(
    params: &EnsembleParams,
    base_seed: u64,
    execution: Execution,
) -> Result<Vec<EnsembleReport>, BenchError> {
    params
        .ensemble
        .models
        .iter()
        .enumerate()
        .map(|(i, &model)| {
            run_ensemble(model, params, graph::derived_seed(base_seed, 1_000_000 + i as u32), execution)
        })
        .collect()
}

/// `model,param,M_bar,Mprime_bar` rows.
pub fn summary_csv(reports: &[EnsembleReport]) -> String {
    let mut out = String::from("model,param,M_bar,Mprime_bar\n");
    for r in reports {
        let _ = writeln!(out, "{},\"{}\",{},{}", r.model, r.param, r.m_bar, r.m_prime_bar);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnsembleParams {
        let mut p = EnsembleParams::default();
        p.ensemble.agents = 6;
        p.ensemble.networks = 3;
        p.horizon = 2000;
        p
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let p = small();
        let model = RandomModel::Er { rho: 0.6 };
        let a = run_ensemble(model, &p, 11, Execution::Sequential).unwrap();
        let b = run_ensemble(model, &p, 11, Execution::Parallel).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn single_network_average_is_the_sample() {
        let mut p = small();
        p.ensemble.networks = 1;
        let r = run_ensemble(RandomModel::Ba { m: 2 }, &p, 5, Execution::Sequential).unwrap();
        let s = &r.samples[0];
        assert_eq!(Some(r.m_prime_bar), s.m_prime);
        let ms: Vec<f64> = s.m.iter().flatten().copied().collect();
        assert_eq!(r.m_bar, ms.iter().sum::<f64>() / ms.len() as f64);
        assert_eq!(r.recompute_averages(), (r.m_prime_bar, r.m_bar));
    }

    #[test]
    fn short_horizon_is_a_recorded_failure() {
        let mut p = small();
        p.horizon = 20;
        p.ensemble.networks = 1;
        let r = run_ensemble(RandomModel::Er { rho: 0.6 }, &p, 3, Execution::Sequential).unwrap();
        assert_eq!(r.failed_networks, 1);
        assert!(r.m_prime_bar.is_nan());
        assert!(r.samples[0].failure.as_ref().unwrap().contains("horizon"));
    }

    #[test]
    fn summary_columns() {
        let csv = summary_csv(&[]);
        assert_eq!(csv, "model,param,M_bar,Mprime_bar\n");
    }
}
