//! Synthetic source-identification experiments.
//!
//! [`generate_synthetic`] draws a random dictionary with `q` groups of `g`
//! atoms and `n` signals that share `k` active groups, each signal using its
//! own `s` atoms inside every active group. [`run_experiment`] fits every
//! requested model over a λ grid and reports the cell with smallest MSE.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::SupportSpec;
use crate::error::{Error, Result};
use crate::model::{CodeMatrix, Dictionary, GroupPartition, Mode, RegularizerSpec, SignalSet};
use crate::solver::{sparsa_solve, SolverConfig};

const STREAM_DICTIONARY: u64 = 0;
const STREAM_CODES: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_MASK: u64 = 3;

/// One `(λ₁, λ₂)` pair. For collaborative methods `λ₂` is multiplied by `√n`
/// when [`ExperimentConfig::scale_collaborative`] is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LambdaPair {
    pub const fn new(lambda1: f64, lambda2: f64) -> Self {
        Self { lambda1, lambda2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub q: usize,
    pub g: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub n: usize,
    pub sigma: f64,
    #[serde(default)]
    pub missing_fraction: f64,
    pub seed: u64,
    pub methods: Vec<Mode>,
    /// Per-method grids; methods without an entry use [`default_grid`].
    #[serde(default)]
    pub lambda_grid: BTreeMap<Mode, Vec<LambdaPair>>,
    #[serde(default = "default_support_epsilon")]
    pub support_epsilon: f64,
    #[serde(default = "default_true")]
    pub scale_collaborative: bool,
    #[serde(default = "experiment_solver")]
    pub solver: SolverConfig,
}

fn default_support_epsilon() -> f64 {
    1e-4
}

fn default_true() -> bool {
    true
}

/// Solver settings used by the experiment drivers.
pub fn experiment_solver() -> SolverConfig {
    SolverConfig { rel_tol: 1e-6, obj_tol: 1e-10, max_outer_iters: 3000, ..SolverConfig::default() }
}

/// The four methods compared in the reference table.
pub const TABLE_METHODS: [Mode; 4] = [Mode::Lasso, Mode::Glasso, Mode::Hilasso, Mode::Chilasso];

impl ExperimentConfig {
    /// `q=8, g=32, m=64, k=2, s=8, n=50, σ=0.1`.
    pub fn desk() -> Self {
        Self {
            q: 8,
            g: 32,
            m: 64,
            k: 2,
            s: 8,
            n: 50,
            sigma: 0.1,
            missing_fraction: 0.0,
            seed: 0,
            methods: TABLE_METHODS.to_vec(),
            lambda_grid: BTreeMap::new(),
            support_epsilon: default_support_epsilon(),
            scale_collaborative: true,
            solver: experiment_solver(),
        }
    }

    /// Full-size setting: `g=64, n=200`.
    pub fn full() -> Self {
        Self { g: 64, n: 200, ..Self::desk() }
    }

    /// `q=8, g=16, m=32, k=2, s=4, n=100`, 60% of entries missing, no noise.
    pub fn missing_desk() -> Self {
        Self {
            g: 16,
            m: 32,
            s: 4,
            n: 100,
            sigma: 0.0,
            missing_fraction: 0.6,
            methods: vec![Mode::Lasso, Mode::Chilasso],
            ..Self::desk()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn num_atoms(&self) -> usize {
        self.q * self.g
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.q == 0 || self.g == 0 || self.m == 0 || self.n == 0 {
            return bad("q, g, m and n must be positive".into());
        }
        if self.k == 0 || self.k > self.q {
            return bad(format!("k must lie in 1..={}, got {}", self.q, self.k));
        }
        if self.s == 0 || self.s > self.g {
            return bad(format!("s must lie in 1..={}, got {}", self.g, self.s));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return bad(format!("missing_fraction must lie in [0, 1), got {}", self.missing_fraction));
        }
        if !(self.support_epsilon > 0.0) {
            return bad("support_epsilon must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        for (mode, grid) in &self.lambda_grid {
            if grid.is_empty() {
                return bad(format!("empty lambda grid for {mode}"));
            }
        }
        self.solver.validate()
    }

    /// The grid actually searched for `mode`, with collaborative scaling applied.
    pub fn resolved_grid(&self, mode: Mode) -> Vec<LambdaPair> {
        let base = self.lambda_grid.get(&mode).cloned().unwrap_or_else(|| default_grid(mode));
        let scale = if mode.is_collaborative() && self.scale_collaborative { (self.n as f64).sqrt() } else { 1.0 };
        base.into_iter().map(|l| LambdaPair::new(l.lambda1, l.lambda2 * scale)).collect()
    }
}

/// Default search grids, sized for unit-norm signals.
pub fn default_grid(mode: Mode) -> Vec<LambdaPair> {
    const L1: [f64; 8] = [0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4];
    const L2: [f64; 8] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
    match mode {
        Mode::Lasso => L1.iter().map(|&l| LambdaPair::new(l, 0.0)).collect(),
        Mode::Glasso | Mode::Cglasso => L2.iter().map(|&l| LambdaPair::new(0.0, l)).collect(),
        Mode::Hilasso | Mode::Chilasso => L1
            .iter()
            .flat_map(|&a| L2.iter().map(move |&b| LambdaPair::new(a, b)))
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dictionary: Dictionary,
    pub signals: SignalSet,
    pub codes: CodeMatrix,
    /// One support per signal; all share the same active groups.
    pub supports: Vec<SupportSpec>,
}

impl SyntheticData {
    pub fn active_groups(&self) -> &[usize] {
        &self.supports[0].active_groups
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws a dictionary, codes, signals, noise and mask from `config.seed`.
///
/// Every signal is a sum of `k` unit-norm components, one per active group.
///
/// Each of the four ingredients comes from its own random stream, so e.g.
/// changing `sigma` leaves the dictionary, codes and mask unchanged.
pub fn generate_synthetic(config: &ExperimentConfig) -> Result<SyntheticData> {
    config.validate()?;
    let (q, g, m, k, s, n) = (config.q, config.g, config.m, config.k, config.s, config.n);
    let p = q * g;
    let partition = GroupPartition::uniform(q, g)?;

    let mut rng = stream(config.seed, STREAM_DICTIONARY);
    let raw = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dictionary = Dictionary::normalize(raw, partition)?;

    let mut rng = stream(config.seed, STREAM_CODES);
    let mut active = sample(&mut rng, q, k).into_vec();
    active.sort_unstable();
    let mut codes = DMatrix::zeros(p, n);
    let mut supports = Vec::with_capacity(n);
    for j in 0..n {
        let within: Vec<Vec<usize>> = active
            .iter()
            .map(|_| {
                let mut set = sample(&mut rng, g, s).into_vec();
                set.sort_unstable();
                set
            })
            .collect();
        for (&r, set) in active.iter().zip(&within) {
            for &i in set {
                codes[(r * g + i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        supports.push(SupportSpec { active_groups: active.clone(), within_group: within });
    }
    // each source component is scaled to unit norm before mixing
    let mut clean = DMatrix::zeros(m, n);
    for j in 0..n {
        for &r in &active {
            let part = dictionary.matrix().columns(r * g, g) * codes.view((r * g, j), (g, 1));
            let norm = part.norm();
            if norm > 0.0 {
                clean.column_mut(j).axpy(1.0 / norm, &part.column(0), 1.0);
                codes.view_mut((r * g, j), (g, 1)).unscale_mut(norm);
            }
        }
    }
    let mut x = clean;
    if config.sigma > 0.0 {
        let mut rng = stream(config.seed, STREAM_NOISE);
        x.iter_mut().for_each(|v| *v += config.sigma * rng.sample::<f64, _>(StandardNormal));
    }

    let signals = if config.missing_fraction > 0.0 {
        let mut rng = stream(config.seed, STREAM_MASK);
        let mut mask = DMatrix::from_element(m, n, true);
        for j in 0..n {
            loop {
                for i in 0..m {
                    mask[(i, j)] = rng.random::<f64>() >= config.missing_fraction;
                }
                if mask.column(j).iter().any(|&b| b) {
                    break;
                }
            }
        }
        x.zip_apply(&mask, |v, keep| {
            if !keep {
                *v = 0.0
            }
        });
        SignalSet::with_mask(x, mask)?
    } else {
        SignalSet::new(x)
    };
    Ok(SyntheticData { dictionary, signals, codes, supports })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    /// `10⁴ · ‖A_est − A_true‖²_F / (pn)`.
    pub mse_e4: f64,
    /// Mean symmetric difference of atom supports per signal.
    pub hamming: f64,
    /// Mean symmetric difference of group supports per signal.
    pub group_hamming: f64,
}

/// Recovery metrics with supports thresholded at `epsilon`.
pub fn support_metrics(estimate: &CodeMatrix, truth: &CodeMatrix, partition: &GroupPartition, epsilon: f64) -> Result<SupportMetrics> {
    if truth.shape() != estimate.shape() || truth.nrows() != partition.num_atoms() {
        return Err(Error::Dimension(format!(
            "estimate {:?}, truth {:?}, partition of {} atoms",
            estimate.shape(),
            truth.shape(),
            partition.num_atoms()
        )));
    }
    let (p, n) = truth.shape();
    let sq: f64 = estimate.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let mse_e4 = 1e4 * sq / (p * n) as f64;
    let mut hamming = 0usize;
    let mut group_hamming = 0usize;
    for (e, t) in estimate.column_iter().zip(truth.column_iter()) {
        hamming += e.iter().zip(t.iter()).filter(|(a, b)| (a.abs() > epsilon) != (b.abs() > epsilon)).count();
        for group in partition.groups() {
            let norm = |v: &nalgebra::DVectorView<f64>| group.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
            let (ge, gt) = (norm(&e), norm(&t));
            group_hamming += usize::from((ge > epsilon) != (gt > epsilon));
        }
    }
    Ok(SupportMetrics {
        mse_e4,
        hamming: hamming as f64 / n as f64,
        group_hamming: group_hamming as f64 / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda: LambdaPair,
    pub metrics: Option<SupportMetrics>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Mode,
    /// Selected weights (after any collaborative scaling).
    pub lambda: LambdaPair,
    pub metrics: SupportMetrics,
    pub converged: bool,
    pub grid: Vec<GridCell>,
    /// Wall time for the whole grid. Not serialized, so reports stay
    /// reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub methods: Vec<MethodResult>,
    /// Methods for which every grid cell failed.
    pub failures: BTreeMap<Mode, String>,
}

impl ExperimentResult {
    pub fn method(&self, mode: Mode) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == mode)
    }

    /// The method with the smallest MSE.
    pub fn best_by_mse(&self) -> Option<Mode> {
        self.methods
            .iter()
            .min_by(|a, b| a.metrics.mse_e4.total_cmp(&b.metrics.mse_e4))
            .map(|r| r.method)
    }
}

fn fit(data: &SyntheticData, mode: Mode, lambda: LambdaPair, config: &ExperimentConfig) -> Result<(CodeMatrix, usize, bool)> {
    let spec = RegularizerSpec::for_mode(mode, lambda.lambda1, lambda.lambda2)?;
    let res = sparsa_solve(&data.dictionary, &data.signals, &spec, &config.solver, None)?;
    Ok((res.code, res.outer_iterations, res.converged))
}

fn evaluate_cell(data: &SyntheticData, mode: Mode, lambda: LambdaPair, config: &ExperimentConfig) -> (GridCell, f64) {
    let start = Instant::now();
    let cell = match fit(data, mode, lambda, config).and_then(|(code, iters, conv)| {
        let m = support_metrics(&code, &data.codes, data.dictionary.partition(), config.support_epsilon)?;
        Ok((m, iters, conv))
    }) {
        Ok((metrics, iterations, converged)) => GridCell { lambda, metrics: Some(metrics), iterations, converged, error: None },
        Err(e) => GridCell { lambda, metrics: None, iterations: 0, converged: false, error: Some(e.to_string()) },
    };
    (cell, start.elapsed().as_secs_f64())
}

/// Fits the methods of `config` on already generated data.
pub fn run_on_data(data: &SyntheticData, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let jobs: Vec<(usize, Mode, LambdaPair)> = config
        .methods
        .iter()
        .enumerate()
        .flat_map(|(mi, &mode)| config.resolved_grid(mode).into_iter().map(move |l| (mi, mode, l)))
        .collect();
    let cells: Vec<(usize, GridCell, f64)> = jobs
        .par_iter()
        .map(|&(mi, mode, l)| {
            let (cell, t) = evaluate_cell(data, mode, l, config);
            (mi, cell, t)
        })
        .collect();

    let mut methods = Vec::new();
    let mut failures = BTreeMap::new();
    for (mi, &mode) in config.methods.iter().enumerate() {
        let grid: Vec<GridCell> = cells.iter().filter(|c| c.0 == mi).map(|c| c.1.clone()).collect();
        let runtime_secs = cells.iter().filter(|c| c.0 == mi).map(|c| c.2).sum();
        let best = grid
            .iter()
            .filter_map(|c| c.metrics.map(|m| (c, m)))
            .min_by(|a, b| a.1.mse_e4.total_cmp(&b.1.mse_e4));
        match best {
            Some((cell, metrics)) => methods.push(MethodResult {
                method: mode,
                lambda: cell.lambda,
                metrics,
                converged: cell.converged,
                grid: grid.clone(),
                runtime_secs,
            }),
            None => {
                let msg = grid.iter().filter_map(|c| c.error.clone()).next().unwrap_or_default();
                failures.insert(mode, msg);
            }
        }
    }
    Ok(ExperimentResult { config: config.clone(), methods, failures })
}

/// Generates data from `config.seed` and fits every method.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let data = generate_synthetic(config)?;
    run_on_data(&data, config)
}

/// Per-method metrics averaged over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Mode,
    pub runs: usize,
    pub mean: SupportMetrics,
}

pub fn summarize(results: &[ExperimentResult]) -> Vec<MethodSummary> {
    let Some(first) = results.first() else { return Vec::new() };
    first
        .config
        .methods
        .iter()
        .filter_map(|&mode| {
            let rows: Vec<SupportMetrics> = results.iter().filter_map(|r| r.method(mode).map(|m| m.metrics)).collect();
            if rows.is_empty() {
                return None;
            }
            let c = rows.len() as f64;
            let mean = SupportMetrics {
                mse_e4: rows.iter().map(|m| m.mse_e4).sum::<f64>() / c,
                hamming: rows.iter().map(|m| m.hamming).sum::<f64>() / c,
                group_hamming: rows.iter().map(|m| m.group_hamming).sum::<f64>() / c,
            };
            Some(MethodSummary { method: mode, runs: rows.len(), mean })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingDataResult {
    pub experiment: ExperimentResult,
    /// `atoms × signals` 0/1 activity of the collaborative estimate.
    pub chilasso_active: Vec<Vec<u8>>,
    /// Same for the Lasso estimate.
    pub lasso_active: Vec<Vec<u8>>,
    /// Whether C-HiLasso's group Hamming distance is at most Lasso's.
    pub ordering_holds: bool,
}

fn activity(code: &CodeMatrix, epsilon: f64) -> Vec<Vec<u8>> {
    code.row_iter().map(|r| r.iter().map(|v| u8::from(v.abs() > epsilon)).collect()).collect()
}

/// Fits C-HiLasso and Lasso on masked signals and reports the estimated
/// activity patterns.
pub fn run_missing_data_demo(config: &ExperimentConfig) -> Result<MissingDataResult> {
    let config = ExperimentConfig { methods: vec![Mode::Chilasso, Mode::Lasso], ..config.clone() };
    let data = generate_synthetic(&config)?;
    let experiment = run_on_data(&data, &config)?;
    let refit = |mode: Mode| -> Result<Vec<Vec<u8>>> {
        let r = experiment
            .method(mode)
            .ok_or_else(|| Error::NonConvergence(format!("{mode}: {}", experiment.failures.get(&mode).cloned().unwrap_or_default())))?;
        let (code, _, _) = fit(&data, mode, r.lambda, &config)?;
        Ok(activity(&code, config.support_epsilon))
    };
    let chilasso_active = refit(Mode::Chilasso)?;
    let lasso_active = refit(Mode::Lasso)?;
    let gh = |m: Mode| experiment.method(m).map(|r| r.metrics.group_hamming).unwrap_or(f64::INFINITY);
    let ordering_holds = gh(Mode::Chilasso) <= gh(Mode::Lasso);
    Ok(MissingDataResult { experiment, chilasso_active, lasso_active, ordering_holds })
}
