//! Seeded random profiles and the parameter-sweep experiments.
//!
//! Truthful grades follow `H = ceil(M * B)` with `B ~ Beta(1/2, 1/2)`, so most
//! opinions are extreme. A prediction is the empirical grade distribution of
//! `n - 1` fresh draws of `H`.
//!
//! Every trial owns a ChaCha8 stream keyed by `(seed, grid index, trial)`;
//! trials run in parallel and are merged in index order, so reports depend
//! only on the configuration.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{compute_shares, count_violations, dominance_pairs};
use crate::profile::{EvaluationMatrix, MechanismParams, OpinionProfile, PredictionTensor, ValidationError};

/// Name and version of the pseudo-random generator behind every stream.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9)";

/// Stream domains, so that sweep trials and property-corpus instances never
/// share keys even under equal seeds and indexes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamDomain {
    Sweep = 1,
    Corpus = 2,
    Equilibrium = 3,
}

/// Independent stream for `(domain, seed, index, trial)`.
pub fn stream(domain: StreamDomain, seed: u64, index: u64, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&trial.to_le_bytes());
    key[24..].copy_from_slice(&(domain as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One grade from `ceil(M * B)`, `B ~ Beta(1/2, 1/2)`.
///
/// `B = sin^2(pi U / 2)` is the exact inverse CDF of the arcsine law; `U`
/// is drawn from the open unit interval so `B > 0`.
pub fn sample_evaluation<R: Rng + ?Sized>(m: usize, rng: &mut R) -> u32 {
    let u: f64 = Open01.sample(rng);
    let b = (FRAC_PI_2 * u).sin().powi(2);
    ((m as f64 * b).ceil() as u32).clamp(1, m as u32)
}

/// `P(H = k)` for `k = 1..=M`, from the arcsine CDF `(2/pi) asin(sqrt(x))`.
pub fn evaluation_pmf(m: usize) -> Vec<f64> {
    let cdf = |x: f64| x.sqrt().asin() / FRAC_PI_2;
    (1..=m).map(|k| cdf(k as f64 / m as f64) - cdf((k - 1) as f64 / m as f64)).collect()
}

/// Truthful profile under the experiment protocol.
///
/// Draw order: for each evaluator `i`, for each target `j != i`, the grade
/// then the `n - 1` prediction draws.
pub fn sample_profile<R: Rng + ?Sized>(params: &MechanismParams, rng: &mut R) -> OpinionProfile {
    let (n, m) = (params.n(), params.m());
    let mut grades = vec![0u32; n * n];
    let mut freqs = vec![0.0; n * n * m];
    let mut counts = vec![0u32; m];
    let share = 1.0 / (n - 1) as f64;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            grades[i * n + j] = sample_evaluation(m, rng);
            counts.fill(0);
            for _ in 0..n - 1 {
                counts[sample_evaluation(m, rng) as usize - 1] += 1;
            }
            let at = (i * n + j) * m;
            for (f, &c) in freqs[at..at + m].iter_mut().zip(&counts) {
                *f = f64::from(c) * share;
            }
        }
    }
    let evaluations = EvaluationMatrix::from_fn(n, |i, j| grades[i * n + j]);
    let predictions = PredictionTensor::from_fn(n, m, |i, j, out| {
        let at = (i * n + j) * m;
        out.copy_from_slice(&freqs[at..at + m]);
    });
    OpinionProfile::unlabeled(*params, evaluations, predictions).expect("sampled profiles are valid")
}

/// Epsilon values used by the randomized property corpus.
pub const CORPUS_EPSILONS: [f64; 3] = [1e-4, 1e-2, 0.1];

/// Adversarially varied profile for property checks: `n` in `3..=20`,
/// `M` in `1..=8`, `eps` from [`CORPUS_EPSILONS`].
///
/// Grades are uniform, driven by latent agent quality (which plants
/// dominance pairs), or nearly unanimous. Predictions mix flat Dirichlet
/// draws, point masses and sparse vectors.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> OpinionProfile {
    let n = rng.random_range(3..=20usize);
    let m = rng.random_range(1..=8usize);
    let epsilon = CORPUS_EPSILONS[rng.random_range(0..CORPUS_EPSILONS.len())];
    let v = rng.random_range(m.max(1) as f64..=10_000.0);
    let alpha = 10f64.powf(rng.random_range(-3.0..3.0));
    let params = MechanismParams::new(n, m, v, alpha, epsilon).expect("corpus parameters are valid");

    let grade_mode = rng.random_range(0..3u8);
    let quality: Vec<u32> = (0..n).map(|_| rng.random_range(1..=m as u32)).collect();
    let favourite = rng.random_range(1..=m as u32);
    let evaluations = EvaluationMatrix::from_fn(n, |_, j| match grade_mode {
        0 => rng.random_range(1..=m as u32),
        1 => quality[j],
        _ if rng.random_bool(0.9) => favourite,
        _ => rng.random_range(1..=m as u32),
    });

    let prediction_mode = rng.random_range(0..4u8);
    let predictions = PredictionTensor::from_fn(n, m, |_, _, out| {
        let mode = if prediction_mode == 3 { rng.random_range(0..3u8) } else { prediction_mode };
        match mode {
            0 => {
                for p in out.iter_mut() {
                    *p = Exp1.sample(rng);
                }
            }
            1 => {
                out.fill(0.0);
                out[rng.random_range(0..m)] = 1.0;
            }
            _ => {
                for p in out.iter_mut() {
                    *p = if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 };
                }
                if out.iter().all(|&p| p == 0.0) {
                    out[rng.random_range(0..m)] = 1.0;
                }
            }
        }
        let total: f64 = out.iter().sum();
        for p in out.iter_mut() {
            *p /= total;
        }
    });
    OpinionProfile::unlabeled(params, evaluations, predictions).expect("corpus profiles are valid")
}

/// Which parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Vary the top evaluation `M`; report the spread of shares.
    MSweep,
    /// Vary `alpha`; count unfair and negative shares.
    AlphaSweep,
    /// Vary the population size `n`; report the sum of shares.
    NSweep,
    /// The base parameters only; every statistic is reported.
    Single,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::MSweep => "m_sweep",
            ExperimentKind::AlphaSweep => "alpha_sweep",
            ExperimentKind::NSweep => "n_sweep",
            ExperimentKind::Single => "single",
        })
    }
}

pub const DEFAULT_M_GRID: [f64; 8] = [2.0, 5.0, 7.0, 10.0, 25.0, 50.0, 75.0, 100.0];
pub const DEFAULT_ALPHA_GRID: [f64; 8] = [0.1, 1.0, 5.0, 10.0, 25.0, 50.0, 100.0, 500.0];
pub const DEFAULT_N_GRID: [f64; 6] = [5.0, 10.0, 25.0, 50.0, 100.0, 150.0];

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConfigError {
    #[error("the parameter grid is empty")]
    EmptyGrid,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("grid value {value} must be a whole number for {kind}")]
    NotInteger { kind: ExperimentKind, value: f64 },
    #[error("grid value {value} is invalid for {kind}: {source}")]
    InvalidPoint {
        kind: ExperimentKind,
        value: f64,
        #[source]
        source: ValidationError,
    },
}

/// A sweep: base parameters, the swept grid, repetitions and master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid: Vec<f64>,
    pub base: MechanismParams,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(
        kind: ExperimentKind,
        grid: Vec<f64>,
        base: MechanismParams,
        trials: usize,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let config = ExperimentConfig { kind, grid, base, trials, seed };
        if config.trials == 0 {
            return Err(ConfigError::NoTrials);
        }
        if config.kind != ExperimentKind::Single && config.grid.is_empty() {
            return Err(ConfigError::EmptyGrid);
        }
        for &value in &config.grid {
            config.point_params(value)?;
        }
        Ok(config)
    }

    /// Default setup for each sweep: `V = 1000`, `eps = 1e-4`, `n = 100`,
    /// `M = 10`, `alpha = 10` for whichever of these is not swept.
    pub fn defaults(kind: ExperimentKind, trials: usize, seed: u64) -> Result<Self, ConfigError> {
        let base = MechanismParams::new(100, 10, 1000.0, 10.0, 1e-4).expect("default parameters are valid");
        let grid = match kind {
            ExperimentKind::MSweep => DEFAULT_M_GRID.to_vec(),
            ExperimentKind::AlphaSweep => DEFAULT_ALPHA_GRID.to_vec(),
            ExperimentKind::NSweep => DEFAULT_N_GRID.to_vec(),
            ExperimentKind::Single => Vec::new(),
        };
        Self::new(kind, grid, base, trials, seed)
    }

    /// Parameters at one grid value.
    pub fn point_params(&self, value: f64) -> Result<MechanismParams, ConfigError> {
        let whole = |value: f64| {
            if value.fract() == 0.0 && value >= 0.0 {
                Ok(value as usize)
            } else {
                Err(ConfigError::NotInteger { kind: self.kind, value })
            }
        };
        let invalid = |source| ConfigError::InvalidPoint { kind: self.kind, value, source };
        match self.kind {
            ExperimentKind::MSweep => self.base.with_m(whole(value)?).map_err(invalid),
            ExperimentKind::AlphaSweep => self.base.with_alpha(value).map_err(invalid),
            ExperimentKind::NSweep => self.base.with_n(whole(value)?).map_err(invalid),
            ExperimentKind::Single => Ok(self.base),
        }
    }

    fn points(&self) -> Vec<(f64, MechanismParams)> {
        match self.kind {
            ExperimentKind::Single => vec![(f64::NAN, self.base)],
            _ => self
                .grid
                .iter()
                .map(|&v| (v, self.point_params(v).expect("grid validated at construction")))
                .collect(),
        }
    }
}

/// Statistics gathered at one grid value. Only the fields relevant to the
/// sweep kind are populated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Swept parameter value; absent for single runs.
    pub value: Option<f64>,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_share: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_share: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unfair_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_sum: Option<f64>,
    /// Largest `|sum of shares - V|` seen over the trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_abs_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub generator: String,
    pub points: Vec<GridPoint>,
}

/// The profile drawn for trial `trial` at grid position `index`. It does not
/// depend on how many trials the sweep runs.
pub fn trial_profile(seed: u64, index: usize, trial: usize, params: &MechanismParams) -> OpinionProfile {
    let mut rng = stream(StreamDomain::Sweep, seed, index as u64, trial as u64);
    sample_profile(params, &mut rng)
}

struct TrialOutcome {
    shares: Vec<f64>,
    sum: f64,
    unfair: usize,
    negative: usize,
}

fn run_trials(config: &ExperimentConfig, wants_counts: bool) -> Vec<(f64, MechanismParams, Vec<TrialOutcome>)> {
    config
        .points()
        .into_iter()
        .enumerate()
        .map(|(index, (value, params))| {
            let outcomes = (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let profile = trial_profile(config.seed, index, t, &params);
                    let report = compute_shares(&profile);
                    let counts = if wants_counts {
                        count_violations(&report, &dominance_pairs(profile.evaluations()))
                    } else {
                        Default::default()
                    };
                    TrialOutcome { sum: report.total(), shares: report.gamma, unfair: counts.unfair, negative: counts.negative }
                })
                .collect();
            (value, params, outcomes)
        })
        .collect()
}

/// Population mean and standard deviation, accumulated in slice order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count;
    (mean, var.sqrt())
}

fn summarize(config: &ExperimentConfig, share_stats: bool, counts: bool, sums: bool) -> ExperimentReport {
    let points = run_trials(config, counts)
        .into_iter()
        .map(|(value, params, outcomes)| {
            let mut point = GridPoint {
                value: (!value.is_nan()).then_some(value),
                trials: outcomes.len(),
                mean_share: None,
                std_share: None,
                unfair_count: None,
                negative_count: None,
                mean_sum: None,
                std_sum: None,
                max_abs_residual: None,
            };
            if share_stats {
                let all: Vec<f64> = outcomes.iter().flat_map(|o| o.shares.iter().copied()).collect();
                let (mean, std) = mean_std(&all);
                point.mean_share = Some(mean);
                point.std_share = Some(std);
            }
            if counts {
                point.unfair_count = Some(outcomes.iter().map(|o| o.unfair).sum());
                point.negative_count = Some(outcomes.iter().map(|o| o.negative).sum());
            }
            if sums {
                let totals: Vec<f64> = outcomes.iter().map(|o| o.sum).collect();
                let (mean, std) = mean_std(&totals);
                point.mean_sum = Some(mean);
                point.std_sum = Some(std);
                point.max_abs_residual =
                    Some(totals.iter().map(|s| (s - params.v()).abs()).fold(0.0, f64::max));
            }
            point
        })
        .collect();
    ExperimentReport { config: config.clone(), generator: GENERATOR.to_string(), points }
}

/// Mean and spread of individual shares for each `M`.
pub fn run_m_sweep(config: &ExperimentConfig) -> ExperimentReport {
    assert_eq!(config.kind, ExperimentKind::MSweep);
    summarize(config, true, false, false)
}

/// Unfair and negative shares, totalled over trials, for each `alpha`.
pub fn run_alpha_sweep(config: &ExperimentConfig) -> ExperimentReport {
    assert_eq!(config.kind, ExperimentKind::AlphaSweep);
    summarize(config, false, true, false)
}

/// Mean and spread of the sum of shares for each `n`.
pub fn run_n_sweep(config: &ExperimentConfig) -> ExperimentReport {
    assert_eq!(config.kind, ExperimentKind::NSweep);
    summarize(config, false, false, true)
}

pub fn run_experiment(config: &ExperimentConfig) -> ExperimentReport {
    match config.kind {
        ExperimentKind::MSweep => run_m_sweep(config),
        ExperimentKind::AlphaSweep => run_alpha_sweep(config),
        ExperimentKind::NSweep => run_n_sweep(config),
        ExperimentKind::Single => summarize(config, true, true, true),
    }
}
