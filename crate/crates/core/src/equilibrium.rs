//! Monte-Carlo check that truthful reporting is a best response.
//!
//! Signals come from a common symmetric Dirichlet prior: a target's grade
//! distribution `omega ~ Dirichlet(a, ..., a)`, and each evaluator observes
//! one grade drawn from `omega`. An evaluator who saw grade `t` then believes
//! the population's grades follow `E[omega | t]`, which is its truthful
//! prediction.
//!
//! With its `n - 2` fellow evaluators reporting truthfully, the expected BTS
//! result of one evaluator is estimated for a set of candidate reports. All
//! candidates are scored against the same sampled worlds, so differences
//! between them have small variance.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{score_report, ColumnAccumulator};
use crate::simulation::{stream, StreamDomain};

/// Samples per independently seeded block.
const BLOCK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Error)]
pub enum PriorError {
    #[error("grade count must be at least 1")]
    NoGrades,
    #[error("Dirichlet concentration {0} must be positive and finite")]
    Concentration(f64),
}

/// Symmetric Dirichlet prior over a target's grade distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    m: usize,
    a: f64,
}

impl PriorModel {
    pub fn new(m: usize, a: f64) -> Result<Self, PriorError> {
        if m < 1 {
            return Err(PriorError::NoGrades);
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(PriorError::Concentration(a));
        }
        Ok(PriorModel { m, a })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

/// Posterior mean of the grade distribution after observing grade `t`:
/// component `k` is `(a + [k = t]) / (M a + 1)`.
pub fn posterior_prediction(model: &PriorModel, t: u32) -> Vec<f64> {
    assert!(t >= 1 && t as usize <= model.m, "grade {t} outside 1..={}", model.m);
    let total = model.m as f64 * model.a + 1.0;
    (1..=model.m as u32)
        .map(|k| if k == t { (model.a + 1.0) / total } else { model.a / total })
        .collect()
}

/// A Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(values: &[f64]) -> Self {
        let count = values.len() as f64;
        let mean = values.iter().sum::<f64>() / count;
        if values.len() < 2 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
        Estimate { mean, stderr: (var / count).sqrt() }
    }
}

/// A report one evaluator could submit about a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub grade: u32,
    pub prediction: Vec<f64>,
}

/// The setting in which reports are compared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: PriorModel,
    /// Population size; the target has `n - 1` evaluators.
    pub n: usize,
    pub epsilon: f64,
    /// Grade the scored evaluator actually observed.
    pub t_true: u32,
    pub samples: usize,
    pub seed: u64,
}

impl Scenario {
    fn stream_index(&self) -> u64 {
        ((self.n as u64) << 32) | u64::from(self.t_true)
    }
}

fn sample_peers<R: Rng + ?Sized>(scenario: &Scenario, posteriors: &[Vec<f64>], rng: &mut R) -> ColumnAccumulator {
    let model = scenario.model;
    let m = model.m;
    let mut omega = vec![1.0; m];
    if m > 1 {
        for (k, w) in omega.iter_mut().enumerate() {
            let shape = model.a + if k as u32 + 1 == scenario.t_true { 1.0 } else { 0.0 };
            *w = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        }
        let total: f64 = omega.iter().sum();
        omega.iter_mut().for_each(|w| *w /= total);
    }
    let mut peers = ColumnAccumulator::new(m, scenario.epsilon);
    for _ in 0..scenario.n - 2 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut grade = m;
        for (k, &w) in omega.iter().enumerate() {
            acc += w;
            if u < acc {
                grade = k + 1;
                break;
            }
        }
        peers.push(grade as u32, &posteriors[grade - 1]);
    }
    peers
}

/// Per-candidate score samples, `result[c][s]`, over shared worlds.
pub fn paired_scores(scenario: &Scenario, candidates: &[Report]) -> Vec<Vec<f64>> {
    assert!(scenario.n >= 3, "need at least three agents");
    assert!(scenario.samples >= 1, "need at least one sample");
    let m = scenario.model.m;
    let posteriors: Vec<Vec<f64>> = (1..=m as u32).map(|t| posterior_prediction(&scenario.model, t)).collect();
    let blocks = scenario.samples.div_ceil(BLOCK);
    let per_block: Vec<Vec<Vec<f64>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(StreamDomain::Equilibrium, scenario.seed, scenario.stream_index(), b as u64);
            let len = BLOCK.min(scenario.samples - b * BLOCK);
            let mut out = vec![Vec::with_capacity(len); candidates.len()];
            for _ in 0..len {
                let peers = sample_peers(scenario, &posteriors, &mut rng);
                for (c, report) in candidates.iter().enumerate() {
                    let mut column = peers.clone();
                    column.push(report.grade, &report.prediction);
                    let stats = column.finish(0);
                    out[c].push(score_report(&stats, report.grade, &report.prediction, scenario.epsilon).total());
                }
            }
            out
        })
        .collect();
    (0..candidates.len())
        .map(|c| per_block.iter().flat_map(|block| block[c].iter().copied()).collect())
        .collect()
}

/// Expected `R(i, j)` of one report given the evaluator observed `t_true`.
pub fn expected_score_of_report(scenario: &Scenario, report: &Report) -> Estimate {
    let samples = paired_scores(scenario, std::slice::from_ref(report));
    Estimate::from_samples(&samples[0])
}

/// One row of a deviation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub report: Report,
    /// Human-readable origin of the prediction, e.g. `posterior(2)` or `uniform`.
    pub prediction_label: String,
    pub estimate: Estimate,
    pub samples: usize,
    pub truthful: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationTable {
    pub scenario: Scenario,
    pub entries: Vec<DeviationEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginResult {
    /// Truthful expected score minus the best deviation's, with the standard
    /// error of the paired difference.
    pub margin: Estimate,
    /// Index into `table.entries` of the best deviation.
    pub best_deviation: usize,
    pub table: DeviationTable,
}

/// Truthful report first, then every grade paired with every posterior
/// prediction and the uniform vector, minus the truthful pair itself.
pub fn candidate_reports(model: &PriorModel, t_true: u32) -> Vec<(Report, String, bool)> {
    let m = model.m as u32;
    let truthful = Report { grade: t_true, prediction: posterior_prediction(model, t_true) };
    let mut predictions: Vec<(Vec<f64>, String)> =
        (1..=m).map(|t| (posterior_prediction(model, t), format!("posterior({t})"))).collect();
    predictions.push((vec![1.0 / m as f64; m as usize], "uniform".to_string()));
    let mut out = vec![(truthful, format!("posterior({t_true})"), true)];
    for grade in 1..=m {
        for (prediction, label) in &predictions {
            if grade == t_true && *label == format!("posterior({t_true})") {
                continue;
            }
            out.push((Report { grade, prediction: prediction.clone() }, label.clone(), false));
        }
    }
    out
}

/// How much better truthful reporting scores than the best deviation.
pub fn best_response_margin(scenario: &Scenario) -> MarginResult {
    let candidates = candidate_reports(&scenario.model, scenario.t_true);
    let reports: Vec<Report> = candidates.iter().map(|(r, _, _)| r.clone()).collect();
    let samples = paired_scores(scenario, &reports);
    let entries: Vec<DeviationEntry> = candidates
        .into_iter()
        .zip(&samples)
        .map(|((report, prediction_label, truthful), values)| DeviationEntry {
            report,
            prediction_label,
            estimate: Estimate::from_samples(values),
            samples: values.len(),
            truthful,
        })
        .collect();
    let best_deviation = (1..entries.len())
        .max_by(|&x, &y| entries[x].estimate.mean.total_cmp(&entries[y].estimate.mean))
        .expect("deviation set is never empty");
    let diffs: Vec<f64> = samples[0].iter().zip(&samples[best_deviation]).map(|(t, d)| t - d).collect();
    MarginResult {
        margin: Estimate::from_samples(&diffs),
        best_deviation,
        table: DeviationTable { scenario: *scenario, entries },
    }
}
