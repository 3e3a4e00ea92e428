//! Property suites run by `peershare verify`.
//!
//! Corpus instance `k` of seed `s` is drawn from its own stream, so any
//! failing instance can be regenerated from `(s, k)` alone.

use std::fmt;

use peershare::equilibrium::{best_response_margin, DeviationTable, Estimate, PriorModel, Scenario};
use peershare::mechanism::{
    aggregate_received, budget_residual_bound, compute_shares, count_violations, dominance_pairs,
    fairness_alpha_bound, ir_alpha_bound, scale_evaluations,
};
use peershare::scoring::{consensus_stats, residual_identity, score_bounds, score_matrix};
use peershare::simulation::{random_instance, stream, StreamDomain, GENERATOR};
use peershare::{OpinionProfile, RawProfile};

/// Relative tolerance for conservation checks.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance between column sums and the closed-form residual.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// Population size used by the equilibrium suite.
pub const EQUILIBRIUM_N: usize = 101;
pub const EQUILIBRIUM_GRADES: [usize; 2] = [2, 3];
pub const EQUILIBRIUM_PRIOR: f64 = 1.0;
pub const EQUILIBRIUM_EPSILON: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Budget,
    Bounds,
    Fairness,
    Ir,
    Equilibrium,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Budget => "budget",
            Suite::Bounds => "bounds",
            Suite::Fairness => "fairness",
            Suite::Ir => "ir",
            Suite::Equilibrium => "equilibrium",
        })
    }
}

/// Result of one property over all instances it applied to.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyOutcome {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Extra text for the pass/fail line.
    pub detail: Option<String>,
    /// First instance that broke the property.
    pub counterexample: Option<Counterexample>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn new(name: &str) -> Self {
        PropertyOutcome { name: name.to_string(), checked: 0, violations: 0, detail: None, counterexample: None }
    }

    fn record(&mut self, ok: bool, instance: usize, profile: impl FnOnce() -> OpinionProfile, message: impl FnOnce() -> String) {
        self.checked += 1;
        if ok {
            return;
        }
        self.violations += 1;
        if self.counterexample.is_none() {
            self.counterexample = Some(Counterexample { instance, message: message(), profile: profile().to_raw() });
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub instance: usize,
    pub message: String,
    pub profile: RawProfile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub seed: u64,
    pub trials: usize,
    pub properties: Vec<PropertyOutcome>,
    /// Deviation tables of the equilibrium suite, keyed by a file stem.
    pub tables: Vec<(String, DeviationTable)>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyOutcome::passed)
    }

    /// Human-readable summary: a provenance header then one line per property.
    pub fn render(&self) -> String {
        let mut out = format!(
            "suite: {}\nseed: {}\ngenerator: {}\ntrials: {}\n",
            self.suite, self.seed, GENERATOR, self.trials
        );
        for p in &self.properties {
            let status = if p.passed() { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status} {}: {} checked, {} violations", p.name, p.checked, p.violations));
            if let Some(detail) = &p.detail {
                out.push_str(&format!(" ({detail})"));
            }
            out.push('\n');
            if let Some(c) = &p.counterexample {
                out.push_str(&format!("counterexample: instance {}: {}\n", c.instance, c.message));
                out.push_str(&serde_json::to_string_pretty(&c.profile).expect("profiles always serialize"));
                out.push('\n');
            }
        }
        out
    }
}

pub fn corpus_instance(seed: u64, k: usize) -> OpinionProfile {
    random_instance(&mut stream(StreamDomain::Corpus, seed, k as u64, 0))
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> SuiteOutcome {
    let (properties, tables) = match suite {
        Suite::Bounds => (bounds_suite(trials, seed), Vec::new()),
        Suite::Budget => (budget_suite(trials, seed), Vec::new()),
        Suite::Fairness => (fairness_suite(trials, seed), Vec::new()),
        Suite::Ir => (ir_suite(trials, seed), Vec::new()),
        Suite::Equilibrium => equilibrium_suite(trials, seed),
    };
    SuiteOutcome { suite, seed, trials, properties, tables }
}

fn bounds_suite(trials: usize, seed: u64) -> Vec<PropertyOutcome> {
    let mut range = PropertyOutcome::new("score_range");
    let mut prediction = PropertyOutcome::new("prediction_score_nonpositive");
    for k in 0..trials {
        let profile = corpus_instance(seed, k);
        let (lo, hi) = score_bounds(profile.m(), profile.params().epsilon());
        let scores = score_matrix(&profile);
        let n = profile.n();
        let mut worst_range = None;
        let mut worst_prediction = None;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let parts = scores.components(i, j);
                if !(lo..=hi).contains(&parts.total()) && worst_range.is_none() {
                    worst_range = Some((i, j, parts.total()));
                }
                if parts.prediction > 0.0 && worst_prediction.is_none() {
                    worst_prediction = Some((i, j, parts.prediction));
                }
            }
        }
        range.record(worst_range.is_none(), k, || profile.clone(), || {
            let (i, j, r) = worst_range.unwrap();
            format!("R({i}, {j}) = {r} outside [{lo}, {hi}]")
        });
        prediction.record(worst_prediction.is_none(), k, || profile.clone(), || {
            let (i, j, p) = worst_prediction.unwrap();
            format!("prediction score of ({i}, {j}) is {p}")
        });
    }
    vec![range, prediction]
}

fn budget_suite(trials: usize, seed: u64) -> Vec<PropertyOutcome> {
    let mut conserved = PropertyOutcome::new("received_shares_sum_to_v");
    let mut identity = PropertyOutcome::new("column_sums_match_residual_identity");
    let mut residual = PropertyOutcome::new("budget_residual_within_bound");
    for k in 0..trials {
        let profile = corpus_instance(seed, k);
        let params = *profile.params();
        let n = profile.n();

        let total: f64 = aggregate_received(&scale_evaluations(&profile)).iter().sum();
        let gap = (total - params.v()).abs();
        conserved.record(gap <= CONSERVATION_TOLERANCE * params.v(), k, || profile.clone(), || {
            format!("received shares sum to {total}, V = {}", params.v())
        });

        let scores = score_matrix(&profile);
        let mismatch = (0..n)
            .map(|j| {
                let direct: f64 = scores.column(j).sum();
                (j, direct, residual_identity(&consensus_stats(&profile, j), n - 1, params.epsilon()))
            })
            .find(|(_, direct, closed)| (direct - closed).abs() > IDENTITY_TOLERANCE);
        identity.record(mismatch.is_none(), k, || profile.clone(), || {
            let (j, direct, closed) = mismatch.unwrap();
            format!("target {j}: column sum {direct}, identity {closed}")
        });

        let report = compute_shares(&profile);
        let bound = budget_residual_bound(&params);
        let ok = report.budget_residual.abs() <= bound + CONSERVATION_TOLERANCE * params.v();
        residual.record(ok, k, || profile.clone(), || {
            format!("budget residual {} exceeds {bound}", report.budget_residual)
        });
    }
    vec![conserved, identity, residual]
}

fn fairness_suite(trials: usize, seed: u64) -> Vec<PropertyOutcome> {
    let mut fair = PropertyOutcome::new("dominance_respected_at_fairness_bound");
    let mut nonnegative = PropertyOutcome::new("no_negative_share_at_fairness_bound");
    let mut skipped = 0;
    for k in 0..trials {
        let base = corpus_instance(seed, k);
        let Ok(alpha) = fairness_alpha_bound(base.params()) else {
            skipped += 1;
            continue;
        };
        let profile = with_alpha(&base, alpha);
        let report = compute_shares(&profile);
        let counts = count_violations(&report, &dominance_pairs(profile.evaluations()));
        fair.record(counts.unfair == 0, k, || profile.clone(), || {
            format!("{} dominance pair(s) not strictly ordered at alpha = {alpha}", counts.unfair)
        });
        nonnegative.record(counts.negative == 0, k, || profile.clone(), || {
            format!("{} negative share(s) at alpha = {alpha}", counts.negative)
        });
    }
    let note = format!("{skipped} instance(s) skipped: M > sqrt(n-2)");
    fair.detail = Some(note.clone());
    nonnegative.detail = Some(note);
    vec![fair, nonnegative]
}

fn ir_suite(trials: usize, seed: u64) -> Vec<PropertyOutcome> {
    let mut nonnegative = PropertyOutcome::new("no_negative_share_at_ir_bound");
    for k in 0..trials {
        let base = corpus_instance(seed, k);
        let alpha = ir_alpha_bound(base.params());
        let profile = with_alpha(&base, alpha);
        let report = compute_shares(&profile);
        let negative = report.gamma.iter().filter(|&&g| g < 0.0).count();
        nonnegative.record(negative == 0, k, || profile.clone(), || {
            format!("{negative} negative share(s) at alpha = {alpha}")
        });
    }
    vec![nonnegative]
}

/// Stem of the deviation-table file for grade scale `m` and true grade `t`.
pub fn table_stem(m: usize, t_true: u32) -> String {
    format!("deviations_M{m}_t{t_true}")
}

/// One property per `(M, t_true)`: the truthful margin is at least minus its
/// standard error. `trials` is the number of paired samples.
fn equilibrium_suite(trials: usize, seed: u64) -> (Vec<PropertyOutcome>, Vec<(String, DeviationTable)>) {
    let mut properties = Vec::new();
    let mut tables = Vec::new();
    for m in EQUILIBRIUM_GRADES {
        let model = PriorModel::new(m, EQUILIBRIUM_PRIOR).expect("valid prior");
        for t_true in 1..=m as u32 {
            let scenario =
                Scenario { model, n: EQUILIBRIUM_N, epsilon: EQUILIBRIUM_EPSILON, t_true, samples: trials, seed };
            let result = best_response_margin(&scenario);
            let Estimate { mean, stderr } = result.margin;
            let best = &result.table.entries[result.best_deviation];
            let mut outcome = PropertyOutcome::new(&format!("truthful_margin M={m} n={EQUILIBRIUM_N} t={t_true}"));
            outcome.checked = 1;
            outcome.violations = usize::from(mean < -stderr);
            outcome.detail = Some(format!(
                "margin {mean:.6} ± {stderr:.6}; best deviation: grade {} with {}",
                best.report.grade, best.prediction_label
            ));
            properties.push(outcome);
            tables.push((table_stem(m, t_true), result.table));
        }
    }
    (properties, tables)
}

fn with_alpha(profile: &OpinionProfile, alpha: f64) -> OpinionProfile {
    let params = profile.params().with_alpha(alpha).expect("bounds are positive and finite");
    profile.with_params(params).expect("only alpha changed")
}
