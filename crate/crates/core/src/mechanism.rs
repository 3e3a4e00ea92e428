//! The sharing mechanism.
//!
//! Each evaluator's row is rescaled to sum to `V`; agent `i`'s evaluation
//! component `chi_bar[i]` is the sum of scaled grades it received divided by
//! `n`. Its truth score `zeta[i]` is the mean of its BTS results, and its share
//! is `chi_bar[i] + alpha * zeta[i]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{EvaluationMatrix, MechanismParams, OpinionProfile};
use crate::scoring::{score_matrix, ScoreMatrix};

/// Evaluations rescaled so that each evaluator's row sums to `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledEvaluations {
    n: usize,
    values: Vec<f64>,
}

impl ScaledEvaluations {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        assert_ne!(i, j, "no scaled self-evaluation exists");
        self.values[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i != j && i < self.n && j < self.n).then(|| self.value(i, j))
    }
}

pub fn scale_evaluations(profile: &OpinionProfile) -> ScaledEvaluations {
    let n = profile.n();
    let v = profile.params().v();
    let evals = profile.evaluations();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        let total: u64 = evals.given(i).map(|(_, g)| u64::from(g)).sum();
        let factor = v / total as f64;
        for (j, g) in evals.given(i) {
            values[i * n + j] = f64::from(g) * factor;
        }
    }
    ScaledEvaluations { n, values }
}

/// `chi_bar[i] = (sum_{j != i} chi[j][i]) / n`.
pub fn aggregate_received(scaled: &ScaledEvaluations) -> Vec<f64> {
    let n = scaled.n;
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| scaled.value(j, i)).sum::<f64>() / n as f64)
        .collect()
}

/// `zeta[i]`: mean BTS result of agent `i` over its `n - 1` targets.
pub fn truth_scores(scores: &ScoreMatrix) -> Vec<f64> {
    let n = scores.n();
    (0..n).map(|i| scores.row(i).sum::<f64>() / (n - 1) as f64).collect()
}

/// Per-agent components and final shares of one mechanism run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareReport {
    pub agents: Vec<String>,
    pub chi_bar: Vec<f64>,
    pub zeta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `sum(gamma) - V`.
    pub budget_residual: f64,
    pub params: MechanismParams,
}

impl ShareReport {
    pub fn total(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

pub fn compute_shares(profile: &OpinionProfile) -> ShareReport {
    let params = *profile.params();
    let chi_bar = aggregate_received(&scale_evaluations(profile));
    let zeta = truth_scores(&score_matrix(profile));
    let gamma: Vec<f64> = chi_bar.iter().zip(&zeta).map(|(c, z)| c + params.alpha() * z).collect();
    let budget_residual = gamma.iter().sum::<f64>() - params.v();
    ShareReport {
        agents: profile.agents().to_vec(),
        chi_bar,
        zeta,
        gamma,
        budget_residual,
        params,
    }
}

/// Largest magnitude the budget residual can reach: `2 alpha n eps ln(M/eps)`.
pub fn budget_residual_bound(params: &MechanismParams) -> f64 {
    let n = params.n() as f64;
    2.0 * params.alpha() * n * params.epsilon() * (params.m() as f64 / params.epsilon()).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("fairness bound not established: M = {m} exceeds sqrt(n - 2) for n = {n}")]
pub struct BoundInapplicable {
    pub n: usize,
    pub m: usize,
}

/// `V / (3 M n^2 ln(M/eps))`, whether or not `M <= sqrt(n - 2)` holds.
pub fn fairness_alpha_formula(params: &MechanismParams) -> f64 {
    let (n, m) = (params.n() as f64, params.m() as f64);
    params.v() / (3.0 * m * n * n * (m / params.epsilon()).ln())
}

/// Whether `M <= sqrt(n - 2)`, compared exactly in integers.
pub fn fairness_precondition(params: &MechanismParams) -> bool {
    params.m() * params.m() <= params.n() - 2
}

/// Largest alpha for which unanimous dominance is guaranteed to be respected:
/// [`fairness_alpha_formula`], established only when `M <= sqrt(n - 2)`.
pub fn fairness_alpha_bound(params: &MechanismParams) -> Result<f64, BoundInapplicable> {
    if !fairness_precondition(params) {
        return Err(BoundInapplicable { n: params.n(), m: params.m() });
    }
    Ok(fairness_alpha_formula(params))
}

/// Largest alpha for which every share is guaranteed nonnegative:
/// `V / (2 M n ln(M/eps))`.
pub fn ir_alpha_bound(params: &MechanismParams) -> f64 {
    let (n, m) = (params.n() as f64, params.m() as f64);
    params.v() / (2.0 * m * n * (m / params.epsilon()).ln())
}

/// Agent `dominator` strictly out-grades `dominated` in every comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DominancePair {
    pub dominator: usize,
    pub dominated: usize,
}

/// Every ordered pair `(i, j)` such that each third agent `z` grades `i`
/// strictly above `j`, and `j`'s grade of `i` strictly exceeds `i`'s grade
/// of `j`. Ties anywhere disqualify the pair.
pub fn dominance_pairs(evaluations: &EvaluationMatrix) -> Vec<DominancePair> {
    let n = evaluations.n();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            if evaluations.grade(j, i) <= evaluations.grade(i, j) {
                continue;
            }
            let unanimous = (0..n)
                .filter(|&z| z != i && z != j)
                .all(|z| evaluations.grade(z, i) > evaluations.grade(z, j));
            if unanimous {
                pairs.push(DominancePair { dominator: i, dominated: j });
            }
        }
    }
    pairs
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    /// Dominance pairs whose dominator did not get a strictly larger share.
    pub unfair: usize,
    /// Agents with a negative share.
    pub negative: usize,
}

pub fn count_violations(report: &ShareReport, pairs: &[DominancePair]) -> ViolationCounts {
    let gamma = &report.gamma;
    ViolationCounts {
        unfair: pairs.iter().filter(|p| gamma[p.dominator] <= gamma[p.dominated]).count(),
        negative: gamma.iter().filter(|&&g| g < 0.0).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::worked_example;
    use crate::profile::PredictionTensor;

    const TABLE_CHI: [f64; 6] = [144.18, 215.61, 170.30, 167.99, 110.12, 191.80];
    const TABLE_ZETA: [f64; 6] = [0.05, -0.06, 0.09, -0.02, 0.15, -0.21];
    const TABLE_GAMMA: [f64; 6] = [149.18, 209.61, 179.30, 165.99, 125.12, 170.80];

    fn flat_profile(n: usize, m: usize, grade: u32, alpha: f64) -> OpinionProfile {
        let params = MechanismParams::new(n, m, 1000.0, alpha, 0.01).unwrap();
        let evals = EvaluationMatrix::from_fn(n, |_, _| grade);
        let preds = PredictionTensor::from_fn(n, m, |_, _, out| {
            out.fill(0.0);
            out[0] = 0.25;
            out[m - 1] += 0.75;
        });
        OpinionProfile::unlabeled(params, evals, preds).unwrap()
    }

    #[test]
    fn scaled_rows_of_worked_example() {
        let scaled = scale_evaluations(&worked_example());
        let row_b: Vec<f64> = (0..6).filter(|&j| j != 1).map(|j| scaled.value(1, j)).collect();
        for (got, want) in row_b.iter().zip([125.0, 250.0, 250.0, 125.0, 250.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!((scaled.value(4, 5) - 222.22).abs() < 0.005);
        for i in 0..6 {
            let sum: f64 = (0..6).filter_map(|j| scaled.get(i, j)).sum();
            assert!((sum - 1000.0).abs() < 1e-9 * 1000.0);
        }
    }

    #[test]
    fn worked_example_matches_published_table() {
        let report = compute_shares(&worked_example());
        for i in 0..6 {
            assert!((report.chi_bar[i] - TABLE_CHI[i]).abs() <= 0.005, "chi_bar {i}");
            assert!((report.zeta[i] - TABLE_ZETA[i]).abs() <= 0.01, "zeta {i}");
            assert!((report.gamma[i] - TABLE_GAMMA[i]).abs() <= 1.0, "gamma {i}");
        }
        let chi_sum: f64 = report.chi_bar.iter().sum();
        assert!((chi_sum - 1000.0).abs() < 1e-9 * 1000.0);
        assert!(report.budget_residual.abs() <= budget_residual_bound(&report.params));
    }

    #[test]
    fn uniform_grades_split_evenly() {
        for grade in [1, 3] {
            let profile = flat_profile(5, 3, grade, 1.0);
            let scaled = scale_evaluations(&profile);
            assert!((scaled.value(2, 4) - 250.0).abs() < 1e-12);
            for c in aggregate_received(&scaled) {
                assert!((c - 200.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_profile_shares_are_common() {
        let profile = flat_profile(5, 3, 2, 50.0);
        let report = compute_shares(&profile);
        let z0 = report.zeta[0];
        for i in 0..5 {
            assert!((report.zeta[i] - z0).abs() < 1e-12);
            assert!((report.gamma[i] - (200.0 + 50.0 * z0)).abs() < 1e-9);
        }
        let stats = crate::scoring::consensus_stats(&profile, 0);
        let per_target = crate::scoring::residual_identity(&stats, 4, 0.01);
        let expected = 50.0 / 4.0 * 5.0 * per_target;
        assert!((report.budget_residual - expected).abs() < 1e-9);
    }

    #[test]
    fn vanishing_alpha_leaves_evaluation_component() {
        let profile = worked_example().with_params(MechanismParams::new(6, 2, 1000.0, 1e-9, 0.01).unwrap()).unwrap();
        let report = compute_shares(&profile);
        for (g, c) in report.gamma.iter().zip(&report.chi_bar) {
            assert!((g - c).abs() < 1e-7 * 1000.0);
        }
    }

    #[test]
    fn alpha_bounds() {
        let params = MechanismParams::new(100, 10, 1000.0, 1.0, 1e-4).unwrap();
        // 10 > sqrt(98): the formula is defined but the guarantee is not.
        assert!(!fairness_precondition(&params));
        assert!(fairness_alpha_bound(&params).is_err());
        let fair = fairness_alpha_formula(&params);
        assert!((fair - 2.8952e-4).abs() < 1e-8);
        let doubled = MechanismParams::new(100, 10, 2000.0, 1.0, 1e-4).unwrap();
        assert_eq!(fairness_alpha_formula(&doubled), 2.0 * fair);
        let roomy = MechanismParams::new(102, 10, 1000.0, 1.0, 1e-4).unwrap();
        assert_eq!(fairness_alpha_bound(&roomy), Ok(fairness_alpha_formula(&roomy)));
        assert!((ir_alpha_bound(&params) - 0.04343).abs() < 1e-5);
        assert_eq!(ir_alpha_bound(&doubled), 2.0 * ir_alpha_bound(&params));
        let wider = MechanismParams::new(200, 10, 1000.0, 1.0, 1e-4).unwrap();
        assert!((ir_alpha_bound(&wider) - 0.02171).abs() < 1e-5);
        let small = MechanismParams::new(6, 2, 1000.0, 1.0, 0.01).unwrap();
        assert!((ir_alpha_bound(&small) - 1000.0 / (24.0 * 200f64.ln())).abs() < 1e-12);
        assert!((ir_alpha_bound(&small) - 7.8641).abs() < 1e-4);
        let coarse = MechanismParams::new(6, 3, 1000.0, 1.0, 0.01).unwrap();
        assert_eq!(fairness_alpha_bound(&coarse), Err(BoundInapplicable { n: 6, m: 3 }));
        assert!(fairness_alpha_bound(&small).is_ok());
    }

    // Brute-force restatement of the dominance definition, one ordered pair at a time.
    fn dominates(e: &EvaluationMatrix, i: usize, j: usize) -> bool {
        let n = e.n();
        let mut ok = e.get(j, i).unwrap() > e.get(i, j).unwrap();
        for z in 0..n {
            if z != i && z != j && e.get(z, i).unwrap() <= e.get(z, j).unwrap() {
                ok = false;
            }
        }
        ok
    }

    #[test]
    fn dominance_on_worked_example() {
        let evals = worked_example().evaluations().clone();
        let pairs = dominance_pairs(&evals);
        assert!(pairs.contains(&DominancePair { dominator: 1, dominated: 4 }));
        assert!(!pairs.contains(&DominancePair { dominator: 1, dominated: 0 }));
        let oracle: Vec<DominancePair> = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && dominates(&evals, i, j))
            .map(|(i, j)| DominancePair { dominator: i, dominated: j })
            .collect();
        assert_eq!(pairs, oracle);
        let report = compute_shares(&worked_example());
        assert_eq!(count_violations(&report, &pairs), ViolationCounts { unfair: 0, negative: 0 });
    }

    #[test]
    fn dominance_on_three_agents() {
        // 0-based: agent 0 is graded 2 by both peers and gives 1s.
        let grades = [[0, 1, 1], [2, 0, 1], [2, 1, 0]];
        let evals = EvaluationMatrix::from_fn(3, |i, j| grades[i][j]);
        assert_eq!(
            dominance_pairs(&evals),
            vec![DominancePair { dominator: 0, dominated: 1 }, DominancePair { dominator: 0, dominated: 2 }]
        );
        assert!(dominance_pairs(&EvaluationMatrix::from_fn(4, |_, _| 2)).is_empty());
    }

    #[test]
    fn violation_counting() {
        let report = ShareReport {
            agents: vec!["x".into(), "y".into(), "z".into()],
            chi_bar: vec![0.0; 3],
            zeta: vec![0.0; 3],
            gamma: vec![-1.0, 5.0, 6.0],
            budget_residual: 0.0,
            params: MechanismParams::new(3, 1, 10.0, 1.0, 0.5).unwrap(),
        };
        assert_eq!(count_violations(&report, &[]), ViolationCounts { unfair: 0, negative: 1 });
        let pairs = [DominancePair { dominator: 1, dominated: 2 }, DominancePair { dominator: 2, dominated: 1 }];
        assert_eq!(count_violations(&report, &pairs).unfair, 1);
    }
}
