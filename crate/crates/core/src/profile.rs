//! Domain types shared by every other module: mechanism parameters, the
//! evaluation matrix, the prediction tensor, and the validated opinion
//! profile that bundles them.
//!
//! Agents are addressed by 0-based index in the stored label order. The
//! diagonal of both opinion containers (self-evaluation, self-prediction)
//! is not addressable: accessors panic on `i == j`, and the external
//! representation ([`RawProfile`]) carries an explicit `null` there.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when checking that a prediction vector sums to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// The parameters `(n, M, V, alpha, epsilon)` governing one sharing instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    n: usize,
    m: usize,
    v: f64,
    alpha: f64,
    epsilon: f64,
}

impl MechanismParams {
    pub fn new(n: usize, m: usize, v: f64, alpha: f64, epsilon: f64) -> Result<Self, ValidationError> {
        let params = MechanismParams { n, m, v, alpha, epsilon };
        let issues = params.issues();
        if issues.is_empty() {
            Ok(params)
        } else {
            Err(ValidationError { issues })
        }
    }

    fn issues(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        if self.n < 3 {
            issues.push(Issue::TooFewAgents { n: self.n });
        }
        if !self.v.is_finite() || self.v <= 0.0 {
            issues.push(Issue::Reward { v: self.v });
        }
        if self.m < 1 || (self.m as f64) > self.v {
            issues.push(Issue::GradeScale { m: self.m as i64, v: self.v });
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            issues.push(Issue::Alpha { alpha: self.alpha });
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            issues.push(Issue::Epsilon { epsilon: self.epsilon });
        }
        issues
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Top evaluation; grades run over `1..=m`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Joint reward to be shared.
    pub fn v(&self) -> f64 {
        self.v
    }

    /// Weight of the truth-telling score in each share.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Recalibration coefficient keeping every frequency away from 0 and 1.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self, ValidationError> {
        Self::new(self.n, self.m, self.v, alpha, self.epsilon)
    }

    pub fn with_n(self, n: usize) -> Result<Self, ValidationError> {
        Self::new(n, self.m, self.v, self.alpha, self.epsilon)
    }

    pub fn with_m(self, m: usize) -> Result<Self, ValidationError> {
        Self::new(self.n, m, self.v, self.alpha, self.epsilon)
    }
}

/// Agent `i`'s grade for agent `j`, stored row-major with an unused diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationMatrix {
    n: usize,
    grades: Vec<u32>,
}

impl EvaluationMatrix {
    /// Builds a matrix by calling `grade(i, j)` for every off-diagonal pair.
    pub fn from_fn(n: usize, mut grade: impl FnMut(usize, usize) -> u32) -> Self {
        let mut grades = vec![0; n * n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                grades[i * n + j] = grade(i, j);
            }
        }
        EvaluationMatrix { n, grades }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grade given by `i` to `j`.
    ///
    /// Panics on the diagonal: agents never evaluate themselves.
    #[inline]
    pub fn grade(&self, i: usize, j: usize) -> u32 {
        assert_ne!(i, j, "no self-evaluation exists for agent {i}");
        self.grades[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        (i != j && i < self.n && j < self.n).then(|| self.grades[i * self.n + j])
    }

    /// Grades that agent `j` received, in evaluator order (`q != j`).
    pub fn received(&self, j: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        (0..self.n).filter(move |&q| q != j).map(move |q| (q, self.grade(q, j)))
    }

    /// Grades that agent `i` gave, in target order (`q != i`).
    pub fn given(&self, i: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        (0..self.n).filter(move |&q| q != i).map(move |q| (q, self.grade(i, q)))
    }
}

/// Agent `i`'s predicted grade distribution for agent `j`: one length-`M`
/// probability vector per ordered pair, diagonal unused.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTensor {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl PredictionTensor {
    /// Builds a tensor by letting `fill(i, j, out)` write each off-diagonal vector.
    pub fn from_fn(n: usize, m: usize, mut fill: impl FnMut(usize, usize, &mut [f64])) -> Self {
        let mut values = vec![0.0; n * n * m];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let at = (i * n + j) * m;
                fill(i, j, &mut values[at..at + m]);
            }
        }
        PredictionTensor { n, m, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Prediction made by `i` about the grades `j` receives.
    ///
    /// Panics on the diagonal.
    #[inline]
    pub fn vector(&self, i: usize, j: usize) -> &[f64] {
        assert_ne!(i, j, "no self-prediction exists for agent {i}");
        let at = (i * self.n + j) * self.m;
        &self.values[at..at + self.m]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&[f64]> {
        (i != j && i < self.n && j < self.n).then(|| self.vector(i, j))
    }
}

/// A complete strategy profile: every agent's evaluations and predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct OpinionProfile {
    params: MechanismParams,
    agents: Vec<String>,
    evaluations: EvaluationMatrix,
    predictions: PredictionTensor,
}

impl OpinionProfile {
    /// Assembles a profile from typed parts, checking every invariant.
    pub fn new(
        params: MechanismParams,
        agents: Vec<String>,
        evaluations: EvaluationMatrix,
        predictions: PredictionTensor,
    ) -> Result<Self, ValidationError> {
        let mut issues = params.issues();
        let n = params.n;
        check_labels(&agents, n, &mut issues);
        if evaluations.n != n {
            issues.push(Issue::Dimension { what: "evaluations", expected: n, found: evaluations.n });
        }
        if predictions.n != n {
            issues.push(Issue::Dimension { what: "predictions", expected: n, found: predictions.n });
        }
        if predictions.m != params.m {
            issues.push(Issue::GradeDimension { expected: params.m, found: predictions.m });
        }
        if issues.is_empty() {
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    check_grade(i, j, i64::from(evaluations.grade(i, j)), params.m, &mut issues);
                    check_prediction(i, j, predictions.vector(i, j), &mut issues);
                }
            }
        }
        if issues.is_empty() {
            Ok(OpinionProfile { params, agents, evaluations, predictions })
        } else {
            Err(ValidationError { issues })
        }
    }

    /// Profile with generated labels `a0, a1, ...`.
    pub fn unlabeled(
        params: MechanismParams,
        evaluations: EvaluationMatrix,
        predictions: PredictionTensor,
    ) -> Result<Self, ValidationError> {
        let agents = (0..params.n).map(|i| format!("a{i}")).collect();
        Self::new(params, agents, evaluations, predictions)
    }

    pub fn params(&self) -> &MechanismParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn evaluations(&self) -> &EvaluationMatrix {
        &self.evaluations
    }

    pub fn predictions(&self) -> &PredictionTensor {
        &self.predictions
    }

    /// Same opinions under different mechanism parameters (n and M must match).
    pub fn with_params(&self, params: MechanismParams) -> Result<Self, ValidationError> {
        Self::new(params, self.agents.clone(), self.evaluations.clone(), self.predictions.clone())
    }

    /// Relabels agents so that new agent `k` is old agent `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(order.len(), n, "permutation length must equal n");
        let evaluations = EvaluationMatrix::from_fn(n, |i, j| self.evaluations.grade(order[i], order[j]));
        let predictions = PredictionTensor::from_fn(n, self.m(), |i, j, out| {
            out.copy_from_slice(self.predictions.vector(order[i], order[j]))
        });
        let agents = order.iter().map(|&k| self.agents[k].clone()).collect();
        OpinionProfile { params: self.params, agents, evaluations, predictions }
    }

    /// External representation with `null` on the diagonal.
    pub fn to_raw(&self) -> RawProfile {
        let n = self.n();
        RawProfile {
            v: self.params.v,
            m: self.params.m as i64,
            alpha: self.params.alpha,
            epsilon: self.params.epsilon,
            agents: self.agents.clone(),
            evaluations: (0..n)
                .map(|i| (0..n).map(|j| self.evaluations.get(i, j).map(i64::from)).collect())
                .collect(),
            predictions: (0..n)
                .map(|i| (0..n).map(|j| self.predictions.get(i, j).map(<[f64]>::to_vec)).collect())
                .collect(),
        }
    }
}

/// Unvalidated profile as read from an external file.
///
/// `n` is implied by the number of agent labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "M")]
    pub m: i64,
    pub alpha: f64,
    pub epsilon: f64,
    pub agents: Vec<String>,
    pub evaluations: Vec<Vec<Option<i64>>>,
    pub predictions: Vec<Vec<Option<Vec<f64>>>>,
}

/// One violated constraint. Opinion-level issues carry the `(i, j)` pair.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum Issue {
    #[error("n = {n} agents; at least 3 are required")]
    TooFewAgents { n: usize },
    #[error("reward V = {v} must be a positive finite number")]
    Reward { v: f64 },
    #[error("top evaluation M = {m} must satisfy 1 <= M <= V (V = {v})")]
    GradeScale { m: i64, v: f64 },
    #[error("alpha = {alpha} must be positive")]
    Alpha { alpha: f64 },
    #[error("epsilon = {epsilon} must lie strictly between 0 and 1")]
    Epsilon { epsilon: f64 },
    #[error("agent label {label:?} appears at both {first} and {second}")]
    DuplicateLabel { label: String, first: usize, second: usize },
    #[error("{found} agent labels given for n = {expected}")]
    LabelCount { expected: usize, found: usize },
    #[error("{what} has {found} rows/columns, expected {expected}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("{what} row {row} has {found} entries, expected {expected}")]
    RowLength { what: &'static str, row: usize, expected: usize, found: usize },
    #[error("prediction vectors have {found} components, expected M = {expected}")]
    GradeDimension { expected: usize, found: usize },
    #[error("{what} ({i}, {i}) must be null: agents give no opinion on themselves")]
    Diagonal { what: &'static str, i: usize },
    #[error("{what} ({i}, {j}) is missing")]
    Missing { what: &'static str, i: usize, j: usize },
    #[error("evaluation ({i}, {j}) = {value} is outside 1..={m}")]
    GradeOutOfRange { i: usize, j: usize, value: i64, m: usize },
    #[error("prediction ({i}, {j}) has {found} components, expected {expected}")]
    PredictionLength { i: usize, j: usize, expected: usize, found: usize },
    #[error("prediction ({i}, {j}) component {k} = {value} is outside [0, 1]")]
    PredictionComponent { i: usize, j: usize, k: usize, value: f64 },
    #[error("prediction ({i}, {j}) sums to {sum}, not 1")]
    PredictionSum { i: usize, j: usize, sum: f64 },
}

/// Every issue found while validating a profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid profile ({} issue(s))", self.issues.len())?;
        for issue in &self.issues {
            write!(f, "\n  - {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

/// Checks raw input against every model constraint and builds the typed
/// profile. All violations are reported, not only the first.
pub fn validate_profile(raw: &RawProfile) -> Result<OpinionProfile, ValidationError> {
    let n = raw.agents.len();
    let m_ok = raw.m >= 1;
    let m = if m_ok { raw.m as usize } else { 0 };

    let mut issues = Vec::new();
    if n < 3 {
        issues.push(Issue::TooFewAgents { n });
    }
    if !raw.v.is_finite() || raw.v <= 0.0 {
        issues.push(Issue::Reward { v: raw.v });
    }
    if !m_ok || (raw.m as f64) > raw.v {
        issues.push(Issue::GradeScale { m: raw.m, v: raw.v });
    }
    if !raw.alpha.is_finite() || raw.alpha <= 0.0 {
        issues.push(Issue::Alpha { alpha: raw.alpha });
    }
    if !(raw.epsilon > 0.0 && raw.epsilon < 1.0) {
        issues.push(Issue::Epsilon { epsilon: raw.epsilon });
    }
    check_labels(&raw.agents, n, &mut issues);

    let mut grades = vec![0u32; n * n];
    if raw.evaluations.len() != n {
        issues.push(Issue::Dimension { what: "evaluations", expected: n, found: raw.evaluations.len() });
    }
    for (i, row) in raw.evaluations.iter().enumerate() {
        if row.len() != n {
            issues.push(Issue::RowLength { what: "evaluations", row: i, expected: n, found: row.len() });
        }
        for (j, cell) in row.iter().enumerate() {
            match (i == j, cell) {
                (true, Some(_)) => issues.push(Issue::Diagonal { what: "evaluation", i }),
                (true, None) => {}
                (false, None) => issues.push(Issue::Missing { what: "evaluation", i, j }),
                (false, Some(value)) => {
                    let before = issues.len();
                    check_grade(i, j, *value, m, &mut issues);
                    if issues.len() == before && i < n && j < n {
                        grades[i * n + j] = *value as u32;
                    }
                }
            }
        }
    }

    let mut values = vec![0.0; n * n * m];
    if raw.predictions.len() != n {
        issues.push(Issue::Dimension { what: "predictions", expected: n, found: raw.predictions.len() });
    }
    for (i, row) in raw.predictions.iter().enumerate() {
        if row.len() != n {
            issues.push(Issue::RowLength { what: "predictions", row: i, expected: n, found: row.len() });
        }
        for (j, cell) in row.iter().enumerate() {
            match (i == j, cell) {
                (true, Some(_)) => issues.push(Issue::Diagonal { what: "prediction", i }),
                (true, None) => {}
                (false, None) => issues.push(Issue::Missing { what: "prediction", i, j }),
                (false, Some(vector)) => {
                    if m_ok && vector.len() != m {
                        issues.push(Issue::PredictionLength { i, j, expected: m, found: vector.len() });
                        continue;
                    }
                    check_prediction(i, j, vector, &mut issues);
                    if i < n && j < n && vector.len() == m {
                        let at = (i * n + j) * m;
                        values[at..at + m].copy_from_slice(vector);
                    }
                }
            }
        }
    }

    if !issues.is_empty() {
        return Err(ValidationError { issues });
    }
    Ok(OpinionProfile {
        params: MechanismParams { n, m, v: raw.v, alpha: raw.alpha, epsilon: raw.epsilon },
        agents: raw.agents.clone(),
        evaluations: EvaluationMatrix { n, grades },
        predictions: PredictionTensor { n, m, values },
    })
}

fn check_labels(agents: &[String], n: usize, issues: &mut Vec<Issue>) {
    if agents.len() != n {
        issues.push(Issue::LabelCount { expected: n, found: agents.len() });
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (k, label) in agents.iter().enumerate() {
        if let Some(&first) = seen.get(label.as_str()) {
            issues.push(Issue::DuplicateLabel { label: label.clone(), first, second: k });
        } else {
            seen.insert(label, k);
        }
    }
}

fn check_grade(i: usize, j: usize, value: i64, m: usize, issues: &mut Vec<Issue>) {
    if value < 1 || value > m as i64 {
        issues.push(Issue::GradeOutOfRange { i, j, value, m });
    }
}

fn check_prediction(i: usize, j: usize, vector: &[f64], issues: &mut Vec<Issue>) {
    for (k, &value) in vector.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            issues.push(Issue::PredictionComponent { i, j, k, value });
        }
    }
    let sum: f64 = vector.iter().sum();
    // Written so that a NaN sum also fails.
    let sums_to_one = (sum - 1.0).abs() <= SIMPLEX_TOLERANCE;
    if !sums_to_one {
        issues.push(Issue::PredictionSum { i, j, sum });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_raw(n: usize, m: i64) -> RawProfile {
        RawProfile {
            v: 1000.0,
            m,
            alpha: 10.0,
            epsilon: 0.01,
            agents: (0..n).map(|i| format!("p{i}")).collect(),
            evaluations: (0..n).map(|i| (0..n).map(|j| (i != j).then_some(1)).collect()).collect(),
            predictions: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (i != j).then(|| vec![1.0 / m as f64; m as usize]))
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn degenerate_single_grade_profile_is_valid() {
        let profile = validate_profile(&uniform_raw(3, 1)).unwrap();
        assert_eq!(profile.m(), 1);
        assert_eq!(profile.predictions().vector(0, 2), &[1.0]);
        assert_eq!(profile.evaluations().grade(2, 1), 1);
    }

    #[test]
    fn off_simplex_prediction_names_its_pair() {
        let mut raw = uniform_raw(4, 2);
        raw.predictions[1][3] = Some(vec![0.5, 0.6]);
        let err = validate_profile(&raw).unwrap_err();
        assert_eq!(err.issues.len(), 1);
        match &err.issues[0] {
            Issue::PredictionSum { i, j, sum } => {
                assert_eq!((*i, *j), (1, 3));
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("unexpected issue {other:?}"),
        }
        assert!(err.to_string().contains("prediction (1, 3)"));
    }

    #[test]
    fn tiny_simplex_slack_is_accepted_not_renormalized() {
        let mut raw = uniform_raw(3, 2);
        raw.predictions[0][1] = Some(vec![0.5, 0.5 + 5e-10]);
        let profile = validate_profile(&raw).unwrap();
        assert_eq!(profile.predictions().vector(0, 1), &[0.5, 0.5 + 5e-10]);
        raw.predictions[0][1] = Some(vec![0.5, 0.5 + 5e-9]);
        assert!(validate_profile(&raw).is_err());
    }

    #[test]
    fn validation_reports_every_issue() {
        let mut raw = uniform_raw(4, 2);
        raw.epsilon = 1.0;
        raw.agents[3] = "p0".into();
        raw.evaluations[0][1] = Some(3);
        raw.evaluations[2][2] = Some(1);
        raw.predictions[3][0] = Some(vec![1.0]);
        raw.predictions[1][0] = None;
        let err = validate_profile(&raw).unwrap_err();
        let has = |pred: &dyn Fn(&Issue) -> bool| err.issues.iter().any(pred);
        assert!(has(&|e| matches!(e, Issue::Epsilon { .. })));
        assert!(has(&|e| matches!(e, Issue::DuplicateLabel { first: 0, second: 3, .. })));
        assert!(has(&|e| matches!(e, Issue::GradeOutOfRange { i: 0, j: 1, value: 3, .. })));
        assert!(has(&|e| matches!(e, Issue::Diagonal { what: "evaluation", i: 2 })));
        assert!(has(&|e| matches!(e, Issue::PredictionLength { i: 3, j: 0, .. })));
        assert!(has(&|e| matches!(e, Issue::Missing { what: "prediction", i: 1, j: 0 })));
        assert_eq!(err.issues.len(), 6);
    }

    #[test]
    fn parameter_constraints() {
        assert!(MechanismParams::new(2, 2, 1000.0, 1.0, 0.1).is_err());
        assert!(MechanismParams::new(3, 0, 1000.0, 1.0, 0.1).is_err());
        assert!(MechanismParams::new(3, 5, 4.0, 1.0, 0.1).is_err());
        assert!(MechanismParams::new(3, 4, 4.0, 1.0, 0.1).is_ok());
        assert!(MechanismParams::new(3, 2, 1000.0, 0.0, 0.1).is_err());
        assert!(MechanismParams::new(3, 2, 1000.0, 1.0, 0.0).is_err());
        let err = MechanismParams::new(2, 0, -1.0, -1.0, 2.0).unwrap_err();
        assert_eq!(err.issues.len(), 5);
    }

    #[test]
    fn ragged_input_is_a_dimension_error() {
        let mut raw = uniform_raw(3, 2);
        raw.evaluations[1].pop();
        raw.predictions.pop();
        let err = validate_profile(&raw).unwrap_err();
        assert!(err.issues.iter().any(|e| matches!(e, Issue::RowLength { what: "evaluations", row: 1, .. })));
        assert!(err.issues.iter().any(|e| matches!(e, Issue::Dimension { what: "predictions", .. })));
    }

    #[test]
    #[should_panic(expected = "no self-evaluation")]
    fn diagonal_is_unaddressable() {
        let profile = validate_profile(&uniform_raw(3, 2)).unwrap();
        profile.evaluations().grade(1, 1);
    }

    #[test]
    fn typed_constructor_rejects_out_of_range_grades() {
        let params = MechanismParams::new(3, 2, 10.0, 1.0, 0.1).unwrap();
        let evals = EvaluationMatrix::from_fn(3, |i, _| if i == 0 { 3 } else { 1 });
        let preds = PredictionTensor::from_fn(3, 2, |_, _, out| out.copy_from_slice(&[0.5, 0.5]));
        let err = OpinionProfile::unlabeled(params, evals, preds).unwrap_err();
        assert_eq!(err.issues.len(), 2);
    }

    #[test]
    fn permutation_moves_opinions_with_labels() {
        let mut raw = uniform_raw(3, 2);
        raw.evaluations[0][2] = Some(2);
        raw.predictions[0][2] = Some(vec![0.25, 0.75]);
        let profile = validate_profile(&raw).unwrap();
        let moved = profile.permuted(&[2, 0, 1]);
        assert_eq!(moved.agents(), &["p2", "p0", "p1"]);
        assert_eq!(moved.evaluations().grade(1, 0), 2);
        assert_eq!(moved.predictions().vector(1, 0), &[0.25, 0.75]);
    }
}
