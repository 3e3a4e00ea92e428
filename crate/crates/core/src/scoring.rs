//! Epsilon-recalibrated Bayesian Truth Serum.
//!
//! For a target agent `j`, every evaluator `q != j` contributes its grade and
//! its predicted grade distribution. The consensus statistics are the
//! smoothed grade frequencies `xbar` and the geometric mean of the smoothed
//! predictions `ybar`. An evaluator's score is
//!
//! ```text
//! R(i, j) = ln(xbar[g] / ybar[g]) + sum_k xbar[k] * ln(s[k] / xbar[k])
//! ```
//!
//! where `g` is the grade `i` gave and `s = (1 - eps) * y + eps / M` is its
//! smoothed prediction. The first term rewards grades that are more common
//! than collectively predicted; the second is minus the KL divergence from
//! `xbar` to `s`. The evaluator's own report is part of `xbar` and `ybar`.

use crate::profile::OpinionProfile;

/// Maps a frequency into `[eps/M, 1 - eps + eps/M]`.
///
/// With a single grade the only distribution is the point mass, whose
/// smoothed value is exactly 1.
#[inline]
pub fn smooth(p: f64, epsilon: f64, m: usize) -> f64 {
    if m == 1 {
        1.0
    } else {
        (1.0 - epsilon) * p + epsilon / m as f64
    }
}

/// Consensus statistics about one target agent.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusStats {
    pub target: usize,
    /// Smoothed grade frequencies.
    pub xbar: Vec<f64>,
    /// Geometric mean of the smoothed predictions.
    pub ybar: Vec<f64>,
    /// Unsmoothed grade frequencies.
    pub xbar_raw: Vec<f64>,
}

/// Streams evaluator reports about a single target into [`ConsensusStats`].
///
/// Cloning an accumulator and pushing one more report is how a candidate
/// report is scored against a fixed set of peers.
#[derive(Clone, Debug)]
pub struct ColumnAccumulator {
    m: usize,
    epsilon: f64,
    counts: Vec<u32>,
    log_sums: Vec<f64>,
    reports: usize,
}

impl ColumnAccumulator {
    pub fn new(m: usize, epsilon: f64) -> Self {
        assert!(m >= 1, "at least one grade is required");
        ColumnAccumulator { m, epsilon, counts: vec![0; m], log_sums: vec![0.0; m], reports: 0 }
    }

    /// Adds one evaluator's grade (1-based) and prediction.
    pub fn push(&mut self, grade: u32, prediction: &[f64]) {
        debug_assert_eq!(prediction.len(), self.m);
        self.counts[grade as usize - 1] += 1;
        for (sum, &p) in self.log_sums.iter_mut().zip(prediction) {
            *sum += smooth(p, self.epsilon, self.m).ln();
        }
        self.reports += 1;
    }

    pub fn reports(&self) -> usize {
        self.reports
    }

    pub fn finish(&self, target: usize) -> ConsensusStats {
        assert!(self.reports > 0, "consensus needs at least one report");
        let count = self.reports as f64;
        let xbar_raw: Vec<f64> = self.counts.iter().map(|&c| f64::from(c) / count).collect();
        let xbar = xbar_raw.iter().map(|&f| smooth(f, self.epsilon, self.m)).collect();
        let ybar = self.log_sums.iter().map(|&s| (s / count).exp()).collect();
        ConsensusStats { target, xbar, ybar, xbar_raw }
    }
}

/// The two parts of one BTS result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BtsScore {
    pub information: f64,
    pub prediction: f64,
}

impl BtsScore {
    pub fn total(&self) -> f64 {
        self.information + self.prediction
    }
}

/// Scores a single report (grade and prediction) against consensus statistics.
pub fn score_report(stats: &ConsensusStats, grade: u32, prediction: &[f64], epsilon: f64) -> BtsScore {
    let m = stats.xbar.len();
    let g = grade as usize - 1;
    let information = (stats.xbar[g] / stats.ybar[g]).ln();
    let prediction = stats
        .xbar
        .iter()
        .zip(prediction)
        .map(|(&x, &p)| x * (smooth(p, epsilon, m) / x).ln())
        .sum();
    BtsScore { information, prediction }
}

/// Consensus statistics for target `j` over all `n - 1` evaluators.
pub fn consensus_stats(profile: &OpinionProfile, j: usize) -> ConsensusStats {
    assert!(j < profile.n(), "target {j} out of range");
    let mut acc = ColumnAccumulator::new(profile.m(), profile.params().epsilon());
    for (q, grade) in profile.evaluations().received(j) {
        acc.push(grade, profile.predictions().vector(q, j));
    }
    acc.finish(j)
}

/// Both parts of `R(i, j)`.
pub fn bts_components(profile: &OpinionProfile, i: usize, j: usize) -> BtsScore {
    assert_ne!(i, j, "an agent is never scored on itself");
    let stats = consensus_stats(profile, j);
    score_report(
        &stats,
        profile.evaluations().grade(i, j),
        profile.predictions().vector(i, j),
        profile.params().epsilon(),
    )
}

/// `R(i, j)`: agent `i`'s BTS result for its report about agent `j`.
pub fn bts_score(profile: &OpinionProfile, i: usize, j: usize) -> f64 {
    bts_components(profile, i, j).total()
}

/// All pairwise results, diagonal absent.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    parts: Vec<BtsScore>,
}

impl ScoreMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `R(i, j)`; panics on the diagonal.
    #[inline]
    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.components(i, j).total()
    }

    pub fn components(&self, i: usize, j: usize) -> BtsScore {
        assert_ne!(i, j, "the score matrix has no diagonal");
        self.parts[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i != j && i < self.n && j < self.n).then(|| self.score(i, j))
    }

    /// Results earned by agent `i` over every target `j != i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).filter(move |&j| j != i).map(move |j| self.score(i, j))
    }

    /// Results of every evaluator of target `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).filter(move |&i| i != j).map(move |i| self.score(i, j))
    }
}

/// Scores every ordered pair, computing consensus once per target.
pub fn score_matrix(profile: &OpinionProfile) -> ScoreMatrix {
    let n = profile.n();
    let epsilon = profile.params().epsilon();
    let mut parts = vec![BtsScore { information: 0.0, prediction: 0.0 }; n * n];
    for j in 0..n {
        let stats = consensus_stats(profile, j);
        for (i, grade) in profile.evaluations().received(j) {
            parts[i * n + j] = score_report(&stats, grade, profile.predictions().vector(i, j), epsilon);
        }
    }
    ScoreMatrix { n, parts }
}

/// Interval `[-2 ln(M/eps), ln(M/eps)]` containing every BTS result.
pub fn score_bounds(m: usize, epsilon: f64) -> (f64, f64) {
    let log_ratio = (m as f64 / epsilon).ln();
    (-2.0 * log_ratio, log_ratio)
}

/// Closed form of `sum_{i != j} R(i, j)` for one target:
/// `(n - 1) * eps * sum_k (xbar_raw[k] - 1/M) * (ln xbar[k] - ln ybar[k])`.
///
/// The smoothing is what keeps this from vanishing; it goes to zero with eps.
pub fn residual_identity(stats: &ConsensusStats, evaluators: usize, epsilon: f64) -> f64 {
    let m = stats.xbar.len() as f64;
    let inner: f64 = stats
        .xbar_raw
        .iter()
        .zip(stats.xbar.iter().zip(&stats.ybar))
        .map(|(&raw, (&x, &y))| (raw - 1.0 / m) * (x.ln() - y.ln()))
        .sum();
    evaluators as f64 * epsilon * inner
}
