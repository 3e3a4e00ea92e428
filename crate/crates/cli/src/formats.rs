//! File formats: profile JSON, share and score reports, experiment CSV.
//!
//! CSV numeric cells carry 6 decimals; JSON carries full double precision
//! and is the authoritative form of every report.

use std::fmt::Write as _;

use peershare::equilibrium::DeviationTable;
use peershare::simulation::{ExperimentKind, ExperimentReport};
use peershare::{OpinionProfile, RawProfile, ScoreMatrix, ShareReport};
use serde::Serialize;

pub fn profile_json(profile: &OpinionProfile) -> String {
    raw_profile_json(&profile.to_raw())
}

pub fn raw_profile_json(raw: &RawProfile) -> String {
    let mut text = serde_json::to_string_pretty(raw).expect("profiles always serialize");
    text.push('\n');
    text
}

pub fn parse_profile(text: &str) -> Result<RawProfile, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn share_json(report: &ShareReport) -> String {
    json(report)
}

/// One row per agent, then a `budget_residual` row carrying the residual in
/// the `gamma` column.
pub fn share_csv(report: &ShareReport) -> String {
    let mut out = String::from("agent,chi_bar,zeta,gamma\n");
    for (i, agent) in report.agents.iter().enumerate() {
        writeln!(out, "{},{:.6},{:.6},{:.6}", agent, report.chi_bar[i], report.zeta[i], report.gamma[i]).unwrap();
    }
    writeln!(out, "budget_residual,,,{:.6}", report.budget_residual).unwrap();
    out
}

#[derive(Serialize)]
struct ScoreDocument<'a> {
    agents: &'a [String],
    /// `scores[i][j] = R(i, j)`, `null` on the diagonal.
    scores: Vec<Vec<Option<f64>>>,
}

pub fn score_json(agents: &[String], scores: &ScoreMatrix) -> String {
    let n = scores.n();
    json(&ScoreDocument {
        agents,
        scores: (0..n).map(|i| (0..n).map(|j| scores.get(i, j)).collect()).collect(),
    })
}

/// Square table with evaluators as rows and targets as columns; the diagonal cell is empty.
pub fn score_csv(agents: &[String], scores: &ScoreMatrix) -> String {
    let mut out = String::from("agent");
    for agent in agents {
        write!(out, ",{agent}").unwrap();
    }
    out.push('\n');
    for (i, agent) in agents.iter().enumerate() {
        out.push_str(agent);
        for j in 0..agents.len() {
            match scores.get(i, j) {
                Some(r) => write!(out, ",{r:.6}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn experiment_json(report: &ExperimentReport) -> String {
    json(report)
}

/// Fixed headers per sweep:
/// `M,mean_share,std_share,trials,seed`, `alpha,unfair_count,negative_count,trials,seed`,
/// `n,mean_sum,std_sum,trials,seed`.
pub fn experiment_csv(report: &ExperimentReport) -> String {
    let seed = report.config.seed;
    let mut out = String::new();
    match report.config.kind {
        ExperimentKind::MSweep => {
            out.push_str("M,mean_share,std_share,trials,seed\n");
            for p in &report.points {
                writeln!(
                    out,
                    "{},{:.6},{:.6},{},{}",
                    p.value.unwrap_or(f64::NAN),
                    p.mean_share.unwrap_or(f64::NAN),
                    p.std_share.unwrap_or(f64::NAN),
                    p.trials,
                    seed
                )
                .unwrap();
            }
        }
        ExperimentKind::AlphaSweep => {
            out.push_str("alpha,unfair_count,negative_count,trials,seed\n");
            for p in &report.points {
                writeln!(
                    out,
                    "{:.6},{},{},{},{}",
                    p.value.unwrap_or(f64::NAN),
                    p.unfair_count.unwrap_or(0),
                    p.negative_count.unwrap_or(0),
                    p.trials,
                    seed
                )
                .unwrap();
            }
        }
        ExperimentKind::NSweep => {
            out.push_str("n,mean_sum,std_sum,trials,seed\n");
            for p in &report.points {
                writeln!(
                    out,
                    "{},{:.6},{:.6},{},{}",
                    p.value.unwrap_or(f64::NAN),
                    p.mean_sum.unwrap_or(f64::NAN),
                    p.std_sum.unwrap_or(f64::NAN),
                    p.trials,
                    seed
                )
                .unwrap();
            }
        }
        ExperimentKind::Single => {
            out.push_str("mean_share,std_share,unfair_count,negative_count,mean_sum,std_sum,trials,seed\n");
            for p in &report.points {
                writeln!(
                    out,
                    "{:.6},{:.6},{},{},{:.6},{:.6},{},{}",
                    p.mean_share.unwrap_or(f64::NAN),
                    p.std_share.unwrap_or(f64::NAN),
                    p.unfair_count.unwrap_or(0),
                    p.negative_count.unwrap_or(0),
                    p.mean_sum.unwrap_or(f64::NAN),
                    p.std_sum.unwrap_or(f64::NAN),
                    p.trials,
                    seed
                )
                .unwrap();
            }
        }
    }
    out
}

/// `grade,prediction,prediction_label,truthful,mean,stderr,samples`, with the
/// prediction vector written as `;`-separated probabilities.
pub fn deviation_csv(table: &DeviationTable) -> String {
    let mut out = String::from("grade,prediction,prediction_label,truthful,mean,stderr,samples\n");
    for e in &table.entries {
        let prediction: Vec<String> = e.report.prediction.iter().map(|p| format!("{p:.6}")).collect();
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{}",
            e.report.grade,
            prediction.join(";"),
            e.prediction_label,
            e.truthful,
            e.estimate.mean,
            e.estimate.stderr,
            e.samples
        )
        .unwrap();
    }
    out
}

fn json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports always serialize");
    text.push('\n');
    text
}
