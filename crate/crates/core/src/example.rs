//! The six-agent worked example (agents A to F, V = 1000, M = 2,
//! alpha = 100, eps = 0.01).

use crate::profile::{validate_profile, OpinionProfile, RawProfile};

const LABELS: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

// Row = evaluator, column = target; 0 marks the diagonal.
const GRADES: [[i64; 6]; 6] = [
    [0, 2, 2, 1, 1, 1],
    [1, 0, 2, 2, 1, 2],
    [1, 2, 0, 1, 1, 2],
    [1, 2, 2, 0, 1, 2],
    [2, 2, 1, 2, 0, 2],
    [2, 2, 1, 2, 1, 0],
];

// Probability each row agent assigns to the column agent receiving grade 1.
const PREDICT_ONE: [[f64; 6]; 6] = [
    [f64::NAN, 0.0, 0.4, 0.2, 1.0, 0.2],
    [0.8, f64::NAN, 0.2, 0.2, 1.0, 0.4],
    [0.8, 0.0, f64::NAN, 0.4, 1.0, 0.4],
    [0.8, 0.2, 0.6, f64::NAN, 0.8, 0.4],
    [0.8, 0.0, 0.6, 0.4, f64::NAN, 0.4],
    [0.8, 0.8, 0.6, 0.4, 0.8, f64::NAN],
];

// Grade-2 probabilities as printed, not computed as 1 - p, so the stored
// vectors are the literal table entries.
const PREDICT_TWO: [[f64; 6]; 6] = [
    [f64::NAN, 1.0, 0.6, 0.8, 0.0, 0.8],
    [0.2, f64::NAN, 0.8, 0.8, 0.0, 0.6],
    [0.2, 1.0, f64::NAN, 0.6, 0.0, 0.6],
    [0.2, 0.8, 0.4, f64::NAN, 0.2, 0.6],
    [0.2, 1.0, 0.4, 0.6, f64::NAN, 0.6],
    [0.2, 0.2, 0.4, 0.6, 0.2, f64::NAN],
];

/// The worked example in external form.
pub fn worked_example_raw() -> RawProfile {
    RawProfile {
        v: 1000.0,
        m: 2,
        alpha: 100.0,
        epsilon: 0.01,
        agents: LABELS.iter().map(|s| s.to_string()).collect(),
        evaluations: (0..6)
            .map(|i| (0..6).map(|j| (i != j).then_some(GRADES[i][j])).collect())
            .collect(),
        predictions: (0..6)
            .map(|i| {
                (0..6)
                    .map(|j| (i != j).then(|| vec![PREDICT_ONE[i][j], PREDICT_TWO[i][j]]))
                    .collect()
            })
            .collect(),
    }
}

pub fn worked_example() -> OpinionProfile {
    validate_profile(&worked_example_raw()).expect("bundled example is valid")
}
