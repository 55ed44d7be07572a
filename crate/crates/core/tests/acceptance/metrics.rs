use dpgds::eval::{
    forecast_next, mean_precision_recall, prediction_error_frames, prediction_error_probs, top_m_precision_recall,
    ForecastMode,
};
use dpgds::model::{CountMatrix, DataKind, GlobalParams, HyperParams, LatentState};
use dpgds::RngStream;
use ndarray::{array, Array2};
use rand::Rng;

use crate::support::Outcome;

/// Precision of the hand-enumerated six-word case and its neighbours.
fn hand_cases(failures: &mut Vec<String>) {
    let pr = |pred: &[f64], truth: &[u64], m| top_m_precision_recall(pred, truth, m).unwrap().unwrap();
    let (p, r) = pr(&[9.0, 8.0, 7.0, 1.0, 1.0, 1.0], &[5, 0, 4, 3, 0, 0], 3);
    if p != 2.0 / 3.0 || r != 2.0 / 3.0 {
        failures.push(format!("V=6 M=3 case gave ({p}, {r})"));
    }
    let (p, _) = pr(&[3.0, 2.0, 1.0, 0.0], &[7, 5, 2, 0], 2);
    if p != 1.0 {
        failures.push(format!("matching ranking gave precision {p}"));
    }
    let (p, _) = pr(&[0.0, 0.0, 2.0, 3.0], &[7, 5, 0, 0], 2);
    if p != 0.0 {
        failures.push(format!("disjoint sets gave precision {p}"));
    }
    // three nonzero words with M = 4: recall divides by 3
    let (p, r) = pr(&[4.0, 3.0, 2.0, 1.0, 0.0], &[0, 2, 2, 2, 0], 4);
    if p != 3.0 / 4.0 || r != 1.0 {
        failures.push(format!("sparse truth gave ({p}, {r})"));
    }
}

/// Direct recomputation: sort (score desc, index asc), intersect, divide.
fn oracle_precision(pred: &[f64], truth: &[u64], m: usize) -> Option<f64> {
    let nonzero = truth.iter().filter(|&&c| c > 0).count();
    if nonzero == 0 {
        return None;
    }
    let order = |scores: Vec<f64>| {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        idx
    };
    let top_pred: Vec<usize> = order(pred.to_vec()).into_iter().take(m).collect();
    let top_true: Vec<usize> = order(truth.iter().map(|&c| c as f64).collect())
        .into_iter()
        .take(m.min(nonzero))
        .collect();
    Some(top_pred.iter().filter(|i| top_true.contains(i)).count() as f64 / m as f64)
}

fn randomized_mp(failures: &mut Vec<String>) {
    let mut rng = RngStream::new(7, 3);
    for case in 0..50 {
        let (v, t, m) = (8, 5, 3);
        let dense = Array2::from_shape_fn((v, t), |_| if rng.random::<f64>() < 0.4 { rng.random_range(1..6u64) } else { 0 });
        let held = CountMatrix::from_dense(&dense, DataKind::Count).unwrap();
        let rates = Array2::from_shape_fn((v, t), |_| f64::from(rng.random_range(0..4u8)));
        let mask = vec![false; t];
        let Ok((mp, _)) = mean_precision_recall(&rates, &held, &mask, m) else {
            continue;
        };
        let per: Vec<f64> = (0..t)
            .filter_map(|s| oracle_precision(&rates.column(s).to_vec(), &held.dense_column(s), m))
            .collect();
        let want = per.iter().sum::<f64>() / per.len() as f64;
        if mp != want {
            failures.push(format!("randomized case {case}: MP {mp} vs direct {want}"));
        }
    }
}

fn forecast_pp(failures: &mut Vec<String>) {
    // identity transitions: the forecast reproduces the last rate exactly
    let hyper = HyperParams::new(4, vec![2]);
    let globals = GlobalParams {
        phi: vec![array![[0.7, 0.0], [0.3, 0.0], [0.0, 0.6], [0.0, 0.4]]],
        pi: vec![Array2::eye(2)],
        nu: vec![array![1.0, 1.0]],
        xi: vec![1.0],
        beta: vec![1.0],
        delta: vec![2.0],
    };
    let latents = LatentState {
        theta: vec![array![[1.0, 5.0], [4.0, 0.5]]],
        zeta: vec![vec![2.0, 2.0, 0.0], vec![0.0; 3]],
    };
    let fc = forecast_next(&hyper, &globals, &latents, 1, ForecastMode::Expectation, &mut RngStream::new(0, 0))
        .unwrap();
    let truth = [7u64, 3, 0, 0];
    let (pp, _) = top_m_precision_recall(&fc.column(0).to_vec(), &truth, 2).unwrap().unwrap();
    if pp != 1.0 {
        failures.push(format!("perfect-information PP {pp}"));
    }
}

fn frame_errors(failures: &mut Vec<String>) {
    let frames = CountMatrix::from_dense(&array![[1u64], [0]], DataKind::Binary).unwrap();
    let e = prediction_error_probs(&array![[0.8], [0.2]], &frames).unwrap();
    if (e - 0.04).abs() > 1e-15 {
        failures.push(format!("hand frame error {e}"));
    }
    let balanced = CountMatrix::from_dense(&array![[1u64, 0], [0, 1]], DataKind::Binary).unwrap();
    let e = prediction_error_probs(&Array2::from_elem((2, 2), 0.5), &balanced).unwrap();
    if e != 0.25 {
        failures.push(format!("constant one-half error {e}"));
    }
    let perfect = prediction_error_probs(&array![[1.0, 0.0], [0.0, 1.0]], &balanced).unwrap();
    let zero_rate = prediction_error_frames(&array![[f64::INFINITY, 0.0], [0.0, f64::INFINITY]], &balanced).unwrap();
    if perfect != 0.0 || zero_rate != 0.0 {
        failures.push(format!("perfect predictions scored {perfect} and {zero_rate}"));
    }
}

pub fn run() -> Outcome {
    let mut failures = Vec::new();
    hand_cases(&mut failures);
    randomized_mp(&mut failures);
    forecast_pp(&mut failures);
    frame_errors(&mut failures);
    if failures.is_empty() {
        Outcome::new(true, "V=6/M=3 precision 2/3; 50 randomized MP cases match; PP and frame-error oracles exact")
    } else {
        Outcome::new(false, failures.join("; "))
    }
}
