//! Held-out evaluation, forecasting and factor alignment.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::distributions;
use crate::error::{Error, Result};
use crate::model::{self, CountMatrix, DataKind, GlobalParams, HyperParams, LatentState, THETA_FLOOR};

/// Default ranking depth for precision/recall.
pub const DEFAULT_TOP_M: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct HoldoutSplit {
    pub train: CountMatrix,
    pub heldout: CountMatrix,
    /// Steps whose data is wholly held out.
    pub final_step_mask: Vec<bool>,
}

impl HoldoutSplit {
    /// Number of leading steps visible to training.
    pub fn visible_steps(&self) -> usize {
        self.final_step_mask.iter().take_while(|&&m| !m).count()
    }
}

/// Thin each cell binomially with probability `fraction` into the training
/// matrix; the remainder is held out. With `holdout_final` the last step is
/// held out in full.
pub fn make_holdout<R: Rng + ?Sized>(
    x: &CountMatrix,
    fraction: f64,
    holdout_final: bool,
    rng: &mut R,
) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("holdout fraction {fraction} must lie in (0, 1)")));
    }
    let steps = x.steps();
    let last = steps.checked_sub(1);
    let mut train = Vec::with_capacity(x.nnz());
    let mut held = Vec::with_capacity(x.nnz());
    for (v, t, c) in x.triplets() {
        let keep = if holdout_final && Some(t) == last {
            0
        } else {
            distributions::binomial(c, fraction, rng)
        };
        train.push((v, t, keep));
        held.push((v, t, c - keep));
    }
    let mut mask = vec![false; steps];
    if holdout_final {
        if let Some(l) = last {
            mask[l] = true;
        }
    }
    Ok(HoldoutSplit {
        train: CountMatrix::from_triplets(x.vocab(), steps, train, x.kind())?,
        heldout: CountMatrix::from_triplets(x.vocab(), steps, held, x.kind())?,
        final_step_mask: mask,
    })
}

/// Indices of the `m` largest scores, ties broken by ascending index.
fn top_m_indices(scores: impl Iterator<Item = f64>, m: usize) -> Vec<usize> {
    let mut idx: Vec<(usize, f64)> = scores.enumerate().collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    idx.into_iter().take(m).map(|(i, _)| i).collect()
}

/// Overlap of the top-`m` predicted words with the top-`m` true words.
/// Only words with nonzero true count can be among the true top set.
/// Precision divides by `m`; recall by min(m, number of nonzero words).
/// Returns `None` when the true vector is all zero.
pub fn top_m_precision_recall(pred: &[f64], truth: &[u64], m: usize) -> Result<Option<(f64, f64)>> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} scores for {} words", pred.len(), truth.len())));
    }
    if m == 0 || m > pred.len() {
        return Err(Error::domain(format!("top-M depth {m} must lie in 1..={}", pred.len())));
    }
    let nonzero = truth.iter().filter(|&&c| c > 0).count();
    if nonzero == 0 {
        return Ok(None);
    }
    let top_pred = top_m_indices(pred.iter().copied(), m);
    let mut top_true = top_m_indices(truth.iter().map(|&c| c as f64), m.min(nonzero));
    top_true.sort_unstable();
    let hits = top_pred.iter().filter(|i| top_true.binary_search(i).is_ok()).count() as f64;
    Ok(Some((hits / m as f64, hits / m.min(nonzero) as f64)))
}

/// Mean precision and recall across the visible (unmasked) steps, skipping
/// steps that carry no held-out words.
pub fn mean_precision_recall(
    rates: &Array2<f64>,
    heldout: &CountMatrix,
    mask: &[bool],
    m: usize,
) -> Result<(f64, f64)> {
    if mask.len() != heldout.steps() || rates.nrows() != heldout.vocab() {
        return Err(Error::Shape("rates, held-out data and mask disagree".into()));
    }
    let (mut p_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
    for t in 0..heldout.steps() {
        if mask[t] {
            continue;
        }
        if t >= rates.ncols() {
            return Err(Error::Shape(format!("no rates for visible step {t}")));
        }
        let pred = rates.column(t).to_vec();
        if let Some((p, r)) = top_m_precision_recall(&pred, &heldout.dense_column(t), m)? {
            p_sum += p;
            r_sum += r;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::domain("no visible step carries held-out counts"));
    }
    Ok((p_sum / n as f64, r_sum / n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForecastMode {
    /// Propagate conditional expectations layer by layer.
    Expectation,
    /// Average rates over ancestral forward simulations.
    MonteCarlo { samples: usize },
}

/// One-step conditional mean of the next hidden units given `current`.
fn propagate_mean(globals: &GlobalParams, current: &[Array1<f64>]) -> Vec<Array1<f64>> {
    let depth = globals.depth();
    let mut next: Vec<Array1<f64>> = vec![Array1::zeros(0); depth];
    for l in (0..depth).rev() {
        let mut m = globals.pi[l].dot(&current[l]);
        if l + 1 < depth {
            m = m + globals.phi[l + 1].dot(&next[l + 1]);
        }
        next[l] = m;
    }
    next
}

fn last_column(latents: &LatentState) -> Result<Vec<Array1<f64>>> {
    let steps = latents.steps();
    if steps == 0 {
        return Err(Error::domain("no hidden units to forecast from"));
    }
    Ok(latents.theta.iter().map(|m| m.column(steps - 1).to_owned()).collect())
}

/// Forecast rates for steps T+1..T+horizon as a V×horizon matrix. The
/// forecast scale is [`GlobalParams::delta_forecast`].
pub fn forecast_next<R: Rng + ?Sized>(
    hyper: &HyperParams,
    globals: &GlobalParams,
    latents: &LatentState,
    horizon: usize,
    mode: ForecastMode,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if horizon < 1 {
        return Err(Error::domain("forecast horizon must be at least 1"));
    }
    let start = last_column(latents)?;
    let delta = globals.delta_forecast();
    let vocab = globals.phi[0].nrows();
    let mut out = Array2::zeros((vocab, horizon));
    match mode {
        ForecastMode::Expectation => {
            let mut cur = start;
            for h in 0..horizon {
                cur = propagate_mean(globals, &cur);
                out.column_mut(h).assign(&(globals.phi[0].dot(&cur[0]) * delta));
            }
        }
        ForecastMode::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(Error::domain("Monte Carlo forecast needs at least one sample"));
            }
            let depth = globals.depth();
            let tau0 = hyper.tau0;
            for _ in 0..samples {
                let mut cur = start.clone();
                for h in 0..horizon {
                    let mut next: Vec<Array1<f64>> = vec![Array1::zeros(0); depth];
                    for l in (0..depth).rev() {
                        let mut shape = globals.pi[l].dot(&cur[l]);
                        if l + 1 < depth {
                            shape = shape + globals.phi[l + 1].dot(&next[l + 1]);
                        }
                        next[l] = shape.mapv(|a| distributions::gamma(tau0 * a, tau0, rng).max(THETA_FLOOR));
                    }
                    let rate = globals.phi[0].dot(&next[0]) * delta;
                    let mut col = out.column_mut(h);
                    col += &rate;
                    cur = next;
                }
            }
            out /= samples as f64;
        }
    }
    Ok(out)
}

/// Mean squared error between predicted pixel probabilities 1 - exp(-rate)
/// and binary frames, averaged over pixels and frames.
pub fn prediction_error_frames(rates: &Array2<f64>, frames: &CountMatrix) -> Result<f64> {
    if rates.dim() != (frames.vocab(), frames.steps()) {
        return Err(Error::Shape(format!(
            "rates are {:?}, frames are {}x{}",
            rates.dim(),
            frames.vocab(),
            frames.steps()
        )));
    }
    if frames.kind() != DataKind::Binary {
        return Err(Error::domain("prediction error needs binary frames"));
    }
    let probs = rates.mapv(|r| -(-r).exp_m1());
    prediction_error_probs(&probs, frames)
}

/// As [`prediction_error_frames`], with probabilities supplied directly.
pub fn prediction_error_probs(probs: &Array2<f64>, frames: &CountMatrix) -> Result<f64> {
    if probs.dim() != (frames.vocab(), frames.steps()) {
        return Err(Error::Shape("probabilities and frames disagree".into()));
    }
    let truth = frames.to_dense();
    let n = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(truth.iter())
        .map(|(&p, &b)| (p - b as f64).powi(2))
        .sum::<f64>()
        / n)
}

/// Greedy cosine matching of estimated to true columns. `perm[j]` is the
/// estimated column matched to true column `j`; ties go to the lowest
/// (true, estimated) index pair.
pub fn align_factors(estimated: &Array2<f64>, truth: &Array2<f64>) -> Result<(Vec<usize>, f64)> {
    if estimated.dim() != truth.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", estimated.dim(), truth.dim())));
    }
    let k = truth.ncols();
    if k == 0 {
        return Err(Error::domain("no columns to align"));
    }
    let norm = |c: ndarray::ArrayView1<'_, f64>| c.dot(&c).sqrt();
    let mut sims = Vec::with_capacity(k * k);
    for j in 0..k {
        let tj = truth.column(j);
        let nj = norm(tj);
        for i in 0..k {
            let ei = estimated.column(i);
            let d = nj * norm(ei);
            let s = if d > 0.0 { tj.dot(&ei) / d } else { 0.0 };
            sims.push((s, j, i));
        }
    }
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; k];
    let mut used = vec![false; k];
    let mut total = 0.0;
    for (s, j, i) in sims {
        if perm[j] == usize::MAX && !used[i] {
            perm[j] = i;
            used[i] = true;
            total += s;
        }
    }
    Ok((perm, total / k as f64))
}

/// Running average of reconstruction rates over collected samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RateAccumulator {
    pub sum: Array2<f64>,
    pub samples: u64,
}

impl RateAccumulator {
    pub fn new(vocab: usize, steps: usize) -> Self {
        Self {
            sum: Array2::zeros((vocab, steps)),
            samples: 0,
        }
    }

    pub fn add(&mut self, globals: &GlobalParams, latents: &LatentState) {
        self.sum += &model::expected_rates(globals, latents);
        self.samples += 1;
    }

    pub fn mean(&self) -> Option<Array2<f64>> {
        (self.samples > 0).then(|| &self.sum / self.samples as f64)
    }
}

/// Constant per-word rate fitted to the training counts, rescaled to the
/// held-out share: the stationary baseline for held-out likelihood.
pub fn mean_rate_baseline(train: &CountMatrix, scale: f64) -> Array2<f64> {
    let steps = train.steps().max(1) as f64;
    let mut per_word = vec![0.0; train.vocab()];
    for (v, _, c) in train.triplets() {
        per_word[v] += c as f64;
    }
    Array2::from_shape_fn((train.vocab(), train.steps()), |(v, _)| {
        (per_word[v] / steps * scale).max(f64::MIN_POSITIVE)
    })
}
