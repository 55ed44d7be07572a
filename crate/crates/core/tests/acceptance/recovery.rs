use std::sync::OnceLock;

use dpgds::eval::{align_factors, make_holdout, mean_precision_recall, mean_rate_baseline, HoldoutSplit, RateAccumulator};
use dpgds::gibbs::GibbsChain;
use dpgds::model::{poisson_log_likelihood_rates, sample_latents_prior, sample_observations};
use dpgds::{GlobalParams, HyperParams, RngStream};
use ndarray::{Array1, Array2};

use crate::support::Outcome;

pub const VOCAB: usize = 30;
pub const TOPICS: usize = 5;
pub const STEPS: usize = 200;
pub const TRAIN_FRACTION: f64 = 0.8;
pub const BURN_IN: usize = 2000;
pub const COLLECT: usize = 3000;
/// Ranking depth for MP on a 30-word vocabulary.
pub const TOP_M: usize = 10;
const MIN_SIMILARITY: f64 = 0.8;

pub struct Synthetic {
    pub hyper: HyperParams,
    pub truth: GlobalParams,
    pub split: HoldoutSplit,
}

pub struct Fit {
    pub phi_mean: Array2<f64>,
    pub rate_mean: Array2<f64>,
}

/// Known one-layer truth: each topic owns a disjoint block of six words,
/// transitions are strongly self-persistent.
fn truth() -> GlobalParams {
    let block = VOCAB / TOPICS;
    let phi = Array2::from_shape_fn((VOCAB, TOPICS), |(v, k)| {
        if v / block == k {
            0.9 / block as f64
        } else {
            0.1 / (VOCAB - block) as f64
        }
    });
    let pi = Array2::from_shape_fn((TOPICS, TOPICS), |(i, j)| if i == j { 0.8 } else { 0.05 });
    GlobalParams {
        phi: vec![phi],
        pi: vec![pi],
        nu: vec![Array1::from_elem(TOPICS, 20.0)],
        xi: vec![1.0],
        beta: vec![1.0],
        delta: vec![1.0; STEPS],
    }
}

/// Moderate priors: under γ₀ = 100, ε₀ = 0.1 the initial ν draws are large
/// enough that the ν-product transition prior swamps the data.
fn hyper() -> HyperParams {
    let mut h = HyperParams::new(VOCAB, vec![TOPICS]);
    h.gamma0 = 5.0;
    h.eps0 = 1.0;
    h
}

pub fn synthetic() -> &'static Synthetic {
    static CELL: OnceLock<Synthetic> = OnceLock::new();
    CELL.get_or_init(|| {
        let hyper = hyper();
        let truth = truth();
        let mut rng = RngStream::new(404, 0);
        let latents = sample_latents_prior(&hyper, &truth, STEPS, &mut rng).unwrap();
        let x = sample_observations(&hyper, &truth, &latents, &mut rng).unwrap();
        let split = make_holdout(&x, TRAIN_FRACTION, false, &mut rng).unwrap();
        Synthetic { hyper, truth, split }
    })
}

/// Held-out rates from training-scale rates.
pub fn heldout_scale() -> f64 {
    (1.0 - TRAIN_FRACTION) / TRAIN_FRACTION
}

pub fn gibbs_fit() -> &'static Fit {
    static CELL: OnceLock<Fit> = OnceLock::new();
    CELL.get_or_init(|| {
        let syn = synthetic();
        let train = &syn.split.train;
        let mut chain = GibbsChain::new(syn.hyper.clone(), STEPS, RngStream::new(405, 0)).unwrap();
        for _ in 0..BURN_IN {
            chain.sweep(train).unwrap();
        }
        let mut rates = RateAccumulator::new(VOCAB, STEPS);
        let mut phi = Array2::zeros((VOCAB, TOPICS));
        for _ in 0..COLLECT {
            chain.sweep(train).unwrap();
            rates.add(&chain.globals, &chain.latents);
            phi += &chain.globals.phi[0];
        }
        Fit {
            phi_mean: phi / COLLECT as f64,
            rate_mean: rates.mean().unwrap(),
        }
    })
}

pub fn heldout_mp(rate_mean: &Array2<f64>) -> f64 {
    let split = &synthetic().split;
    mean_precision_recall(rate_mean, &split.heldout, &split.final_step_mask, TOP_M).unwrap().0
}

pub fn run() -> Outcome {
    let syn = synthetic();
    let fit = gibbs_fit();
    let (_, similarity) = align_factors(&fit.phi_mean, &syn.truth.phi[0]).unwrap();
    let model_ll = poisson_log_likelihood_rates(&syn.split.heldout, &(&fit.rate_mean * heldout_scale())).unwrap();
    let baseline = mean_rate_baseline(&syn.split.train, heldout_scale());
    let base_ll = poisson_log_likelihood_rates(&syn.split.heldout, &baseline).unwrap();
    Outcome::new(
        similarity > MIN_SIMILARITY && model_ll > base_ll,
        format!(
            "matched cosine {similarity:.4} (need > {MIN_SIMILARITY}); held-out log-likelihood {model_ll:.1} vs \
             mean-rate baseline {base_ll:.1}; {} training counts",
            syn.split.train.total()
        ),
    )
}
