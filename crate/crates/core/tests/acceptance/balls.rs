use dpgds::data::{generate_bouncing_balls, BallConfig};
use dpgds::eval::{forecast_next, prediction_error_probs, ForecastMode};
use dpgds::gibbs::GibbsChain;
use dpgds::model::ObservationLink;
use dpgds::{HyperParams, RngStream};
use ndarray::Array2;

use crate::support::{median, Outcome};

const SIZE: usize = 15;
const BALLS: usize = 3;
const LENGTHS: [usize; 3] = [10, 50, 100];
const SEEDS: u64 = 5;
/// Independent videos averaged inside each seed.
const VIDEOS: u64 = 4;
const BURN_IN: usize = 1000;
const COLLECT: usize = 500;
const SHALLOW: [usize; 1] = [30];
const DEEP: [usize; 2] = [30, 15];

fn hyper(layers: &[usize]) -> HyperParams {
    let mut h = HyperParams::new(SIZE * SIZE, layers.to_vec());
    h.link = ObservationLink::BernoulliPoisson;
    h.gamma0 = 5.0;
    h.eps0 = 1.0;
    h
}

/// Train on the `len` frames preceding the last one and score the
/// posterior predictive pixel probabilities of the last frame.
fn one_step_error(layers: &[usize], len: usize, seed: u64, video: u64) -> f64 {
    let frames = LENGTHS[LENGTHS.len() - 1] + 1;
    let cfg = BallConfig::new(BALLS, SIZE, frames);
    let x = generate_bouncing_balls(&cfg, &mut RngStream::new(500 + seed, video)).unwrap().remove(0);
    let train = x.window(frames - 1 - len, len).unwrap();
    let target = x.window(frames - 1, 1).unwrap();
    let h = hyper(layers);
    let mut chain = GibbsChain::new(h.clone(), len, RngStream::new(600 + seed, video)).unwrap();
    for _ in 0..BURN_IN {
        chain.sweep(&train).unwrap();
    }
    let mut draws = RngStream::new(700 + seed, video);
    let mut probs = Array2::zeros((SIZE * SIZE, 1));
    for _ in 0..COLLECT {
        chain.sweep(&train).unwrap();
        let rate = forecast_next(&h, &chain.globals, &chain.latents, 1, ForecastMode::MonteCarlo { samples: 1 }, &mut draws)
            .unwrap();
        probs += &rate.mapv(|r| 1.0 - (-r).exp());
    }
    probs /= COLLECT as f64;
    prediction_error_probs(&probs, &target).unwrap()
}

fn medians(layers: &[usize]) -> Vec<f64> {
    LENGTHS
        .iter()
        .map(|&len| {
            let per_seed: Vec<f64> = (0..SEEDS)
                .map(|s| (0..VIDEOS).map(|v| one_step_error(layers, len, s, v)).sum::<f64>() / VIDEOS as f64)
                .collect();
            median(&per_seed)
        })
        .collect()
}

pub fn run() -> Outcome {
    let shallow = medians(&SHALLOW);
    let deep = medians(&DEEP);
    let monotone = |m: &[f64]| m.windows(2).all(|w| w[1] <= w[0]);
    let last = LENGTHS.len() - 1;
    let pass = monotone(&shallow) && monotone(&deep) && deep[last] <= shallow[last];
    Outcome::new(
        pass,
        format!(
            "median error over T = {LENGTHS:?}: 1-layer {shallow:.4?}, 2-layer {deep:.4?}; \
             non-increasing: {} / {}; 2-layer <= 1-layer at T = 100: {}",
            monotone(&shallow),
            monotone(&deep),
            deep[last] <= shallow[last]
        ),
    )
}
