use dpgds::data::{parse_checkpoint, render_checkpoint, Checkpoint};
use dpgds::eval::RateAccumulator;
use dpgds::gibbs::GibbsChain;
use dpgds::model::poisson_log_likelihood;
use dpgds::sgmcmc::{SgmcmcChain, SgmcmcConfig};
use dpgds::{CountMatrix, GlobalParams, LatentState, RngStream};

use crate::recovery::{self, STEPS, VOCAB};
use crate::support::Outcome;

const SWEEPS: usize = 40;
const SPLIT_AT: usize = 15;
const SUB_T: usize = 20;

/// A checkpoint-producing engine driven through the text format.
trait Engine: Sized {
    fn fresh(seed: u64) -> Self;
    fn advance(&mut self, x: &CountMatrix);
    fn snapshot(&self, rates: &RateAccumulator) -> Checkpoint;
    fn restore(c: &Checkpoint) -> Self;
    fn metric(&self, x: &CountMatrix) -> String;
    fn state(&self) -> (&GlobalParams, &LatentState);
}

impl Engine for GibbsChain {
    fn fresh(seed: u64) -> Self {
        GibbsChain::new(recovery::synthetic().hyper.clone(), STEPS, RngStream::new(seed, 0)).unwrap()
    }
    fn advance(&mut self, x: &CountMatrix) {
        self.sweep(x).unwrap();
    }
    fn snapshot(&self, rates: &RateAccumulator) -> Checkpoint {
        Checkpoint::from_gibbs(self, Some(rates.clone()))
    }
    fn restore(c: &Checkpoint) -> Self {
        c.to_gibbs().unwrap()
    }
    fn metric(&self, x: &CountMatrix) -> String {
        format!("{} {:?}", self.iteration, poisson_log_likelihood(x, &self.globals, &self.latents).unwrap())
    }
    fn state(&self) -> (&GlobalParams, &LatentState) {
        (&self.globals, &self.latents)
    }
}

impl Engine for SgmcmcChain {
    fn fresh(seed: u64) -> Self {
        let hyper = recovery::synthetic().hyper.clone();
        SgmcmcChain::new(hyper, SgmcmcConfig::new(SUB_T), STEPS, RngStream::new(seed, 0)).unwrap()
    }
    fn advance(&mut self, x: &CountMatrix) {
        self.step(x).unwrap();
    }
    fn snapshot(&self, rates: &RateAccumulator) -> Checkpoint {
        Checkpoint::from_sgmcmc(self, Some(rates.clone()))
    }
    fn restore(c: &Checkpoint) -> Self {
        c.to_sgmcmc().unwrap()
    }
    fn metric(&self, x: &CountMatrix) -> String {
        format!("{} {:?}", self.iteration, poisson_log_likelihood(x, &self.globals, &self.latents).unwrap())
    }
    fn state(&self) -> (&GlobalParams, &LatentState) {
        (&self.globals, &self.latents)
    }
}

/// Final checkpoint text and per-step metric log. With `split` the chain
/// is serialized, parsed back and continued at that step.
fn trace<E: Engine + Clone>(seed: u64, split: Option<usize>) -> (String, Vec<String>) {
    let x = &recovery::synthetic().split.train;
    let mut chain = E::fresh(seed);
    let mut rates = RateAccumulator::new(VOCAB, STEPS);
    let mut log = Vec::new();
    for n in 0..SWEEPS {
        if Some(n) == split {
            let text = render_checkpoint(&chain.snapshot(&rates));
            let back = parse_checkpoint(&text).unwrap();
            rates = back.rate_mean.clone().unwrap();
            chain = E::restore(&back);
        }
        chain.advance(x);
        let (g, l) = chain.state();
        rates.add(g, l);
        log.push(chain.metric(x));
    }
    (render_checkpoint(&chain.snapshot(&rates)), log)
}

fn engine_ok<E: Engine + Clone>() -> (bool, bool) {
    let a = trace::<E>(81, None);
    let b = trace::<E>(81, None);
    let resumed = trace::<E>(81, Some(SPLIT_AT));
    (a == b, a == resumed)
}

pub fn run() -> Outcome {
    let (gibbs_same, gibbs_resume) = engine_ok::<GibbsChain>();
    let (sg_same, sg_resume) = engine_ok::<SgmcmcChain>();
    Outcome::new(
        gibbs_same && gibbs_resume && sg_same && sg_resume,
        format!(
            "bit-identical reruns: Gibbs {gibbs_same}, SGMCMC {sg_same}; resume at step {SPLIT_AT} of {SWEEPS} \
             matches: Gibbs {gibbs_resume}, SGMCMC {sg_resume}"
        ),
    )
}
