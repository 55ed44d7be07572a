use dpgds::distributions::sample_dirichlet;
use dpgds::eval::RateAccumulator;
use dpgds::model::NuShapeRule;
use dpgds::sgmcmc::{
    stochastic_force_beta, stochastic_force_nu, stochastic_force_xi, ForceTerms, SgmcmcChain, SgmcmcConfig,
    StepSchedule, PROJECTION_FLOOR,
};
use dpgds::RngStream;
use ndarray::Array2;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::recovery::{self, heldout_mp, STEPS, VOCAB};
use crate::support::Outcome;

const POINTS: usize = 100;
const FD_TOL: f64 = 1e-5;
const CHAIN_STEPS: usize = 10_000;
const SUB_T: usize = 20;
const COLLECT: usize = 5000;
/// Simplex step scale; the thermostat block runs at 0.9.
const STEP_A: f64 = 30.0;
const THERMOSTAT_SCALE: f64 = 0.03;
const MP_GAP: f64 = 0.05;

fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn ln_dirichlet_pdf(p: &[f64], alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    ln_gamma(total) + p.iter().zip(alpha).map(|(&x, &a)| (a - 1.0) * x.ln() - ln_gamma(a)).sum::<f64>()
}

struct Point {
    pi: Array2<f64>,
    nu: Vec<f64>,
    xi: f64,
    beta: f64,
    gamma0: f64,
    eps0: f64,
    rule: NuShapeRule,
    counts: Vec<u64>,
    rate: f64,
}

impl Point {
    fn random(rng: &mut RngStream, rule: NuShapeRule) -> Self {
        let k = 4;
        let mut pi = Array2::zeros((k, k));
        for j in 0..k {
            let col = sample_dirichlet(&vec![2.0; k], rng).unwrap();
            pi.column_mut(j).assign(&ndarray::Array1::from(col));
        }
        Self {
            pi,
            nu: (0..k).map(|_| rng.random_range(0.2..3.0)).collect(),
            xi: rng.random_range(0.2..3.0),
            beta: rng.random_range(0.3..3.0),
            gamma0: rng.random_range(1.0..10.0),
            eps0: rng.random_range(0.1..2.0),
            rule,
            counts: (0..k).map(|_| rng.random_range(0..10)).collect(),
            rate: rng.random_range(0.1..2.0),
        }
    }

    fn terms(&self) -> ForceTerms<'_> {
        ForceTerms {
            pi: &self.pi,
            nu: &self.nu,
            xi: self.xi,
            beta: self.beta,
            gamma0: self.gamma0,
            eps0: self.eps0,
            nu_shape: self.rule,
            boundary: Some((&self.counts, self.rate)),
        }
    }

    /// Negative log joint of Π, ν, ξ, β and the boundary counts, written
    /// out from the densities directly.
    fn potential(&self) -> f64 {
        let k = self.nu.len();
        let mut ln_p = 0.0;
        for j in 0..k {
            let alpha: Vec<f64> =
                (0..k).map(|i| if i == j { self.xi * self.nu[j] } else { self.nu[i] * self.nu[j] }).collect();
            ln_p += ln_dirichlet_pdf(&self.pi.column(j).to_vec(), &alpha);
        }
        let shape = match self.rule {
            NuShapeRule::GammaOverWidth => self.gamma0 / k as f64,
            NuShapeRule::GammaOverBeta => self.gamma0 / self.beta,
        };
        for (i, &v) in self.nu.iter().enumerate() {
            ln_p += ln_gamma_pdf(v, shape, self.beta);
            ln_p += self.counts[i] as f64 * v.ln() - self.rate * v;
        }
        ln_p += ln_gamma_pdf(self.xi, self.eps0, self.eps0);
        ln_p += ln_gamma_pdf(self.beta, self.eps0, self.eps0);
        -ln_p
    }
}

/// Central difference of -U along one coordinate, step relative to its value.
fn fd_force(point: &Point, get: impl Fn(&mut Point) -> &mut f64) -> f64 {
    let mut p = Point { pi: point.pi.clone(), nu: point.nu.clone(), counts: point.counts.clone(), ..*point };
    let x = *get(&mut p);
    let h = 1e-6 * x;
    *get(&mut p) = x + h;
    let up = p.potential();
    *get(&mut p) = x - h;
    let down = p.potential();
    -(up - down) / (2.0 * h)
}

fn force_check() -> (usize, f64) {
    let mut rng = RngStream::new(66, 0);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..POINTS {
        let rule = if i % 2 == 0 { NuShapeRule::GammaOverWidth } else { NuShapeRule::GammaOverBeta };
        let point = Point::random(&mut rng, rule);
        let terms = point.terms();
        let mut pairs = vec![
            (stochastic_force_xi(&terms), fd_force(&point, |p| &mut p.xi)),
            (stochastic_force_beta(&terms), fd_force(&point, |p| &mut p.beta)),
        ];
        for k in 0..point.nu.len() {
            pairs.push((stochastic_force_nu(&terms, k), fd_force(&point, |p| &mut p.nu[k])));
        }
        for (analytic, numeric) in pairs {
            worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
            checked += 1;
        }
    }
    (checked, worst)
}

fn chain_run() -> Result<(f64, bool), String> {
    let syn = recovery::synthetic();
    let train = &syn.split.train;
    let mut config = SgmcmcConfig::new(SUB_T);
    config.schedule = StepSchedule::new(STEP_A, 1000.0, 0.55).map_err(|e| e.to_string())?;
    config.thermostat_scale = THERMOSTAT_SCALE;
    let mut chain =
        SgmcmcChain::new(syn.hyper.clone(), config, STEPS, RngStream::new(67, 0)).map_err(|e| e.to_string())?;
    let mut rates = RateAccumulator::new(VOCAB, STEPS);
    let mut invariants = true;
    for n in 0..CHAIN_STEPS {
        chain.step(train).map_err(|e| format!("step {n}: {e}"))?;
        let g = &chain.globals;
        invariants &= g.check_simplex(1e-9).is_ok()
            && g.phi.iter().chain(&g.pi).all(|m| m.iter().all(|&x| x >= PROJECTION_FLOOR * (1.0 - 1e-9)))
            && g.nu.iter().all(|v| v.iter().all(|&x| x > 0.0))
            && g.xi.iter().chain(&g.beta).all(|&x| x > 0.0)
            && chain.latents.theta.iter().all(|m| m.iter().all(|&x| x > 0.0));
        if n >= CHAIN_STEPS - COLLECT {
            rates.add(&chain.globals, &chain.latents);
        }
    }
    Ok((heldout_mp(&rates.mean().unwrap()), invariants))
}

pub fn run() -> Outcome {
    let (checked, worst) = force_check();
    let forces_ok = worst < FD_TOL;
    let gibbs_mp = heldout_mp(&recovery::gibbs_fit().rate_mean);
    match chain_run() {
        Ok((sg_mp, invariants)) => Outcome::new(
            forces_ok && invariants && (sg_mp - gibbs_mp).abs() <= MP_GAP,
            format!(
                "{checked} force components, max relative FD error {worst:.2e}; invariants held over \
                 {CHAIN_STEPS} steps: {invariants}; held-out MP SGMCMC {sg_mp:.4} vs Gibbs {gibbs_mp:.4}"
            ),
        ),
        Err(e) => Outcome::new(false, format!("max relative FD error {worst:.2e}; chain failed: {e}")),
    }
}
