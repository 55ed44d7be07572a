//! Minibatch stochastic-gradient MCMC.
//!
//! Each step samples the local aux counts and hidden units of a random
//! contiguous window exactly (reusing the Gibbs operations), then moves the
//! simplex-constrained loading and transition columns with the
//! Fisher-preconditioned Langevin update, then moves the positive
//! (ξ, ν, β) block with a Nosé–Hoover thermostat.

use ndarray::{s, Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::digamma;

use crate::distributions::{self, SIMPLEX_FLOOR};
use crate::error::{Error, Result};
use crate::gibbs::{self, AuxCounts};
use crate::model::{CountMatrix, GlobalParams, HyperParams, LatentState, NuShapeRule, THETA_FLOOR};
use crate::rng::RngStream;

/// Entries of projected simplex columns never drop below this.
pub const PROJECTION_FLOOR: f64 = 1e-16;
/// Reflection boundary for ξ, ν and β.
pub const POSITIVE_FLOOR: f64 = 1e-10;
const PRECOND_DECAY: f64 = 0.9;

/// ε_n = a (b + n)^(-c).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 1000.0,
            c: 0.55,
        }
    }
}

impl StepSchedule {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) || !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::domain(format!("step schedule needs positive a, b, c (got {a}, {b}, {c})")));
        }
        Ok(Self { a, b, c })
    }

    pub fn step(&self, n: u64) -> f64 {
        self.a * (self.b + n as f64).powf(-self.c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgmcmcConfig {
    /// Minibatch window length.
    pub sub_t: usize,
    pub schedule: StepSchedule,
    /// Thermostat diffusion A.
    pub diffusion: f64,
    /// The (ξ, ν[, β]) block moves with step `thermostat_scale`·ε_n while
    /// the simplex columns use ε_n.
    pub thermostat_scale: f64,
    /// Move β with the thermostat block instead of holding it at 1.
    pub sample_beta: bool,
}

impl SgmcmcConfig {
    pub fn new(sub_t: usize) -> Self {
        Self {
            sub_t,
            schedule: StepSchedule::default(),
            diffusion: 1.0,
            thermostat_scale: 1.0,
            sample_beta: false,
        }
    }
}

/// Thermostat state for the positive block.
#[derive(Clone, Debug, PartialEq)]
pub struct SgnhtState {
    pub momenta: Vec<f64>,
    pub thermostat: f64,
    pub diffusion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgmcmcState {
    pub sgnht: SgnhtState,
    /// M_k^(l) for the Π columns; empty until the first update.
    pub precond_m: Vec<Vec<f64>>,
    /// P_k^(l) for the Φ columns; empty until the first update.
    pub precond_p: Vec<Vec<f64>>,
    pub batch_ratio: f64,
    /// Number of global updates applied so far.
    pub n: u64,
}

pub struct Minibatch {
    pub data: CountMatrix,
    pub start: usize,
    pub batch_ratio: f64,
}

/// A contiguous window of `sub_t` steps starting uniformly at random.
pub fn sample_minibatch<R: Rng + ?Sized>(x: &CountMatrix, sub_t: usize, rng: &mut R) -> Result<Minibatch> {
    let steps = x.steps();
    if sub_t == 0 || sub_t > steps {
        return Err(Error::domain(format!("minibatch length {sub_t} must lie in 1..={steps}")));
    }
    let start = if sub_t == steps {
        0
    } else {
        rng.random_range(0..=steps - sub_t)
    };
    Ok(Minibatch {
        data: x.window(start, sub_t)?,
        start,
        batch_ratio: steps as f64 / sub_t as f64,
    })
}

/// Clip at the floor, then rescale the excess above the floor so that the
/// column sums to one without any entry dropping below it.
fn project_simplex(col: &mut [f64]) {
    let n = col.len() as f64;
    let mut excess = 0.0;
    for x in col.iter_mut() {
        if !(*x >= PROJECTION_FLOOR) {
            *x = PROJECTION_FLOOR;
        }
        excess += *x - PROJECTION_FLOOR;
    }
    let target = 1.0 - n * PROJECTION_FLOOR;
    if excess > 0.0 {
        for x in col.iter_mut() {
            *x = PROJECTION_FLOOR + (*x - PROJECTION_FLOOR) * target / excess;
        }
    } else {
        col.iter_mut().for_each(|x| *x = 1.0 / n);
    }
}

/// One preconditioned Langevin move of a simplex column toward the
/// Dirichlet(`prior` + ratio·`counts`) conditional, with simplex-shaped
/// noise of covariance (2ε/M)(diag π - ππᵀ).
pub fn tlasgr_update<R: Rng + ?Sized>(
    col: ArrayView1<'_, f64>,
    counts: ArrayView1<'_, u64>,
    prior: &[f64],
    ratio: f64,
    precond: f64,
    eps: f64,
    rng: &mut R,
) -> Array1<f64> {
    let n = col.len();
    let total: f64 = counts.iter().map(|&c| ratio * c as f64).sum::<f64>() + prior.iter().sum::<f64>();
    let scale = eps / precond;
    let noise_sd = (2.0 * scale).sqrt();
    let root: Vec<f64> = col.iter().map(|&p| p.max(0.0).sqrt()).collect();
    let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let w: Vec<f64> = root.iter().zip(&g).map(|(r, g)| r * g).collect();
    let w_sum: f64 = w.iter().sum();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let p = col[i];
            let drift = (ratio * counts[i] as f64 + prior[i]) - total * p;
            p + scale * drift + noise_sd * (w[i] - p * w_sum)
        })
        .collect();
    project_simplex(&mut out);
    Array1::from(out)
}

/// Transition column update: the prior is the column's Dirichlet
/// concentration built from ν and ξ.
pub fn tlasgr_update_pi<R: Rng + ?Sized>(
    col: ArrayView1<'_, f64>,
    z: ArrayView1<'_, u64>,
    prior: &[f64],
    ratio: f64,
    precond: f64,
    eps: f64,
    rng: &mut R,
) -> Array1<f64> {
    tlasgr_update(col, z, prior, ratio, precond, eps, rng)
}

/// Loading column update under a symmetric prior η.
pub fn tlasgr_update_phi<R: Rng + ?Sized>(
    col: ArrayView1<'_, f64>,
    a: ArrayView1<'_, u64>,
    eta: f64,
    ratio: f64,
    precond: f64,
    eps: f64,
    rng: &mut R,
) -> Array1<f64> {
    let prior = vec![eta; col.len()];
    tlasgr_update(col, a, &prior, ratio, precond, eps, rng)
}

/// Inputs to the (ξ, ν, β) forces of one layer.
#[derive(Clone, Copy, Debug)]
pub struct ForceTerms<'a> {
    pub pi: &'a ndarray::Array2<f64>,
    pub nu: &'a [f64],
    pub xi: f64,
    pub beta: f64,
    pub gamma0: f64,
    pub eps0: f64,
    pub nu_shape: NuShapeRule,
    /// Top-layer boundary: counts propagated above the first step and the
    /// matching Poisson rate per unit ν (ζ_1^(L) τ₀).
    pub boundary: Option<(&'a [u64], f64)>,
}

impl ForceTerms<'_> {
    fn shape(&self) -> f64 {
        match self.nu_shape {
            NuShapeRule::GammaOverWidth => self.gamma0 / self.nu.len() as f64,
            NuShapeRule::GammaOverBeta => self.gamma0 / self.beta,
        }
    }

    fn ln_pi(&self, i: usize, j: usize) -> f64 {
        self.pi[(i, j)].max(SIMPLEX_FLOOR).ln()
    }

    /// Column totals of the transition prior: ν_j (ξ + Σ_{i≠j} ν_i).
    fn col_mass(&self) -> (Vec<f64>, f64) {
        let sum: f64 = self.nu.iter().sum();
        (self.nu.iter().map(|&v| v * (self.xi + sum - v)).collect(), sum)
    }
}

/// -∂U/∂ν_k where U is the negative log density of Π, ν and the top
/// boundary counts given ξ and β.
pub fn stochastic_force_nu(terms: &ForceTerms<'_>, k: usize) -> f64 {
    let nu = terms.nu;
    let xi = terms.xi;
    let width = nu.len();
    let (mass, _) = terms.col_mass();
    let mut f = 0.0;
    // column k
    f += digamma(mass[k]) * mass[k] / nu[k];
    f -= xi * digamma(xi * nu[k]);
    f += xi * terms.ln_pi(k, k);
    for i in 0..width {
        if i != k {
            f -= nu[i] * digamma(nu[i] * nu[k]);
            f += nu[i] * terms.ln_pi(i, k);
        }
    }
    // other columns, through their totals and their k-th entries
    for j in 0..width {
        if j != k {
            f += nu[j] * digamma(mass[j]);
            f -= nu[j] * digamma(nu[k] * nu[j]);
            f += nu[j] * terms.ln_pi(k, j);
        }
    }
    f += (terms.shape() - 1.0) / nu[k] - terms.beta;
    if let Some((counts, rate)) = terms.boundary {
        f += counts[k] as f64 / nu[k] - rate;
    }
    f
}

/// -∂U/∂ξ under the Gam(ε₀, ε₀) prior.
pub fn stochastic_force_xi(terms: &ForceTerms<'_>) -> f64 {
    let (mass, _) = terms.col_mass();
    let xi = terms.xi;
    let mut f = 0.0;
    for (k, &v) in terms.nu.iter().enumerate() {
        f += v * (digamma(mass[k]) - digamma(xi * v) + terms.ln_pi(k, k));
    }
    f + (terms.eps0 - 1.0) / xi - terms.eps0
}

/// -∂U/∂β under the Gam(ε₀, ε₀) prior.
pub fn stochastic_force_beta(terms: &ForceTerms<'_>) -> f64 {
    let beta = terms.beta;
    let prior = (terms.eps0 - 1.0) / beta - terms.eps0;
    let nu_sum: f64 = terms.nu.iter().sum();
    match terms.nu_shape {
        NuShapeRule::GammaOverWidth => terms.gamma0 / beta - nu_sum + prior,
        NuShapeRule::GammaOverBeta => {
            let a = terms.gamma0 / beta;
            let da = -terms.gamma0 / (beta * beta);
            let per: f64 = terms
                .nu
                .iter()
                .map(|&v| da * (beta.ln() - digamma(a) + v.ln()) + a / beta - v)
                .sum();
            per + prior
        }
    }
}

/// One discretized thermostat step. Parameters that would cross `floor`
/// are reflected back and their momenta negated.
pub fn sgnht_step<R: Rng + ?Sized>(
    params: &mut [f64],
    state: &mut SgnhtState,
    forces: &[f64],
    eps: f64,
    floor: f64,
    rng: &mut R,
) {
    let dim = params.len();
    let noise_sd = (2.0 * state.diffusion * eps).sqrt();
    for i in 0..dim {
        let p = &mut state.momenta[i];
        *p += eps * (forces[i] - state.thermostat * *p);
        if noise_sd > 0.0 {
            *p += noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    for i in 0..dim {
        let mut x = params[i] + eps * state.momenta[i];
        if x < floor {
            x = (2.0 * floor - x).max(floor);
            state.momenta[i] = -state.momenta[i];
        }
        params[i] = x;
    }
    let kinetic: f64 = state.momenta.iter().map(|p| p * p).sum::<f64>() / dim as f64;
    state.thermostat += eps * (kinetic - 1.0);
}

fn block_len(hyper: &HyperParams, sample_beta: bool) -> usize {
    hyper.layers.iter().map(|&k| k + 1 + usize::from(sample_beta)).sum()
}

fn pack(globals: &GlobalParams, sample_beta: bool) -> Vec<f64> {
    let mut out = Vec::new();
    for l in 0..globals.depth() {
        out.push(globals.xi[l]);
        out.extend(globals.nu[l].iter());
        if sample_beta {
            out.push(globals.beta[l]);
        }
    }
    out
}

fn unpack(globals: &mut GlobalParams, params: &[f64], sample_beta: bool) {
    let mut i = 0;
    for l in 0..globals.depth() {
        globals.xi[l] = params[i];
        i += 1;
        let k = globals.nu[l].len();
        globals.nu[l].assign(&ArrayView1::from(&params[i..i + k]));
        i += k;
        if sample_beta {
            globals.beta[l] = params[i];
            i += 1;
        }
    }
}

fn running(prev: &mut Vec<f64>, fresh: Vec<f64>) {
    if prev.is_empty() {
        *prev = fresh;
    } else {
        for (p, f) in prev.iter_mut().zip(fresh) {
            *p = PRECOND_DECAY * *p + (1.0 - PRECOND_DECAY) * f;
        }
    }
}

/// Local step on a window: aux counts and hidden units sampled exactly,
/// δ from its conditional with window sums scaled by `ratio` when tied.
fn local_window<R: Rng + ?Sized>(
    batch: &Minibatch,
    hyper: &HyperParams,
    globals: &mut GlobalParams,
    latents: &mut LatentState,
    rng: &mut R,
) -> Result<AuxCounts> {
    let len = batch.data.steps();
    let range = batch.start..batch.start + len;
    let mut win_globals = globals.clone();
    if !hyper.tie_delta {
        win_globals.delta = globals.delta[range.clone()].to_vec();
    }
    let mut win = LatentState {
        theta: latents.theta.iter().map(|m| m.slice(s![.., range.clone()]).to_owned()).collect(),
        zeta: Vec::new(),
    };
    let counts = gibbs::impute_latent_counts(&batch.data, &win_globals, &win, rng)?;
    win.zeta = gibbs::compute_zeta(&win_globals, hyper, len);
    let aux = gibbs::backward_upward(&counts, hyper, &win_globals, &win, rng)?;
    gibbs::forward_downward(&aux, hyper, &win_globals, &mut win, rng)?;
    for (full, part) in latents.theta.iter_mut().zip(&win.theta) {
        full.slice_mut(s![.., range.clone()]).assign(part);
    }
    if hyper.tie_delta {
        let r = batch.batch_ratio;
        let shape = hyper.eps0 + r * counts.total() as f64;
        let rate = hyper.eps0 + r * win.theta[0].sum();
        globals.delta = vec![distributions::gamma(shape, rate, rng).max(THETA_FLOOR)];
    } else {
        let fresh = gibbs::sample_delta(&counts, &win.theta[0], hyper, rng);
        globals.delta[range].copy_from_slice(&fresh);
    }
    Ok(aux)
}

/// One stochastic-gradient step: local window sweep, simplex updates for
/// every Φ and Π column, then the thermostat move of (ξ, ν[, β]).
pub fn sgmcmc_step<R: Rng + ?Sized>(
    x: &CountMatrix,
    hyper: &HyperParams,
    config: &SgmcmcConfig,
    globals: &mut GlobalParams,
    latents: &mut LatentState,
    state: &mut SgmcmcState,
    rng: &mut R,
) -> Result<AuxCounts> {
    if x.vocab() != hyper.vocab || x.steps() != latents.steps() {
        return Err(Error::Shape(format!(
            "data is {}x{}, chain expects {}x{}",
            x.vocab(),
            x.steps(),
            hyper.vocab,
            latents.steps()
        )));
    }
    let batch = sample_minibatch(x, config.sub_t, rng)?;
    let ratio = batch.batch_ratio;
    state.batch_ratio = ratio;
    let aux = local_window(&batch, hyper, globals, latents, rng)?;
    let eps = config.schedule.step(state.n);
    let depth = hyper.depth();

    if state.precond_m.len() != depth {
        state.precond_m = vec![Vec::new(); depth];
        state.precond_p = vec![Vec::new(); depth];
    }
    for l in 0..depth {
        let la = &aux.layers[l];
        let width = hyper.layers[l];

        let priors: Vec<Vec<f64>> = (0..width).map(|k| globals.pi_prior_column(l, k)).collect();
        let fresh: Vec<f64> = (0..width)
            .map(|k| ratio * la.z_trans.column(k).sum() as f64 + priors[k].iter().sum::<f64>())
            .collect();
        running(&mut state.precond_m[l], fresh);
        for k in 0..width {
            let col = tlasgr_update_pi(
                globals.pi[l].column(k),
                la.z_trans.column(k),
                &priors[k],
                ratio,
                state.precond_m[l][k],
                eps,
                rng,
            );
            globals.pi[l].column_mut(k).assign(&col);
        }

        let rows = hyper.rows_below(l);
        let eta = hyper.eta[l];
        let fresh: Vec<f64> = (0..width)
            .map(|k| ratio * la.a_rows.column(k).sum() as f64 + rows as f64 * eta)
            .collect();
        running(&mut state.precond_p[l], fresh);
        for k in 0..width {
            let col = tlasgr_update_phi(
                globals.phi[l].column(k),
                la.a_rows.column(k),
                eta,
                ratio,
                state.precond_p[l][k],
                eps,
                rng,
            );
            globals.phi[l].column_mut(k).assign(&col);
        }
    }

    let mut forces = Vec::with_capacity(block_len(hyper, config.sample_beta));
    let zeta_top = gibbs::compute_zeta(globals, hyper, batch.data.steps())[depth][0];
    let boundary: Vec<u64> = aux.top_boundary().to_vec();
    for l in 0..depth {
        let nu = globals.nu[l].to_vec();
        let terms = ForceTerms {
            pi: &globals.pi[l],
            nu: &nu,
            xi: globals.xi[l],
            beta: globals.beta[l],
            gamma0: hyper.gamma0,
            eps0: hyper.eps0,
            nu_shape: hyper.nu_shape,
            boundary: (l + 1 == depth).then_some((boundary.as_slice(), zeta_top * hyper.tau0)),
        };
        forces.push(stochastic_force_xi(&terms));
        for k in 0..nu.len() {
            forces.push(stochastic_force_nu(&terms, k));
        }
        if config.sample_beta {
            forces.push(stochastic_force_beta(&terms));
        }
    }
    // The thermostat runs on log-parameters: the raw block spans many orders
    // of magnitude, and the Jacobian term keeps the target unchanged.
    let raw = pack(globals, config.sample_beta);
    let log_forces: Vec<f64> = raw.iter().zip(&forces).map(|(&v, &f)| v * f + 1.0).collect();
    let mut params: Vec<f64> = raw.iter().map(|v| v.ln()).collect();
    sgnht_step(&mut params, &mut state.sgnht, &log_forces, eps * config.thermostat_scale, f64::NEG_INFINITY, rng);
    if let Some(i) = params.iter().position(|u| !u.is_finite() || u.exp().is_infinite()) {
        return Err(Error::Degenerate {
            layer: 1,
            t: 0,
            k: i + 1,
            what: "thermostat block left the representable range",
        });
    }
    let params: Vec<f64> = params.iter().map(|u| u.exp().max(POSITIVE_FLOOR)).collect();
    unpack(globals, &params, config.sample_beta);
    latents.zeta = gibbs::compute_zeta(globals, hyper, x.steps());
    state.n += 1;
    Ok(aux)
}

/// An SGMCMC chain that owns its state and random stream.
#[derive(Clone, Debug)]
pub struct SgmcmcChain {
    pub hyper: HyperParams,
    pub config: SgmcmcConfig,
    pub globals: GlobalParams,
    pub latents: LatentState,
    pub state: SgmcmcState,
    pub rng: RngStream,
    pub iteration: u64,
}

impl SgmcmcChain {
    pub fn new(hyper: HyperParams, config: SgmcmcConfig, steps: usize, mut rng: RngStream) -> Result<Self> {
        hyper.validate()?;
        if config.sub_t == 0 || config.sub_t > steps {
            return Err(Error::domain(format!("minibatch length {} must lie in 1..={steps}", config.sub_t)));
        }
        if !(config.diffusion >= 0.0) {
            return Err(Error::domain("thermostat diffusion must be nonnegative"));
        }
        if !(config.thermostat_scale > 0.0 && config.thermostat_scale.is_finite()) {
            return Err(Error::domain("thermostat step scale must be positive"));
        }
        let (mut globals, mut latents) = gibbs::initialize(&hyper, steps, &mut rng)?;
        if !config.sample_beta {
            // redraw ν under the pinned rate so the chain starts in range
            for (l, &width) in hyper.layers.iter().enumerate() {
                globals.beta[l] = 1.0;
                let shape = match hyper.nu_shape {
                    NuShapeRule::GammaOverWidth => hyper.gamma0 / width as f64,
                    NuShapeRule::GammaOverBeta => hyper.gamma0,
                };
                globals.nu[l].mapv_inplace(|_| distributions::gamma(shape, 1.0, &mut rng).max(THETA_FLOOR));
            }
            latents.zeta = gibbs::compute_zeta(&globals, &hyper, steps);
        }
        let dim = block_len(&hyper, config.sample_beta);
        let p_scale = config.schedule.step(0).sqrt();
        let momenta = (0..dim).map(|_| p_scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let state = SgmcmcState {
            sgnht: SgnhtState {
                momenta,
                thermostat: config.diffusion,
                diffusion: config.diffusion,
            },
            precond_m: Vec::new(),
            precond_p: Vec::new(),
            batch_ratio: steps as f64 / config.sub_t as f64,
            n: 0,
        };
        Ok(Self {
            hyper,
            config,
            globals,
            latents,
            state,
            rng,
            iteration: 0,
        })
    }

    pub fn step(&mut self, x: &CountMatrix) -> Result<AuxCounts> {
        let aux = sgmcmc_step(
            x,
            &self.hyper,
            &self.config,
            &mut self.globals,
            &mut self.latents,
            &mut self.state,
            &mut self.rng,
        )?;
        self.iteration += 1;
        Ok(aux)
    }
}
