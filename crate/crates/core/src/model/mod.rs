//! Model hyperparameters, parameter containers, and the ancestral
//! generative process.
//!
//! Layers are indexed from zero at the bottom: `phi[0]` maps layer-0
//! factors onto the vocabulary (it is V×K₀), `phi[l]` for `l > 0` is
//! K_{l-1}×K_l. Columns of every `phi` and `pi` lie on the simplex;
//! `pi[l][(k1, k)]` is the probability of moving from factor `k` at the
//! previous step to factor `k1`.

mod counts;

pub use counts::{CountMatrix, DataKind, MAX_STEPS, MAX_VOCAB};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use statrs::function::factorial::ln_factorial;

use crate::distributions;
use crate::error::{Error, Result};
use crate::gibbs::compute_zeta;

/// Hidden units are never allowed to reach exactly zero.
pub const THETA_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationLink {
    PoissonCount,
    BernoulliPoisson,
}

/// Which shape parameter the conditional update of ν uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuShapeRule {
    /// γ₀/K_l, consistent with the ν prior.
    GammaOverWidth,
    /// γ₀/β^(l), the literal form of the published update.
    GammaOverBeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Layer widths K_1..K_L, bottom first.
    pub layers: Vec<usize>,
    pub vocab: usize,
    pub tau0: f64,
    pub gamma0: f64,
    /// Symmetric Dirichlet concentration of each layer's loading columns.
    pub eta: Vec<f64>,
    pub eps0: f64,
    /// Share a single δ across all time steps.
    pub tie_delta: bool,
    pub link: ObservationLink,
    pub nu_shape: NuShapeRule,
}

impl HyperParams {
    /// Defaults: τ₀ = 1, γ₀ = 100, η = 0.1, ε₀ = 0.1.
    pub fn new(vocab: usize, layers: Vec<usize>) -> Self {
        let n = layers.len();
        Self {
            layers,
            vocab,
            tau0: 1.0,
            gamma0: 100.0,
            eta: vec![0.1; n],
            eps0: 0.1,
            tie_delta: false,
            link: ObservationLink::PoissonCount,
            nu_shape: NuShapeRule::GammaOverWidth,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Row count of `phi[l]`: the vocabulary at the bottom, otherwise the
    /// width of the layer below.
    pub fn rows_below(&self, l: usize) -> usize {
        if l == 0 {
            self.vocab
        } else {
            self.layers[l - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::domain("at least one layer is required"));
        }
        if self.layers.iter().any(|&k| k == 0) || self.vocab == 0 {
            return Err(Error::domain("layer widths and vocabulary size must be >= 1"));
        }
        if self.eta.len() != self.layers.len() {
            return Err(Error::domain(format!(
                "eta has {} entries for {} layers",
                self.eta.len(),
                self.layers.len()
            )));
        }
        for (name, x) in [("tau0", self.tau0), ("gamma0", self.gamma0), ("eps0", self.eps0)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::domain(format!("{name} must be > 0, got {x}")));
            }
        }
        if self.eta.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::domain("eta entries must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalParams {
    pub phi: Vec<Array2<f64>>,
    pub pi: Vec<Array2<f64>>,
    pub nu: Vec<Array1<f64>>,
    pub xi: Vec<f64>,
    pub beta: Vec<f64>,
    /// Length one when δ is tied across time, otherwise one entry per step.
    pub delta: Vec<f64>,
}

impl GlobalParams {
    pub fn depth(&self) -> usize {
        self.phi.len()
    }

    pub fn delta_at(&self, t: usize) -> f64 {
        if self.delta.len() == 1 {
            self.delta[0]
        } else {
            self.delta[t]
        }
    }

    /// The δ used beyond the observed range: the tied value, or the mean of
    /// the per-step values.
    pub fn delta_forecast(&self) -> f64 {
        self.delta.iter().sum::<f64>() / self.delta.len() as f64
    }

    /// Dirichlet prior concentration of column `k` of `pi[l]`.
    pub fn pi_prior_column(&self, l: usize, k: usize) -> Vec<f64> {
        let nu = &self.nu[l];
        (0..nu.len())
            .map(|k1| if k1 == k { self.xi[l] * nu[k] } else { nu[k1] * nu[k] })
            .collect()
    }

    /// Largest deviation of any loading or transition column sum from one;
    /// also fails on negative entries.
    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for (name, mats) in [("phi", &self.phi), ("pi", &self.pi)] {
            for (l, m) in mats.iter().enumerate() {
                for (k, col) in m.columns().into_iter().enumerate() {
                    let s: f64 = col.sum();
                    if (s - 1.0).abs() > tol || col.iter().any(|&x| !(x >= 0.0)) {
                        return Err(Error::domain(format!(
                            "{name}[{l}] column {k} is off the simplex (sum {s})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    /// Per layer, K_l×T hidden units.
    pub theta: Vec<Array2<f64>>,
    /// Per layer 0..=L, length T+1: `zeta[0][t] = δ_t/τ₀`, and the final
    /// entry of every layer is the zero boundary beyond the last step.
    pub zeta: Vec<Vec<f64>>,
}

impl LatentState {
    pub fn steps(&self) -> usize {
        self.theta[0].ncols()
    }
}

/// Draw ν, ξ, β, Π, Φ and δ from their priors. `steps` sets the length of
/// δ when it is not tied.
pub fn sample_globals_prior<R: Rng + ?Sized>(
    hyper: &HyperParams,
    steps: usize,
    rng: &mut R,
) -> Result<GlobalParams> {
    hyper.validate()?;
    let eps0 = hyper.eps0;
    let depth = hyper.depth();
    let mut g = GlobalParams {
        phi: Vec::with_capacity(depth),
        pi: Vec::with_capacity(depth),
        nu: Vec::with_capacity(depth),
        xi: Vec::with_capacity(depth),
        beta: Vec::with_capacity(depth),
        delta: Vec::new(),
    };
    for (l, &width) in hyper.layers.iter().enumerate() {
        let beta = distributions::gamma(eps0, eps0, rng);
        let nu_shape = match hyper.nu_shape {
            NuShapeRule::GammaOverWidth => hyper.gamma0 / width as f64,
            NuShapeRule::GammaOverBeta => hyper.gamma0 / beta,
        };
        let nu: Array1<f64> = (0..width)
            .map(|_| distributions::gamma(nu_shape, beta, rng).max(THETA_FLOOR))
            .collect();
        let xi = distributions::gamma(eps0, eps0, rng).max(THETA_FLOOR);
        g.beta.push(beta.max(THETA_FLOOR));
        g.nu.push(nu);
        g.xi.push(xi);

        let mut pi = Array2::zeros((width, width));
        for k in 0..width {
            let col = distributions::dirichlet(&g.pi_prior_column(l, k), rng);
            pi.column_mut(k).assign(&ArrayView1::from(&col));
        }
        g.pi.push(pi);

        let rows = hyper.rows_below(l);
        let conc = vec![hyper.eta[l]; rows];
        let mut phi = Array2::zeros((rows, width));
        for k in 0..width {
            let col = distributions::dirichlet(&conc, rng);
            phi.column_mut(k).assign(&ArrayView1::from(&col));
        }
        g.phi.push(phi);
    }
    let n_delta = if hyper.tie_delta { 1 } else { steps };
    g.delta = (0..n_delta)
        .map(|_| distributions::gamma(eps0, eps0, rng).max(THETA_FLOOR))
        .collect();
    Ok(g)
}

/// The gamma shape (before the τ₀ factor) of θ_t^(l) given its parents:
/// hierarchical term Φ^(l+1)θ_t^(l+1) (ν at the top layer's first step)
/// plus temporal term Π^(l)θ_{t-1}^(l) (absent at the first step).
pub(crate) fn prior_shape_terms(
    globals: &GlobalParams,
    theta: &[Array2<f64>],
    l: usize,
    t: usize,
) -> (Array1<f64>, Array1<f64>) {
    let depth = globals.depth();
    let width = globals.pi[l].nrows();
    let hier = if l + 1 < depth {
        globals.phi[l + 1].dot(&theta[l + 1].column(t))
    } else if t == 0 {
        globals.nu[l].clone()
    } else {
        Array1::zeros(width)
    };
    let temp = if t > 0 {
        globals.pi[l].dot(&theta[l].column(t - 1))
    } else {
        Array1::zeros(width)
    };
    (hier, temp)
}

/// Ancestral draw of every θ_t^(l), top-down within each step and forward
/// in time.
pub fn sample_latents_prior<R: Rng + ?Sized>(
    hyper: &HyperParams,
    globals: &GlobalParams,
    steps: usize,
    rng: &mut R,
) -> Result<LatentState> {
    if steps == 0 {
        return Err(Error::domain("need at least one time step"));
    }
    let depth = hyper.depth();
    let mut theta: Vec<Array2<f64>> = hyper
        .layers
        .iter()
        .map(|&k| Array2::zeros((k, steps)))
        .collect();
    for t in 0..steps {
        for l in (0..depth).rev() {
            let (hier, temp) = prior_shape_terms(globals, &theta, l, t);
            for k in 0..hyper.layers[l] {
                let shape = hyper.tau0 * (hier[k] + temp[k]);
                theta[l][(k, t)] = distributions::gamma(shape, hyper.tau0, rng).max(THETA_FLOOR);
            }
        }
    }
    let zeta = compute_zeta(globals, hyper, steps);
    Ok(LatentState { theta, zeta })
}

/// Draw the observation matrix given parameters and hidden units. Under
/// the Bernoulli-Poisson link the latent Poisson count is thresholded.
pub fn sample_observations<R: Rng + ?Sized>(
    hyper: &HyperParams,
    globals: &GlobalParams,
    latents: &LatentState,
    rng: &mut R,
) -> Result<CountMatrix> {
    let steps = latents.steps();
    let kind = match hyper.link {
        ObservationLink::PoissonCount => DataKind::Count,
        ObservationLink::BernoulliPoisson => DataKind::Binary,
    };
    let mut cells = Vec::new();
    for t in 0..steps {
        let rate = expected_rate(globals, latents, t)?;
        for (v, &r) in rate.iter().enumerate() {
            let n = distributions::poisson(r, rng);
            let x = match kind {
                DataKind::Count => n,
                DataKind::Binary => u64::from(n >= 1),
            };
            if x > 0 {
                cells.push((v, t, x));
            }
        }
    }
    CountMatrix::from_triplets(hyper.vocab, steps, cells, kind)
}

/// Ancestral simulation of globals, hidden units and observations.
pub fn generate<R: Rng + ?Sized>(
    hyper: &HyperParams,
    steps: usize,
    rng: &mut R,
) -> Result<(GlobalParams, LatentState, CountMatrix)> {
    let globals = sample_globals_prior(hyper, steps, rng)?;
    let latents = sample_latents_prior(hyper, &globals, steps, rng)?;
    let x = sample_observations(hyper, &globals, &latents, rng)?;
    Ok((globals, latents, x))
}

/// Project topic `k` of layer `layer` (both zero-based) down to the
/// vocabulary: Φ^(1)···Φ^(l-1) φ_k^(l).
pub fn project_topic(globals: &GlobalParams, layer: usize, k: usize) -> Result<Array1<f64>> {
    if layer >= globals.depth() {
        return Err(Error::Index(format!(
            "layer {layer} out of range for {} layers",
            globals.depth()
        )));
    }
    if k >= globals.phi[layer].ncols() {
        return Err(Error::Index(format!(
            "topic {k} out of range for layer {layer} of width {}",
            globals.phi[layer].ncols()
        )));
    }
    let mut v = globals.phi[layer].column(k).to_owned();
    for l in (0..layer).rev() {
        v = globals.phi[l].dot(&v);
    }
    Ok(v)
}

/// δ_t Φ^(1) θ_t^(1).
pub fn expected_rate(globals: &GlobalParams, latents: &LatentState, t: usize) -> Result<Array1<f64>> {
    if t >= latents.steps() {
        return Err(Error::Index(format!("step {t} out of range for {} steps", latents.steps())));
    }
    Ok(globals.phi[0].dot(&latents.theta[0].column(t)) * globals.delta_at(t))
}

/// Expected rates for every step as a V×T matrix.
pub fn expected_rates(globals: &GlobalParams, latents: &LatentState) -> Array2<f64> {
    let steps = latents.steps();
    let mut out = globals.phi[0].dot(&latents.theta[0]);
    for t in 0..steps {
        let d = globals.delta_at(t);
        out.column_mut(t).mapv_inplace(|x| x * d);
    }
    out
}

/// E[x_t]/δ_t given lagged hidden units `lagged[l] = θ^(l)_{t-1-l}`, one
/// per layer, propagating conditional means through the transition and
/// loading matrices (the top layer evolves by Π alone).
pub fn expected_rate_from_lagged(globals: &GlobalParams, lagged: &[Array1<f64>]) -> Result<Array1<f64>> {
    let depth = globals.depth();
    if lagged.len() != depth {
        return Err(Error::Shape(format!("expected {depth} lagged vectors, got {}", lagged.len())));
    }
    // means[j] is E[θ^(l)] at step t - depth + 1 + j for the layer being
    // processed; only the entries from the layer's own anchor onwards exist.
    let mut above: Vec<Array1<f64>> = Vec::new();
    for l in (0..depth).rev() {
        if lagged[l].len() != globals.pi[l].nrows() {
            return Err(Error::Shape(format!("lagged vector {l} has wrong length")));
        }
        // Layer l is anchored at t-1-l; propagate l+1 steps up to t.
        let steps = l + 1;
        let mut cur = lagged[l].clone();
        let mut traj = Vec::with_capacity(steps);
        for s in 0..steps {
            let mut next = globals.pi[l].dot(&cur);
            if l + 1 < depth {
                // `above` holds layer l+1 means for its last l+2 steps;
                // align so that the final entries coincide at time t.
                let offset = above.len() - steps;
                next = next + globals.phi[l + 1].dot(&above[offset + s]);
            }
            traj.push(next.clone());
            cur = next;
        }
        above = traj;
    }
    Ok(globals.phi[0].dot(&above[above.len() - 1]))
}

/// Σ_{v,t} [x ln λ - λ - ln x!] for an arbitrary V×T rate matrix. A zero
/// rate facing a positive count yields negative infinity.
pub fn poisson_log_likelihood_rates(x: &CountMatrix, rates: &Array2<f64>) -> Result<f64> {
    if rates.dim() != (x.vocab(), x.steps()) {
        return Err(Error::Shape(format!(
            "rates are {:?}, data is {}x{}",
            rates.dim(),
            x.vocab(),
            x.steps()
        )));
    }
    let mut ll = -rates.sum();
    for (v, t, c) in x.triplets() {
        let r = rates[(v, t)];
        if r <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += c as f64 * r.ln() - ln_factorial(c);
    }
    Ok(ll)
}

pub fn poisson_log_likelihood(x: &CountMatrix, globals: &GlobalParams, latents: &LatentState) -> Result<f64> {
    if x.kind() != DataKind::Count {
        return Err(Error::domain("Poisson likelihood needs count data"));
    }
    if x.steps() != latents.steps() || x.vocab() != globals.phi[0].nrows() {
        return Err(Error::Shape("data and model dimensions disagree".into()));
    }
    poisson_log_likelihood_rates(x, &expected_rates(globals, latents))
}
