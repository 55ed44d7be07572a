//! Backward-upward / forward-downward Gibbs sampling.
//!
//! A sweep first propagates augmented latent counts backward in time and
//! upward through the layers (allocation, CRT, temporal/hierarchical split,
//! transition allocation), then updates the global parameters from those
//! counts, then resamples the hidden units forward in time and downward
//! through the layers, and finally the scaling factors δ.
//!
//! The aux counts are kept as sufficient statistics rather than full
//! tensors: the per-(factor, step) totals that feed the hidden-unit
//! conditionals and the per-column totals that feed the Dirichlet updates.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::distributions::{self, SHAPE_FLOOR};
use crate::error::{Error, Result};
use crate::model::{
    prior_shape_terms, CountMatrix, DataKind, GlobalParams, HyperParams, LatentState, NuShapeRule,
    ObservationLink, THETA_FLOOR,
};
use crate::rng::RngStream;

/// Augmented counts for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerAux {
    /// A_{·kt}: allocations received by factor k at step t. K_l×T.
    pub a_time: Array2<u64>,
    /// A_{rk·}: allocations from row r of the layer below to factor k,
    /// summed over time. K_{l-1}×K_l.
    pub a_rows: Array2<u64>,
    /// CRT table counts x_kt^(l+1). K_l×T.
    pub x_up: Array2<u64>,
    /// Part of `x_up` attributed to the previous time step.
    pub x_split_time: Array2<u64>,
    /// Part of `x_up` attributed to the layer above.
    pub x_split_layer: Array2<u64>,
    /// Z_{·kt}: transition counts leaving factor k at step t-1, indexed by
    /// the receiving step t. K_l×(T+1); column 0 and column T stay zero.
    pub z_time: Array2<u64>,
    /// Z_{k1 k ·}: transitions from k to k1, summed over time. K_l×K_l.
    pub z_trans: Array2<u64>,
}

impl LayerAux {
    fn zeros(rows_below: usize, width: usize, steps: usize) -> Self {
        Self {
            a_time: Array2::zeros((width, steps)),
            a_rows: Array2::zeros((rows_below, width)),
            x_up: Array2::zeros((width, steps)),
            x_split_time: Array2::zeros((width, steps)),
            x_split_layer: Array2::zeros((width, steps)),
            z_time: Array2::zeros((width, steps + 1)),
            z_trans: Array2::zeros((width, width)),
        }
    }

    /// Customers at (k, t): A_{·kt} + Z_{·k,t+1}.
    pub fn customers(&self, k: usize, t: usize) -> u64 {
        self.a_time[(k, t)] + self.z_time[(k, t + 1)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxCounts {
    pub layers: Vec<LayerAux>,
}

impl AuxCounts {
    /// Counts propagated above the top layer at the first step, which
    /// inform the top layer's factor weights.
    pub fn top_boundary(&self) -> ArrayView1<'_, u64> {
        self.layers.last().expect("at least one layer").x_split_layer.column(0)
    }
}

/// Auxiliary variables behind the ν/ξ update of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NuXiAux {
    /// -ln(1 - q_k); zero where the column carried no transitions.
    pub neg_log1m_q: Vec<f64>,
    /// h_{k1 k}: CRT counts of the transition totals.
    pub h: Array2<u64>,
    pub n: Vec<u64>,
    pub rho: Vec<f64>,
}

/// The ζ lattice for all layers (index 0 holds δ_t/τ₀), each of length T+1
/// with a zero final boundary, computed backward in time and upward.
pub fn compute_zeta(globals: &GlobalParams, hyper: &HyperParams, steps: usize) -> Vec<Vec<f64>> {
    let depth = hyper.depth();
    let mut zeta = Vec::with_capacity(depth + 1);
    let mut base: Vec<f64> = (0..steps).map(|t| globals.delta_at(t) / hyper.tau0).collect();
    base.push(0.0);
    zeta.push(base);
    for l in 1..=depth {
        let mut z = vec![0.0; steps + 1];
        for t in (0..steps).rev() {
            z[t] = (zeta[l - 1][t] + z[t + 1]).ln_1p();
        }
        zeta.push(z);
    }
    zeta
}

/// Stationary ζ^(1..L) for a time-invariant δ, via the W₋₁ branch:
/// ζ^(l) = -W₋₁(-exp(-1-ζ^(l-1))) - 1 - ζ^(l-1), with ζ^(0) = δ/τ₀.
pub fn stationary_zeta(delta: f64, tau0: f64, depth: usize) -> Result<Vec<f64>> {
    let mut prev = delta / tau0;
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        let z = if prev == 0.0 {
            0.0
        } else {
            let w = distributions::lambert_w_minus1(-(-1.0 - prev).exp())?;
            -w - 1.0 - prev
        };
        out.push(z);
        prev = z;
    }
    Ok(out)
}

/// Under the Bernoulli-Poisson link, draw latent counts: zero where b = 0,
/// truncated Poisson where b = 1. Count data passes through unchanged.
pub fn impute_latent_counts<R: Rng + ?Sized>(
    x: &CountMatrix,
    globals: &GlobalParams,
    latents: &LatentState,
    rng: &mut R,
) -> Result<CountMatrix> {
    if x.kind() == DataKind::Count {
        return Ok(x.clone());
    }
    let mut cells = Vec::with_capacity(x.nnz());
    for t in 0..x.steps() {
        let d = globals.delta_at(t);
        for (v, _) in x.column(t) {
            let rate: f64 = d * globals.phi[0].row(v).dot(&latents.theta[0].column(t));
            let rate = rate.max(f64::MIN_POSITIVE);
            cells.push((v, t, distributions::truncated_poisson_ge1(rate, rng)));
        }
    }
    CountMatrix::from_triplets(x.vocab(), x.steps(), cells, DataKind::Count)
}

/// Allocate each source count `source[r]` at step `t` across the factors of
/// layer `l` with probabilities ∝ φ_{rk} θ_{kt}.
pub fn sample_layer_allocation<R: Rng + ?Sized>(
    source: impl IntoIterator<Item = (usize, u64)>,
    phi: &Array2<f64>,
    theta: &Array2<f64>,
    t: usize,
    layer: usize,
    aux: &mut LayerAux,
    rng: &mut R,
) -> Result<()> {
    let width = phi.ncols();
    let mut weights = vec![0.0; width];
    let mut alloc = vec![0u64; width];
    for (r, count) in source {
        if count == 0 {
            continue;
        }
        let row = phi.row(r);
        for k in 0..width {
            weights[k] = row[k] * theta[(k, t)];
        }
        alloc.iter_mut().for_each(|a| *a = 0);
        if !distributions::multinomial_weights_into(count, &weights, &mut alloc, rng) {
            return Err(Error::Degenerate {
                layer: layer + 1,
                t: t + 1,
                k: r + 1,
                what: "zero allocation normalizer for a positive count",
            });
        }
        for k in 0..width {
            aux.a_time[(k, t)] += alloc[k];
            aux.a_rows[(r, k)] += alloc[k];
        }
    }
    Ok(())
}

/// x_kt^(l+1) ~ CRT(customers, mass).
pub fn sample_crt_counts<R: Rng + ?Sized>(
    customers: u64,
    mass: f64,
    coord: (usize, usize, usize),
    rng: &mut R,
) -> Result<u64> {
    if customers == 0 {
        return Ok(0);
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::Degenerate {
            layer: coord.0 + 1,
            t: coord.1 + 1,
            k: coord.2 + 1,
            what: "nonpositive CRT mass",
        });
    }
    Ok(distributions::crt(customers, mass, rng))
}

/// Binomial split of `x_up` into (temporal, hierarchical) parts with
/// probability p_time / (p_time + p_layer) for the temporal branch.
pub fn split_temporal_hierarchical<R: Rng + ?Sized>(
    x_up: u64,
    p_time: f64,
    p_layer: f64,
    coord: (usize, usize, usize),
    rng: &mut R,
) -> Result<(u64, u64)> {
    if x_up == 0 {
        return Ok((0, 0));
    }
    let total = p_time + p_layer;
    if !(total > 0.0) {
        return Err(Error::Degenerate {
            layer: coord.0 + 1,
            t: coord.1 + 1,
            k: coord.2 + 1,
            what: "zero temporal and hierarchical mass",
        });
    }
    let to_time = distributions::binomial(x_up, p_time / total, rng);
    Ok((to_time, x_up - to_time))
}

/// Allocate the temporal count of factor `k` at step `t` across source
/// factors at t-1 with probabilities ∝ π_{k k'} θ_{k',t-1}.
pub fn sample_transition_allocation<R: Rng + ?Sized>(
    count: u64,
    pi: &Array2<f64>,
    theta: &Array2<f64>,
    k: usize,
    t: usize,
    layer: usize,
    aux: &mut LayerAux,
    rng: &mut R,
) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    if t == 0 {
        return Err(Error::Degenerate {
            layer: layer + 1,
            t: 1,
            k: k + 1,
            what: "temporal count at the first step",
        });
    }
    let width = pi.ncols();
    let row = pi.row(k);
    let weights: Vec<f64> = (0..width).map(|k2| row[k2] * theta[(k2, t - 1)]).collect();
    let mut alloc = vec![0u64; width];
    if !distributions::multinomial_weights_into(count, &weights, &mut alloc, rng) {
        return Err(Error::Degenerate {
            layer: layer + 1,
            t: t + 1,
            k: k + 1,
            what: "zero transition normalizer for a positive count",
        });
    }
    for (k2, &c) in alloc.iter().enumerate() {
        aux.z_time[(k2, t)] += c;
        aux.z_trans[(k, k2)] += c;
    }
    Ok(())
}

/// Backward in time, upward through layers: sample every aux count given
/// the current hidden units and globals. `x` must already hold counts (see
/// [`impute_latent_counts`]).
pub fn backward_upward<R: Rng + ?Sized>(
    x: &CountMatrix,
    hyper: &HyperParams,
    globals: &GlobalParams,
    latents: &LatentState,
    rng: &mut R,
) -> Result<AuxCounts> {
    let steps = x.steps();
    let depth = hyper.depth();
    let tau0 = hyper.tau0;
    let mut layers: Vec<LayerAux> = (0..depth)
        .map(|l| LayerAux::zeros(hyper.rows_below(l), hyper.layers[l], steps))
        .collect();
    let theta = &latents.theta;
    for t in (0..steps).rev() {
        for l in 0..depth {
            let (below, rest) = layers.split_at_mut(l);
            let aux = &mut rest[0];
            if l == 0 {
                sample_layer_allocation(x.column(t), &globals.phi[0], &theta[0], t, 0, aux, rng)?;
            } else {
                let src = below[l - 1].x_split_layer.column(t);
                let src: Vec<(usize, u64)> = src.iter().copied().enumerate().collect();
                sample_layer_allocation(src, &globals.phi[l], &theta[l], t, l, aux, rng)?;
            }
            let (hier, temp) = prior_shape_terms(globals, theta, l, t);
            for k in 0..hyper.layers[l] {
                let customers = aux.customers(k, t);
                let mass = tau0 * (hier[k] + temp[k]);
                let tables = sample_crt_counts(customers, mass, (l, t, k), rng)?;
                let (to_time, to_layer) =
                    split_temporal_hierarchical(tables, temp[k], hier[k], (l, t, k), rng)?;
                aux.x_up[(k, t)] = tables;
                aux.x_split_time[(k, t)] = to_time;
                aux.x_split_layer[(k, t)] = to_layer;
                sample_transition_allocation(to_time, &globals.pi[l], &theta[l], k, t, l, aux, rng)?;
            }
        }
    }
    Ok(AuxCounts { layers })
}

/// Conditional draw of θ_t^(l) given aux counts, current parents and ζ.
pub fn sample_theta<R: Rng + ?Sized>(
    aux: &AuxCounts,
    hyper: &HyperParams,
    globals: &GlobalParams,
    latents: &LatentState,
    layer: usize,
    t: usize,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let tau0 = hyper.tau0;
    let (hier, temp) = prior_shape_terms(globals, &latents.theta, layer, t);
    let rate = tau0 * (1.0 + latents.zeta[layer][t] + latents.zeta[layer + 1][t + 1]);
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Degenerate {
            layer: layer + 1,
            t: t + 1,
            k: 1,
            what: "nonpositive hidden-unit rate",
        });
    }
    let la = &aux.layers[layer];
    Ok((0..hyper.layers[layer])
        .map(|k| {
            let shape = la.customers(k, t) as f64 + tau0 * (hier[k] + temp[k]);
            distributions::gamma(shape, rate, rng).max(THETA_FLOOR)
        })
        .collect())
}

/// Forward in time, downward through layers.
pub fn forward_downward<R: Rng + ?Sized>(
    aux: &AuxCounts,
    hyper: &HyperParams,
    globals: &GlobalParams,
    latents: &mut LatentState,
    rng: &mut R,
) -> Result<()> {
    let steps = latents.steps();
    for t in 0..steps {
        for l in (0..hyper.depth()).rev() {
            let col = sample_theta(aux, hyper, globals, latents, l, t, rng)?;
            latents.theta[l].column_mut(t).assign(&col);
        }
    }
    Ok(())
}

/// Column-wise Dirichlet posterior of Π^(l) given transition totals.
pub fn sample_pi<R: Rng + ?Sized>(globals: &GlobalParams, layer: usize, z_trans: &Array2<u64>, rng: &mut R) -> Array2<f64> {
    let width = globals.nu[layer].len();
    let mut pi = Array2::zeros((width, width));
    for k in 0..width {
        let conc: Vec<f64> = globals
            .pi_prior_column(layer, k)
            .iter()
            .enumerate()
            .map(|(k1, &a)| (a + z_trans[(k1, k)] as f64).max(SHAPE_FLOOR))
            .collect();
        let col = distributions::dirichlet(&conc, rng);
        pi.column_mut(k).assign(&ArrayView1::from(&col));
    }
    pi
}

/// Column-wise Dirichlet posterior of Φ^(l) under a symmetric η prior.
pub fn sample_phi<R: Rng + ?Sized>(a_rows: &Array2<u64>, eta: f64, rng: &mut R) -> Array2<f64> {
    let (rows, width) = a_rows.dim();
    let mut phi = Array2::zeros((rows, width));
    for k in 0..width {
        let conc: Vec<f64> = (0..rows)
            .map(|r| (eta + a_rows[(r, k)] as f64).max(SHAPE_FLOOR))
            .collect();
        let col = distributions::dirichlet(&conc, rng);
        phi.column_mut(k).assign(&ArrayView1::from(&col));
    }
    phi
}

/// Gamma-Poisson posterior of δ: per step, or pooled when tied.
pub fn sample_delta<R: Rng + ?Sized>(
    x: &CountMatrix,
    theta_bottom: &Array2<f64>,
    hyper: &HyperParams,
    rng: &mut R,
) -> Vec<f64> {
    let eps0 = hyper.eps0;
    let steps = x.steps();
    let col_mass: Vec<f64> = (0..steps).map(|t| theta_bottom.column(t).sum()).collect();
    if hyper.tie_delta {
        let shape = eps0 + x.total() as f64;
        let rate = eps0 + col_mass.iter().sum::<f64>();
        vec![distributions::gamma(shape, rate, rng).max(THETA_FLOOR)]
    } else {
        (0..steps)
            .map(|t| {
                let shape = eps0 + x.column_sum(t) as f64;
                distributions::gamma(shape, eps0 + col_mass[t], rng).max(THETA_FLOOR)
            })
            .collect()
    }
}

/// Update ν^(l), ξ^(l) and β^(l) through the beta/CRT augmentation of the
/// Dirichlet-multinomial transition likelihood. `top` carries the top
/// boundary counts and ζ_1^(L) when `layer` is the top layer.
pub fn sample_nu_xi_beta<R: Rng + ?Sized>(
    globals: &mut GlobalParams,
    hyper: &HyperParams,
    layer: usize,
    z_trans: &Array2<u64>,
    top: Option<(ArrayView1<'_, u64>, f64)>,
    rng: &mut R,
) -> NuXiAux {
    let width = globals.nu[layer].len();
    let eps0 = hyper.eps0;
    let tau0 = hyper.tau0;
    let col_totals: Vec<u64> = (0..width).map(|k| z_trans.column(k).sum()).collect();

    let nu = globals.nu[layer].clone();
    let xi = globals.xi[layer];
    let nu_sum: f64 = nu.sum();

    let neg_log1m_q: Vec<f64> = (0..width)
        .map(|k| {
            if col_totals[k] == 0 {
                0.0
            } else {
                let b = nu[k] * (xi + nu_sum - nu[k]);
                let (_, l1m) = distributions::log_beta_pair(col_totals[k] as f64, b.max(SHAPE_FLOOR), rng);
                -l1m
            }
        })
        .collect();

    let mut h = Array2::zeros((width, width));
    for k in 0..width {
        for k1 in 0..width {
            let z = z_trans[(k1, k)];
            let mass = if k1 == k { xi * nu[k] } else { nu[k1] * nu[k] };
            h[(k1, k)] = distributions::crt(z, mass.max(SHAPE_FLOOR), rng);
        }
    }

    // ξ | h, q, ν
    let h_diag: u64 = (0..width).map(|k| h[(k, k)]).sum();
    let xi_rate = eps0 + (0..width).map(|k| nu[k] * neg_log1m_q[k]).sum::<f64>();
    let xi = distributions::gamma(eps0 + h_diag as f64, xi_rate, rng).max(THETA_FLOOR);
    globals.xi[layer] = xi;

    let is_top = layer + 1 == hyper.depth();
    let mut n = vec![0u64; width];
    for k in 0..width {
        let mut s = h[(k, k)];
        for j in 0..width {
            if j != k {
                s += h[(j, k)] + h[(k, j)];
            }
        }
        if is_top {
            if let Some((boundary, _)) = &top {
                s += boundary[k];
            }
        }
        n[k] = s;
    }

    // ν_k | rest, sequentially so each ρ_k sees the latest values.
    let beta = globals.beta[layer];
    let shape0 = match hyper.nu_shape {
        NuShapeRule::GammaOverWidth => hyper.gamma0 / width as f64,
        NuShapeRule::GammaOverBeta => hyper.gamma0 / beta,
    };
    let mut rho = vec![0.0; width];
    for k in 0..width {
        let nu_cur = &globals.nu[layer];
        let others: f64 = nu_cur.sum() - nu_cur[k];
        let mut r = neg_log1m_q[k] * (xi + others);
        for j in 0..width {
            if j != k {
                r += neg_log1m_q[j] * nu_cur[j];
            }
        }
        if is_top {
            if let Some((_, zeta_top)) = &top {
                r += zeta_top * tau0;
            }
        }
        rho[k] = r;
        let draw = distributions::gamma(shape0 + n[k] as f64, beta + r, rng).max(THETA_FLOOR);
        globals.nu[layer][k] = draw;
    }

    let nu_total = globals.nu[layer].sum();
    globals.beta[layer] = distributions::gamma(eps0 + hyper.gamma0, eps0 + nu_total, rng).max(THETA_FLOOR);

    NuXiAux {
        neg_log1m_q,
        h,
        n,
        rho,
    }
}

/// Update all global parameters (except δ) from the aux counts.
pub fn update_globals<R: Rng + ?Sized>(
    aux: &AuxCounts,
    hyper: &HyperParams,
    globals: &mut GlobalParams,
    zeta: &[Vec<f64>],
    rng: &mut R,
) {
    let depth = hyper.depth();
    for l in 0..depth {
        let la = &aux.layers[l];
        let top = if l + 1 == depth {
            Some((aux.top_boundary(), zeta[depth][0]))
        } else {
            None
        };
        sample_nu_xi_beta(globals, hyper, l, &la.z_trans, top, rng);
        globals.pi[l] = sample_pi(globals, l, &la.z_trans, rng);
        globals.phi[l] = sample_phi(&la.a_rows, hyper.eta[l], rng);
    }
}

/// Initial state: globals from their priors, hidden units i.i.d. Gam(1, 1).
pub fn initialize<R: Rng + ?Sized>(
    hyper: &HyperParams,
    steps: usize,
    rng: &mut R,
) -> Result<(GlobalParams, LatentState)> {
    let globals = crate::model::sample_globals_prior(hyper, steps, rng)?;
    let theta = hyper
        .layers
        .iter()
        .map(|&k| Array2::from_shape_fn((k, steps), |_| distributions::gamma(1.0, 1.0, rng).max(THETA_FLOOR)))
        .collect();
    let zeta = compute_zeta(&globals, hyper, steps);
    Ok((globals, LatentState { theta, zeta }))
}

fn check_data(hyper: &HyperParams, x: &CountMatrix, latents: &LatentState) -> Result<()> {
    if x.vocab() != hyper.vocab || x.steps() != latents.steps() {
        return Err(Error::Shape(format!(
            "data is {}x{}, model expects {}x{}",
            x.vocab(),
            x.steps(),
            hyper.vocab,
            latents.steps()
        )));
    }
    let want = match hyper.link {
        ObservationLink::PoissonCount => DataKind::Count,
        ObservationLink::BernoulliPoisson => DataKind::Binary,
    };
    if x.kind() != want {
        return Err(Error::domain(format!("data kind {:?} does not match link {:?}", x.kind(), hyper.link)));
    }
    Ok(())
}

/// Aux counts, hidden units and δ with every other global held fixed.
/// Returns the aux counts that drove the θ update.
pub fn local_sweep<R: Rng + ?Sized>(
    x: &CountMatrix,
    hyper: &HyperParams,
    globals: &mut GlobalParams,
    latents: &mut LatentState,
    rng: &mut R,
) -> Result<AuxCounts> {
    check_data(hyper, x, latents)?;
    let counts = impute_latent_counts(x, globals, latents, rng)?;
    latents.zeta = compute_zeta(globals, hyper, x.steps());
    let aux = backward_upward(&counts, hyper, globals, latents, rng)?;
    forward_downward(&aux, hyper, globals, latents, rng)?;
    globals.delta = sample_delta(&counts, &latents.theta[0], hyper, rng);
    latents.zeta = compute_zeta(globals, hyper, x.steps());
    Ok(aux)
}

/// One full sweep. Globals are updated between the backward and forward
/// passes, while the hidden units are marginalized, so that every step is
/// an exact conditional of the joint.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    x: &CountMatrix,
    hyper: &HyperParams,
    globals: &mut GlobalParams,
    latents: &mut LatentState,
    rng: &mut R,
) -> Result<AuxCounts> {
    check_data(hyper, x, latents)?;
    let counts = impute_latent_counts(x, globals, latents, rng)?;
    latents.zeta = compute_zeta(globals, hyper, x.steps());
    let aux = backward_upward(&counts, hyper, globals, latents, rng)?;
    update_globals(&aux, hyper, globals, &latents.zeta, rng);
    forward_downward(&aux, hyper, globals, latents, rng)?;
    globals.delta = sample_delta(&counts, &latents.theta[0], hyper, rng);
    latents.zeta = compute_zeta(globals, hyper, x.steps());
    Ok(aux)
}

/// A Gibbs chain that owns its state and random stream.
#[derive(Clone, Debug)]
pub struct GibbsChain {
    pub hyper: HyperParams,
    pub globals: GlobalParams,
    pub latents: LatentState,
    pub rng: RngStream,
    pub iteration: u64,
}

impl GibbsChain {
    pub fn new(hyper: HyperParams, steps: usize, mut rng: RngStream) -> Result<Self> {
        hyper.validate()?;
        let (globals, latents) = initialize(&hyper, steps, &mut rng)?;
        Ok(Self {
            hyper,
            globals,
            latents,
            rng,
            iteration: 0,
        })
    }

    pub fn sweep(&mut self, x: &CountMatrix) -> Result<AuxCounts> {
        let aux = gibbs_sweep(x, &self.hyper, &mut self.globals, &mut self.latents, &mut self.rng)?;
        self.iteration += 1;
        Ok(aux)
    }

    pub fn local_sweep(&mut self, x: &CountMatrix) -> Result<AuxCounts> {
        let aux = local_sweep(x, &self.hyper, &mut self.globals, &mut self.latents, &mut self.rng)?;
        self.iteration += 1;
        Ok(aux)
    }
}
