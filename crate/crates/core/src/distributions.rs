//! Sampling kernels and special functions used by the model and samplers.
//!
//! Every sampler is a pure function of its parameters and the supplied
//! stream. Public entry points validate their parameters; the `pub(crate)`
//! variants skip validation and apply the flooring conventions the
//! inference code relies on.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Open01, Poisson, StandardNormal};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

/// Gamma shapes and Dirichlet concentrations below this are clamped.
pub const SHAPE_FLOOR: f64 = 1e-10;
/// Simplex entries are never allowed below this after a draw.
pub const SIMPLEX_FLOOR: f64 = 1e-300;

const NORMALIZATION_TOL: f64 = 1e-9;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::domain(format!("{name} must be finite and > 0, got {x}")));
    }
    Ok(())
}

fn check_open_unit(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("{name} must lie in (0,1), got {p}")));
    }
    Ok(())
}

#[inline]
fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// Marsaglia-Tsang for shape >= 1, unit rate.
fn gamma_mt<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Natural log of a Gamma(shape, 1) draw. Stays finite for tiny shapes
/// where the draw itself would underflow to zero.
pub(crate) fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let shape = shape.max(SHAPE_FLOOR);
    if shape >= 1.0 {
        gamma_mt(shape, rng).ln()
    } else {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        gamma_mt(shape + 1.0, rng).ln() + open01(rng).ln() / shape
    }
}

/// Gamma(shape, rate) with the shape floored; no validation.
pub(crate) fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let shape = shape.max(SHAPE_FLOOR);
    let g = if shape >= 1.0 {
        gamma_mt(shape, rng)
    } else {
        gamma_mt(shape + 1.0, rng) * open01(rng).powf(1.0 / shape)
    };
    g / rate
}

/// Draw from Gamma(shape, rate) (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    Ok(gamma(shape, rate, rng))
}

/// Dirichlet draw without validation. Works in log space so that tiny
/// concentrations do not collapse every component to zero.
pub(crate) fn dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = concentration
        .iter()
        .map(|&a| log_gamma_draw(a, rng))
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    normalize_with_floor(&mut out, SIMPLEX_FLOOR);
    out
}

/// Floor every entry at `floor`, then rescale to sum to one.
pub(crate) fn normalize_with_floor(xs: &mut [f64], floor: f64) {
    let mut total = 0.0;
    for x in xs.iter_mut() {
        if !(*x >= floor) {
            *x = floor;
        }
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(Error::domain("dirichlet concentration is empty"));
    }
    for &a in concentration {
        check_positive("dirichlet concentration", a)?;
    }
    Ok(dirichlet(concentration, rng))
}

/// Beta(a, b) returned as `(ln q, ln(1 - q))`, computed from two log-gamma
/// draws so that neither log underflows.
pub(crate) fn log_beta_pair<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, f64) {
    let la = log_gamma_draw(a, rng);
    let lb = log_gamma_draw(b, rng);
    let m = la.max(lb);
    let lse = m + ((la - m).exp() + (lb - m).exp()).ln();
    (la - lse, lb - lse)
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("binomial p in (0,1)").sample(rng)
}

pub(crate) fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    Poisson::new(rate).expect("finite positive rate").sample(rng) as u64
}

/// Multinomial allocation of `total` across unnormalized nonnegative
/// `weights`, accumulated into `out`. Returns `false` when the weights sum
/// to zero (or are not finite) and `total > 0`.
pub(crate) fn multinomial_weights_into<R: Rng + ?Sized>(
    total: u64,
    weights: &[f64],
    out: &mut [u64],
    rng: &mut R,
) -> bool {
    if total == 0 {
        return true;
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return false;
    }
    if weights.len() == 1 {
        out[0] += total;
        return true;
    }
    if (total as usize) < weights.len() {
        // Few draws: categorical inversion per unit.
        for _ in 0..total {
            let u = rng.random::<f64>() * sum;
            let mut acc = 0.0;
            let mut chosen = weights.len() - 1;
            for (k, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            // Guard against a trailing zero weight absorbing the round-off.
            while weights[chosen] <= 0.0 && chosen > 0 {
                chosen -= 1;
            }
            out[chosen] += 1;
        }
        return true;
    }
    // Sequential conditional binomials.
    let mut remaining = total;
    let mut rest = sum;
    let last = weights.len() - 1;
    for (k, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == last {
            out[k] += remaining;
            break;
        }
        let p = if rest > 0.0 { (w / rest).clamp(0.0, 1.0) } else { 0.0 };
        let draw = binomial(remaining, p, rng);
        out[k] += draw;
        remaining -= draw;
        rest -= w;
    }
    true
}

pub fn sample_multinomial<R: Rng + ?Sized>(total: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    if probs.is_empty() {
        return Err(Error::domain("multinomial probabilities are empty"));
    }
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::domain("multinomial probabilities must be finite and nonnegative"));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::domain(format!("multinomial probabilities sum to {s}, not 1")));
    }
    let mut out = vec![0; probs.len()];
    multinomial_weights_into(total, probs, &mut out, rng);
    Ok(out)
}

/// Customers below this are seated one at a time.
const CRT_DIRECT_LIMIT: u64 = 64;
/// Expected remaining tables above which the tail is drawn from a
/// moment-matched normal instead of exactly.
const CRT_EXACT_BUDGET: f64 = 1e4;

/// ψ(x + d) - ψ(x) without cancellation when d is small next to x.
fn digamma_gap(x: f64, d: f64) -> f64 {
    if x < 64.0 {
        return digamma(x + d) - digamma(x);
    }
    let y = x + d;
    // ψ(z) ~ ln z - 1/(2z) - 1/(12z²) + 1/(120z⁴), differenced term by term
    let inv = |z: f64| 1.0 / z;
    (d / x).ln_1p() + d / (2.0 * x * y) + (d * (x + y)) / (12.0 * x * x * y * y)
        - (inv(x).powi(4) - inv(y).powi(4)) / 120.0
}

/// Chinese restaurant table count: sum of Bernoulli(mass / (mass + i)).
///
/// Large restaurants skip ahead geometrically with the current (largest)
/// opening probability and thin each candidate, which is exact because the
/// probabilities decrease in `i`. Tails expected to open more than
/// `CRT_EXACT_BUDGET` tables use the normal approximation.
pub(crate) fn crt<R: Rng + ?Sized>(customers: u64, mass: f64, rng: &mut R) -> u64 {
    if customers == 0 {
        return 0;
    }
    let p = |i: u64| mass / (mass + i as f64);
    let mut tables = 1;
    let direct = customers.min(CRT_DIRECT_LIMIT);
    for i in 1..direct {
        if rng.random::<f64>() < p(i) {
            tables += 1;
        }
    }
    if direct == customers {
        return tables;
    }
    let (lo, gap) = (mass + direct as f64, (customers - direct) as f64);
    let tail_mean = mass * digamma_gap(lo, gap);
    if tail_mean > CRT_EXACT_BUDGET {
        // Σp² by the midpoint rule; the summand is smooth this far out.
        let tail_sq = mass * mass * gap / ((lo - 0.5) * (lo + gap - 0.5));
        let sd = (tail_mean - tail_sq).max(0.0).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        let draw = (tail_mean + sd * z).round().clamp(0.0, (customers - direct) as f64);
        return tables + draw as u64;
    }
    let mut i = direct;
    while i < customers {
        let bound = p(i);
        // failures before the first success of Bernoulli(bound)
        let skip = (open01(rng).ln() / (-bound).ln_1p()).floor();
        if !(skip < (customers - i) as f64) {
            break;
        }
        let j = i + skip as u64;
        if rng.random::<f64>() * bound < p(j) {
            tables += 1;
        }
        i = j + 1;
    }
    tables
}

pub fn sample_crt<R: Rng + ?Sized>(customers: i64, mass: f64, rng: &mut R) -> Result<u64> {
    if customers < 0 {
        return Err(Error::domain(format!("CRT customers must be >= 0, got {customers}")));
    }
    check_positive("CRT mass", mass)?;
    Ok(crt(customers as u64, mass, rng))
}

/// Logarithmic(p) by Kemp's second (LK) algorithm.
fn logarithmic<R: Rng + ?Sized>(p: f64, log_one_minus_p: f64, rng: &mut R) -> u64 {
    let v = open01(rng);
    if v >= p {
        return 1;
    }
    let u = open01(rng);
    let q = -(u * log_one_minus_p).exp_m1();
    if q <= 0.0 {
        return 1;
    }
    let x = (1.0 + v.ln() / q.ln()).floor();
    if x < 1.0 {
        1
    } else if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        x as u64
    }
}

pub(crate) fn sumlog<R: Rng + ?Sized>(tables: u64, p: f64, rng: &mut R) -> u64 {
    let lp = (-p).ln_1p();
    (0..tables).map(|_| logarithmic(p, lp, rng)).sum()
}

/// Sum of `tables` independent Logarithmic(p) variables.
pub fn sample_sumlog<R: Rng + ?Sized>(tables: i64, p: f64, rng: &mut R) -> Result<u64> {
    if tables < 0 {
        return Err(Error::domain(format!("SumLog table count must be >= 0, got {tables}")));
    }
    check_open_unit("SumLog p", p)?;
    Ok(sumlog(tables as u64, p, rng))
}

/// NB(r, p) with mass Γ(k+r)/(k! Γ(r)) p^k (1-p)^r, drawn as a gamma-mixed
/// Poisson.
pub fn sample_negative_binomial<R: Rng + ?Sized>(r: f64, p: f64, rng: &mut R) -> Result<u64> {
    check_positive("NB r", r)?;
    check_open_unit("NB p", p)?;
    let lambda = gamma(r, (1.0 - p) / p, rng);
    Ok(poisson(lambda, rng))
}

pub(crate) fn truncated_poisson_ge1<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate >= 1.0 {
        loop {
            let n = poisson(rate, rng);
            if n >= 1 {
                return n;
            }
        }
    }
    // Inversion over P(k) = rate^k / (k! (e^rate - 1)), k >= 1.
    let u = rng.random::<f64>();
    let mut k = 1u64;
    let mut pk = rate / rate.exp_m1();
    let mut acc = pk;
    while u >= acc && pk > 0.0 {
        k += 1;
        pk *= rate / k as f64;
        acc += pk;
    }
    k
}

/// Poisson(rate) conditioned on being at least one.
pub fn sample_truncated_poisson_ge1<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    check_positive("truncated Poisson rate", rate)?;
    Ok(truncated_poisson_ge1(rate, rng))
}

/// Lower real branch W₋₁ of the Lambert W function on [-1/e, 0).
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    let branch = -(-1.0f64).exp();
    if !(x >= branch - 1e-16 && x < 0.0) {
        return Err(Error::domain(format!("W_-1 is defined on [-1/e, 0), got {x}")));
    }
    if x <= branch {
        return Ok(-1.0);
    }
    // Initial guess: branch-point series near -1/e, asymptotic expansion near 0.
    let mut w = if x < -0.25 {
        let p = -(2.0 * (1.0 + std::f64::consts::E * x)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        // Stay on the lower branch.
        let next = if next > -1.0 { 0.5 * (w - 1.0) } else { next };
        if (next - w).abs() <= 4.0 * f64::EPSILON * w.abs() {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// The Bernoulli-Poisson link probability 1 - exp(-zeta).
pub fn bernoulli_poisson_g(zeta: f64) -> f64 {
    -(-zeta).exp_m1()
}
