use dpgds::distributions::{
    bernoulli_poisson_g, sample_crt, sample_gamma, sample_multinomial, sample_negative_binomial, sample_sumlog,
};
use dpgds::RngStream;
use rand_distr::{Distribution, Poisson};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::support::{chi_square_gof, Outcome};

const DRAWS: usize = 100_000;
const ALPHA: f64 = 1e-3;

fn poisson_pmf(k: u64, rate: f64) -> f64 {
    (k as f64 * rate.ln() - rate - ln_factorial(k)).exp()
}

fn nb_pmf(k: u64, r: f64, p: f64) -> f64 {
    (ln_gamma(k as f64 + r) - ln_gamma(r) - ln_factorial(k) + k as f64 * p.ln() + r * (1.0 - p).ln()).exp()
}

/// Unsigned Stirling numbers of the first kind, rows 0..=n.
fn stirling_first(n: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; n + 1]; n + 1];
    s[0][0] = 1.0;
    for m in 1..=n {
        for k in 1..=m {
            s[m][k] = (m - 1) as f64 * s[m - 1][k] + s[m - 1][k - 1];
        }
    }
    s
}

/// Split a Poisson total multinomially and compare with the product of
/// independent Poisson pmfs.
fn p1(rng: &mut RngStream) -> (f64, f64) {
    let rates = [0.7, 1.3, 0.4];
    let total: f64 = rates.iter().sum();
    let probs: Vec<f64> = rates.iter().map(|r| r / total).collect();
    const CAP: u64 = 6;
    let cell = |v: &[u64]| -> Option<usize> {
        v.iter().all(|&c| c < CAP).then(|| (v[0] * CAP * CAP + v[1] * CAP + v[2]) as usize)
    };
    let mut exact = vec![0.0; (CAP * CAP * CAP) as usize];
    for a in 0..CAP {
        for b in 0..CAP {
            for c in 0..CAP {
                exact[cell(&[a, b, c]).unwrap()] =
                    poisson_pmf(a, rates[0]) * poisson_pmf(b, rates[1]) * poisson_pmf(c, rates[2]);
            }
        }
    }
    let total_law = Poisson::new(total).unwrap();
    let mut split = vec![0u64; exact.len()];
    let mut split_over = 0;
    let mut direct = vec![0u64; exact.len()];
    let mut direct_over = 0;
    for _ in 0..DRAWS {
        let n = total_law.sample(rng) as u64;
        let v = sample_multinomial(n, &probs, rng).unwrap();
        match cell(&v) {
            Some(i) => split[i] += 1,
            None => split_over += 1,
        }
        let w: Vec<u64> = rates.iter().map(|&r| Poisson::new(r).unwrap().sample(rng) as u64).collect();
        match cell(&w) {
            Some(i) => direct[i] += 1,
            None => direct_over += 1,
        }
    }
    (chi_square_gof(&split, &exact, split_over), chi_square_gof(&direct, &exact, direct_over))
}

/// Gamma-mixed Poisson and the negative binomial sampler against the NB pmf.
fn p2(rng: &mut RngStream) -> (f64, f64) {
    let (a, b, c) = (2.0, 1.0, 1.0);
    // y ~ Pois(c θ), θ ~ Gam(a, b)  ⇒  y ~ NB(a, c / (b + c))
    let p = c / (b + c);
    const CAP: u64 = 21;
    let exact: Vec<f64> = (0..CAP).map(|k| nb_pmf(k, a, p)).collect();
    let mut compound = vec![0u64; CAP as usize];
    let mut compound_over = 0;
    let mut nb = vec![0u64; CAP as usize];
    let mut nb_over = 0;
    for _ in 0..DRAWS {
        let theta = sample_gamma(a, b, rng).unwrap();
        let y = Poisson::new(c * theta).unwrap().sample(rng) as u64;
        if y < CAP {
            compound[y as usize] += 1;
        } else {
            compound_over += 1;
        }
        let z = sample_negative_binomial(a, p, rng).unwrap();
        if z < CAP {
            nb[z as usize] += 1;
        } else {
            nb_over += 1;
        }
    }
    (chi_square_gof(&compound, &exact, compound_over), chi_square_gof(&nb, &exact, nb_over))
}

/// Both factorizations of the (y, l) joint against the exact NB × CRT pmf.
fn p3(rng: &mut RngStream) -> (f64, f64) {
    let (r, zeta) = (1.5, 0.8);
    let p = bernoulli_poisson_g(zeta);
    const YMAX: usize = 16;
    let stirling = stirling_first(YMAX);
    let index = |y: usize, l: usize| y * (YMAX + 1) + l;
    let mut exact = vec![0.0; (YMAX + 1) * (YMAX + 1)];
    for y in 0..=YMAX {
        let ny = nb_pmf(y as u64, r, p);
        for l in 0..=y {
            let crt = stirling[y][l] * (l as f64 * r.ln() + ln_gamma(r) - ln_gamma(y as f64 + r)).exp();
            exact[index(y, l)] = ny * crt;
        }
    }
    let tables = Poisson::new(r * zeta).unwrap();
    let (mut fwd, mut fwd_over) = (vec![0u64; exact.len()], 0);
    let (mut rev, mut rev_over) = (vec![0u64; exact.len()], 0);
    for _ in 0..DRAWS {
        let y = sample_negative_binomial(r, p, rng).unwrap();
        let l = sample_crt(y as i64, r, rng).unwrap();
        if (y as usize) <= YMAX {
            fwd[index(y as usize, l as usize)] += 1;
        } else {
            fwd_over += 1;
        }
        let l = tables.sample(rng) as u64;
        let y = sample_sumlog(l as i64, p, rng).unwrap();
        if (y as usize) <= YMAX {
            rev[index(y as usize, l as usize)] += 1;
        } else {
            rev_over += 1;
        }
    }
    (chi_square_gof(&fwd, &exact, fwd_over), chi_square_gof(&rev, &exact, rev_over))
}

pub fn run() -> Outcome {
    let mut rng = RngStream::new(2024, 11);
    let (p1a, p1b) = p1(&mut rng);
    let (p2a, p2b) = p2(&mut rng);
    let (p3a, p3b) = p3(&mut rng);
    let all = [p1a, p1b, p2a, p2b, p3a, p3b];
    Outcome::new(
        all.iter().all(|&p| p > ALPHA),
        format!(
            "p-values: P1 split {p1a:.4} / independent {p1b:.4}; P2 compound {p2a:.4} / NB {p2b:.4}; \
             P3 NB+CRT {p3a:.4} / Poisson+SumLog {p3b:.4} (need > {ALPHA})"
        ),
    )
}
