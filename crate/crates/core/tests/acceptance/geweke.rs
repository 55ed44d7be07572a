use dpgds::gibbs::gibbs_sweep;
use dpgds::model::{sample_globals_prior, sample_latents_prior, sample_observations};
use dpgds::{CountMatrix, GlobalParams, HyperParams, LatentState, RngStream};

use crate::support::{batch_mean_se2, entropy, mean, variance, Outcome};

const DRAWS: usize = 10_000;
const BATCHES: usize = 50;
const Z_LIMIT: f64 = 4.0;
const STEPS: usize = 6;

fn hyper() -> HyperParams {
    let mut h = HyperParams::new(4, vec![3, 2]);
    h.eps0 = 10.0;
    h.gamma0 = 3.0;
    h.eta = vec![0.5, 0.5];
    h
}

fn mean_entropy(m: &ndarray::Array2<f64>) -> f64 {
    m.columns().into_iter().map(entropy).sum::<f64>() / m.ncols() as f64
}

fn stats(g: &GlobalParams, s: &LatentState, x: &CountMatrix) -> Vec<f64> {
    let mut out = Vec::new();
    for l in 0..g.depth() {
        let th = &s.theta[l];
        out.push(th.mean().unwrap());
        out.push(th.mapv(|v| v * v).mean().unwrap());
        out.push(th.mapv(f64::sqrt).mean().unwrap());
        out.push(mean_entropy(&g.phi[l]));
        out.push(g.phi[l][(0, 0)]);
        out.push(mean_entropy(&g.pi[l]));
        out.push(g.pi[l][(0, 0)]);
        out.push(g.pi[l][(1, 0)]);
        out.push(g.nu[l].mean().unwrap());
        out.push(g.nu[l].mapv(f64::ln).mean().unwrap());
        out.push(g.xi[l].ln());
        out.push(g.beta[l].ln());
    }
    out.push(mean(&g.delta));
    out.push(g.delta.iter().map(|d| d.ln()).sum::<f64>() / g.delta.len() as f64);
    let total = x.total() as f64;
    out.push(total);
    out.push(total.sqrt());
    out.push(x.nnz() as f64);
    out
}

/// Forward draws against successive conditional draws: alternate a Gibbs
/// sweep with a fresh draw of the data. Both must share the joint law.
pub fn run() -> Outcome {
    let h = hyper();
    let mut rng = RngStream::new(31, 3);
    let mut forward: Vec<Vec<f64>> = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        let g = sample_globals_prior(&h, STEPS, &mut rng).unwrap();
        let s = sample_latents_prior(&h, &g, STEPS, &mut rng).unwrap();
        let x = sample_observations(&h, &g, &s, &mut rng).unwrap();
        forward.push(stats(&g, &s, &x));
    }

    let mut rng = RngStream::new(31, 4);
    let mut g = sample_globals_prior(&h, STEPS, &mut rng).unwrap();
    let mut s = sample_latents_prior(&h, &g, STEPS, &mut rng).unwrap();
    let mut x = sample_observations(&h, &g, &s, &mut rng).unwrap();
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        if let Err(e) = gibbs_sweep(&x, &h, &mut g, &mut s, &mut rng) {
            return Outcome::new(false, format!("sweep failed: {e}"));
        }
        x = sample_observations(&h, &g, &s, &mut rng).unwrap();
        chain.push(stats(&g, &s, &x));
    }

    let n_stats = forward[0].len();
    let column = |rows: &[Vec<f64>], j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
    let mut z = Vec::with_capacity(n_stats);
    for j in 0..n_stats {
        let f = column(&forward, j);
        let c = column(&chain, j);
        let se2 = variance(&f) / f.len() as f64 + batch_mean_se2(&c, BATCHES);
        z.push((mean(&f) - mean(&c)) / se2.sqrt());
    }
    let within = z.iter().filter(|v| v.abs() < Z_LIMIT).count();
    let worst = z.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    Outcome::new(
        within as f64 >= 0.95 * n_stats as f64,
        format!("{within}/{n_stats} statistics with |z| < {Z_LIMIT} (max |z| = {worst:.2}); z = {:.1?}", z),
    )
}
