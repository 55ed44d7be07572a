use dpgds::gibbs::{compute_zeta, initialize, stationary_zeta};
use dpgds::model::HyperParams;
use dpgds::RngStream;

use crate::support::Outcome;

const TOL: f64 = 1e-10;
const WORKED: f64 = 1.146193;

/// Stationary values by iterating ζ ← ln(1 + ζ_below + ζ) to convergence.
fn fixed_point(ratio: f64, depth: usize) -> Vec<f64> {
    let mut below = ratio;
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        let mut z = 0.0f64;
        for _ in 0..100_000 {
            let next = (below + z).ln_1p();
            if (next - z).abs() < 1e-15 {
                z = next;
                break;
            }
            z = next;
        }
        out.push(z);
        below = z;
    }
    out
}

pub fn run() -> Outcome {
    let mut worst = 0.0f64;
    for &ratio in &[0.1, 1.0, 10.0] {
        for depth in 1..=3 {
            let lambert = stationary_zeta(ratio, 1.0, depth).expect("valid inputs");
            let iterated = fixed_point(ratio, depth);
            for (a, b) in lambert.iter().zip(&iterated) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    // δ and τ₀ enter only through their ratio
    let scaled = stationary_zeta(3.0, 3.0, 2).unwrap();
    let unit = stationary_zeta(1.0, 1.0, 2).unwrap();
    let ratio_only = scaled.iter().zip(&unit).all(|(a, b)| (a - b).abs() < TOL);
    let worked = unit[0];

    // a long tied-δ backward recursion settles on the stationary value
    let mut hyper = HyperParams::new(3, vec![2, 2]);
    hyper.tie_delta = true;
    let (mut globals, _) = initialize(&hyper, 400, &mut RngStream::new(1, 0)).unwrap();
    globals.delta = vec![1.0];
    let lattice = compute_zeta(&globals, &hyper, 400);
    let settled = (lattice[1][0] - unit[0]).abs() < TOL && (lattice[2][0] - unit[1]).abs() < TOL;

    let pass = worst < TOL && ratio_only && (worked - WORKED).abs() < 5e-7 && settled;
    Outcome::new(
        pass,
        format!(
            "max |Lambert - fixed point| = {worst:.2e} over 9 cases; ζ^(1)(δ=τ₀=1) = {worked:.7}; \
             long recursion settles: {settled}"
        ),
    )
}
