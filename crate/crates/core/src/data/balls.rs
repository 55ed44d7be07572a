//! Synthetic bouncing-ball videos as binary count matrices.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{CountMatrix, DataKind};

const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BallConfig {
    pub n_balls: usize,
    /// Frames are `size`×`size` pixels.
    pub size: usize,
    pub steps: usize,
    pub sequences: usize,
    /// Disc radius in pixels; defaults to 2 at size 15, scaled.
    pub radius: Option<f64>,
    /// Pixels per frame; defaults to 1 at size 15, scaled.
    pub speed: Option<f64>,
    /// Equal-mass elastic collisions between balls.
    pub collisions: bool,
}

impl BallConfig {
    pub fn new(n_balls: usize, size: usize, steps: usize) -> Self {
        Self {
            n_balls,
            size,
            steps,
            sequences: 1,
            radius: None,
            speed: None,
            collisions: true,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(2.0 * self.size as f64 / 15.0)
    }

    pub fn speed(&self) -> f64 {
        self.speed.unwrap_or(self.size as f64 / 15.0)
    }

    fn validate(&self) -> Result<()> {
        if self.n_balls < 1 {
            return Err(Error::domain("need at least one ball"));
        }
        if self.size < 8 {
            return Err(Error::domain(format!("frame size {} is below 8", self.size)));
        }
        if self.steps < 1 || self.sequences < 1 {
            return Err(Error::domain("need at least one frame and one sequence"));
        }
        let r = self.radius();
        if !(r > 0.0) || 2.0 * r >= self.size as f64 {
            return Err(Error::domain(format!("radius {r} does not fit a {} frame", self.size)));
        }
        if !(self.speed() >= 0.0) || !self.speed().is_finite() {
            return Err(Error::domain("speed must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

fn reflect(x: &mut f64, v: &mut f64, lo: f64, hi: f64) {
    if *x < lo {
        *x = 2.0 * lo - *x;
        *v = -*v;
    } else if *x > hi {
        *x = 2.0 * hi - *x;
        *v = -*v;
    }
}

fn collide(balls: &mut [BallState], radius: f64) {
    let n = balls.len();
    for i in 0..n {
        for j in i + 1..n {
            let d = [balls[j].pos[0] - balls[i].pos[0], balls[j].pos[1] - balls[i].pos[1]];
            let dist2 = d[0] * d[0] + d[1] * d[1];
            if dist2 >= 4.0 * radius * radius || dist2 == 0.0 {
                continue;
            }
            let dv = [balls[j].vel[0] - balls[i].vel[0], balls[j].vel[1] - balls[i].vel[1]];
            let approach = dv[0] * d[0] + dv[1] * d[1];
            if approach >= 0.0 {
                continue;
            }
            // exchange the normal components of velocity
            let k = approach / dist2;
            for a in 0..2 {
                balls[i].vel[a] += k * d[a];
                balls[j].vel[a] -= k * d[a];
            }
        }
    }
}

/// Advance balls for `steps` frames from `start`, returning every state
/// including the first.
pub fn simulate_balls(start: &[BallState], size: f64, radius: f64, steps: usize, collisions: bool) -> Vec<Vec<BallState>> {
    let mut cur = start.to_vec();
    let mut out = Vec::with_capacity(steps);
    if steps == 0 {
        return out;
    }
    out.push(cur.clone());
    let (lo, hi) = (radius, size - radius);
    for _ in 1..steps {
        for b in cur.iter_mut() {
            for a in 0..2 {
                b.pos[a] += b.vel[a];
                reflect(&mut b.pos[a], &mut b.vel[a], lo, hi);
            }
        }
        if collisions {
            collide(&mut cur, radius);
        }
        out.push(cur.clone());
    }
    out
}

fn rasterize(balls: &[BallState], size: usize, radius: f64, t: usize, cells: &mut Vec<(usize, usize, u64)>) {
    let r2 = radius * radius;
    for row in 0..size {
        let y = row as f64 + 0.5;
        for col in 0..size {
            let x = col as f64 + 0.5;
            let lit = balls
                .iter()
                .any(|b| (x - b.pos[0]).powi(2) + (y - b.pos[1]).powi(2) <= r2);
            if lit {
                cells.push((row * size + col, t, 1));
            }
        }
    }
}

fn place<R: Rng + ?Sized>(cfg: &BallConfig, rng: &mut R) -> Result<Vec<BallState>> {
    let size = cfg.size as f64;
    let r = cfg.radius();
    let speed = cfg.speed();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut balls: Vec<BallState> = Vec::with_capacity(cfg.n_balls);
        let mut ok = true;
        for _ in 0..cfg.n_balls {
            let pos = [rng.random_range(r..size - r), rng.random_range(r..size - r)];
            if balls
                .iter()
                .any(|b| (b.pos[0] - pos[0]).powi(2) + (b.pos[1] - pos[1]).powi(2) < 4.0 * r * r)
            {
                ok = false;
                break;
            }
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            balls.push(BallState {
                pos,
                vel: [speed * angle.cos(), speed * angle.sin()],
            });
        }
        if ok {
            return Ok(balls);
        }
    }
    Err(Error::domain(format!(
        "could not place {} non-overlapping balls in {PLACEMENT_ATTEMPTS} attempts",
        cfg.n_balls
    )))
}

/// Binary V×T frame sequences with V = size², pixel (row, col) at index
/// `row * size + col`.
pub fn generate_bouncing_balls<R: Rng + ?Sized>(cfg: &BallConfig, rng: &mut R) -> Result<Vec<CountMatrix>> {
    cfg.validate()?;
    let r = cfg.radius();
    (0..cfg.sequences)
        .map(|_| {
            let start = place(cfg, rng)?;
            let traj = simulate_balls(&start, cfg.size as f64, r, cfg.steps, cfg.collisions);
            let mut cells = Vec::new();
            for (t, balls) in traj.iter().enumerate() {
                rasterize(balls, cfg.size, r, t, &mut cells);
            }
            CountMatrix::from_triplets(cfg.size * cfg.size, cfg.steps, cells, DataKind::Binary)
        })
        .collect()
}
