//! Line-based text checkpoints.
//!
//! Every line is `key = value`, `key[n] = v1 v2 ...` or
//! `key[r,c] = row-major values`. Reals are written in Rust's shortest
//! round-trip decimal form, so parsing restores the exact bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::eval::RateAccumulator;
use crate::gibbs::{compute_zeta, GibbsChain};
use crate::model::{GlobalParams, HyperParams, LatentState, NuShapeRule, ObservationLink};
use crate::rng::RngStream;
use crate::sgmcmc::{SgmcmcChain, SgmcmcConfig, SgmcmcState, SgnhtState, StepSchedule};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dpgds-checkpoint";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngCursor {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngCursor {
    pub fn of(rng: &RngStream) -> Self {
        Self {
            seed: rng.seed(),
            stream: rng.stream_id(),
            word_pos: rng.word_pos(),
        }
    }

    pub fn restore(&self) -> RngStream {
        RngStream::at_position(self.seed, self.stream, self.word_pos)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EngineState {
    Gibbs,
    Sgmcmc { config: SgmcmcConfig, state: SgmcmcState },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub hyper: HyperParams,
    pub globals: GlobalParams,
    /// ζ is not stored; it is recomputed from the globals on load.
    pub latents: Option<LatentState>,
    pub rng: RngCursor,
    pub iteration: u64,
    pub engine: EngineState,
    pub rate_mean: Option<RateAccumulator>,
}

struct Writer(String);

impl Writer {
    fn scalar(&mut self, key: &str, v: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key} = {v}");
    }

    fn real(&mut self, key: &str, v: f64) {
        let _ = writeln!(self.0, "{key} = {v:?}");
    }

    fn reals(&mut self, key: &str, vs: &[f64]) {
        let _ = write!(self.0, "{key}[{}] =", vs.len());
        for v in vs {
            let _ = write!(self.0, " {v:?}");
        }
        self.0.push('\n');
    }

    fn matrix(&mut self, key: &str, m: &Array2<f64>) {
        let _ = write!(self.0, "{key}[{},{}] =", m.nrows(), m.ncols());
        for v in m.iter() {
            let _ = write!(self.0, " {v:?}");
        }
        self.0.push('\n');
    }
}

pub fn render_checkpoint(c: &Checkpoint) -> String {
    let mut w = Writer(format!("{MAGIC} {}\n", c.format_version));
    let h = &c.hyper;
    let layers: Vec<String> = h.layers.iter().map(|k| k.to_string()).collect();
    w.scalar("hyper.layers", layers.join(" "));
    w.scalar("hyper.vocab", h.vocab);
    w.real("hyper.tau0", h.tau0);
    w.real("hyper.gamma0", h.gamma0);
    w.reals("hyper.eta", &h.eta);
    w.real("hyper.eps0", h.eps0);
    w.scalar("hyper.tie_delta", h.tie_delta);
    w.scalar(
        "hyper.link",
        match h.link {
            ObservationLink::PoissonCount => "poisson",
            ObservationLink::BernoulliPoisson => "bernoulli-poisson",
        },
    );
    w.scalar(
        "hyper.nu_shape",
        match h.nu_shape {
            NuShapeRule::GammaOverWidth => "gamma0-over-width",
            NuShapeRule::GammaOverBeta => "gamma0-over-beta",
        },
    );
    w.scalar("iteration", c.iteration);
    w.scalar("rng.seed", c.rng.seed);
    w.scalar("rng.stream", c.rng.stream);
    w.scalar("rng.word_pos", c.rng.word_pos);

    let g = &c.globals;
    for l in 0..g.depth() {
        w.matrix(&format!("phi.{l}"), &g.phi[l]);
        w.matrix(&format!("pi.{l}"), &g.pi[l]);
        w.reals(&format!("nu.{l}"), g.nu[l].as_slice().expect("contiguous"));
        w.real(&format!("xi.{l}"), g.xi[l]);
        w.real(&format!("beta.{l}"), g.beta[l]);
    }
    w.reals("delta", &g.delta);
    if let Some(lat) = &c.latents {
        for (l, th) in lat.theta.iter().enumerate() {
            w.matrix(&format!("theta.{l}"), th);
        }
    }
    match &c.engine {
        EngineState::Gibbs => w.scalar("engine", "gibbs"),
        EngineState::Sgmcmc { config, state } => {
            w.scalar("engine", "sgmcmc");
            w.scalar("sgmcmc.sub_t", config.sub_t);
            w.real("sgmcmc.step_a", config.schedule.a);
            w.real("sgmcmc.step_b", config.schedule.b);
            w.real("sgmcmc.step_c", config.schedule.c);
            w.real("sgmcmc.diffusion", config.diffusion);
            w.real("sgmcmc.thermostat_scale", config.thermostat_scale);
            w.scalar("sgmcmc.sample_beta", config.sample_beta);
            w.reals("sgmcmc.momenta", &state.sgnht.momenta);
            w.real("sgmcmc.thermostat", state.sgnht.thermostat);
            w.real("sgmcmc.state_diffusion", state.sgnht.diffusion);
            w.real("sgmcmc.batch_ratio", state.batch_ratio);
            w.scalar("sgmcmc.n", state.n);
            w.scalar("sgmcmc.precond_layers", state.precond_m.len());
            for (l, (m, p)) in state.precond_m.iter().zip(&state.precond_p).enumerate() {
                w.reals(&format!("sgmcmc.precond_m.{l}"), m);
                w.reals(&format!("sgmcmc.precond_p.{l}"), p);
            }
        }
    }
    if let Some(acc) = &c.rate_mean {
        w.scalar("rate_mean.samples", acc.samples);
        w.matrix("rate_mean.sum", &acc.sum);
    }
    w.0
}

/// A parsed value: its declared shape (empty for scalars) and raw tokens.
struct Entry {
    line: usize,
    shape: Vec<usize>,
    raw: String,
}

struct Fields(BTreeMap<String, Entry>);

impl Fields {
    fn get(&self, key: &str) -> Result<&Entry> {
        self.0
            .get(key)
            .ok_or_else(|| Error::parse(0, format!("missing checkpoint field '{key}'")))
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let e = self.get(key)?;
        e.raw
            .trim()
            .parse::<T>()
            .map_err(|_| Error::parse(e.line, format!("bad value for '{key}'")))
    }

    fn text(&self, key: &str) -> Result<&str> {
        Ok(self.get(key)?.raw.trim())
    }

    fn reals(&self, key: &str) -> Result<Vec<f64>> {
        let e = self.get(key)?;
        let vals = e
            .raw
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::parse(e.line, format!("bad real in '{key}'")))?;
        let want: usize = e.shape.iter().product();
        if e.shape.len() != 1 || vals.len() != want {
            return Err(Error::Shape(format!("'{key}' declares {:?} but holds {} values", e.shape, vals.len())));
        }
        Ok(vals)
    }

    fn matrix(&self, key: &str) -> Result<Array2<f64>> {
        let e = self.get(key)?;
        if e.shape.len() != 2 {
            return Err(Error::Shape(format!("'{key}' is not a matrix")));
        }
        let vals = e
            .raw
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::parse(e.line, format!("bad real in '{key}'")))?;
        let (r, c) = (e.shape[0], e.shape[1]);
        if r.checked_mul(c) != Some(vals.len()) {
            return Err(Error::Shape(format!("'{key}' declares {r}x{c} but holds {} values", vals.len())));
        }
        Array2::from_shape_vec((r, c), vals).map_err(|e| Error::Shape(e.to_string()))
    }
}

fn split_key(key: &str, line: usize) -> Result<(String, Vec<usize>)> {
    match key.find('[') {
        None => Ok((key.to_string(), Vec::new())),
        Some(i) => {
            let dims = key[i + 1..]
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(line, "unterminated shape"))?;
            let shape = dims
                .split(',')
                .map(|d| d.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::parse(line, format!("bad shape '{dims}'")))?;
            Ok((key[..i].to_string(), shape))
        }
    }
}

fn parse_bool(f: &Fields, key: &str) -> Result<bool> {
    match f.text(key)? {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::parse(f.get(key)?.line, format!("'{key}' must be true or false"))),
    }
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::parse(1, "empty checkpoint"))?;
    let version = first
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::parse(1, "not a checkpoint file"))?
        .parse::<u32>()
        .map_err(|_| Error::parse(1, "bad format version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut map = BTreeMap::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (key, value) = raw
            .split_once(" = ")
            .or_else(|| raw.strip_suffix(" =").map(|k| (k, "")))
            .ok_or_else(|| Error::parse(line, "expected 'key = value'"))?;
        let (name, shape) = split_key(key.trim(), line)?;
        if map
            .insert(
                name.clone(),
                Entry {
                    line,
                    shape,
                    raw: value.to_string(),
                },
            )
            .is_some()
        {
            return Err(Error::parse(line, format!("duplicate field '{name}'")));
        }
    }
    let f = Fields(map);

    let layers_line = f.get("hyper.layers")?.line;
    let layers = f
        .text("hyper.layers")?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::parse(layers_line, "bad layer widths"))?;
    let mut hyper = HyperParams::new(f.parse("hyper.vocab")?, layers);
    hyper.tau0 = f.parse("hyper.tau0")?;
    hyper.gamma0 = f.parse("hyper.gamma0")?;
    hyper.eta = f.reals("hyper.eta")?;
    hyper.eps0 = f.parse("hyper.eps0")?;
    hyper.tie_delta = parse_bool(&f, "hyper.tie_delta")?;
    hyper.link = match f.text("hyper.link")? {
        "poisson" => ObservationLink::PoissonCount,
        "bernoulli-poisson" => ObservationLink::BernoulliPoisson,
        other => return Err(Error::parse(f.get("hyper.link")?.line, format!("unknown link '{other}'"))),
    };
    hyper.nu_shape = match f.text("hyper.nu_shape")? {
        "gamma0-over-width" => NuShapeRule::GammaOverWidth,
        "gamma0-over-beta" => NuShapeRule::GammaOverBeta,
        other => return Err(Error::parse(f.get("hyper.nu_shape")?.line, format!("unknown rule '{other}'"))),
    };
    hyper.validate()?;

    let depth = hyper.depth();
    let mut globals = GlobalParams {
        phi: Vec::with_capacity(depth),
        pi: Vec::with_capacity(depth),
        nu: Vec::with_capacity(depth),
        xi: Vec::with_capacity(depth),
        beta: Vec::with_capacity(depth),
        delta: f.reals("delta")?,
    };
    for l in 0..depth {
        let phi = f.matrix(&format!("phi.{l}"))?;
        let pi = f.matrix(&format!("pi.{l}"))?;
        let nu = f.reals(&format!("nu.{l}"))?;
        let width = hyper.layers[l];
        if phi.dim() != (hyper.rows_below(l), width) || pi.dim() != (width, width) || nu.len() != width {
            return Err(Error::Shape(format!("layer {l} parameters disagree with the declared widths")));
        }
        globals.phi.push(phi);
        globals.pi.push(pi);
        globals.nu.push(Array1::from(nu));
        globals.xi.push(f.parse(&format!("xi.{l}"))?);
        globals.beta.push(f.parse(&format!("beta.{l}"))?);
    }

    let latents = if f.has("theta.0") {
        let theta = (0..depth)
            .map(|l| f.matrix(&format!("theta.{l}")))
            .collect::<Result<Vec<_>>>()?;
        let steps = theta[0].ncols();
        for (l, th) in theta.iter().enumerate() {
            if th.dim() != (hyper.layers[l], steps) {
                return Err(Error::Shape(format!("theta.{l} has shape {:?}", th.dim())));
            }
        }
        let want = if hyper.tie_delta { 1 } else { steps };
        if globals.delta.len() != want {
            return Err(Error::Shape(format!("delta has {} entries, expected {want}", globals.delta.len())));
        }
        let zeta = compute_zeta(&globals, &hyper, steps);
        Some(LatentState { theta, zeta })
    } else {
        None
    };
    if hyper.tie_delta && globals.delta.len() != 1 {
        return Err(Error::Shape("tied delta must have one entry".into()));
    }

    let engine = match f.text("engine")? {
        "gibbs" => EngineState::Gibbs,
        "sgmcmc" => {
            let config = SgmcmcConfig {
                sub_t: f.parse("sgmcmc.sub_t")?,
                schedule: StepSchedule {
                    a: f.parse("sgmcmc.step_a")?,
                    b: f.parse("sgmcmc.step_b")?,
                    c: f.parse("sgmcmc.step_c")?,
                },
                diffusion: f.parse("sgmcmc.diffusion")?,
                thermostat_scale: f.parse("sgmcmc.thermostat_scale")?,
                sample_beta: parse_bool(&f, "sgmcmc.sample_beta")?,
            };
            let n_layers: usize = f.parse("sgmcmc.precond_layers")?;
            if n_layers > depth {
                return Err(Error::Shape("more preconditioner layers than model layers".into()));
            }
            let mut precond_m = Vec::with_capacity(n_layers);
            let mut precond_p = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                precond_m.push(f.reals(&format!("sgmcmc.precond_m.{l}"))?);
                precond_p.push(f.reals(&format!("sgmcmc.precond_p.{l}"))?);
            }
            let state = SgmcmcState {
                sgnht: SgnhtState {
                    momenta: f.reals("sgmcmc.momenta")?,
                    thermostat: f.parse("sgmcmc.thermostat")?,
                    diffusion: f.parse("sgmcmc.state_diffusion")?,
                },
                precond_m,
                precond_p,
                batch_ratio: f.parse("sgmcmc.batch_ratio")?,
                n: f.parse("sgmcmc.n")?,
            };
            EngineState::Sgmcmc { config, state }
        }
        other => return Err(Error::parse(f.get("engine")?.line, format!("unknown engine '{other}'"))),
    };

    let rate_mean = if f.has("rate_mean.sum") {
        Some(RateAccumulator {
            sum: f.matrix("rate_mean.sum")?,
            samples: f.parse("rate_mean.samples")?,
        })
    } else {
        None
    };

    Ok(Checkpoint {
        format_version: version,
        hyper,
        globals,
        latents,
        rng: RngCursor {
            seed: f.parse("rng.seed")?,
            stream: f.parse("rng.stream")?,
            word_pos: f.parse("rng.word_pos")?,
        },
        iteration: f.parse("iteration")?,
        engine,
        rate_mean,
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, render_checkpoint(c))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

impl Checkpoint {
    pub fn from_gibbs(chain: &GibbsChain, rate_mean: Option<RateAccumulator>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            hyper: chain.hyper.clone(),
            globals: chain.globals.clone(),
            latents: Some(chain.latents.clone()),
            rng: RngCursor::of(&chain.rng),
            iteration: chain.iteration,
            engine: EngineState::Gibbs,
            rate_mean,
        }
    }

    pub fn from_sgmcmc(chain: &SgmcmcChain, rate_mean: Option<RateAccumulator>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            hyper: chain.hyper.clone(),
            globals: chain.globals.clone(),
            latents: Some(chain.latents.clone()),
            rng: RngCursor::of(&chain.rng),
            iteration: chain.iteration,
            engine: EngineState::Sgmcmc {
                config: chain.config.clone(),
                state: chain.state.clone(),
            },
            rate_mean,
        }
    }

    fn require_latents(&self) -> Result<LatentState> {
        self.latents
            .clone()
            .ok_or_else(|| Error::domain("checkpoint carries no hidden units to resume from"))
    }

    /// Resume a Gibbs chain exactly where it stopped.
    pub fn to_gibbs(&self) -> Result<GibbsChain> {
        if self.engine != EngineState::Gibbs {
            return Err(Error::domain("checkpoint was written by the sgmcmc engine"));
        }
        Ok(GibbsChain {
            hyper: self.hyper.clone(),
            globals: self.globals.clone(),
            latents: self.require_latents()?,
            rng: self.rng.restore(),
            iteration: self.iteration,
        })
    }

    pub fn to_sgmcmc(&self) -> Result<SgmcmcChain> {
        let EngineState::Sgmcmc { config, state } = &self.engine else {
            return Err(Error::domain("checkpoint was written by the gibbs engine"));
        };
        Ok(SgmcmcChain {
            hyper: self.hyper.clone(),
            config: config.clone(),
            globals: self.globals.clone(),
            latents: self.require_latents()?,
            state: state.clone(),
            rng: self.rng.restore(),
            iteration: self.iteration,
        })
    }
}
