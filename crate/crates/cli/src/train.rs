use std::time::Instant;

use dpgds::data::{self, Checkpoint, EngineState};
use dpgds::eval::{self, ForecastMode, HoldoutSplit, RateAccumulator};
use dpgds::gibbs::GibbsChain;
use dpgds::model::{self, DataKind, GlobalParams, HyperParams, LatentState, ObservationLink};
use dpgds::sgmcmc::{SgmcmcChain, SgmcmcConfig, StepSchedule};
use dpgds::{CountMatrix, RngStream};

use crate::error::CliError;
use crate::output::{ensure_dir, parse_format, MetricLog};
use crate::settings::{Resolver, Widths};
use crate::TrainArgs;

const CHAIN_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;
const FORECAST_STREAM: u64 = 2;

enum Engine {
    Gibbs(GibbsChain),
    Sgmcmc(SgmcmcChain),
}

impl Engine {
    fn step(&mut self, x: &CountMatrix) -> Result<(), CliError> {
        match self {
            Engine::Gibbs(c) => c.sweep(x).map(drop),
            Engine::Sgmcmc(c) => c.step(x).map(drop),
        }
        .map_err(CliError::from)
    }

    fn iteration(&self) -> u64 {
        match self {
            Engine::Gibbs(c) => c.iteration,
            Engine::Sgmcmc(c) => c.iteration,
        }
    }

    fn state(&self) -> (&HyperParams, &GlobalParams, &LatentState) {
        match self {
            Engine::Gibbs(c) => (&c.hyper, &c.globals, &c.latents),
            Engine::Sgmcmc(c) => (&c.hyper, &c.globals, &c.latents),
        }
    }

    fn checkpoint(&self, acc: &RateAccumulator) -> Checkpoint {
        let acc = (acc.samples > 0).then(|| acc.clone());
        match self {
            Engine::Gibbs(c) => Checkpoint::from_gibbs(c, acc),
            Engine::Sgmcmc(c) => Checkpoint::from_sgmcmc(c, acc),
        }
    }
}

struct Plan {
    data: std::path::PathBuf,
    format: data::MatrixFormat,
    binary: bool,
    engine: String,
    layers: Widths,
    burnin: u64,
    collect: u64,
    seed: u64,
    tau0: f64,
    gamma0: f64,
    eta0: f64,
    eps0: f64,
    tie_delta: bool,
    sub_t: Option<usize>,
    schedule: StepSchedule,
    thermostat_scale: f64,
    sample_beta: bool,
    holdout_fraction: Option<f64>,
    holdout_final: bool,
    top_m: usize,
    checkpoint_every: u64,
    resume: Option<std::path::PathBuf>,
    out: std::path::PathBuf,
}

fn resolve(args: TrainArgs) -> Result<(Plan, Resolver), CliError> {
    let mut r = Resolver::new(args.config.as_deref())?;
    let data = r.require("data", args.data.map(|p| p.display().to_string()))?;
    let format = r.get("format", args.format, "dense-csv".to_string())?;
    let binary = r.get("binary", args.binary, false)?;
    let engine = r.get("engine", args.engine, "gibbs".to_string())?;
    if engine != "gibbs" && engine != "sgmcmc" {
        return Err(CliError::Config(format!("unknown engine '{engine}'")));
    }
    let layers = r.require("layers", args.layers)?;
    let iters = r.opt("iters", args.iters)?;
    let (burnin_default, collect_default) = match iters {
        Some(n) => (2 * n / 5, n - 2 * n / 5),
        None => (2000, 3000),
    };
    let burnin = r.get("burnin", args.burnin, burnin_default)?;
    let collect = r.get("collect", args.collect, collect_default)?;
    let seed = r.get("seed", args.seed, 0)?;
    let tau0 = r.get("tau0", args.tau0, 1.0)?;
    let gamma0 = r.get("gamma0", args.gamma0, 100.0)?;
    let eta0 = r.get("eta0", args.eta0, 0.1)?;
    let eps0 = r.get("eps0", args.eps0, 0.1)?;
    let tie_delta = r.get("tie_delta", args.tie_delta, false)?;
    let sub_t = r.opt("sub_t", args.sub_t)?;
    let d = StepSchedule::default();
    let schedule = StepSchedule::new(
        r.get("step_a", args.step_a, d.a)?,
        r.get("step_b", args.step_b, d.b)?,
        r.get("step_c", args.step_c, d.c)?,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let thermostat_scale = r.get("thermostat_scale", args.thermostat_scale, 1.0)?;
    if !(thermostat_scale > 0.0 && thermostat_scale.is_finite()) {
        return Err(CliError::Config("thermostat_scale must be positive".into()));
    }
    let sample_beta = r.get("sample_beta", args.sample_beta, false)?;
    let holdout_fraction = r.opt("holdout_fraction", args.holdout_fraction)?;
    let holdout_final = r.get("holdout_final", args.holdout_final, false)?;
    if holdout_final && holdout_fraction.is_none() {
        return Err(CliError::Config("--holdout-final needs --holdout-fraction".into()));
    }
    let top_m = r.get("top_m", args.top_m, eval::DEFAULT_TOP_M)?;
    let checkpoint_every = r.get("checkpoint_every", args.checkpoint_every, 0)?;
    let resume = r.opt("resume", args.resume.map(|p| p.display().to_string()))?;
    let out = r.get(
        "out",
        args.out.map(|p| p.display().to_string()),
        "dpgds-out".to_string(),
    )?;
    r.check_unused()?;
    Ok((
        Plan {
            data: data.into(),
            format: parse_format(&format)?,
            binary,
            engine,
            layers,
            burnin,
            collect,
            seed,
            tau0,
            gamma0,
            eta0,
            eps0,
            tie_delta,
            sub_t,
            schedule,
            thermostat_scale,
            sample_beta,
            holdout_fraction,
            holdout_final,
            top_m,
            checkpoint_every,
            resume: resume.map(Into::into),
            out: out.into(),
        },
        r,
    ))
}

fn build_hyper(plan: &Plan, vocab: usize) -> Result<HyperParams, CliError> {
    let mut h = HyperParams::new(vocab, plan.layers.0.clone());
    h.tau0 = plan.tau0;
    h.gamma0 = plan.gamma0;
    h.eta = vec![plan.eta0; h.depth()];
    h.eps0 = plan.eps0;
    h.tie_delta = plan.tie_delta;
    if plan.binary {
        h.link = ObservationLink::BernoulliPoisson;
    }
    h.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(h)
}

fn start_engine(plan: &Plan, hyper: HyperParams, steps: usize) -> Result<Engine, CliError> {
    if let Some(path) = &plan.resume {
        let ck = data::load_checkpoint(path)
            .map_err(|e| CliError::Data(format!("cannot resume from {}: {e}", path.display())))?;
        if ck.hyper != hyper {
            return Err(CliError::Config("resumed checkpoint was trained with different settings".into()));
        }
        return Ok(match ck.engine {
            EngineState::Gibbs if plan.engine == "gibbs" => Engine::Gibbs(ck.to_gibbs()?),
            EngineState::Sgmcmc { .. } if plan.engine == "sgmcmc" => Engine::Sgmcmc(ck.to_sgmcmc()?),
            _ => return Err(CliError::Config("resumed checkpoint used a different engine".into())),
        });
    }
    let rng = RngStream::new(plan.seed, CHAIN_STREAM);
    Ok(match plan.engine.as_str() {
        "gibbs" => Engine::Gibbs(GibbsChain::new(hyper, steps, rng)?),
        _ => {
            let sub_t = plan.sub_t.unwrap_or(steps).min(steps);
            let mut cfg = SgmcmcConfig::new(sub_t);
            cfg.schedule = plan.schedule;
            cfg.thermostat_scale = plan.thermostat_scale;
            cfg.sample_beta = plan.sample_beta;
            Engine::Sgmcmc(SgmcmcChain::new(hyper, cfg, steps, rng)?)
        }
    })
}

fn resume_accumulator(plan: &Plan) -> Result<Option<RateAccumulator>, CliError> {
    match &plan.resume {
        Some(p) => Ok(data::load_checkpoint(p)?.rate_mean),
        None => Ok(None),
    }
}

/// Held-out metrics for a rate matrix over the training-visible steps.
fn heldout_metrics(
    log: &mut MetricLog,
    iteration: u64,
    prefix: &str,
    rates: &ndarray::Array2<f64>,
    split: &HoldoutSplit,
    top_m: usize,
) -> Result<(), CliError> {
    let visible = split.visible_steps();
    let held = split.heldout.truncate_steps(visible)?;
    let mask = vec![false; visible];
    let m = top_m.min(held.vocab());
    if let Ok((mp, mr)) = eval::mean_precision_recall(rates, &held, &mask, m) {
        log.record(iteration, &format!("{prefix}mp"), mp)?;
        log.record(iteration, &format!("{prefix}mr"), mr)?;
    }
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let (plan, resolver) = resolve(args)?;
    ensure_dir(&plan.out)?;
    resolver.write(&plan.out)?;

    let kind = if plan.binary { DataKind::Binary } else { DataKind::Count };
    let x = data::load_count_matrix(&plan.data, plan.format, kind, None)
        .map_err(|e| CliError::Data(format!("{}: {e}", plan.data.display())))?;
    if x.steps() == 0 || x.vocab() == 0 {
        return Err(CliError::Data("data matrix is empty".into()));
    }

    let split = match plan.holdout_fraction {
        Some(f) => Some(eval::make_holdout(
            &x,
            f,
            plan.holdout_final,
            &mut RngStream::new(plan.seed, SPLIT_STREAM),
        )?),
        None => None,
    };
    let train = match &split {
        Some(s) => {
            let visible = s.visible_steps();
            if visible == 0 {
                return Err(CliError::Data("holding out the final step leaves nothing to train on".into()));
            }
            s.train.truncate_steps(visible)?
        }
        None => x.clone(),
    };

    let hyper = build_hyper(&plan, x.vocab())?;
    let mut engine = start_engine(&plan, hyper, train.steps())?;
    let mut acc = resume_accumulator(&plan)?.unwrap_or_else(|| RateAccumulator::new(train.vocab(), train.steps()));
    let mut log = MetricLog::create(&plan.out)?;
    let total = plan.burnin + plan.collect;
    let clock = Instant::now();
    let ck_dir = plan.out.join("checkpoints");

    while engine.iteration() < total {
        engine.step(&train)?;
        let it = engine.iteration();
        let (_, globals, latents) = engine.state();
        if train.kind() == DataKind::Count {
            log.record(it, "train_loglik", model::poisson_log_likelihood(&train, globals, latents)?)?;
        }
        if let Some(s) = &split {
            heldout_metrics(&mut log, it, "heldout_", &model::expected_rates(globals, latents), s, plan.top_m)?;
        }
        if it > plan.burnin {
            acc.add(globals, latents);
        }
        log.time(it, clock.elapsed().as_secs_f64())?;
        if plan.checkpoint_every > 0 && it % plan.checkpoint_every == 0 {
            ensure_dir(&ck_dir)?;
            data::save_checkpoint(&engine.checkpoint(&acc), &ck_dir.join(format!("iter-{it:06}.ckpt")))?;
        }
    }

    let it = engine.iteration();
    if let Some(s) = &split {
        let (hyper, globals, latents) = engine.state();
        let rates = acc.mean().unwrap_or_else(|| model::expected_rates(globals, latents));
        heldout_metrics(&mut log, it, "final_", &rates, s, plan.top_m)?;
        let visible = s.visible_steps();
        if train.kind() == DataKind::Count {
            let f = plan.holdout_fraction.unwrap_or(0.5);
            let held = s.heldout.truncate_steps(visible)?;
            let scaled = &rates * ((1.0 - f) / f);
            log.record(it, "final_heldout_loglik", model::poisson_log_likelihood_rates(&held, &scaled)?)?;
            let base = eval::mean_rate_baseline(&train, (1.0 - f) / f);
            log.record(it, "final_baseline_loglik", model::poisson_log_likelihood_rates(&held, &base)?)?;
        }
        if plan.holdout_final {
            let mut rng = RngStream::new(plan.seed, FORECAST_STREAM);
            let fc = eval::forecast_next(hyper, globals, latents, 1, ForecastMode::Expectation, &mut rng)?;
            let truth = s.heldout.dense_column(s.heldout.steps() - 1);
            let m = plan.top_m.min(x.vocab());
            if let Some((pp, _)) = eval::top_m_precision_recall(&fc.column(0).to_vec(), &truth, m)? {
                log.record(it, "final_pp", pp)?;
            }
        }
    }
    log.flush()?;
    data::save_checkpoint(&engine.checkpoint(&acc), &plan.out.join("checkpoint.ckpt"))?;
    Ok(())
}
