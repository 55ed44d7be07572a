use dpgds::data::{self, BallConfig, Checkpoint, EngineState, RngCursor, FORMAT_VERSION};
use dpgds::model::{self, HyperParams, ObservationLink};
use dpgds::RngStream;

use crate::error::CliError;
use crate::output::{ensure_dir, extension, parse_format};
use crate::{BallsArgs, ModelArgs};

pub fn balls(args: BallsArgs) -> Result<(), CliError> {
    let format = parse_format(&args.format)?;
    let mut cfg = BallConfig::new(args.n_balls, args.size, args.steps);
    cfg.sequences = args.sequences;
    cfg.radius = args.radius;
    cfg.speed = args.speed;
    cfg.collisions = !args.no_collisions;
    let mut rng = RngStream::new(args.seed, 0);
    let seqs = data::generate_bouncing_balls(&cfg, &mut rng)?;
    ensure_dir(&args.out)?;
    for (i, x) in seqs.iter().enumerate() {
        let path = args.out.join(format!("balls_{i:03}.{}", extension(format)));
        data::save_count_matrix(x, &path, format)?;
    }
    Ok(())
}

pub fn model(args: ModelArgs) -> Result<(), CliError> {
    let format = parse_format(&args.format)?;
    let mut hyper = HyperParams::new(args.vocab, args.layers.0.clone());
    hyper.tau0 = args.tau0;
    hyper.gamma0 = args.gamma0;
    hyper.eta = vec![args.eta0; hyper.depth()];
    hyper.eps0 = args.eps0;
    hyper.tie_delta = args.tie_delta;
    if args.binary {
        hyper.link = ObservationLink::BernoulliPoisson;
    }
    hyper.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = RngStream::new(args.seed, 0);
    let (globals, latents, x) = model::generate(&hyper, args.steps, &mut rng)?;
    ensure_dir(&args.out)?;
    data::save_count_matrix(&x, &args.out.join(format!("data.{}", extension(format))), format)?;
    let truth = Checkpoint {
        format_version: FORMAT_VERSION,
        hyper,
        globals,
        latents: Some(latents),
        rng: RngCursor::of(&rng),
        iteration: 0,
        engine: EngineState::Gibbs,
        rate_mean: None,
    };
    data::save_checkpoint(&truth, &args.out.join("truth.ckpt"))?;
    Ok(())
}
