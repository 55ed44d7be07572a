use std::fmt::Write as _;

use dpgds::data;
use dpgds::eval::{self, ForecastMode};
use dpgds::model::DataKind;
use dpgds::RngStream;

use crate::error::CliError;
use crate::output::{ensure_dir, parse_format, MetricLog};
use crate::ForecastArgs;

pub fn run(args: ForecastArgs) -> Result<(), CliError> {
    let ck = data::load_checkpoint(&args.checkpoint)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.checkpoint.display())))?;
    let latents = ck
        .latents
        .as_ref()
        .ok_or_else(|| CliError::Data("checkpoint has no hidden units to forecast from".into()))?;
    let mode = match args.mode.as_str() {
        "expectation" => ForecastMode::Expectation,
        "monte-carlo" | "mc" => ForecastMode::MonteCarlo { samples: args.samples },
        other => return Err(CliError::Config(format!("unknown forecast mode '{other}'"))),
    };
    let mut rng = RngStream::new(args.seed, 0);
    let rates = eval::forecast_next(&ck.hyper, &ck.globals, latents, args.horizon, mode, &mut rng)?;

    ensure_dir(&args.out)?;
    let mut table = String::from("word");
    for h in 1..=args.horizon {
        let _ = write!(table, "\th{h}");
    }
    table.push('\n');
    for (v, row) in rates.rows().into_iter().enumerate() {
        let _ = write!(table, "{v}");
        for r in row {
            let _ = write!(table, "\t{r:?}");
        }
        table.push('\n');
    }
    std::fs::write(args.out.join("forecast.tsv"), table)?;

    if let Some(path) = &args.truth {
        let format = parse_format(&args.format)?;
        let truth = data::load_count_matrix(path, format, DataKind::Count, None)
            .or_else(|_| data::load_count_matrix(path, format, DataKind::Binary, None))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if truth.vocab() != rates.nrows() || truth.steps() < args.horizon {
            return Err(CliError::Data(format!(
                "truth is {}x{}, forecast needs {} rows and at least {} steps",
                truth.vocab(),
                truth.steps(),
                rates.nrows(),
                args.horizon
            )));
        }
        let mut log = MetricLog::create(&args.out)?;
        let m = args.top_m.min(truth.vocab());
        let offset = truth.steps() - args.horizon;
        for h in 0..args.horizon {
            let col = truth.dense_column(offset + h);
            if let Some((pp, _)) = eval::top_m_precision_recall(&rates.column(h).to_vec(), &col, m)? {
                log.record(h as u64 + 1, "pp", pp)?;
                println!("horizon {} pp {pp}", h + 1);
            }
        }
        log.flush()?;
    }
    Ok(())
}
