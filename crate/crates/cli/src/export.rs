use std::fmt::Write as _;

use dpgds::data;
use dpgds::model;

use crate::error::CliError;
use crate::output::ensure_dir;
use crate::ExportArgs;

/// Terms kept in a topic listing: those above this share of the topic's
/// largest weight.
const TERM_THRESHOLD: f64 = 0.01;

/// Indices and weights of the terms that survive the threshold, heaviest
/// first.
pub fn significant_terms(weights: &[f64]) -> Vec<(usize, f64)> {
    let max = weights.iter().cloned().fold(0.0, f64::max);
    let mut out: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > TERM_THRESHOLD * max)
        .map(|(i, &w)| (i, w))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

pub fn run(args: ExportArgs) -> Result<(), CliError> {
    let ck = data::load_checkpoint(&args.checkpoint)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.checkpoint.display())))?;
    let vocab: Option<Vec<String>> = match &args.vocab {
        Some(p) => Some(std::fs::read_to_string(p)?.lines().map(str::to_string).collect()),
        None => None,
    };
    if let Some(v) = &vocab {
        if v.len() != ck.hyper.vocab {
            return Err(CliError::Data(format!("vocabulary has {} terms, model has {}", v.len(), ck.hyper.vocab)));
        }
    }
    let term = |i: usize| vocab.as_ref().map_or_else(|| i.to_string(), |v| v[i].clone());
    ensure_dir(&args.out)?;
    let g = &ck.globals;

    for l in 0..g.depth() {
        let mut topics = String::from("topic\tterm\tweight\n");
        for k in 0..ck.hyper.layers[l] {
            let w = model::project_topic(g, l, k)?;
            for (i, weight) in significant_terms(w.as_slice().expect("contiguous")) {
                let _ = writeln!(topics, "{k}\t{}\t{weight:?}", term(i));
            }
        }
        std::fs::write(args.out.join(format!("topics_layer{}.tsv", l + 1)), topics)?;

        if let Some(lat) = &ck.latents {
            let th = &lat.theta[l];
            let mut traj = String::from("topic");
            for t in 0..th.ncols() {
                let _ = write!(traj, "\tt{t}");
            }
            traj.push('\n');
            for (k, row) in th.rows().into_iter().enumerate() {
                let _ = write!(traj, "{k}");
                for v in row {
                    let _ = write!(traj, "\t{v:?}");
                }
                traj.push('\n');
            }
            std::fs::write(args.out.join(format!("theta_layer{}.tsv", l + 1)), traj)?;
        }

        // heaviest topics by total activation, or by ν without hidden units
        let weight: Vec<f64> = match &ck.latents {
            Some(lat) => lat.theta[l].rows().into_iter().map(|r| r.sum()).collect(),
            None => g.nu[l].to_vec(),
        };
        let mut order: Vec<usize> = (0..weight.len()).collect();
        order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]).then(a.cmp(&b)));
        order.truncate(args.top_topics.max(1));
        let mut pi = String::from("to\\from");
        for &k in &order {
            let _ = write!(pi, "\t{k}");
        }
        pi.push('\n');
        for &i in &order {
            let _ = write!(pi, "{i}");
            for &j in &order {
                let _ = write!(pi, "\t{:?}", g.pi[l][(i, j)]);
            }
            pi.push('\n');
        }
        std::fs::write(args.out.join(format!("pi_layer{}.tsv", l + 1)), pi)?;
    }
    Ok(())
}
