use std::path::Path;

use nnlda_core::trainer::{checkpoint, fit, write_elbo_trace};
use nnlda_core::{AdamConfig, PriorKind, TrainConfig};
use serde_json::json;

use crate::data::{load, out_file, schema_json};
use crate::manifest::with_manifest;
use crate::{CliResult, TrainArgs, usage};

pub fn run(out_dir: &Path, args: TrainArgs) -> CliResult {
    let config = TrainConfig {
        num_topics: args.topics,
        prior: args.prior.kind(),
        fixed_alpha: args.hyper.fixed_alpha,
        max_iterations: args.hyper.max_iterations,
        tolerance: args.hyper.tolerance,
        seed: args.seed,
        adam: AdamConfig {
            learning_rate: args.hyper.learning_rate,
            beta1: args.hyper.adam_beta1,
            beta2: args.hyper.adam_beta2,
            epsilon: args.hyper.adam_epsilon,
            weight_decay: args.hyper.weight_decay,
            batch_size: args.hyper.batch_size,
        },
        gamma_steps_per_em: args.hyper.gamma_steps,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;

    let (corpus, schema) = load(&args.data, &args.schema)?;
    if config.prior == PriorKind::Fixed && corpus.side_dim() > 0 {
        eprintln!(
            "warning: --prior lda ignores the {} side column(s) in {}",
            corpus.side.columns.len(),
            args.data.display()
        );
    }

    let checkpoint_path = out_file(out_dir, &args.checkpoint)?;
    let trace_path = out_file(out_dir, &args.trace)?;
    let manifest_config = json!({ "train": config, "schema": schema_json(&schema) });

    with_manifest(
        out_dir,
        "train",
        manifest_config,
        Some(args.seed),
        vec![args.data.clone()],
        |manifest| {
            let (model, report) = fit(&corpus, &config)?;
            checkpoint::save_model(&checkpoint_path, &model)?;
            write_elbo_trace(&trace_path, &report.elbo_trace)?;
            manifest.outputs.push(checkpoint_path.clone());
            manifest.outputs.push(trace_path.clone());
            println!(
                "{} iterations ({}), final ELBO {:.4}, {:.2}s",
                report.iterations,
                if report.converged {
                    "converged"
                } else {
                    "iteration cap"
                },
                report.elbo_trace.last().copied().unwrap_or(f64::NAN),
                report.seconds
            );
            println!("checkpoint {}", checkpoint_path.display());
            println!("trace {}", trace_path.display());
            Ok(())
        },
    )
}
