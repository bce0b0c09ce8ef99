use std::path::Path;

use nnlda_core::eval::generate_comment;
use nnlda_core::trainer::checkpoint;
use serde_json::json;

use crate::manifest::with_manifest;
use crate::{CliResult, GenerateArgs, usage};

pub fn run(out_dir: &Path, args: GenerateArgs) -> CliResult {
    if args.n_words == 0 {
        return Err(usage("--n-words must be at least 1"));
    }
    let mut pairs = Vec::with_capacity(args.side.len());
    for raw in &args.side {
        let (column, value) = raw
            .split_once('=')
            .ok_or_else(|| usage(format!("--side takes COLUMN=VALUE, got `{raw}`")))?;
        pairs.push((column.trim().to_owned(), value.trim().to_owned()));
    }

    let manifest_config = json!({
        "side": pairs.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
        "n_words": args.n_words,
    });
    with_manifest(
        out_dir,
        "generate",
        manifest_config,
        None,
        vec![args.model.clone()],
        |_| {
            let model = checkpoint::load_model(&args.model)?;

            let columns = &model.side.columns;
            let mut values: Vec<Option<&str>> = vec![None; columns.len()];
            for (column, value) in &pairs {
                let slot = columns
                    .iter()
                    .position(|c| &c.name == column)
                    .ok_or_else(|| {
                        let known: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
                        usage(format!(
                            "unknown side column `{column}` (model has: {})",
                            known.join(", ")
                        ))
                    })?;
                if values[slot].is_some() {
                    return Err(usage(format!("--side column `{column}` given twice")));
                }
                values[slot] = Some(value);
            }
            let missing: Vec<&str> = columns
                .iter()
                .zip(&values)
                .filter(|(_, v)| v.is_none())
                .map(|(c, _)| c.name.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(usage(format!(
                    "missing --side for column(s): {}",
                    missing.join(", ")
                )));
            }

            let values: Vec<&str> = values.into_iter().map(|v| v.expect("all filled")).collect();
            let side = model.side.encode(&values)?;
            if model.prior.side_dim().is_none() && !pairs.is_empty() {
                eprintln!("warning: fixed-prior model ignores side data");
            }
            let words = generate_comment(&model, &side, args.n_words)?;
            println!("{}", words.join(" "));
            Ok(())
        },
    )
}
