use std::path::Path;

use nnlda_core::SyntheticConfig;
use nnlda_core::corpus::{generate_synthetic, save_corpus_csv, save_corpus_jsonl};

use crate::data::out_file;
use crate::manifest::with_manifest;
use crate::{CliResult, SynthArgs, usage};

enum Format {
    Csv,
    Jsonl,
}

pub fn run(out_dir: &Path, args: SynthArgs) -> CliResult {
    if args.n_docs == 0 {
        return Err(usage("--n-docs must be at least 1"));
    }
    if args.min_len > args.max_len {
        return Err(usage(format!(
            "--min-len {} exceeds --max-len {}",
            args.min_len, args.max_len
        )));
    }
    let format = match args
        .out
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("csv") => Format::Csv,
        Some("jsonl") | Some("ndjson") => Format::Jsonl,
        _ => return Err(usage("--out must end in .csv or .jsonl")),
    };

    let cfg = SyntheticConfig {
        n_docs: args.n_docs,
        seed: args.seed,
        min_len: args.min_len,
        max_len: args.max_len,
    };
    let out = out_file(out_dir, &args.out)?;

    with_manifest(
        out_dir,
        "synth",
        serde_json::to_value(&cfg)?,
        Some(args.seed),
        Vec::new(),
        |manifest| {
            let corpus = generate_synthetic(&cfg)?;
            match format {
                Format::Csv => save_corpus_csv(&corpus, &out)?,
                Format::Jsonl => save_corpus_jsonl(&corpus, &out)?,
            }
            manifest.outputs.push(out.clone());
            println!("wrote {} documents to {}", corpus.docs.len(), out.display());
            Ok(())
        },
    )
}
