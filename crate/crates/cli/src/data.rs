//! Shared helpers for corpus loading and output placement.

use std::path::{Path, PathBuf};

use anyhow::Context;
use nnlda_core::corpus::load_corpus;
use nnlda_core::{Corpus, CorpusSchema};

use crate::{CliError, SchemaArgs};

/// Joins an output path onto the run directory (absolute paths pass
/// through) and makes sure its parent directory exists.
pub fn out_file(out_dir: &Path, path: &Path) -> Result<PathBuf, CliError> {
    let full = if path.is_absolute() {
        path.to_owned()
    } else {
        out_dir.join(path)
    };
    if let Some(parent) = full.parent()
        && !parent.as_os_str().is_empty()
    {
        std::fs::create_dir_all(parent)?;
    }
    Ok(full)
}

/// Resolves the column mapping for a corpus file. For CSV, the label and
/// category columns default to `label`/`category` when the header has
/// them, so files written by `synth` load without extra flags.
pub fn resolve_schema(data: &Path, args: &SchemaArgs) -> Result<CorpusSchema, CliError> {
    let mut schema = CorpusSchema {
        text: args.text_column.clone(),
        side: args.side_columns.clone(),
        label: args.label_column.clone(),
        category: args.category_column.clone(),
    };
    let is_csv = data
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut reader =
            csv::Reader::from_path(data).with_context(|| format!("open {}", data.display()))?;
        let headers: Vec<String> = reader
            .headers()
            .context("read CSV header")?
            .iter()
            .map(str::to_owned)
            .collect();
        let present = |name: &str| headers.iter().any(|h| h == name);
        if schema.label.is_none() && present("label") {
            schema.label = Some("label".into());
        }
        if schema.category.is_none() && present("category") {
            schema.category = Some("category".into());
        }
    }
    Ok(schema)
}

pub fn load(data: &Path, args: &SchemaArgs) -> Result<(Corpus, CorpusSchema), CliError> {
    let schema = resolve_schema(data, args)?;
    let corpus = load_corpus(data, &schema)?;
    Ok((corpus, schema))
}

pub fn schema_json(schema: &CorpusSchema) -> serde_json::Value {
    serde_json::json!({
        "text": schema.text,
        "side": schema.side,
        "label": schema.label,
        "category": schema.category,
    })
}
