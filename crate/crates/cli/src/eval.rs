use std::path::{Path, PathBuf};

use nnlda_core::eval::{
    export_features, grouping_scores, lift_all, log_perplexity, perplexity_stats,
};
use nnlda_core::trainer::checkpoint;
use nnlda_core::{Corpus, TopicModel};
use serde_json::json;

use crate::data::{load, out_file, schema_json};
use crate::manifest::{RunManifest, with_manifest};
use crate::{CliError, CliResult, EvalArgs, Task, usage};

pub fn run(out_dir: &Path, args: EvalArgs) -> CliResult {
    let tasks = args
        .tasks
        .clone()
        .unwrap_or_else(|| vec![Task::Perplexity, Task::Grouping, Task::Features, Task::Lift]);
    let sweep = match (&args.topics_sweep, &args.sweep_checkpoints) {
        (None, None) => None,
        (Some(ks), Some(template)) => {
            if ks.is_empty() {
                return Err(usage("--topics-sweep needs at least one topic count"));
            }
            if !template.contains("{k}") {
                return Err(usage("--sweep-checkpoints must contain `{k}`"));
            }
            let paths: Vec<PathBuf> = ks
                .iter()
                .map(|k| PathBuf::from(template.replace("{k}", &k.to_string())))
                .collect();
            Some((ks.clone(), paths))
        }
        _ => return Err(usage("--topics-sweep and --sweep-checkpoints go together")),
    };

    let model = checkpoint::load_model(&args.model)?;
    let (corpus, schema) = load(&args.data, &args.schema)?;

    let mut inputs = vec![args.model.clone(), args.data.clone()];
    if let Some((_, paths)) = &sweep {
        inputs.extend(paths.iter().cloned());
    }
    let manifest_config = json!({
        "tasks": tasks.iter().map(|t| t.name()).collect::<Vec<_>>(),
        "topics_sweep": args.topics_sweep,
        "sweep_checkpoints": args.sweep_checkpoints,
        "schema": schema_json(&schema),
    });

    with_manifest(out_dir, "eval", manifest_config, None, inputs, |manifest| {
        for task in &tasks {
            match task {
                Task::Perplexity => run_perplexity(out_dir, &model, &corpus, manifest)?,
                Task::Grouping => run_grouping(out_dir, &model, &corpus, manifest)?,
                Task::Features => run_features(out_dir, &model, &corpus, manifest)?,
                Task::Lift => run_lift(out_dir, &corpus, manifest)?,
            }
        }
        if let Some((ks, paths)) = &sweep {
            run_sweep(out_dir, ks, paths, &corpus, manifest)?;
        }
        Ok(())
    })
}

fn run_perplexity(
    out_dir: &Path,
    model: &TopicModel,
    corpus: &Corpus,
    manifest: &mut RunManifest,
) -> CliResult {
    let stats = perplexity_stats(model, corpus)?;
    let path = out_file(out_dir, Path::new("perplexity.json"))?;
    std::fs::write(&path, serde_json::to_string_pretty(&stats)? + "\n")?;
    println!(
        "perplexity: {:.4} per word over {} documents ({} OOV words)",
        stats.log_perplexity, stats.documents, stats.oov_words
    );
    manifest.outputs.push(path);
    Ok(())
}

fn run_grouping(
    out_dir: &Path,
    model: &TopicModel,
    corpus: &Corpus,
    manifest: &mut RunManifest,
) -> CliResult {
    let report = grouping_scores(model, corpus)?;
    let metrics = json!({
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "micro_f1": report.micro_f1,
    });
    let metrics_path = out_file(out_dir, Path::new("grouping.json"))?;
    std::fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&metrics)? + "\n",
    )?;

    let confusion_path = out_file(out_dir, Path::new("confusion.csv"))?;
    let mut writer = csv::Writer::from_path(&confusion_path)?;
    let mut header = vec!["category".to_owned()];
    header.extend((1..=model.num_topics()).map(|i| format!("topic_{i}")));
    writer.write_record(&header)?;
    for (row, category) in report.categories.iter().enumerate() {
        let mut record = vec![category.clone()];
        record.extend(report.confusion.row(row).iter().map(u64::to_string));
        writer.write_record(&record)?;
    }
    writer.flush()?;

    println!(
        "grouping: macro-F1 {:.4}, micro-F1 {:.4}",
        report.macro_f1, report.micro_f1
    );
    manifest.outputs.push(metrics_path);
    manifest.outputs.push(confusion_path);
    Ok(())
}

fn run_features(
    out_dir: &Path,
    model: &TopicModel,
    corpus: &Corpus,
    manifest: &mut RunManifest,
) -> CliResult {
    let path = out_file(out_dir, Path::new("features.csv"))?;
    export_features(model, corpus, &path)?;
    println!("features: {} rows to {}", corpus.docs.len(), path.display());
    manifest.outputs.push(path);
    Ok(())
}

fn run_lift(out_dir: &Path, corpus: &Corpus, manifest: &mut RunManifest) -> CliResult {
    let lifts = lift_all(corpus)?;
    let path = out_file(out_dir, Path::new("lift.csv"))?;
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["doc_id", "lift"])?;
    for (i, lift) in lifts.iter().enumerate() {
        writer.write_record([i.to_string(), lift.to_string()])?;
    }
    writer.flush()?;
    let below = lifts.iter().filter(|&&l| l < 1.0).count();
    println!("lift: {}/{} documents below 1", below, lifts.len());
    manifest.outputs.push(path);
    Ok(())
}

fn run_sweep(
    out_dir: &Path,
    ks: &[usize],
    paths: &[PathBuf],
    corpus: &Corpus,
    manifest: &mut RunManifest,
) -> CliResult {
    let out = out_file(out_dir, Path::new("perplexity_vs_k.csv"))?;
    let mut writer = csv::Writer::from_path(&out)?;
    writer.write_record(["k", "log_perplexity"])?;
    for (&k, path) in ks.iter().zip(paths) {
        let model = checkpoint::load_model(path)?;
        if model.num_topics() != k {
            return Err(CliError::Runtime(anyhow::anyhow!(
                "checkpoint {} has {} topics, sweep row expects {k}",
                path.display(),
                model.num_topics()
            )));
        }
        let perplexity = log_perplexity(&model, corpus)?;
        writer.write_record([k.to_string(), perplexity.to_string()])?;
    }
    writer.flush()?;
    println!(
        "perplexity sweep: {} settings to {}",
        ks.len(),
        out.display()
    );
    manifest.outputs.push(out);
    Ok(())
}
