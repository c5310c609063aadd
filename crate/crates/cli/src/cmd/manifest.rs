use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde_json::json;
use svcforge::corpus::{
    compose_training_set, manifest_to_jsonl, read_manifest, reference_manifest, TrainingSetSpec,
};

use crate::util::{usage, CliResult, Outputs};

#[derive(Debug, Subcommand)]
pub enum ManifestCommand {
    /// Filter a manifest by a training-set spec and total its hours.
    Compose(ComposeArgs),
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Built-in spec: v1_sing_en, v2_ssmix_en, v3_sing_langmix or final.
    #[arg(long, conflicts_with = "spec_file")]
    spec: Option<String>,
    /// JSON spec `{name, include: [{dataset?, language?, kind?}]}`.
    #[arg(long)]
    spec_file: Option<PathBuf>,
    /// JSON-Lines manifest; defaults to the bundled reference manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the selected entries here (JSON Lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(c: ManifestCommand) -> CliResult<serde_json::Value> {
    let ManifestCommand::Compose(a) = c;
    let spec = match (&a.spec, &a.spec_file) {
        (Some(name), None) => TrainingSetSpec::canonical(name)?,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| crate::util::CliError::Data(format!("{}: {e}", p.display())))?;
            TrainingSetSpec::from_json(&text)?
        }
        _ => return Err(usage("give exactly one of --spec or --spec-file")),
    };
    let manifest = match &a.manifest {
        Some(p) => read_manifest(p)?,
        None => reference_manifest(),
    };
    let (picked, hours) = compose_training_set(&manifest, &spec)?;
    let mut written = Vec::new();
    if let Some(out) = &a.out {
        let mut o = Outputs::default();
        o.add(out.clone(), manifest_to_jsonl(&picked)?.into_bytes());
        written = o.commit()?;
    }
    let mut datasets: Vec<&str> = picked.iter().map(|e| e.dataset.as_str()).collect();
    datasets.dedup();
    Ok(json!({
        "command": "manifest compose",
        "spec": spec.name,
        "entries": picked.len(),
        "datasets": datasets,
        "hours": (hours * 100.0).round() / 100.0,
        "hours_exact": hours,
        "written": written,
    }))
}
