use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use spikeshot_core::gateway::load_embedding_set;
use spikeshot_core::Split;

use super::classify::{self, embeddings_dir, FusionArgs, FusionEcho};
use super::fewshot::{run_fewshot, AdapterArgs, AdapterEcho};
use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::util::{bridge_commands, emit_report, missing_embeddings, prompt_template};

/// Published top-1 accuracies (percent): zero-shot and 16-shot.
const REFERENCE: [(&str, f64, f64); 2] = [("nmnist", 45.41, 90.40), ("cifar10dvs", 25.31, 60.72)];
const REFERENCE_SHOTS: usize = 16;

/// Compares measured accuracies with the published reference numbers.
///
/// Each dataset directory is an output of `project` with the bridge's
/// embeddings in `<dir>/embeddings`.
#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub nmnist: Option<PathBuf>,
    #[arg(long)]
    pub cifar10dvs: Option<PathBuf>,
    /// Allowed |measured - reference| in percentage points for a PASS row.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// Report path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Row {
    dataset: &'static str,
    setting: String,
    reference: f64,
    measured: f64,
    delta: f64,
    status: &'static str,
}

#[derive(Serialize)]
struct DatasetEcho {
    dataset: &'static str,
    dir: String,
    #[serde(flatten)]
    fusion: FusionEcho,
}

/// Lists what is missing for one dataset directory, with the command that creates it.
fn check_assets(name: &str, dir: Option<&Path>) -> Vec<String> {
    let Some(dir) = dir else {
        return vec![format!(
            "{name}: no directory given; run `spikeshot project --kind {name} --root <download> --out <dir>` \
             and pass --{name} <dir>"
        )];
    };
    let manifest_path = dir.join("manifest.json");
    let manifest = match classify::load_manifest(&manifest_path) {
        Ok(m) => m,
        Err(_) => {
            return vec![format!(
                "{name}: {} missing or invalid; run `spikeshot project --kind {name} --root <download> --out {}`",
                manifest_path.display(),
                dir.display()
            )]
        }
    };
    let embeddings = embeddings_dir(&manifest_path, None);
    let missing = missing_embeddings(&manifest, &embeddings);
    if missing.is_empty() {
        return Vec::new();
    }
    let [text, frames] = bridge_commands(dir, name, &embeddings);
    vec![format!(
        "{name}: {} embedding file(s) missing (first: {}); run the embed step:\n  {text}\n  {frames}",
        missing.len(),
        missing[0].display()
    )]
}

pub fn run(args: &ReproduceArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let dirs = [
        file.pick_opt(args.nmnist.clone(), "nmnist")?,
        file.pick_opt(args.cifar10dvs.clone(), "cifar10dvs")?,
    ];
    let tolerance = file.pick(args.tolerance, "tolerance", 5.0f64)?;
    let normalize = file.pick(args.normalize, "normalize", true)?;
    let workers = file.pick(args.workers, "workers", 0usize)?;

    let problems: Vec<String> = REFERENCE
        .iter()
        .zip(&dirs)
        .flat_map(|((name, _, _), dir)| check_assets(name, dir.as_deref()))
        .collect();
    if !problems.is_empty() {
        return Err(CliError::missing(format!(
            "reproduction assets missing:\n{}\nnote: default prompts are \"{}\" (nmnist) and \"{}\" (cifar10dvs)",
            problems.join("\n"),
            prompt_template("nmnist"),
            prompt_template("cifar10dvs"),
        )));
    }

    let mut rows = Vec::new();
    let mut echoes = Vec::new();
    let mut adapter_echo = None;
    for ((name, zero_ref, few_ref), dir) in REFERENCE.iter().zip(&dirs) {
        let dir = dir.as_deref().expect("checked above");
        let manifest_path = dir.join("manifest.json");
        let manifest = classify::load_manifest(&manifest_path)?;
        let set = load_embedding_set(&manifest, &embeddings_dir(&manifest_path, None), normalize)?;
        let (fusion, echo, _) = classify::resolve_fusion(&args.fusion, &file, &set, workers)?;
        let adapter = AdapterEcho::resolve(&args.adapter, &file, set.dim(), REFERENCE_SHOTS)?;
        let run = run_fewshot(&set, Split::Test, workers, &fusion, &adapter)?;
        for (setting, reference, measured) in [
            ("zero-shot".to_string(), *zero_ref, run.before.accuracy),
            (
                format!("{}-shot", adapter.shots),
                *few_ref,
                run.after.accuracy,
            ),
        ] {
            let measured = 100.0 * measured;
            let delta = measured - reference;
            rows.push(Row {
                dataset: name,
                setting,
                reference,
                measured,
                delta,
                status: if delta.abs() <= tolerance {
                    "PASS"
                } else {
                    "DEVIATES"
                },
            });
        }
        echoes.push(DatasetEcho {
            dataset: name,
            dir: dir.display().to_string(),
            fusion: echo,
        });
        adapter_echo = Some(adapter);
    }

    eprintln!(
        "{:<12} {:<10} {:>9} {:>9} {:>8}  status",
        "dataset", "setting", "reference", "measured", "delta"
    );
    for r in &rows {
        eprintln!(
            "{:<12} {:<10} {:>9.2} {:>9.2} {:>+8.2}  {}",
            r.dataset, r.setting, r.reference, r.measured, r.delta, r.status
        );
    }
    let report = serde_json::json!({
        "command": "reproduce",
        "config": {
            "tolerance": tolerance,
            "normalize": normalize,
            "workers": workers,
            "datasets": echoes,
            "adapter": adapter_echo,
        },
        "rows": rows,
    });
    emit_report(&report, args.out.as_deref())
}
