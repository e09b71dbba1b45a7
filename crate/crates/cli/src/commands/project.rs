use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use spikeshot_core::event_io::{
    parse_aedat2_with, parse_csv_events, parse_nmnist_bin, AedatOptions, DVS128_SIZE,
    NMNIST_HEIGHT, NMNIST_WIDTH,
};
use spikeshot_core::gateway::{Manifest, Record};
use spikeshot_core::projection::{project, write_framestack};
use spikeshot_core::{EventStream, ProjectionConfig, Split};
use walkdir::WalkDir;

use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::util::{
    atomic_write, bridge_commands, classes_path, to_json, DatasetKind, OnBitArg, OverwriteArg,
    WindowArg,
};

/// Share of each class held out for testing when the dataset has no split directories.
const TEST_EVERY: usize = 10;

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Dataset root: `<root>/<split>/<class>/<file>` or `<root>/<class>/<file>`.
    #[arg(long)]
    pub root: PathBuf,
    /// nmnist, cifar10dvs or csv.
    #[arg(long)]
    pub kind: Option<DatasetKind>,
    /// Output directory for frames/, manifest.json and classes.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timesteps: Option<usize>,
    /// equal-duration or equal-count.
    #[arg(long)]
    pub window: Option<WindowArg>,
    /// last-event-wins or on-dominates.
    #[arg(long)]
    pub overwrite: Option<OverwriteArg>,
    /// Sensor width for csv recordings.
    #[arg(long)]
    pub width: Option<u16>,
    /// Sensor height for csv recordings.
    #[arg(long)]
    pub height: Option<u16>,
    /// Value of AEDAT address bit 0 that marks an ON event.
    #[arg(long)]
    pub on_bit: Option<OnBitArg>,
    /// Dataset name written to the manifest (defaults to the kind).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct ProjectConfig {
    root: String,
    kind: DatasetKind,
    out: String,
    timesteps: usize,
    window: WindowArg,
    overwrite: OverwriteArg,
    width: u16,
    height: u16,
    on_bit: OnBitArg,
    name: String,
    workers: usize,
}

#[derive(Serialize)]
struct ProjectReport<'a> {
    command: &'static str,
    config: &'a ProjectConfig,
    classes: &'a [String],
    records: usize,
    train: usize,
    test: usize,
    bridge: [String; 2],
}

struct Source {
    path: PathBuf,
    id: String,
    label: usize,
    split: Split,
}

fn extension(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Nmnist => "bin",
        DatasetKind::Cifar10Dvs => "aedat",
        DatasetKind::Csv => "csv",
    }
}

fn split_dir(name: &str) -> Option<Split> {
    match name.to_ascii_lowercase().as_str() {
        "train" => Some(Split::Train),
        "test" => Some(Split::Test),
        _ => None,
    }
}

/// Finds recordings, assigns class indices (sorted class names) and splits.
fn discover(root: &Path, kind: DatasetKind) -> CliResult<(Vec<String>, Vec<Source>)> {
    let ext = extension(kind);
    // (split, class, stem, path)
    let mut found: Vec<(Option<Split>, String, String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::input(format!("cannot read dataset: {e}")))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let rel = path.strip_prefix(root).expect("walkdir stays under root");
        let parts: Vec<String> = rel
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect();
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match parts.as_slice() {
            [split, class, _] if split_dir(split).is_some() => {
                found.push((split_dir(split), class.clone(), stem, path.to_owned()))
            }
            [class, _] => found.push((None, class.clone(), stem, path.to_owned())),
            _ => {
                return Err(CliError::input(format!(
                    "{} is not at <root>/[<split>/]<class>/<file>.{ext}",
                    path.display()
                )))
            }
        }
    }
    if found.is_empty() {
        return Err(CliError::input(format!(
            "no .{ext} recordings under {}",
            root.display()
        )));
    }

    let classes: Vec<String> = {
        let mut c: Vec<String> = found.iter().map(|f| f.1.clone()).collect();
        c.sort();
        c.dedup();
        c
    };
    // Unsplit classes: the last tenth of each class (in file-name order) is test.
    let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
    for f in found.iter().filter(|f| f.0.is_none()) {
        *per_class.entry(f.1.as_str()).or_default() += 1;
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut sources = Vec::with_capacity(found.len());
    for (split, class, stem, path) in &found {
        let split = split.unwrap_or_else(|| {
            let n = per_class[class.as_str()];
            let i = seen.entry(class.clone()).or_default();
            *i += 1;
            if *i > n - n / TEST_EVERY {
                Split::Test
            } else {
                Split::Train
            }
        });
        let split_name = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        sources.push(Source {
            path: path.clone(),
            id: format!("{split_name}/{class}/{stem}"),
            label: classes.binary_search(class).expect("class collected above"),
            split,
        });
    }
    sources.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sources.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(CliError::input(format!(
            "two recordings map to id {}",
            w[0].id
        )));
    }
    Ok((classes, sources))
}

fn parse(cfg: &ProjectConfig, path: &Path) -> CliResult<EventStream> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let stream = match cfg.kind {
        DatasetKind::Nmnist => parse_nmnist_bin(&bytes),
        DatasetKind::Cifar10Dvs => parse_aedat2_with(
            &bytes,
            AedatOptions {
                on_bit: cfg.on_bit.into(),
            },
        ),
        DatasetKind::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::input(format!("{} is not UTF-8", path.display())))?;
            parse_csv_events(&text, cfg.width, cfg.height)
        }
    };
    stream.map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn resolve(args: &ProjectArgs) -> CliResult<ProjectConfig> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let kind = file
        .pick_opt(args.kind, "kind")?
        .ok_or_else(|| CliError::config("--kind is required (nmnist, cifar10dvs or csv)"))?;
    let timesteps = file.pick(args.timesteps, "timesteps", 1usize)?;
    if timesteps == 0 {
        return Err(CliError::config("timesteps must be at least 1"));
    }
    let (default_w, default_h) = match kind {
        DatasetKind::Nmnist => (Some(NMNIST_WIDTH), Some(NMNIST_HEIGHT)),
        DatasetKind::Cifar10Dvs => (Some(DVS128_SIZE), Some(DVS128_SIZE)),
        DatasetKind::Csv => (None, None),
    };
    let width = file.pick_opt(args.width, "width")?.or(default_w);
    let height = file.pick_opt(args.height, "height")?.or(default_h);
    let (Some(width), Some(height)) = (width, height) else {
        return Err(CliError::config("csv recordings need --width and --height"));
    };
    Ok(ProjectConfig {
        root: args.root.display().to_string(),
        kind,
        out: args.out.display().to_string(),
        timesteps,
        window: file.pick(args.window, "window", WindowArg::EqualDuration)?,
        overwrite: file.pick(args.overwrite, "overwrite", OverwriteArg::LastEventWins)?,
        width,
        height,
        on_bit: file.pick(args.on_bit, "on_bit", OnBitArg::Zero)?,
        name: file.pick(args.name.clone(), "name", kind.to_string())?,
        workers: file.pick(args.workers, "workers", 0usize)?,
    })
}

/// Removes the files written by a failed run and any directories it left empty.
fn clean_up(out: &Path, written: &[PathBuf]) {
    for p in written {
        let _ = fs::remove_file(p);
        let mut dir = p.parent();
        while let Some(d) = dir.filter(|d| d.starts_with(out)) {
            if fs::remove_dir(d).is_err() {
                break;
            }
            dir = d.parent();
        }
    }
}

pub fn run(args: &ProjectArgs) -> CliResult<()> {
    let cfg = resolve(args)?;
    if !args.root.is_dir() {
        return Err(CliError::input(format!(
            "cannot read dataset root {}",
            args.root.display()
        )));
    }
    let (classes, sources) = discover(&args.root, cfg.kind)?;
    info!(
        "projecting {} recordings from {} classes",
        sources.len(),
        classes.len()
    );

    let projection = ProjectionConfig::new(cfg.timesteps)
        .with_window(cfg.window.into())
        .with_overwrite(cfg.overwrite.into());
    let out = args.out.as_path();
    let out_existed = out.exists();
    let results: Vec<CliResult<PathBuf>> = crate::util::with_workers(cfg.workers, || {
        sources
            .par_iter()
            .map(|s| {
                let stream = parse(&cfg, &s.path)?;
                let frames =
                    project(&stream, &projection).map_err(|e| CliError::config(e.to_string()))?;
                let dest = out.join("frames").join(format!("{}.ncfs", s.id));
                atomic_write(&dest, &write_framestack(&frames))?;
                Ok(dest)
            })
            .collect()
    })?;

    let mut written = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(p) => written.push(p),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(err) = first_err {
        clean_up(out, &written);
        if !out_existed {
            let _ = fs::remove_dir(out);
        }
        return Err(err);
    }

    let manifest = Manifest {
        dataset: cfg.name.clone(),
        classes: classes.clone(),
        timesteps: cfg.timesteps,
        dim: None,
        sensor: Some([cfg.width, cfg.height]),
        records: sources
            .iter()
            .map(|s| Record {
                id: s.id.clone(),
                label: s.label,
                split: s.split,
                frames: Some(format!("frames/{}.ncfs", s.id)),
            })
            .collect(),
    };
    manifest.validate()?;
    let mut classes_txt = classes.join("\n");
    classes_txt.push('\n');
    let embeddings = out.join("embeddings");
    let bridge = bridge_commands(out, &cfg.name, &embeddings);
    let report = ProjectReport {
        command: "project",
        config: &cfg,
        classes: &classes,
        records: sources.len(),
        train: sources.iter().filter(|s| s.split == Split::Train).count(),
        test: sources.iter().filter(|s| s.split == Split::Test).count(),
        bridge: bridge.clone(),
    };
    atomic_write(&classes_path(out), classes_txt.as_bytes())?;
    atomic_write(&out.join("project.json"), to_json(&report).as_bytes())?;
    atomic_write(&out.join("manifest.json"), manifest.to_json().as_bytes())?;

    eprintln!(
        "wrote {} frame stacks and {}",
        sources.len(),
        out.join("manifest.json").display()
    );
    eprintln!("next, compute embeddings with:");
    for cmd in bridge {
        println!("{cmd}");
    }
    Ok(())
}
