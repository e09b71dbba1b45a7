use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use spikeshot_core::gateway::{text_path, visual_path, Manifest};
use spikeshot_core::{OverwritePolicy, Reset, WindowPolicy};

use crate::error::{CliError, CliResult};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io_err =
        |e: std::io::Error| CliError::input(format!("cannot write {}: {e}", path.display()));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(e));
    }
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes a JSON report to `out`, or to stdout when no path is given.
pub fn emit_report<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = to_json(value);
    match out {
        Some(path) => atomic_write(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn display_path(p: &Path) -> String {
    p.display().to_string()
}

/// Runs `f` on a rayon pool with `workers` threads (0 = all cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn prompt_template(dataset: &str) -> &'static str {
    match dataset {
        "nmnist" => "a photo of the number {class}",
        _ => "a photo of a {class}",
    }
}

pub fn classes_path(dir: &Path) -> PathBuf {
    dir.join("classes.txt")
}

/// The two bridge invocations that turn a projected dataset into embeddings.
pub fn bridge_commands(dataset_dir: &Path, dataset: &str, embeddings: &Path) -> [String; 2] {
    let manifest = dataset_dir.join("manifest.json");
    [
        format!(
            "bridge encode-text --classes {} --template \"{}\" --out {}",
            display_path(&classes_path(dataset_dir)),
            prompt_template(dataset),
            display_path(&text_path(embeddings)),
        ),
        format!(
            "bridge encode-frames --manifest {} --out {}",
            display_path(&manifest),
            display_path(embeddings),
        ),
    ]
}

/// Every embedding file the manifest needs that does not exist yet.
pub fn missing_embeddings(manifest: &Manifest, embeddings: &Path) -> Vec<PathBuf> {
    std::iter::once(text_path(embeddings))
        .chain(
            manifest
                .records
                .iter()
                .map(|r| visual_path(embeddings, &r.id)),
        )
        .filter(|p| !p.is_file())
        .collect()
}

pub fn missing_embeddings_error(
    manifest: &Manifest,
    manifest_path: &Path,
    embeddings: &Path,
    missing: &[PathBuf],
) -> CliError {
    const SHOWN: usize = 5;
    let mut msg = format!("{} embedding file(s) missing:", missing.len());
    for p in missing.iter().take(SHOWN) {
        msg.push_str(&format!("\n  {}", p.display()));
    }
    if missing.len() > SHOWN {
        msg.push_str(&format!("\n  ... and {} more", missing.len() - SHOWN));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    msg.push_str("\nrun the embedding step first:");
    for cmd in bridge_commands(dir, &manifest.dataset, embeddings) {
        msg.push_str(&format!("\n  {cmd}"));
    }
    CliError::missing(msg)
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown value {other:?}, expected one of: {}",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($name::$variant => $text),+
                })
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
    };
}

keyword_enum!(DatasetKind { Nmnist => "nmnist", Cifar10Dvs => "cifar10dvs", Csv => "csv" });
keyword_enum!(WindowArg { EqualDuration => "equal-duration", EqualCount => "equal-count" });
keyword_enum!(OverwriteArg { LastEventWins => "last-event-wins", OnDominates => "on-dominates" });
keyword_enum!(ResetArg { Soft => "soft", Hard => "hard" });
keyword_enum!(OnBitArg { Zero => "0", One => "1" });
keyword_enum!(SplitArg { Train => "train", Test => "test" });

impl From<WindowArg> for WindowPolicy {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::EqualDuration => WindowPolicy::EqualDuration,
            WindowArg::EqualCount => WindowPolicy::EqualCount,
        }
    }
}

impl From<OverwriteArg> for OverwritePolicy {
    fn from(o: OverwriteArg) -> Self {
        match o {
            OverwriteArg::LastEventWins => OverwritePolicy::LastEventWins,
            OverwriteArg::OnDominates => OverwritePolicy::OnDominates,
        }
    }
}

impl From<ResetArg> for Reset {
    fn from(r: ResetArg) -> Self {
        match r {
            ResetArg::Soft => Reset::Soft,
            ResetArg::Hard => Reset::Hard,
        }
    }
}

impl From<OnBitArg> for spikeshot_core::event_io::OnBit {
    fn from(b: OnBitArg) -> Self {
        match b {
            OnBitArg::Zero => spikeshot_core::event_io::OnBit::Zero,
            OnBitArg::One => spikeshot_core::event_io::OnBit::One,
        }
    }
}

impl From<SplitArg> for spikeshot_core::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => spikeshot_core::Split::Train,
            SplitArg::Test => spikeshot_core::Split::Test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_parse_case_insensitively() {
        assert_eq!(
            "NMNIST".parse::<DatasetKind>().unwrap(),
            DatasetKind::Nmnist
        );
        assert_eq!(
            "equal-count".parse::<WindowArg>().unwrap(),
            WindowArg::EqualCount
        );
        assert!("sideways".parse::<ResetArg>().is_err());
        assert_eq!(OverwriteArg::OnDominates.to_string(), "on-dominates");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
