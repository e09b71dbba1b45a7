use std::fs;
use std::path::PathBuf;

use clap::Args;
use spikeshot_core::event_io::{
    parse_aedat2_with, parse_csv_events, parse_nmnist_bin, write_csv_events, AedatOptions,
    DVS128_SIZE,
};

use crate::error::{CliError, CliResult};
use crate::util::{atomic_write, DatasetKind, OnBitArg};

/// Decodes one recording and writes it as `t,x,y,p` CSV for inspection.
#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub kind: DatasetKind,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Sensor size for csv input.
    #[arg(long)]
    pub width: Option<u16>,
    #[arg(long)]
    pub height: Option<u16>,
    #[arg(long, default_value = "0")]
    pub on_bit: OnBitArg,
}

pub fn run(args: &ConvertArgs) -> CliResult<()> {
    let bytes = fs::read(&args.input)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", args.input.display())))?;
    let stream = match args.kind {
        DatasetKind::Nmnist => parse_nmnist_bin(&bytes),
        DatasetKind::Cifar10Dvs => parse_aedat2_with(
            &bytes,
            AedatOptions {
                on_bit: args.on_bit.into(),
            },
        ),
        DatasetKind::Csv => {
            let text =
                String::from_utf8(bytes).map_err(|_| CliError::input("input is not UTF-8"))?;
            parse_csv_events(
                &text,
                args.width.unwrap_or(DVS128_SIZE),
                args.height.unwrap_or(DVS128_SIZE),
            )
        }
    }
    .map_err(|e| CliError::input(format!("{}: {e}", args.input.display())))?;
    atomic_write(&args.output, write_csv_events(&stream).as_bytes())?;
    eprintln!(
        "{} events, {}x{} sensor -> {}",
        stream.len(),
        stream.width(),
        stream.height(),
        args.output.display()
    );
    Ok(())
}
