//! The `tdcedn` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.
//! Diagnostics go to stderr; data goes to files or stdout.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};

use crate::data::{generate_synthetic, load_dataset, load_image, read_manifest};
use crate::error::{Error, Result};
use crate::evaluation::{emit_pr_csv, evaluate_dir, MatchConfig, DEFAULT_THRESHOLDS, DEFAULT_TOLERANCE_FRAC};
use crate::gradcheck::{end_to_end_suite, layer_suite, CheckResult};
use crate::inference::{export_probmap, fuse, import_probmap, predict, DEFAULT_BORDER, DEFAULT_GAMMA};
use crate::layers::Mode;
use crate::network::{load_checkpoint, peek_precision, NetworkConfig, NetworkGraph, Section};
use crate::tensor::{Float, Precision};
use crate::trainer::{load_training_state, prepare_dataset, train, OptimizerState, TrainConfig, TrainOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tdcedn", version, about = "Contour detection with a top-down encoder-decoder network")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network with SGD and write checkpoints plus a loss log
    Train {
        /// Training config file of `key = value` lines
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key (repeatable), e.g. `--set base_lr=1e-3`
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Dataset manifest
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for loss_log.csv and checkpoints
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from a training checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Write one 16-bit probability map per manifest image
    Predict {
        /// Trained network checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Images to predict
        #[arg(long)]
        manifest: PathBuf,
        /// Receives `<id>.pgm` for every manifest entry
        #[arg(long)]
        out_dir: PathBuf,
        /// Edge-replicated padding around each image, cropped after the pass
        #[arg(long, default_value_t = DEFAULT_BORDER)]
        border: usize,
    },
    /// Blend two directories of probability maps: gamma * a + (1 - gamma) * b
    Fuse {
        /// Maps of the first model (e.g. trained on the over-3 consensus)
        #[arg(long)]
        a: PathBuf,
        /// Maps of the second model, matched to `a` by file name
        #[arg(long)]
        b: PathBuf,
        /// Weight of `a`, in [0, 1]
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        /// Receives the fused maps
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score probability maps against annotations (ODS, OIS, AP)
    Eval {
        /// Directory holding `<id>.pgm` maps
        #[arg(long)]
        pred_dir: PathBuf,
        /// Manifest listing each image's annotations
        #[arg(long)]
        manifest: PathBuf,
        /// PR-curve CSV output
        #[arg(long)]
        out: PathBuf,
        /// Match radius as a fraction of the image diagonal
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_FRAC)]
        tolerance_frac: f64,
        /// Number of evenly spaced thresholds in (0, 1)
        #[arg(long, default_value_t = DEFAULT_THRESHOLDS)]
        thresholds: usize,
        /// Score the maps as given, without non-maximum suppression
        #[arg(long)]
        no_nms: bool,
    },
    /// Finite-difference gradient checks of every layer and the full loss
    Gradcheck {
        /// Seed of the random inputs and network
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Skip the end-to-end network checks
        #[arg(long)]
        layers_only: bool,
    },
    /// Print the parameter table, or generate the synthetic dataset
    Inspect {
        /// Checkpoint to describe; the default build is used when absent
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the disk/square/ridge dataset and its manifest here
        #[arg(long, value_name = "DIR")]
        gen_synthetic: Option<PathBuf>,
        /// Side length of generated images
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

pub fn command() -> clap::Command {
    Cli::command()
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            return match e.kind() {
                DisplayHelp | DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let mut out = std::io::stdout().lock();
    match dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Train {
            config,
            overrides,
            manifest,
            out_dir,
            resume,
        } => cmd_train(config.as_deref(), &overrides, &manifest, &out_dir, resume.as_deref(), out),
        Command::Predict {
            checkpoint,
            manifest,
            out_dir,
            border,
        } => match peek_precision(&checkpoint)? {
            Precision::F32 => cmd_predict::<f32>(&checkpoint, &manifest, &out_dir, border),
            Precision::F64 => cmd_predict::<f64>(&checkpoint, &manifest, &out_dir, border),
        },
        Command::Fuse { a, b, gamma, out_dir } => cmd_fuse(&a, &b, gamma, &out_dir),
        Command::Eval {
            pred_dir,
            manifest,
            out: csv,
            tolerance_frac,
            thresholds,
            no_nms,
        } => {
            let cfg = MatchConfig {
                tolerance_frac,
                thresholds,
            };
            cfg.validate()?;
            let (_, s) = evaluate_dir(&pred_dir, &manifest, &cfg, !no_nms)?;
            emit_pr_csv(&s, &csv)?;
            writeln!(out, "ODS {:.6} (threshold {:.2})", s.ods, s.ods_threshold).map_err(stdout_err)?;
            writeln!(out, "OIS {:.6}", s.ois).map_err(stdout_err)?;
            writeln!(out, "AP  {:.6}", s.ap).map_err(stdout_err)?;
            Ok(EXIT_OK)
        }
        Command::Gradcheck { seed, layers_only } => {
            let mut results = layer_suite(seed)?;
            if !layers_only {
                results.extend(end_to_end_suite(seed)?);
            }
            print_checks(&results, out)?;
            Ok(if results.iter().all(CheckResult::passed) {
                EXIT_OK
            } else {
                eprintln!("gradient check failed");
                EXIT_RUNTIME
            })
        }
        Command::Inspect {
            checkpoint,
            gen_synthetic,
            size,
        } => {
            if let Some(dir) = gen_synthetic {
                let m = generate_synthetic(&dir, size)?;
                writeln!(out, "{}", m.display()).map_err(stdout_err)?;
                return Ok(EXIT_OK);
            }
            match checkpoint {
                Some(p) => match peek_precision(&p)? {
                    Precision::F32 => print_table(&load_checkpoint::<f32>(&p)?, out)?,
                    Precision::F64 => print_table(&load_checkpoint::<f64>(&p)?, out)?,
                },
                None => print_table(&NetworkGraph::<f32>::new(NetworkConfig::default(), 0)?, out)?,
            }
            Ok(EXIT_OK)
        }
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn cmd_train(
    config: Option<&Path>,
    overrides: &[String],
    manifest: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut cfg = match config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    let samples = load_dataset(manifest)?;
    let data = prepare_dataset(&samples, &cfg)?;
    let (mut graph, mut state) = match resume {
        Some(p) => load_training_state::<f32>(p)?,
        None => {
            let channels = data[0].image.shape().c;
            let g = NetworkGraph::<f32>::new(cfg.network_config(channels), cfg.seed)?;
            let s = OptimizerState::new(&g);
            (g, s)
        }
    };
    let opts = TrainOptions {
        out_dir: Some(out_dir.to_path_buf()),
        ..TrainOptions::default()
    };
    let log = train(&mut graph, &mut state, &data, &cfg, opts)?;
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        writeln!(
            out,
            "iterations {}..{}  loss {:.6} -> {:.6}",
            first.iter, last.iter, first.total, last.total
        )
        .map_err(stdout_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_predict<T: Float>(checkpoint: &Path, manifest: &Path, out_dir: &Path, border: usize) -> Result<i32> {
    let mut graph = load_checkpoint::<T>(checkpoint)?;
    graph.set_mode(Mode::Infer);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for e in read_manifest(manifest)? {
        let img = load_image(&e.image)?.cast::<T>();
        let map = predict(&graph, &img, border)?;
        export_probmap(&map, &out_dir.join(format!("{}.pgm", e.id)))?;
    }
    Ok(EXIT_OK)
}

fn pgm_names(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pgm"))
        .collect();
    names.sort();
    Ok(names)
}

fn cmd_fuse(a: &Path, b: &Path, gamma: f64, out_dir: &Path) -> Result<i32> {
    let names = pgm_names(a)?;
    if names.is_empty() {
        return Err(Error::invalid("fuse", format!("no .pgm maps in {}", a.display())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for n in names {
        let fused = fuse(&import_probmap(&a.join(&n))?, &import_probmap(&b.join(&n))?, gamma)?;
        export_probmap(&fused, &out_dir.join(&n))?;
    }
    Ok(EXIT_OK)
}

fn print_checks(results: &[CheckResult], out: &mut dyn Write) -> Result<()> {
    let w = results.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    writeln!(out, "{:<w$}  {:>12}  {:>9}  {:>7}  status", "name", "max_rel_err", "tolerance", "entries").map_err(stdout_err)?;
    for r in results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        writeln!(
            out,
            "{:<w$}  {:>12.3e}  {:>9.0e}  {:>7}  {status}",
            r.name, r.max_rel_err, r.tolerance, r.entries
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

fn section_name(s: Section) -> &'static str {
    match s {
        Section::Encoder => "encoder",
        Section::Decoder => "decoder",
        Section::Side => "side",
        Section::Prediction => "prediction",
    }
}

/// Per-tensor table, then per-section subtotals. The encoder subtotal counts
/// convolution weights and biases only.
pub fn print_table<T: Float>(g: &NetworkGraph<T>, out: &mut dyn Write) -> Result<()> {
    let params = g.params();
    let w = params.iter().map(|p| p.name.len()).max().unwrap_or(4);
    writeln!(out, "{:<w$}  {:<10}  {:<16}  {:>10}", "name", "section", "shape", "count").map_err(stdout_err)?;
    for p in &params {
        let d = p.tensor.shape().dims();
        let shape = format!("{}x{}x{}x{}", d[0], d[1], d[2], d[3]);
        writeln!(
            out,
            "{:<w$}  {:<10}  {:<16}  {:>10}",
            p.name,
            section_name(p.section),
            shape,
            p.tensor.len()
        )
        .map_err(stdout_err)?;
    }
    writeln!(out).map_err(stdout_err)?;
    for s in [Section::Encoder, Section::Decoder, Section::Side, Section::Prediction] {
        writeln!(out, "{} conv parameters: {}", section_name(s), g.conv_param_count(s)).map_err(stdout_err)?;
    }
    writeln!(out, "encoder parameters: {}", g.encoder_param_count()).map_err(stdout_err)?;
    writeln!(out, "total parameters: {}", g.param_count()).map_err(stdout_err)?;
    Ok(())
}
