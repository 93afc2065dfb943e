//! Command-line interface: argument definitions and command bodies.
//!
//! Settings resolve as defaults, then `--config`, then `--set KEY=VALUE`,
//! then the dedicated flags (`--seed`, `--precision`).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{ExperimentConfig, KEYS};
use crate::data::{
    bench_variants, cross_csv, cross_setting_eval, load_dataset, make_dataset, save_magnitude_png, save_mask_png,
    sweep_csv, sweep_iterations, write_dataset, Dataset, Split, VARIANTS,
};
use crate::gradcheck::{rows_csv, run_all};
use crate::mask::{make_lowpass_mask, make_vd_line_mask, make_vd_mask};
use crate::scalar::{Precision, Real};
use crate::unrolled::{load_checkpoint, reconstruct, save_checkpoint, DcMode, UnrolledModel};
use crate::{mtf, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "modl", version, about = "Unrolled CNN + conjugate-gradient reconstruction")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Shared {
    /// Experiment config file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "f32|f64")]
    pub precision: Option<Precision>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic phantom dataset.
    Dataset,
    /// Generate a sampling mask.
    MaskGen(MaskGenArgs),
    /// Train a network and write a checkpoint plus metrics.
    Train(TrainArgs),
    /// Reconstruct dataset records with a trained checkpoint.
    Recon(ReconArgs),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Finite-difference gradient checks; exits nonzero on any failure.
    Gradcheck,
}

#[derive(Args, Debug)]
pub struct MaskGenArgs {
    #[arg(long, num_args = 2, value_names = ["H", "W"], required = true)]
    pub shape: Vec<usize>,
    #[arg(long, default_value_t = 4.0)]
    pub accel: f64,
    /// Centered low-pass block instead of a random mask.
    #[arg(long, num_args = 2, value_names = ["KH", "KW"])]
    pub lowpass: Option<Vec<usize>>,
    /// Fully sampled phase-encode lines instead of 2-D random points.
    #[arg(long)]
    pub lines: bool,
}

#[derive(Args, Debug)]
pub struct DataArg {
    /// Dataset directory; generated in memory from the config when omitted.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArg,
}

#[derive(Args, Debug)]
pub struct ReconArgs {
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Reconstruct only this record id.
    #[arg(long)]
    pub id: Option<usize>,
    /// Unroll for this many iterations instead of the checkpoint's K.
    #[arg(long = "iters")]
    pub k: Option<usize>,
    /// Also write `x_k`, `N_w(x_k)` and `z_k` for every iteration.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    /// Compare the four variants and the zero-filled baseline.
    Variants(DataArg),
    /// PSNR against the number of unrolled iterations.
    Sweep(SweepArgs),
    /// Evaluate one checkpoint across sampling settings.
    Cross(CrossArgs),
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    pub ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "cg,sd")]
    pub modes: Vec<DcMode>,
}

#[derive(Args, Debug)]
pub struct CrossArgs {
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
    pub accels: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["KH", "KW"])]
    pub lowpass: Option<Vec<usize>>,
    /// Skip PNG export.
    #[arg(long)]
    pub no_png: bool,
}

fn keys_help() -> String {
    let mut s = String::from("Config keys:\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<14} {d}\n"));
    }
    s
}

/// The clap command with the config-key listing attached to every subcommand.
pub fn command() -> clap::Command {
    fn attach(c: clap::Command, help: &str) -> clap::Command {
        let c = c.after_help(help.to_string());
        let names: Vec<String> = c.get_subcommands().map(|s| s.get_name().to_string()).collect();
        names
            .into_iter()
            .fold(c, |c, n| c.mut_subcommand(n, |s| attach(s, help)))
    }
    attach(Cli::command(), &keys_help())
}

/// Resolves the experiment config from the shared flags.
pub fn resolve_config(shared: &Shared) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = &shared.config {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        cfg.apply_text(&text)?;
    }
    for kv in &shared.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    if let Some(p) = shared.precision {
        cfg.precision = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn dataset<T: Real>(cfg: &ExperimentConfig, arg: &DataArg) -> Result<Dataset<T>> {
    match &arg.data {
        Some(dir) => load_dataset(dir),
        None => make_dataset(&cfg.dataset_spec()),
    }
}

pub fn cmd_dataset(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let m = write_dataset(out, &cfg.dataset_spec())?;
    println!("wrote {} samples to {}", m.entries.len(), out.display());
    Ok(())
}

pub fn cmd_mask_gen(cfg: &ExperimentConfig, args: &MaskGenArgs, out: &Path) -> Result<()> {
    let (h, w) = (args.shape[0], args.shape[1]);
    let mask = match &args.lowpass {
        Some(b) => make_lowpass_mask(h, w, b[0], b[1])?,
        None if args.lines => make_vd_line_mask(h, w, args.accel, cfg.seed)?,
        None => make_vd_mask(h, w, args.accel, cfg.seed)?,
    };
    mkdir(out)?;
    mtf::save(&mask.to_tensor(), out.join("mask.mtf"))?;
    save_mask_png(&mask, out.join("mask.png"))?;
    println!(
        "mask {h}x{w}: {} samples, acceleration {:.3}",
        mask.count(),
        (h * w) as f64 / mask.count() as f64
    );
    Ok(())
}

pub fn cmd_train<T: Real>(cfg: &ExperimentConfig, args: &TrainArgs, out: &Path) -> Result<()> {
    let ds = dataset::<T>(cfg, &args.data)?;
    let model = UnrolledModel::<T>::new(cfg.k, cfg.variant()?, cfg.arch()?, cfg.seed, cfg.cg()?)?;
    let mut opts = cfg.train_options();
    opts.monitor_dc = true;
    let rep = crate::unrolled::train(model, &ds.train, &ds.val, &opts)?;
    mkdir(out)?;
    save_checkpoint(out.join("checkpoint"), &rep.model, Some(&rep.adam))?;
    write(&out.join("metrics.csv"), &rep.metrics_csv())?;
    write(&out.join("config.txt"), &cfg.dump())?;
    write(
        &out.join("dc_monitor.txt"),
        &format!(
            "checks = {}\nviolations = {}\nworst_relative_increase = {}\n",
            rep.dc.checks, rep.dc.violations, rep.dc.worst_relative_increase
        ),
    )?;
    if let Some(m) = rep.metrics.last() {
        println!("epoch {} loss {:.6} val_psnr {:.3} dB", m.epoch, m.loss, m.val_psnr);
    }
    match rep.aborted {
        Some(why) => Err(Error::Numeric(format!(
            "training aborted (last good state saved): {why}"
        ))),
        None => Ok(()),
    }
}

pub fn cmd_recon<T: Real>(cfg: &ExperimentConfig, args: &ReconArgs, out: &Path) -> Result<()> {
    let (model, _) = load_checkpoint::<T>(&args.checkpoint)?;
    let ds = dataset::<T>(cfg, &args.data)?;
    let split: Split = args.split.parse()?;
    let ids: Vec<usize> = ds.records(split).map(|r| r.id).collect();
    let samples = ds.samples(split);
    let chosen: Vec<usize> = match args.id {
        Some(id) => vec![ids
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| Error::Parameter(format!("record {id} is not in the {split} split")))?],
        None => (0..ids.len()).collect(),
    };
    mkdir(out)?;
    for i in chosen {
        let (s, id) = (&samples[i], ids[i]);
        let (x, trace) = reconstruct(&model, &s.problem, args.k, args.trace)?;
        mtf::save(&x, out.join(format!("{id:05}_recon.mtf")))?;
        save_magnitude_png(&x, out.join(format!("{id:05}_recon.png")))?;
        println!("record {id}: psnr {:.3} dB", crate::data::psnr(&x, &s.target)?);
        if let Some(trace) = trace {
            let dir = out.join(format!("{id:05}_trace"));
            mkdir(&dir)?;
            for (n, t) in trace.iter().enumerate() {
                for (name, img) in [("x", &t.x), ("noise", &t.noise), ("z", &t.z)] {
                    let stem = format!("iter{:02}_{name}", n + 1);
                    mtf::save(img, dir.join(format!("{stem}.mtf")))?;
                    save_magnitude_png(img, dir.join(format!("{stem}.png")))?;
                }
            }
        }
    }
    Ok(())
}

pub fn cmd_bench<T: Real>(cfg: &ExperimentConfig, cmd: &BenchCommand, out: &Path) -> Result<()> {
    mkdir(out)?;
    match cmd {
        BenchCommand::Variants(data) => {
            let ds = dataset::<T>(cfg, data)?;
            let (rep, _) = bench_variants(cfg, &ds, &VARIANTS, vec![])?;
            write(&out.join("bench_variants.csv"), &rep.csv())?;
            write(&out.join("bench_variants_samples.csv"), &rep.per_sample_csv())?;
            for r in rep.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{}: {}", r.method, r.error.as_deref().unwrap_or_default());
            }
            print!("{}", rep.csv());
        }
        BenchCommand::Sweep(a) => {
            let ds = dataset::<T>(cfg, &a.data)?;
            let rows = sweep_iterations(&a.ks, &a.modes, cfg, &ds, |_, _| None)?;
            write(&out.join("sweep.csv"), &sweep_csv(&rows))?;
            print!("{}", sweep_csv(&rows));
        }
        BenchCommand::Cross(a) => {
            let (model, _) = load_checkpoint::<T>(&a.checkpoint)?;
            let ds = dataset::<T>(cfg, &a.data)?;
            let lp = a.lowpass.as_ref().map(|v| (v[0], v[1]));
            let png = (!a.no_png).then(|| out.join("png"));
            let rows = cross_setting_eval(&model, &ds, &a.accels, lp, png.as_deref())?;
            write(&out.join("cross.csv"), &cross_csv(&rows))?;
            print!("{}", cross_csv(&rows));
        }
    }
    Ok(())
}

/// Returns whether every row passed.
pub fn cmd_gradcheck(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let rows = run_all(cfg.seed)?;
    mkdir(out)?;
    write(&out.join("gradcheck.csv"), &rows_csv(&rows))?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!("FAIL {} {} max_rel_err {:e}", r.component, r.param, r.max_rel_err);
    }
    println!("gradcheck: {} rows, {} failed", rows.len(), failed.len());
    Ok(failed.is_empty())
}

fn dispatch<T: Real>(cfg: &ExperimentConfig, cli: &Cli) -> Result<bool> {
    let out = &cli.shared.out;
    match &cli.command {
        Command::Dataset => cmd_dataset(cfg, out)?,
        Command::MaskGen(a) => cmd_mask_gen(cfg, a, out)?,
        Command::Train(a) => cmd_train::<T>(cfg, a, out)?,
        Command::Recon(a) => cmd_recon::<T>(cfg, a, out)?,
        Command::Bench(b) => cmd_bench::<T>(cfg, b, out)?,
        Command::Gradcheck => return cmd_gradcheck(cfg, out),
    }
    Ok(true)
}

/// Executes a parsed command line. Returns `Ok(false)` when a check failed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let cfg = resolve_config(&cli.shared)?;
    if cli.shared.dump_config {
        print!("{}", cfg.dump());
        return Ok(true);
    }
    let run = || match cfg.precision {
        Precision::F32 => dispatch::<f32>(&cfg, cli),
        Precision::F64 => dispatch::<f64>(&cfg, cli),
    };
    match cli.shared.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .use_current_thread()
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Full entry point: parses `args` and returns the process exit code
/// (0 success, 1 failed check or runtime error, 2 usage or config error).
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match command()
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn help_lists_every_key() {
        let mut c = command();
        let sub = c.find_subcommand_mut("train").unwrap();
        let help = sub.render_help().to_string();
        for (k, _) in KEYS {
            assert!(help.contains(k), "{k} missing from help");
        }
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "seed = 3\nK = 4\n").unwrap();
        let cli = Cli::try_parse_from([
            "modl",
            "--config",
            p.to_str().unwrap(),
            "--seed",
            "9",
            "--set",
            "K=2",
            "--precision",
            "f64",
            "gradcheck",
        ])
        .unwrap();
        let cfg = resolve_config(&cli.shared).unwrap();
        assert_eq!((cfg.seed, cfg.k, cfg.precision), (9, 2, Precision::F64));
    }

    #[test]
    fn bad_key_is_usage_error() {
        let code = main_with_args(["modl", "--set", "kk=1", "--dump-config", "gradcheck"]);
        assert_eq!(code, 2);
    }
}
