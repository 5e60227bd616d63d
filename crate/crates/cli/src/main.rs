use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use simm_core::io::{
    config_to_text, decode_state, parse_config, peek_config, read_checkpoint_bytes,
    save_checkpoint, world_hash, write_frame, FrameMode, FrameSpec, MetricsWriter,
};
use simm_core::{
    MetricsRecord, Observer, Precision, RunOptions, Scalar, Simulation, State, StepLedger,
};

#[derive(Parser)]
#[command(name = "simm", version, about = "Lattice simulator of self-replicating recurrent cells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Continue a run from a checkpoint.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Render one frame from a checkpoint.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: FrameMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
    },
    /// Print the state digest stored in a checkpoint.
    Hash {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    out: PathBuf,
    /// 0 disables frames.
    #[arg(long, default_value_t = 100)]
    frames_every: u64,
    /// Comma-separated frame modes.
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "weights-rgb")]
    frame_modes: Vec<FrameMode>,
    /// 0 checkpoints only at the end of the run.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
    #[arg(long, default_value_t = 1)]
    metrics_every: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_mode(s: &str) -> Result<FrameMode, String> {
    s.parse()
}

struct Files {
    out: PathBuf,
    metrics: MetricsWriter,
    modes: Vec<FrameMode>,
}

impl<S: Scalar> Observer<S> for Files {
    fn on_ledger(&mut self, _ledger: &StepLedger) -> simm_core::Result<()> {
        Ok(())
    }

    fn on_metrics(&mut self, record: &MetricsRecord) -> simm_core::Result<()> {
        self.metrics.push(record)?;
        if self.metrics.rows().is_multiple_of(100) {
            self.metrics.flush()?;
        }
        Ok(())
    }

    fn on_frame(&mut self, state: &State<S>) -> simm_core::Result<()> {
        for &mode in &self.modes {
            let path = self
                .out
                .join("frames")
                .join(format!("step_{:08}_{}.png", state.step(), mode));
            write_frame(state, &FrameSpec::for_state(mode, state), &path)?;
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &State<S>) -> simm_core::Result<()> {
        let path = self
            .out
            .join("checkpoints")
            .join(format!("step_{:08}.simm", state.step()));
        save_checkpoint(state, &path)?;
        self.metrics.flush()
    }
}

fn drive<S: Scalar>(state: State<S>, args: &RunArgs, stop: Arc<AtomicBool>) -> anyhow::Result<()> {
    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cfg = state.config().clone();
    let text = config_to_text(&cfg);
    std::fs::write(out.join("config.effective"), &text)
        .with_context(|| format!("writing {}", out.join("config.effective").display()))?;

    let n_c = if cfg.variant == simm_core::Variant::Particles { 0 } else { cfg.n_c };
    let mut files = Files {
        out: out.clone(),
        metrics: MetricsWriter::new(out.join("metrics.csv"), n_c)?,
        modes: args.frame_modes.clone(),
    };
    let mut sim = Simulation::from_state(state);
    if let Some(t) = args.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        sim = sim.with_threads(t)?;
    }
    let nonzero = |k: u64| (k > 0).then_some(k);
    let opts = RunOptions {
        steps: args.steps,
        metrics_every: args.metrics_every.max(1),
        frames_every: nonzero(args.frames_every),
        checkpoint_every: nonzero(args.checkpoint_every),
        final_checkpoint: true,
        stop: Some(stop),
    };
    let summary = sim.run(&opts, &mut files)?;
    files.metrics.flush()?;
    if summary.stopped {
        eprintln!("stopped at step {}", sim.step_index());
    }
    println!("step {} hash {:016x}", sim.step_index(), sim.hash());
    Ok(())
}

fn load_and<R>(
    path: &Path,
    f64_path: impl FnOnce(State<f64>) -> anyhow::Result<R>,
    f32_path: impl FnOnce(State<f32>) -> anyhow::Result<R>,
) -> anyhow::Result<R> {
    let bytes = read_checkpoint_bytes(path)?;
    match peek_config(&bytes, path)?.precision {
        Precision::F64 => f64_path(decode_state(&bytes, path)?),
        Precision::F32 => f32_path(decode_state(&bytes, path)?),
    }
}

fn render<S: Scalar>(
    state: State<S>,
    mode: FrameMode,
    lo: Option<f64>,
    hi: Option<f64>,
    out: &Path,
) -> anyhow::Result<()> {
    let mut spec = FrameSpec::for_state(mode, &state);
    spec.lo = lo.unwrap_or(spec.lo);
    spec.hi = hi.unwrap_or(spec.hi);
    write_frame(&state, &spec, out)?;
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let stop = Arc::new(AtomicBool::new(false));
    match cli.command {
        Command::Run { config, seed, run } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg =
                parse_config(&text).with_context(|| format!("in {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            install_stop(&stop)?;
            match cfg.precision {
                Precision::F64 => drive(State::<f64>::new(cfg)?, &run, stop),
                Precision::F32 => drive(State::<f32>::new(cfg)?, &run, stop),
            }
        }
        Command::Resume { checkpoint, run } => {
            install_stop(&stop)?;
            let s2 = stop.clone();
            load_and(
                &checkpoint,
                |s| drive(s, &run, stop),
                |s| drive(s, &run, s2),
            )
        }
        Command::Render {
            checkpoint,
            mode,
            out,
            lo,
            hi,
        } => load_and(
            &checkpoint,
            |s| render(s, mode, lo, hi, &out),
            |s| render(s, mode, lo, hi, &out),
        ),
        Command::Hash { checkpoint } => {
            let digest = load_and(
                &checkpoint,
                |s| Ok(world_hash(&s)),
                |s| Ok(world_hash(&s)),
            )?;
            println!("{digest:016x}");
            Ok(())
        }
    }
}

fn install_stop(stop: &Arc<AtomicBool>) -> anyhow::Result<()> {
    let flag = stop.clone();
    ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
        .context("installing the interrupt handler")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
