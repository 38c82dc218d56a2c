use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icgnet::harness::{self, AblationGrid, Checkpoint, RunConfig, TrainData};
use icgnet::synthgen::{generate_dataset, io};
use icgnet::teacher::{export_teacher_records, DetectorKind, TeacherConfig};
use icgnet::Error;

#[derive(Parser)]
#[command(name = "icg", version, about = "Stereo training with distilled geometric supervision")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic stereo scenes into a dataset directory.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `scene.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write per-sample metrics as CSV.
        #[arg(long)]
        per_sample: Option<PathBuf>,
    },
    /// Train every arm of an ablation grid and report medians over seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// `components` or `depth`.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
    /// Run the teacher over a dataset directory and store its records.
    TeacherExport {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "oracle")]
        detector: String,
        #[arg(long, default_value = "oracle")]
        matcher: String,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_report(dir: &Path, name: &str, text: &str) -> icgnet::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cmd: Cmd) -> icgnet::Result<()> {
    match cmd {
        Cmd::GenData { config, count, out, seed } => {
            let mut scene = RunConfig::load(&config)?.scene;
            if let Some(s) = seed {
                scene.seed = s;
            }
            let samples = generate_dataset(&scene, count)?;
            io::write_dataset(&out, &samples)?;
            println!("wrote {count} samples to {}", out.display());
        }
        Cmd::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let report = harness::train(&cfg)?;
            if let Some(r) = report.log.last() {
                println!("step {}: total loss {:.6}", r.step, r.total);
            }
            if let Some((step, s)) = report.validation.last() {
                println!("validation at step {step}: {s}");
            }
        }
        Cmd::Eval { ckpt, data, per_sample } => {
            let ck = Checkpoint::load(&ckpt)?;
            let samples = io::read_dataset(&data)?;
            let m = harness::evaluate(&ck, &samples)?;
            println!("{}", m.overall);
            if let Some(path) = per_sample {
                std::fs::write(path, m.per_sample_csv())?;
            }
        }
        Cmd::Ablate { config, grid, seeds } => {
            let cfg = RunConfig::load(&config)?;
            let grid: AblationGrid = grid.parse()?;
            let mut data = TrainData::load(&cfg)?;
            let report = harness::run_ablation(&cfg, grid, seeds, &mut data)?;
            let md = report.to_markdown();
            print!("{md}");
            if cfg.output.write_files {
                write_report(&cfg.output.dir, "ablation.csv", &report.to_csv())?;
                write_report(&cfg.output.dir, "ablation.md", &md)?;
            }
        }
        Cmd::TeacherExport { data, detector, matcher, tau, out } => {
            if matcher != "oracle" {
                return Err(Error::Config(format!("unknown matcher `{matcher}` (only `oracle` is available)")));
            }
            let mut cfg = TeacherConfig {
                detector: detector.parse::<DetectorKind>()?,
                ..Default::default()
            };
            if let Some(t) = tau {
                cfg.tau = t;
            }
            cfg.validate()?;
            let samples = io::read_dataset(&data)?;
            let n = export_teacher_records(&samples, &cfg, &out)?;
            println!("wrote {n} teacher records to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::NonFinite { .. } => 3,
                _ => 1,
            })
        }
    }
}
