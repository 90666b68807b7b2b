//! `hsr`: simulate, train, run and score spectral super-resolution from the shell.
//!
//! Failures print one JSON object on stderr and exit with
//! 1 (i/o), 2 (usage or configuration), 3 (format, parse or shape) or 4 (divergence).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hsr_core::gradcheck::{run_suite, GradcheckConfig};
use hsr_core::hqs::{solve_hqs, HqsConfig, Prior};
use hsr_core::io::{read_checkpoint, read_cube, read_srf, write_atomic, write_checkpoint, write_cube, write_srf, RunConfig};
use hsr_core::net::hsrnet_forward;
use hsr_core::presets::{cave_like_srf, wavelength_grid};
use hsr_core::synth::synth_scene;
use hsr_core::train::{history_csv, metrics, train, Dataset, TrainError};
use hsr_core::{DegradationOperator, Error};

#[derive(Parser, Debug)]
#[command(name = "hsr", version, about = "Spectral super-resolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Project a hyperspectral cube to MS bands through an SRF.
    Simulate {
        #[arg(long)]
        hsi: PathBuf,
        #[arg(long)]
        srf: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic hyperspectral scene.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 31)]
        channels: usize,
        #[arg(long, default_value_t = 4)]
        endmembers: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the built-in 3-band RGB-like SRF as CSV.
        #[arg(long)]
        srf_out: Option<PathBuf>,
    },
    /// Train from a JSON run config; writes the best checkpoint and `<out stem>.history.csv`.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an HS cube from an MS cube; output is clamped to [0, 1].
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        msi: PathBuf,
        #[arg(long)]
        srf: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a reconstruction against a reference cube.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Write the report here; printed to stdout otherwise.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Classical HQS reconstruction; writes the cube and `<out stem>.trace.csv`.
    Hqs {
        #[arg(long)]
        msi: PathBuf,
        #[arg(long)]
        srf: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = PriorArg::Identity)]
        prior: PriorArg,
        /// Number of HS bands to reconstruct, evenly spaced over [from-nm, to-nm].
        #[arg(long, default_value_t = 31)]
        hs_bands: usize,
        #[arg(long, default_value_t = 400.0)]
        from_nm: f32,
        #[arg(long, default_value_t = 700.0)]
        to_nm: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every primitive and a two-stage network.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PriorArg {
    Identity,
    Smoothing,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Config(_) => (2, "config"),
            Error::Format { .. } => (3, "format"),
            Error::Parse { .. } => (3, "parse"),
            Error::InvalidShape(_) => (3, "shape"),
            Error::DegenerateBand { .. } | Error::DegenerateSrf(_) | Error::InsufficientBands(_) => (3, "srf"),
            Error::Divergence(_) => (4, "divergence"),
            Error::Contract(_) => (1, "internal"),
            Error::Io(_) => (1, "io"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

/// Runs a reader and names the file in any error it reports.
fn load<T>(read: fn(&Path) -> hsr_core::Result<T>, path: &Path) -> Result<T, Failure> {
    read(path).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { hsi, srf, out } => {
            let x = load(read_cube, &hsi)?;
            let wl = x
                .wavelengths_nm()
                .ok_or_else(|| Error::format("wavelengths", "HSI cube carries no band wavelengths"))?;
            let phi = DegradationOperator::from_srf(&load(read_srf, &srf)?, wl)?;
            write_cube(&out, &phi.apply(&x)?)?;
        }
        Command::Synth {
            seed,
            width,
            height,
            channels,
            endmembers,
            out,
            srf_out,
        } => {
            let cube = synth_scene(seed, width, height, channels, endmembers)?;
            write_cube(&out, &cube)?;
            if let Some(p) = srf_out {
                write_srf(&p, &cave_like_srf())?;
            }
        }
        Command::Train { config, out } => {
            let (cfg, unknown) = load(RunConfig::load, &config)?;
            for key in unknown {
                log::warn!("ignoring unknown config key `{key}`");
            }
            let base = config.parent().unwrap_or(Path::new("."));
            let run = cfg.prepare(base)?;
            log::info!(
                "training on {} scenes, {} held out, {} parameters",
                run.train_pairs.len(),
                run.eval_pairs.len(),
                hsr_core::net::param_shapes(&run.hsrnet).iter().map(|(_, s)| s.iter().product::<usize>()).sum::<usize>()
            );
            let data = Dataset {
                train: &run.train_pairs,
                eval: &run.eval_pairs,
            };
            let history_path = sibling(&out, "history.csv");
            match train(data, &run.hsrnet, &run.train, &run.loss, run.loss_kind) {
                Ok(outcome) => {
                    write_checkpoint(&out, &run.hsrnet, &outcome.params)?;
                    write_atomic(&history_path, history_csv(&outcome.history).as_bytes())?;
                    log::info!("best step {}", outcome.best_step);
                }
                Err(TrainError::Diverged { step, history, .. }) => {
                    write_atomic(&history_path, history_csv(&history).as_bytes())?;
                    return Err(Error::Divergence(format!("training loss became non-finite at step {step}")).into());
                }
                Err(TrainError::Other(e)) => return Err(e.into()),
            }
        }
        Command::Infer { model, msi, srf, out } => {
            let ck = load(read_checkpoint, &model)?;
            let y = load(read_cube, &msi)?;
            let srf = load(read_srf, &srf)?;
            if srf.num_bands() != ck.config.ms_channels {
                return Err(Error::shape(format!(
                    "SRF has {} bands, model expects {}",
                    srf.num_bands(),
                    ck.config.ms_channels
                ))
                .into());
            }
            if let Some(wl) = &ck.config.hs_wavelengths_nm {
                // the SRF must at least cover the model's HS grid
                DegradationOperator::from_srf(&srf, wl)?;
            }
            let x = hsrnet_forward(&y, &ck.config, &ck.params)?;
            write_cube(&out, &x.map(|v| v.clamp(0.0, 1.0)))?;
        }
        Command::Eval { reference, test, json } => {
            let report = metrics(&load(read_cube, &test)?, &load(read_cube, &reference)?)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match json {
                Some(p) => write_atomic(&p, format!("{text}\n").as_bytes())?,
                None => println!("{text}"),
            }
        }
        Command::Hqs {
            msi,
            srf,
            epsilon,
            mu,
            lambda,
            iters,
            tol,
            prior,
            hs_bands,
            from_nm,
            to_nm,
            out,
        } => {
            if hs_bands < 2 || !(from_nm < to_nm) {
                return Err(Error::Config(format!(
                    "need hs-bands >= 2 and from-nm < to-nm, got {hs_bands}, {from_nm}, {to_nm}"
                ))
                .into());
            }
            let y = load(read_cube, &msi)?;
            let phi = DegradationOperator::from_srf(&load(read_srf, &srf)?, &wavelength_grid(from_nm, to_nm, hs_bands))?;
            let cfg = HqsConfig {
                epsilon,
                mu,
                lambda,
                max_iters: iters,
                tol,
                prior: match prior {
                    PriorArg::Identity => Prior::Identity,
                    PriorArg::Smoothing => Prior::SpatialSpectralSmoothing,
                },
            };
            let outcome = solve_hqs(&y, &phi, &cfg)?;
            let mut trace = String::from("iter,fidelity,update_norm\n");
            for r in &outcome.trace {
                trace.push_str(&format!("{},{:e},{:e}\n", r.iter, r.fidelity, r.update_norm));
            }
            write_cube(&out, &outcome.x)?;
            write_atomic(&sibling(&out, "trace.csv"), trace.as_bytes())?;
            log::info!("{} iterations, converged: {}", outcome.trace.len(), outcome.converged);
        }
        Command::Gradcheck { seed } => {
            let report = run_suite(&GradcheckConfig {
                seed,
                ..GradcheckConfig::default()
            })?;
            for r in &report.results {
                println!(
                    "{:<20} {} checked {:>3} skipped {:>2} max rel err {:.3e}",
                    r.name,
                    if r.passed { "ok  " } else { "FAIL" },
                    r.checked,
                    r.skipped,
                    r.max_rel_err
                );
            }
            println!("elapsed {:.2} s", report.elapsed.as_secs_f64());
            if !report.passed() {
                return Err(Failure {
                    code: 1,
                    kind: "gradcheck",
                    message: "finite-difference check failed".into(),
                });
            }
        }
    }
    Ok(())
}

fn emit(f: &Failure) -> ExitCode {
    let line = serde_json::json!({ "error": f.kind, "exit_code": f.code, "message": f.message });
    eprintln!("{line}");
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let summary: Vec<&str> = message
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            return emit(&Failure {
                code: 2,
                kind: "usage",
                message: summary.join(" ").trim_start_matches("error: ").to_string(),
            });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => emit(&f),
    }
}
