use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nearfield_secrecy::channel::{ChannelModel, PolarLocation};
use nearfield_secrecy::harness::{self, output, Linspace, SpectrumGrid, SystemConfig};
use nearfield_secrecy::{Error, Result};

/// Secure near-field hybrid beamforming experiments.
#[derive(Parser)]
#[command(name = "nfsec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo run of one configuration.
    Run(Common),
    /// Secrecy capacity versus transmit power budget.
    SweepPmax {
        #[command(flatten)]
        common: Common,
        /// Comma-separated budgets in dBm.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-20,-15,-10,-5,0")]
        pmax_dbm: Vec<f64>,
    },
    /// Secrecy capacity versus eavesdropper location.
    SweepEve {
        #[command(flatten)]
        common: Common,
        /// Channel model; defaults to the config's.
        #[arg(long)]
        model: Option<ChannelModel>,
        /// Eavesdropper distances, start:stop:count in meters.
        #[arg(long, allow_hyphen_values = true, default_value = "1:30:30")]
        distances: Linspace,
        /// Eavesdropper angles, start:stop:count in degrees.
        #[arg(long, allow_hyphen_values = true, default_value = "45")]
        angles_deg: Linspace,
    },
    /// Normalized received-power map of one optimized design.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Grid distances, start:stop:count in meters.
        #[arg(long, allow_hyphen_values = true, default_value = "1:30:59")]
        distances: Linspace,
        /// Grid angles, start:stop:count in degrees.
        #[arg(long, allow_hyphen_values = true, default_value = "0:80:81")]
        angles_deg: Linspace,
    },
    /// Convergence traces and final beamformers of a single trial.
    Trace(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the preset is used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration: desk or paper.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Output file suffix; defaults to `seed<seed>`.
    #[arg(long)]
    tag: Option<String>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

struct Context {
    config: SystemConfig,
    out: PathBuf,
    tag: String,
    svg: bool,
}

impl Common {
    fn resolve(self) -> Result<Context> {
        let mut config = match &self.config {
            Some(path) => SystemConfig::load(path)?,
            None => SystemConfig::preset(&self.preset)?,
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        config.validate()?;
        std::fs::create_dir_all(&self.out)?;
        let tag = self.tag.unwrap_or_else(|| format!("seed{}", config.seed));
        if tag.is_empty() || tag.contains(['/', '\\']) {
            return Err(Error::Argument(format!("invalid tag '{tag}'")));
        }
        Ok(Context {
            config,
            out: self.out,
            tag,
            svg: self.svg,
        })
    }
}

impl Context {
    fn write(&self, command: &str, suffix: &str, ext: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(format!("{command}_{}{suffix}.{ext}", self.tag));
        std::fs::write(&path, contents)?;
        Ok(path)
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let ctx = common.resolve()?;
            let report = harness::run_scenario(&ctx.config)?;
            for (name, s) in [("fully-digital", &report.fully_digital), ("hybrid", &report.hybrid)] {
                println!(
                    "{name}: C_s = {:.4} ± {:.4} bits/s/Hz ({} non-converged)",
                    s.mean_c_s, s.std_c_s, s.nonconverged
                );
            }
            report_written(&[
                ctx.write("run", "", "csv", &output::scenario_summary_csv(&report))?,
                ctx.write("run", "_trials", "csv", &output::scenario_trials_csv(&report))?,
            ]);
        }
        Command::SweepPmax { common, pmax_dbm } => {
            let ctx = common.resolve()?;
            let points = harness::sweep_pmax(&ctx.config, &pmax_dbm)?;
            let mut written = vec![ctx.write("sweep-pmax", "", "csv", &output::pmax_sweep_csv(&points))?];
            if ctx.svg {
                let x: Vec<f64> = points.iter().map(|p| p.p_max_dbm).collect();
                let svg = output::line_svg(
                    "Secrecy capacity versus power budget",
                    "P_max (dBm)",
                    "C_s (bits/s/Hz)",
                    &x,
                    &[
                        ("fully digital", points.iter().map(|p| p.report.fully_digital.mean_c_s).collect()),
                        ("hybrid", points.iter().map(|p| p.report.hybrid.mean_c_s).collect()),
                    ],
                );
                written.push(ctx.write("sweep-pmax", "", "svg", &svg)?);
            }
            report_written(&written);
        }
        Command::SweepEve {
            common,
            model,
            distances,
            angles_deg,
        } => {
            let ctx = common.resolve()?;
            let model = model.unwrap_or(ctx.config.channel_model);
            let grid = distances
                .values()
                .into_iter()
                .flat_map(|d| angles_deg.values().into_iter().map(move |a| PolarLocation::from_degrees(d, a)))
                .collect::<Result<Vec<_>>>()?;
            let points = harness::sweep_eve_location(&ctx.config, &grid, model)?;
            let mut written = vec![ctx.write("sweep-eve", "", "csv", &output::eve_sweep_csv(&points))?];
            if ctx.svg {
                let x: Vec<f64> = points.iter().map(|p| p.location.distance).collect();
                let svg = output::line_svg(
                    "Secrecy capacity versus eavesdropper distance",
                    "E distance (m)",
                    "C_s (bits/s/Hz)",
                    &x,
                    &[
                        ("fully digital", points.iter().map(|p| p.report.fully_digital.mean_c_s).collect()),
                        ("hybrid", points.iter().map(|p| p.report.hybrid.mean_c_s).collect()),
                    ],
                );
                written.push(ctx.write("sweep-eve", "", "svg", &svg)?);
            }
            report_written(&written);
        }
        Command::Spectrum {
            common,
            distances,
            angles_deg,
        } => {
            let ctx = common.resolve()?;
            let map = harness::spectrum_map(
                &ctx.config,
                &SpectrumGrid {
                    distance: distances,
                    angle_deg: angles_deg,
                },
            )?;
            let peak = map.points[map.peak_index()].location;
            println!(
                "peak at {:.3} m, {:.3} deg",
                peak.distance,
                peak.azimuth.to_degrees()
            );
            let mut written = vec![ctx.write("spectrum", "", "csv", &output::spectrum_csv(&map))?];
            if ctx.svg {
                written.push(ctx.write("spectrum", "", "svg", &output::spectrum_svg(&map))?);
            }
            report_written(&written);
        }
        Command::Trace(common) => {
            let ctx = common.resolve()?;
            let trace = harness::convergence_trace(&ctx.config)?;
            let mut written = vec![
                ctx.write("trace", "", "csv", &output::convergence_csv(&trace))?,
                ctx.write("trace", "_bcd", "csv", &output::bcd_trace_csv(&trace.fd.trace))?,
                ctx.write("trace", "_w_fd", "csv", &output::matrix_csv(&trace.fd.w_fd))?,
                ctx.write("trace", "_p", "csv", &output::matrix_csv(&trace.ao.beamformer.p))?,
                ctx.write("trace", "_w", "csv", &output::matrix_csv(&trace.ao.beamformer.w))?,
                ctx.write("trace", "_hybrid", "json", &output::hybrid_metadata_json(&trace.ao))?,
            ];
            if ctx.svg {
                let x: Vec<f64> = trace.fd.trace.iter().map(|t| t.iteration as f64).collect();
                let bcd = output::line_svg(
                    "Stage I convergence",
                    "iteration",
                    "C_s (bits/s/Hz)",
                    &x,
                    &[("fully digital", trace.fd.trace.iter().map(|t| t.c_s).collect())],
                );
                written.push(ctx.write("trace", "_bcd", "svg", &bcd)?);
                let x: Vec<f64> = trace.ao.trace.iter().map(|t| t.iteration as f64).collect();
                let ao = output::line_svg(
                    "Stage II convergence",
                    "iteration",
                    "D_E",
                    &x,
                    &[("beam similarity", trace.ao.trace.iter().map(|t| t.residual).collect())],
                );
                written.push(ctx.write("trace", "_ao", "svg", &ao)?);
            }
            report_written(&written);
        }
    }
    Ok(())
}

fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
