use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use softclamp::container::{self, Container, Field, Location};
use softclamp::dissipation::{fit_scaling, parse_scaling_table};
use softclamp::fom::{figures_of_merit, format_table, room_and_cryo};
use softclamp::modal::fit_evanescent;
use softclamp::prestress::stress_stats;

use softclamp_cli::config::{schema, RunConfig};
use softclamp_cli::error::{CliError, CliResult};
use softclamp_cli::pipeline::{execute_with, half_line, stage_bands, stage_mesh, stage_prestress, DECAY_MAX_RMSE};
use softclamp_cli::store::{self, mode_table, read_record, run_cached, summary, write_text};
use softclamp_cli::sweep::{self, read_sweep, workers_from_env, WORKERS_ENV};
use softclamp_cli::plot;

#[derive(Parser)]
#[command(name = "softclamp", version, about = "Soft-clamped phononic-crystal membrane resonators")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Overrides `output_dir` of the configuration.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut c = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.output_dir {
            c.output_dir = dir.clone();
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration without solving anything.
    Validate {
        config: Option<PathBuf>,
        /// Print the JSON schema of the configuration format.
        #[arg(long)]
        print_schema: bool,
    },
    /// Mesh the device and write the mesh container.
    Mesh {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Relax the film stress and write it with the mesh.
    Prestress {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Unit-cell band structure and quasi-gap.
    Bands {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Element size in units of `a`; defaults to the configured unit-cell resolution.
        #[arg(long)]
        element_size_ratio: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Device eigenmodes and their localization.
    Modes {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Quality factors of the device modes.
    Q {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Figures of merit of a single mode at room and cryogenic temperature.
    Fom {
        #[arg(long)]
        frequency_khz: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        mass_ng: f64,
        /// Evaluate at this temperature only instead of the two standard columns.
        #[arg(long)]
        temperature_k: Option<f64>,
        /// Intrinsic-loss reduction applied with `--temperature-k`.
        #[arg(long)]
        q_boost: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Full pipeline for one device; results go to `output_dir/<config hash>`.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Recompute even when a record for this configuration exists.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        no_plots: bool,
    },
    /// Every `(a, h)` combination of the sweep block, then the scaling fit.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Parallel device solves.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Plot data and figures for a run or sweep directory.
    Plot { dir: PathBuf },
    /// Evanescent decay fit of a nodal field along a half-line in a mesh container.
    FitDecay {
        mesh: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long)]
        a_um: f64,
        #[arg(long, default_value_t = 90.0)]
        direction_deg: f64,
        /// Cut origin in µm.
        #[arg(long, value_delimiter = ',', default_value = "0,0")]
        center_um: Vec<f64>,
        /// Ignore samples closer than this to the origin, in units of `a`.
        #[arg(long, default_value_t = 0.0)]
        min_distance_a: f64,
        #[arg(long)]
        json: bool,
    },
    /// Power-law fit `Q ∝ a^p_a h^p_h` of a columnar table.
    FitScaling {
        table: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Plot(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn configure_threads(workers: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        log::debug!("thread pool already configured: {e}");
    }
}

fn default_output(config: &RunConfig, explicit: &Option<PathBuf>, file: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| config.run_dir().join(file))
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Validate { config, print_schema } => {
            if print_schema {
                print!("{}", schema());
            }
            if let Some(path) = config {
                let c = RunConfig::load(&path)?;
                println!("ok {} {}", c.hash(), path.display());
            } else if !print_schema {
                return Err(CliError::Config("nothing to validate".into()));
            }
            Ok(())
        }
        Command::Mesh { cfg, output } => {
            let c = cfg.load()?;
            let (_, m) = stage_mesh(&c)?;
            let path = default_output(&c, &output, store::MESH_FILE);
            write_container(&path, &Container::new(m.clone()))?;
            println!(
                "{} nodes, {} triangles, min quality {:.3} -> {}",
                m.nodes.len(),
                m.triangles.len(),
                m.min_quality(),
                path.display()
            );
            Ok(())
        }
        Command::Prestress { cfg, output } => {
            let c = cfg.load()?;
            let (_, m) = stage_mesh(&c)?;
            let stress = stage_prestress(&c, &m)?;
            let s = stress_stats(&stress);
            let path = default_output(&c, &output, store::MESH_FILE);
            write_container(&path, &Container::new(m).with_field(Field::stress(&stress.sigma)))?;
            println!(
                "principal stress {:.4}–{:.4} GPa, mean {:.4} GPa, compressive fraction {:.2e} -> {}",
                s.min_principal / 1e9,
                s.max_principal / 1e9,
                s.mean_principal / 1e9,
                s.compressive_fraction,
                path.display()
            );
            Ok(())
        }
        Command::Bands {
            cfg,
            element_size_ratio,
            output,
        } => {
            let c = cfg.load()?;
            let ratio = element_size_ratio.unwrap_or(c.solver.unit_cell_element_size_ratio);
            let Some(d) = stage_bands(&c, ratio)? else {
                return Err(CliError::Config("band structure needs a lattice geometry".into()));
            };
            let path = default_output(&c, &output, store::BANDS_FILE);
            write_text(&path, &softclamp::bloch::to_columns(&d))?;
            let a = c.length_scale();
            match d.gap {
                Some(g) => println!(
                    "quasi-gap {:.4}–{:.4} MHz, centre·a {:.1} m/s, relative width {:.1}%, in-plane samples inside {}",
                    g.f_low / 1e6,
                    g.f_high / 1e6,
                    g.center * a,
                    100.0 * g.relative_width,
                    g.in_plane_samples_inside
                ),
                None => println!("no out-of-plane quasi-gap"),
            }
            println!("bands -> {}", path.display());
            Ok(())
        }
        Command::Modes { cfg, output } => {
            let c = cfg.load()?;
            let (record, _) = execute_with(&c, false)?;
            let table = mode_table(&record);
            match output {
                Some(path) => write_text(&path, &table)?,
                None => print!("{table}"),
            }
            Ok(())
        }
        Command::Q { cfg, json } => {
            let c = cfg.load()?;
            let (record, _) = execute_with(&c, false)?;
            if json {
                return print_json(&(&record.modes, &record.oracle));
            }
            if let Some(o) = &record.oracle {
                println!("square reference: f {:.4} kHz, λ {:.4e}, Q {:.4e}", o.frequency / 1e3, o.lambda.unwrap_or(f64::NAN), o.q);
            }
            print!("{}", mode_table(&record));
            Ok(())
        }
        Command::Fom {
            frequency_khz,
            q,
            mass_ng,
            temperature_k,
            q_boost,
            json,
        } => {
            let (f, m) = (frequency_khz * 1e3, mass_ng * 1e-12);
            let columns = match temperature_k {
                Some(t) => vec![figures_of_merit(f, q, m, t, q_boost).map_err(|e| CliError::core("fom", e))?],
                None => room_and_cryo(f, q, m).map_err(|e| CliError::core("fom", e))?.to_vec(),
            };
            if json {
                return print_json(&columns);
            }
            print!("{}", format_table(&columns));
            Ok(())
        }
        Command::Run { cfg, force, no_plots } => {
            let c = cfg.load()?;
            configure_threads(workers_from_env()?);
            let (record, dir) = run_cached(&c, force)?;
            if !no_plots {
                plot::emit_run(&record, &dir)?;
            }
            print!("{}", summary(&record));
            println!("\nresults in {}", dir.display());
            Ok(())
        }
        Command::Sweep { cfg, workers, force } => {
            let c = cfg.load()?;
            let workers = match workers {
                Some(0) => return Err(CliError::Config("--workers must be positive".into())),
                Some(n) => n,
                None => workers_from_env()?,
            };
            let (record, dir) = sweep::sweep(&c, workers, force)?;
            let runs = load_sweep_runs(&record)?;
            plot::emit_sweep(&runs, &dir)?;
            println!("{} combinations, {} failed", record.entries.len(), record.failures());
            match (&record.fit, &record.fit_error) {
                (Some(fit), _) => print_fit(fit),
                (None, Some(e)) => println!("scaling fit: {e}"),
                _ => {}
            }
            println!("results in {}", dir.display());
            Ok(())
        }
        Command::Plot { dir } => {
            let written = if dir.join(sweep::SWEEP_FILE).is_file() {
                let record = read_sweep(&dir)?;
                plot::emit_sweep(&load_sweep_runs(&record)?, &dir)?
            } else {
                plot::emit_run(&read_record(&dir)?, &dir)?
            };
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::FitDecay {
            mesh,
            field,
            a_um,
            direction_deg,
            center_um,
            min_distance_a,
            json,
        } => {
            let c = read_container(&mesh)?;
            let f = c
                .field(&field)
                .filter(|f| f.location == Location::Node && f.components == 1)
                .ok_or_else(|| CliError::Config(format!("{}: no scalar nodal field `{field}`", mesh.display())))?;
            let &[cx, cy] = center_um.as_slice() else {
                return Err(CliError::Config("--center-um takes two values".into()));
            };
            let a = a_um * 1e-6;
            let t = direction_deg.to_radians();
            let section = half_line(&c.mesh, &f.values, [cx * 1e-6, cy * 1e-6], [t.cos(), t.sin()])
                .map_err(|e| CliError::core("fit-decay", e))?;
            let fit = fit_evanescent(&section, min_distance_a * a, a, DECAY_MAX_RMSE)
                .map_err(|e| CliError::core("fit-decay", e))?;
            if json {
                return print_json(&fit);
            }
            println!(
                "k·a/2π = {:.4} + {:.4}i   amplitude {:.4}   rmse {:.3}   samples {}",
                fit.k_re * a / (2.0 * std::f64::consts::PI),
                fit.k_im * a / (2.0 * std::f64::consts::PI),
                fit.amplitude,
                fit.fit_rmse,
                fit.n_samples
            );
            Ok(())
        }
        Command::FitScaling { table, json } => {
            let text = std::fs::read_to_string(&table).map_err(|e| CliError::io(&table, e))?;
            let points = parse_scaling_table(&text).map_err(|e| CliError::core("fit-scaling", e))?;
            let fit = fit_scaling(&points).map_err(|e| CliError::core("fit-scaling", e))?;
            if json {
                return print_json(&fit);
            }
            print_fit(&fit);
            Ok(())
        }
    }
}

fn print_fit(fit: &softclamp::dissipation::ScalingFit) {
    let show = |p: Option<f64>| p.map_or("-".to_string(), |p| format!("{p:.3}"));
    println!(
        "Q ∝ a^{} h^{}   ({} points, rms log residual {:.3})",
        show(fit.p_a),
        show(fit.p_h),
        fit.n_points,
        fit.rms_log_residual
    );
    for (label, c) in &fit.log_prefactors {
        println!("  {label:<10} ln prefactor {c:.4}");
    }
}

fn load_sweep_runs(record: &sweep::SweepRecord) -> CliResult<Vec<softclamp_cli::RunRecord>> {
    record
        .entries
        .iter()
        .filter(|e| e.error.is_none())
        .map(|e| read_record(&e.run_dir))
        .collect()
}

fn write_container(path: &Path, c: &Container) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    container::write_file(path, c).map_err(|e| CliError::core("mesh", e))
}

fn read_container(path: &Path) -> CliResult<Container> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    container::read(&text).map_err(|e| CliError::core("mesh", e))
}
