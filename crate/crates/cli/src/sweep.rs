//! Parameter sweeps over lattice constant and thickness.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use softclamp::dissipation::{fit_scaling, write_scaling_table, ScalingFit, ScalingPoint};

use crate::config::{GeometryConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::RunRecord;
use crate::store::{run_cached, write_text};

pub const WORKERS_ENV: &str = "SOFTCLAMP_WORKERS";
pub const SWEEP_FILE: &str = "sweep.json";
pub const SCALING_FILE: &str = "scaling.txt";

/// Worker count from the environment, falling back to the available cores.
pub fn workers_from_env() -> CliResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub a_um: f64,
    pub h_nm: f64,
    pub config_hash: String,
    pub run_dir: PathBuf,
    /// Failure of this combination; the sweep carries on without it.
    pub error: Option<String>,
    pub points: Vec<ScalingPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub config_hash: String,
    pub entries: Vec<SweepEntry>,
    pub fit: Option<ScalingFit>,
    pub fit_error: Option<String>,
}

impl SweepRecord {
    pub fn points(&self) -> Vec<ScalingPoint> {
        self.entries.iter().flat_map(|e| e.points.iter().cloned()).collect()
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }
}

/// Scaling points of a run: labelled modes of a lattice, every mode of a square.
pub fn scaling_points(record: &RunRecord) -> Vec<ScalingPoint> {
    let a = record.config.length_scale();
    let h = record.config.material.thickness_nm * 1e-9;
    let lattice = matches!(record.config.geometry, GeometryConfig::Lattice(_));
    let mut out: Vec<ScalingPoint> = record
        .modes
        .iter()
        .filter(|m| !lattice || m.label.is_some())
        .filter_map(|m| {
            let label = m.label.clone().unwrap_or_else(|| format!("mode{}", m.index));
            m.q.map(|q| ScalingPoint { a, h, q: q.q, label })
        })
        .collect();
    if out.is_empty() {
        if let Some(o) = &record.oracle {
            out.push(ScalingPoint {
                a,
                h,
                q: o.q,
                label: "square".into(),
            });
        }
    }
    out
}

pub fn sweep_dir(config: &RunConfig) -> PathBuf {
    config.output_dir.join(format!("sweep-{}", &config.hash()[..12]))
}

/// Runs every combination on a pool of `workers` threads. Entries keep the
/// order of [`RunConfig::sweep_points`] whatever the scheduling.
pub fn sweep(config: &RunConfig, workers: usize, force: bool) -> CliResult<(SweepRecord, PathBuf)> {
    config.validate()?;
    let combos = config.sweep_points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    log::info!("sweep: {} combinations on {workers} workers", combos.len());
    let entries: Vec<SweepEntry> = pool.install(|| {
        combos
            .par_iter()
            .map(|&(a_um, h_nm)| {
                let c = config.with_point(a_um, h_nm);
                let mut entry = SweepEntry {
                    a_um,
                    h_nm,
                    config_hash: c.hash(),
                    run_dir: c.run_dir(),
                    error: None,
                    points: Vec::new(),
                };
                match run_cached(&c, force) {
                    Ok((record, _)) => entry.points = scaling_points(&record),
                    Err(e) => {
                        log::error!("a = {a_um} µm, h = {h_nm} nm: {e}");
                        entry.error = Some(e.to_string());
                    }
                }
                entry
            })
            .collect()
    });
    let mut record = SweepRecord {
        config_hash: config.hash(),
        entries,
        fit: None,
        fit_error: None,
    };
    match fit_scaling(&record.points()) {
        Ok(fit) => record.fit = Some(fit),
        Err(e) => record.fit_error = Some(e.to_string()),
    }
    let dir = sweep_dir(config);
    write_sweep(&dir, &record)?;
    Ok((record, dir))
}

pub fn write_sweep(dir: &Path, record: &SweepRecord) -> CliResult<()> {
    let json = serde_json::to_string_pretty(record).map_err(|e| CliError::Plot(e.to_string()))?;
    write_text(&dir.join(SWEEP_FILE), &(json + "\n"))?;
    write_text(&dir.join(SCALING_FILE), &write_scaling_table(&record.points()))
}

pub fn read_sweep(dir: &Path) -> CliResult<SweepRecord> {
    let path = dir.join(SWEEP_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
