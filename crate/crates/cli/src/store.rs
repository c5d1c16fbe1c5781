//! One directory per run: config copy, record, summary, mesh container and
//! columnar tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use softclamp::bloch::to_columns;
use softclamp::container::{self, Container, Field};
use softclamp::fom::format_table;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{execute, RunArtifacts, RunRecord};

pub const RECORD_FILE: &str = "record.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const MESH_FILE: &str = "mesh.txt";
pub const MODES_FILE: &str = "modes.tsv";
pub const BANDS_FILE: &str = "bands.tsv";
pub const DECAY_FILE: &str = "decay.tsv";

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_record(dir: &Path) -> CliResult<RunRecord> {
    let path = dir.join(RECORD_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Runs the pipeline unless a record for the same configuration exists.
/// Returns the record and its directory.
pub fn run_cached(config: &RunConfig, force: bool) -> CliResult<(RunRecord, PathBuf)> {
    let dir = config.run_dir();
    if !force && dir.join(RECORD_FILE).is_file() {
        match read_record(&dir) {
            Ok(record) if record.config_hash == config.hash() => {
                log::info!("reusing {}", dir.display());
                return Ok((record, dir));
            }
            Ok(_) => log::warn!("{} holds a different configuration; recomputing", dir.display()),
            Err(e) => log::warn!("unreadable record in {}: {e}; recomputing", dir.display()),
        }
    }
    let (record, artifacts) = execute(config)?;
    persist(&dir, &record, &artifacts)?;
    Ok((record, dir))
}

pub fn persist(dir: &Path, record: &RunRecord, artifacts: &RunArtifacts) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_text(&dir.join(CONFIG_FILE), &record.config.to_toml())?;
    if let Some(mesh) = &artifacts.mesh {
        let mut c = Container::new(mesh.clone());
        if let Some(stress) = &artifacts.stress {
            c = c.with_field(Field::stress(&stress.sigma));
        }
        for m in &record.modes {
            let name = match &m.label {
                Some(l) => format!("mode_{l}"),
                None => format!("mode_{}", m.index),
            };
            c = c.with_field(Field::nodal(&name, artifacts.modes[m.index].displacement.clone()));
        }
        let path = dir.join(MESH_FILE);
        container::write_file(&path, &c).map_err(|e| CliError::core("persist", e))?;
    }
    if let Some(bands) = &record.bands {
        write_text(&dir.join(BANDS_FILE), &to_columns(bands))?;
    }
    if record.decay.is_some() {
        write_text(&dir.join(DECAY_FILE), &decay_columns(record))?;
    }
    write_text(&dir.join(MODES_FILE), &mode_table(record))?;
    let json = serde_json::to_string_pretty(record).map_err(|e| CliError::Plot(e.to_string()))?;
    write_text(&dir.join(RECORD_FILE), &(json + "\n"))?;
    write_text(&dir.join(SUMMARY_FILE), &summary(record))
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

/// `index label frequency_hz f_times_a localization q qf q_norm eta m_eff_kg az`.
pub fn mode_table(record: &RunRecord) -> String {
    let mut out = String::from(
        "# index\tlabel\tfrequency_hz\tf_times_a_m_s\tlocalization\tq\tqf_hz\tq_norm_per_m\teta\teffective_mass_kg\tazimuthal_sign_changes\n",
    );
    for m in &record.modes {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.9e}\t{:.6}\t{:.5}\t{}\t{}\t{}\t{}\t{:.6e}\t{}",
            m.index,
            m.label.as_deref().unwrap_or("-"),
            m.frequency_hz,
            m.f_times_a,
            m.localization,
            fmt_opt(m.q.map(|q| format!("{:.6e}", q.q))),
            fmt_opt(m.q.map(|q| format!("{:.6e}", q.qf))),
            fmt_opt(m.q.map(|q| format!("{:.6e}", q.q_norm))),
            fmt_opt(m.eta.map(|e| format!("{e:.6}"))),
            m.effective_mass_kg,
            fmt_opt(m.azimuthal_sign_changes),
        );
    }
    out
}

/// `position_m displacement fit`.
pub fn decay_columns(record: &RunRecord) -> String {
    let mut out = String::from("# position_m\tdisplacement\tfit\n");
    if let Some(d) = &record.decay {
        for (s, v) in d.section.position.iter().zip(&d.section.value) {
            let fit = match d.fit {
                Some(f) if *s >= d.min_distance => format!("{:.9e}", f.model(*s)),
                _ => "-".into(),
            };
            let _ = writeln!(out, "{s:.9e}\t{v:.9e}\t{fit}");
        }
    }
    out
}

/// Human-readable run summary.
pub fn summary(record: &RunRecord) -> String {
    let mut out = String::new();
    let c = &record.config;
    let _ = writeln!(out, "softclamp {}  config {}", record.tool_version, &record.config_hash[..12]);
    if let Some(name) = &c.name {
        let _ = writeln!(out, "name: {name}");
    }
    let a = c.length_scale();
    let _ = writeln!(
        out,
        "length scale {:.1} µm, thickness {} nm, prestress {} GPa",
        a * 1e6,
        c.material.thickness_nm,
        c.material.prestress_gpa
    );
    if let Some(m) = &record.mesh {
        let _ = writeln!(
            out,
            "mesh: {} nodes, {} triangles, element size {:.3e} m, min quality {:.3}",
            m.nodes, m.triangles, m.element_size, m.min_quality
        );
    }
    if let Some(s) = &record.stress {
        let _ = writeln!(
            out,
            "stress: principal {:.3}–{:.3} GPa, mean {:.3} GPa, compressive fraction {:.2e}",
            s.min_principal / 1e9,
            s.max_principal / 1e9,
            s.mean_principal / 1e9,
            s.compressive_fraction
        );
    }
    if let Some(g) = record.bands.as_ref().and_then(|b| b.gap) {
        let _ = writeln!(
            out,
            "quasi-gap: {:.4}–{:.4} MHz, centre·a {:.1} m/s, width {:.1}%",
            g.f_low / 1e6,
            g.f_high / 1e6,
            g.center * a,
            100.0 * g.relative_width
        );
    }
    if let Some([lo, hi]) = record.window_hz {
        let _ = writeln!(out, "eigen window: {:.4}–{:.4} MHz", lo / 1e6, hi / 1e6);
    }
    if let Some(o) = &record.oracle {
        let _ = writeln!(
            out,
            "square reference: f {:.4} kHz, λ {:.4e}, Q {:.4e}",
            o.frequency / 1e3,
            o.lambda.unwrap_or(f64::NAN),
            o.q
        );
    }
    if !record.modes.is_empty() {
        let _ = writeln!(out, "\nmodes ({} solved, {} labelled):", record.modes.len(), record.labeled().count());
        let _ = writeln!(out, "{:>5} {:>5} {:>12} {:>9} {:>7} {:>11} {:>11} {:>8}", "#", "label", "f (kHz)", "f·a", "loc", "Q", "Qf (Hz)", "m (ng)");
        for m in &record.modes {
            let _ = writeln!(
                out,
                "{:>5} {:>5} {:>12.3} {:>9.2} {:>7.3} {:>11} {:>11} {:>8.2}",
                m.index,
                m.label.as_deref().unwrap_or(""),
                m.frequency_hz / 1e3,
                m.f_times_a,
                m.localization,
                m.q.map_or("inf".into(), |q| format!("{:.3e}", q.q)),
                m.q.map_or("inf".into(), |q| format!("{:.3e}", q.qf)),
                m.effective_mass_kg * 1e12,
            );
        }
    }
    if let Some(d) = &record.decay {
        match (d.k_over_2pi_a, &d.error) {
            (Some([re, im]), _) => {
                let _ = writeln!(out, "\ndecay of mode {}: k·a/2π = {re:.3} + {im:.3}i", d.label);
            }
            (None, Some(e)) => {
                let _ = writeln!(out, "\ndecay of mode {}: {e}", d.label);
            }
            _ => {}
        }
    }
    for f in &record.fom {
        let _ = writeln!(out, "\nfigures of merit, mode {} (effective mass at the antinode):", f.label);
        out.push_str(&format_table(&f.columns));
    }
    if !record.timings_s.is_empty() {
        let _ = writeln!(out, "\nwall clock:");
        for (stage, t) in &record.timings_s {
            let _ = writeln!(out, "  {stage:<10} {t:>8.2} s");
        }
    }
    out
}
