//! Plot data (tab-separated columns) and static SVG figures. Every plotted
//! number is read from a run or sweep record.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use softclamp::dissipation::QReport;
use softclamp::fom::{qf_threshold, ROOM_TEMPERATURE};

use crate::error::{CliError, CliResult};
use crate::pipeline::RunRecord;
use crate::store::write_text;

/// `Q·f` ceiling of crystalline silicon set by phonon-phonon damping (Hz).
pub const SILICON_QF_LIMIT: f64 = 3e13;

const SIZE: (u32, u32) = (800, 560);

fn plot_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Plot(e.to_string())
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = 0.05 * (hi - lo).abs().max(hi.abs() * 1e-3).max(1e-30);
    (lo - pad, hi + pad)
}

fn log_span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (hi > 0.0).then(|| (lo / 2.0, hi * 2.0))
}

/// Writes every figure the record supports into `dir`; returns the files written.
pub fn emit_run(record: &RunRecord, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    if let Some(bands) = &record.bands {
        let path = dir.join("bands.svg");
        bands_svg(record, bands, &path)?;
        written.push(path);
    }
    if record.decay.is_some() {
        let path = dir.join("decay.svg");
        decay_svg(record, &path)?;
        written.push(path);
    }
    let points: Vec<(String, f64, f64)> = record
        .modes
        .iter()
        .filter_map(|m| m.q.map(|q| (m.label.clone().unwrap_or_else(|| format!("#{}", m.index)), m.frequency_hz, q.q)))
        .collect();
    if !points.is_empty() {
        let tsv = dir.join("q_vs_f.tsv");
        write_text(&tsv, &q_vs_f_columns(&points))?;
        let path = dir.join("q_vs_f.svg");
        q_vs_f_svg(&points, &path)?;
        written.extend([tsv, path]);
    }
    Ok(written)
}

/// Figures of a sweep: `Q` against frequency and the normalized `Q·h/a²`
/// against `a`, one series per thickness.
pub fn emit_sweep(runs: &[RunRecord], dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut qf = Vec::new();
    let mut collapse = String::from("# a_m\th_m\tlabel\tq\tq_norm_per_m\tfrequency_hz\n");
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for run in runs {
        let a = run.config.length_scale();
        let h = run.config.material.thickness_nm * 1e-9;
        let lattice = run.config.lattice_spec().is_some();
        let mut points: Vec<(String, QReport)> = run
            .modes
            .iter()
            .filter(|m| !lattice || m.label.is_some())
            .filter_map(|m| m.q.map(|q| (m.label.clone().unwrap_or_else(|| format!("#{}", m.index)), q)))
            .collect();
        if points.is_empty() {
            // Analytic-only squares carry just the closed-form fundamental.
            points.extend(run.oracle.map(|q| ("square".to_string(), q)));
        }
        for (label, q) in points {
            let _ = writeln!(collapse, "{a:.6e}\t{h:.6e}\t{label}\t{:.6e}\t{:.6e}\t{:.6e}", q.q, q.q_norm, q.frequency);
            qf.push((label, q.frequency, q.q));
            series
                .entry(format!("h = {:.0} nm", h * 1e9))
                .or_default()
                .push((a * 1e6, q.q_norm));
        }
    }
    if qf.is_empty() {
        return Ok(written);
    }
    let tsv = dir.join("q_norm.tsv");
    write_text(&tsv, &collapse)?;
    let path = dir.join("q_norm.svg");
    q_norm_svg(&series, &path)?;
    written.extend([tsv, path]);
    let tsv = dir.join("q_vs_f.tsv");
    write_text(&tsv, &q_vs_f_columns(&qf))?;
    let path = dir.join("q_vs_f.svg");
    q_vs_f_svg(&qf, &path)?;
    written.extend([tsv, path]);
    Ok(written)
}

fn q_vs_f_columns(points: &[(String, f64, f64)]) -> String {
    let mut out = String::from("# label\tfrequency_hz\tq\tqf_hz\n");
    for (l, f, q) in points {
        let _ = writeln!(out, "{l}\t{f:.9e}\t{q:.6e}\t{:.6e}", q * f);
    }
    out
}

fn bands_svg(record: &RunRecord, bands: &softclamp::bloch::BandDiagram, path: &Path) -> CliResult<()> {
    let a = record.config.length_scale();
    let x: Vec<f64> = bands.kpath.arclength.iter().map(|s| s * a / (2.0 * std::f64::consts::PI)).collect();
    let x_max = x.last().copied().unwrap_or(1.0);
    let all = bands.out_of_plane.iter().chain(&bands.in_plane).flatten().map(|f| f / 1e6);
    let y_max = all.fold(0.0f64, f64::max) * 1.05;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Unit-cell band structure", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max.max(1e-9))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("k·a/2π along Γ–M–K–Γ")
        .y_desc("frequency (MHz)")
        .draw()
        .map_err(plot_err)?;
    if let Some(g) = bands.gap {
        chart
            .draw_series(std::iter::once(Rectangle::new(
                [(0.0, g.f_low / 1e6), (x_max, g.f_high / 1e6)],
                RGBColor(255, 200, 120).mix(0.5).filled(),
            )))
            .map_err(plot_err)?;
    }
    for (pos, _) in &bands.kpath.labels {
        let xk = x[*pos];
        chart
            .draw_series(LineSeries::new([(xk, 0.0), (xk, y_max)], BLACK.mix(0.3)))
            .map_err(plot_err)?;
    }
    let n_oop = bands.out_of_plane.iter().map(Vec::len).min().unwrap_or(0);
    for b in 0..n_oop {
        chart
            .draw_series(LineSeries::new(
                x.iter().zip(&bands.out_of_plane).map(|(x, f)| (*x, f[b] / 1e6)),
                BLUE.stroke_width(2),
            ))
            .map_err(plot_err)?;
    }
    let n_ip = bands.in_plane.iter().map(Vec::len).min().unwrap_or(0);
    for b in 0..n_ip {
        chart
            .draw_series(
                x.iter()
                    .zip(&bands.in_plane)
                    .map(|(x, f)| Circle::new((*x, f[b] / 1e6), 2, RGBColor(150, 150, 150).filled())),
            )
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

fn decay_svg(record: &RunRecord, path: &Path) -> CliResult<()> {
    let d = record.decay.as_ref().expect("decay record");
    let a = record.config.length_scale();
    let xs: Vec<f64> = d.section.position.iter().map(|s| s / a).collect();
    let (x_lo, x_hi) = padded(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Mode {} cross-section", d.label), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_lo..x_hi, -1.1..1.1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("position / a")
        .y_desc("displacement (peak = 1)")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(xs.iter().zip(&d.section.value).map(|(x, v)| Circle::new((*x, *v), 2, BLUE.filled())))
        .map_err(plot_err)?;
    if let Some(fit) = d.fit {
        let tail = d.section.position.iter().copied().filter(|s| *s >= d.min_distance);
        chart
            .draw_series(LineSeries::new(
                tail.clone().map(|s| (s / a, fit.model(s))),
                RED.stroke_width(2),
            ))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                tail.map(|s| (s / a, fit.amplitude * (-fit.k_im * s).exp())),
                RED.mix(0.4),
            ))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

fn q_vs_f_svg(points: &[(String, f64, f64)], path: &Path) -> CliResult<()> {
    let (f_lo, f_hi) = log_span(points.iter().map(|p| p.1)).ok_or_else(|| plot_err("no finite frequencies"))?;
    let (q_lo, q_hi) = log_span(points.iter().map(|p| p.2)).ok_or_else(|| plot_err("no finite quality factors"))?;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Quality factor", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((f_lo..f_hi).log_scale(), (q_lo..q_hi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("frequency (Hz)")
        .y_desc("Q")
        .draw()
        .map_err(plot_err)?;
    for (qf, color, name) in [
        (qf_threshold(ROOM_TEMPERATURE), RGBColor(0, 0, 0), "Qf = k_B·300 K/h"),
        (SILICON_QF_LIMIT, RGBColor(230, 120, 0), "silicon limit"),
    ] {
        chart
            .draw_series(LineSeries::new(
                (0..=40).map(|k| {
                    let f = f_lo * (f_hi / f_lo).powf(k as f64 / 40.0);
                    (f, qf / f)
                }),
                color,
            ))
            .map_err(plot_err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color));
    }
    chart
        .draw_series(points.iter().map(|(_, f, q)| Circle::new((*f, *q), 4, BLUE.filled())))
        .map_err(plot_err)?;
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn q_norm_svg(series: &BTreeMap<String, Vec<(f64, f64)>>, path: &Path) -> CliResult<()> {
    let all = || series.values().flatten();
    let (a_lo, a_hi) = log_span(all().map(|p| p.0)).ok_or_else(|| plot_err("empty sweep"))?;
    let (q_lo, q_hi) = log_span(all().map(|p| p.1)).ok_or_else(|| plot_err("empty sweep"))?;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Normalized quality factor Q·h/a²", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((a_lo..a_hi).log_scale(), (q_lo..q_hi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("a (µm)")
        .y_desc("Q·h/a² (1/m)")
        .draw()
        .map_err(plot_err)?;
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(pts.iter().map(|p| Circle::new(*p, 4, color.filled())))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| Circle::new((x + 10, y), 4, color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
