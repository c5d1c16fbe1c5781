//! Acceptance report: one PASS/FAIL line per criterion, with the measured
//! numbers on indented lines underneath.
//!
//! Exits 0 whatever the outcome so `cargo test` stays usable while a
//! criterion is red; set `SOFTCLAMP_ACCEPTANCE_STRICT=1` to exit 1 on any
//! failure. `SOFTCLAMP_ACCEPTANCE_ONLY=2,5` restricts the run; criteria 4, 5
//! and 9 share the device solves.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use softclamp::dissipation::{fit_scaling, q_factor, square_oracle, stored_energy, ClampModel, EnergyMethod, QOptions, ScalingPoint};
use softclamp::fom::{room_and_cryo, CRYO_Q_BOOST};
use softclamp::geometry::build_square;
use softclamp::material::{LossModel, MaterialSpec};
use softclamp::mesh::mesh;
use softclamp::modal::{ModalOptions, ModalSystem, ModeResult, PointLocator, Region};
use softclamp::prestress::relax_stress;
use softclamp::recovery::{recover_curvature, RecoveryOptions};

use softclamp_cli::config::RunConfig;
use softclamp_cli::pipeline::{execute, execute_with, RunArtifacts, RunRecord};
use softclamp_cli::sweep::scaling_points;

/// Mode frequencies times `a` for modes A–E (m/s).
const REFERENCE_F_TIMES_A: [f64; 5] = [234.0, 250.7, 251.2, 262.4, 262.9];
const SQUARE_SIDE: f64 = 305e-6;

struct Criterion {
    lines: Vec<String>,
    pass: bool,
}

impl Criterion {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            pass: true,
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.pass &= ok;
        self.lines.push(format!("    [{}] {}", if ok { "ok" } else { "miss" }, what.into()));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.lines.push(format!("    {}", what.into()));
    }

    fn fail(&mut self, what: impl Into<String>) {
        self.check(false, what);
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn pct(value: f64, target: f64) -> String {
    format!("{:+.2}%", 100.0 * (value / target - 1.0))
}

fn config(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let mut c = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    c.output_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    c
}

struct DeviceRun {
    record: RunRecord,
    artifacts: RunArtifacts,
    seconds: f64,
}

fn run_device(c: &RunConfig, band_plot: bool) -> Result<DeviceRun, String> {
    let t = Instant::now();
    let (record, artifacts) = execute_with(c, band_plot).map_err(|e| e.to_string())?;
    Ok(DeviceRun {
        record,
        artifacts,
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn square_lowest(divisions: f64, n: usize, bending: bool) -> softclamp::Result<Vec<ModeResult>> {
    let mat = MaterialSpec::silicon_nitride(66e-9);
    let m = mesh(&build_square(SQUARE_SIDE)?, SQUARE_SIDE / divisions)?;
    let s = relax_stress(&m, &mat, false)?;
    let region = Region {
        center: [0.0, 0.0],
        radius: SQUARE_SIDE,
    };
    let opts = ModalOptions {
        bending,
        ..ModalOptions::default()
    };
    ModalSystem::new(&m, &s, &mat, &opts)?.lowest(n, &region)
}

fn criterion_1() -> Criterion {
    let mut c = Criterion::new();
    let mat = MaterialSpec::silicon_nitride(66e-9);
    let speed = mat.membrane_wave_speed();
    let mut exact: Vec<f64> = (1..=4)
        .flat_map(|n| (1..=4).map(move |m| (n * n + m * m) as f64))
        .map(|s| speed / (2.0 * SQUARE_SIDE) * s.sqrt())
        .collect();
    exact.sort_by(f64::total_cmp);
    let t = Instant::now();
    match square_lowest(60.0, 5, false) {
        Ok(modes) => {
            let secs = t.elapsed().as_secs_f64();
            for (k, (m, f)) in modes.iter().zip(&exact).enumerate() {
                c.check(within(m.frequency, *f, 1e-3), format!("mode {}: {:.4} kHz vs {:.4} kHz ({})", k + 1, m.frequency / 1e3, f / 1e3, pct(m.frequency, *f)));
            }
            c.check(modes.len() == 5, format!("{} modes solved", modes.len()));
            c.check(secs < 10.0, format!("mesh, prestress and solve in {secs:.2} s (limit 10 s)"));
        }
        Err(e) => c.fail(format!("solve failed: {e}")),
    }
    c
}

fn criterion_2() -> Criterion {
    let mut c = Criterion::new();
    let mat = MaterialSpec::silicon_nitride(66e-9);
    let loss = LossModel::calibrate(66e-9, 3750.0, f64::INFINITY).expect("calibration");
    match square_oracle(SQUARE_SIDE, &mat, &loss) {
        Ok(o) => {
            let lambda = (mat.youngs_modulus / (12.0 * mat.prestress)).sqrt() * 66e-9 / SQUARE_SIDE;
            let q = 3750.0 / (2.0 * lambda + 2.0 * PI * PI * lambda * lambda);
            let l = o.lambda.unwrap_or(f64::NAN);
            c.check(within(l, lambda, 0.01), format!("λ = {l:.4e} (closed form {lambda:.4e})"));
            c.check(within(l, 9.11e-4, 0.01), format!("λ vs 9.11e-4: {}", pct(l, 9.11e-4)));
            c.check(within(o.q, q, 0.01), format!("Q = {:.4e} (closed form {q:.4e})", o.q));
            c.note(format!("Q vs 2.0e6: {} (ν = {})", pct(o.q, 2.0e6), mat.poisson_ratio));
        }
        Err(e) => c.fail(format!("oracle failed: {e}")),
    }
    match execute(&config("square.toml")) {
        Ok((record, _)) => match (record.modes.first().and_then(|m| m.q), record.oracle) {
            (Some(fem), Some(o)) => c.check(
                within(fem.q, o.q, 0.10),
                format!("hybrid FEM + boundary layer Q = {:.4e} vs oracle {:.4e} ({})", fem.q, o.q, pct(fem.q, o.q)),
            ),
            _ => c.fail("square run produced no Q for the fundamental"),
        },
        Err(e) => c.fail(format!("square run failed: {e}")),
    }
    c
}

fn criterion_3(full: Option<&DeviceRun>) -> Criterion {
    let mut c = Criterion::new();
    let Some(run) = full else {
        c.fail("device run unavailable");
        return c;
    };
    let a = run.record.config.length_scale();
    match run.record.bands.as_ref().and_then(|b| b.gap) {
        Some(g) => {
            let centre = g.center * a;
            c.check(within(centre, 251.0, 0.05), format!("centre·a = {centre:.1} m/s vs 251 ({})", pct(centre, 251.0)));
            let w = 100.0 * g.relative_width;
            c.check((w - 20.0).abs() <= 5.0, format!("relative width {w:.1}% (20 ± 5)"));
            c.note(format!("{} in-plane samples inside the gap", g.in_plane_samples_inside));
        }
        None => c.fail("no out-of-plane gap found"),
    }
    let secs = run.record.timings_s.get("bands").copied().unwrap_or(f64::NAN);
    c.check(secs < 300.0, format!("unit cell in {secs:.1} s (limit 300 s)"));
    c
}

fn criterion_4(full: Option<&DeviceRun>, ci: Option<&DeviceRun>) -> Criterion {
    let mut c = Criterion::new();
    match full {
        Some(run) => {
            let labelled: Vec<_> = run.record.labeled().collect();
            c.check(labelled.len() == 5, format!("19-cell device: {} localized in-gap modes (expected 5)", labelled.len()));
            if let Some(a) = run.record.mode("A") {
                c.check(within(a.f_times_a, 235.0, 0.05), format!("f_A·a = {:.1} m/s vs 235 ({})", a.f_times_a, pct(a.f_times_a, 235.0)));
                let nodes = a.azimuthal_sign_changes;
                c.check(nodes == Some(0), format!("mode A azimuthal sign changes on a circle of radius a/2: {nodes:?} (expected 0)"));
            }
            for (m, f) in labelled.iter().zip(REFERENCE_F_TIMES_A) {
                c.check(
                    within(m.f_times_a, f, 0.05),
                    format!("mode {}: f·a = {:.1} vs {f} ({})", m.label.as_deref().unwrap_or("?"), m.f_times_a, pct(m.f_times_a, f)),
                );
            }
            c.check(run.seconds < 1800.0, format!("19-cell solve in {:.0} s (limit 1800 s)", run.seconds));
        }
        None => c.fail("19-cell device run failed"),
    }
    match ci {
        Some(run) => {
            let n = run.record.labeled().count();
            c.check(n == 5, format!("9×9 device: {n} localized in-gap modes (expected 5)"));
            match run.record.mode("A") {
                Some(a) => c.check(
                    within(a.f_times_a, REFERENCE_F_TIMES_A[0], 0.08),
                    format!("9×9 f_A·a = {:.1} vs {} ({})", a.f_times_a, REFERENCE_F_TIMES_A[0], pct(a.f_times_a, REFERENCE_F_TIMES_A[0])),
                ),
                None => c.fail("9×9 device has no mode A"),
            }
            c.check(run.seconds < 300.0, format!("9×9 solve in {:.0} s (limit 300 s)", run.seconds));
        }
        None => c.fail("9×9 device run failed"),
    }
    c
}

fn criterion_5(full: Option<&DeviceRun>) -> Criterion {
    let mut c = Criterion::new();
    let Some(d) = full.and_then(|r| r.record.decay.as_ref()) else {
        c.fail("no decay fit on the 19-cell device");
        return c;
    };
    match d.k_over_2pi_a {
        Some([re, im]) => {
            c.check(within(re, 0.57, 0.15), format!("Re k·a/2π = {re:.4} vs 0.57 ({})", pct(re, 0.57)));
            c.check(within(im, 0.085, 0.15), format!("Im k·a/2π = {im:.4} vs 0.085 ({})", pct(im, 0.085)));
            let a = full.map_or(1.0, |r| r.record.config.length_scale());
            c.note(format!(
                "mode {}, half-line at {}° from {:.3}a, rmse {:.3}",
                d.label,
                d.direction_deg,
                d.min_distance / a,
                d.fit.map_or(f64::NAN, |f| f.fit_rmse)
            ));
        }
        None => c.fail(format!("fit failed: {}", d.error.as_deref().unwrap_or("unknown"))),
    }
    c
}

/// Scaling points of a run, or none when it failed.
fn points_of(c: &RunConfig) -> Result<(Vec<ScalingPoint>, f64), String> {
    let t = Instant::now();
    let (record, _) = execute_with(c, false).map_err(|e| e.to_string())?;
    Ok((scaling_points(&record), t.elapsed().as_secs_f64()))
}

fn exponent(points: &[ScalingPoint], a: bool) -> Result<f64, String> {
    let fit = fit_scaling(points).map_err(|e| e.to_string())?;
    (if a { fit.p_a } else { fit.p_h }).ok_or_else(|| "exponent not fitted".into())
}

fn criterion_6() -> Criterion {
    let mut c = Criterion::new();
    let base = config("ci_device.toml");
    let t = Instant::now();
    let mut a_points = Vec::new();
    let mut h_points = Vec::new();
    let mut h_points_vol = Vec::new();
    let mut runs = 0;
    let mut collect = |cfg: &RunConfig, into: &mut Vec<ScalingPoint>, c: &mut Criterion| match points_of(cfg) {
        Ok((p, secs)) => {
            runs += 1;
            let labels: BTreeSet<_> = p.iter().map(|p| p.label.as_str()).collect();
            c.note(format!(
                "a = {:.0} µm, h = {:.0} nm, volume Q {}: {} points {:?} in {secs:.0} s",
                cfg.length_scale() * 1e6,
                cfg.material.thickness_nm,
                cfg.loss.volume_q.map_or("∞".into(), |q| format!("{q:.0}")),
                p.len(),
                labels
            ));
            into.extend(p);
        }
        Err(e) => c.fail(format!("a = {:.0} µm, h = {} nm failed: {e}", cfg.length_scale() * 1e6, cfg.material.thickness_nm)),
    };
    for a in [87.0, 160.0, 346.0] {
        collect(&base.with_point(a, 35.0), &mut a_points, &mut c);
    }
    for h in [35.0, 66.0, 121.0] {
        collect(&base.with_point(160.0, h), &mut h_points, &mut c);
    }
    let mut with_volume = base.clone();
    with_volume.loss.volume_q = Some(VOLUME_Q);
    for h in [35.0, 66.0, 121.0] {
        collect(&with_volume.with_point(160.0, h), &mut h_points_vol, &mut c);
    }
    match exponent(&a_points, true) {
        Ok(p) => c.check((p - 2.0).abs() <= 0.2, format!("Q ∝ a^p at h = 35 nm: p = {p:.3} (2 ± 0.2)")),
        Err(e) => c.fail(format!("a fit: {e}")),
    }
    match exponent(&h_points, false) {
        Ok(p) => c.check((p + 1.0).abs() <= 0.2, format!("Q ∝ h^p at a = 160 µm: p = {p:.3} (−1 ± 0.2)")),
        Err(e) => c.fail(format!("h fit: {e}")),
    }
    // Ratio of Q with and without volume loss, per thickness and label. Both
    // loss models agree at the calibration thickness, so the ratio crosses 1
    // there; thicker films must fall further below the surface-loss trend.
    let mut ratios: Vec<(f64, f64)> = Vec::new();
    for p in &h_points_vol {
        if let Some(q0) = h_points.iter().find(|q| q.label == p.label && within(q.h, p.h, 1e-9)) {
            ratios.push((p.h, p.q / q0.q));
        }
    }
    ratios.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Every ratio at one thickness must lie below every ratio at a thinner one.
    let mut monotone = ratios.len() >= 2;
    for (i, x) in ratios.iter().enumerate() {
        for y in &ratios[..i] {
            if x.0 > y.0 * (1.0 + 1e-9) {
                monotone &= x.1 < y.1;
            }
        }
    }
    c.check(
        monotone,
        format!(
            "volume Q = {VOLUME_Q:.0} bends Q down with thickness (ratio to surface loss only): {}",
            ratios.iter().map(|(h, r)| format!("{:.0} nm → {r:.3}", h * 1e9)).collect::<Vec<_>>().join(", ")
        ),
    );
    c.note(format!("{runs} device runs in {:.0} s", t.elapsed().as_secs_f64()));
    c
}

/// Volume-loss ceiling used for the bend of the thickness trend.
const VOLUME_Q: f64 = 28_000.0;

fn criterion_7() -> Criterion {
    let mut c = Criterion::new();
    match run_device(&config("best_device.toml"), false) {
        Ok(run) => match run.record.mode("E") {
            Some(e) => match e.q {
                Some(q) => {
                    let ratio = |v: f64, t: f64| (v / t).max(t / v);
                    c.check(ratio(q.q, 2.14e8) <= 1.5, format!("mode E Q = {:.3e} vs 2.14e8 (factor {:.2})", q.q, ratio(q.q, 2.14e8)));
                    c.check(ratio(q.qf, 1.66e14) <= 1.5, format!("mode E Qf = {:.3e} Hz vs 1.66e14 (factor {:.2})", q.qf, ratio(q.qf, 1.66e14)));
                    c.note(format!("f_E = {:.1} kHz, solved in {:.0} s", e.frequency_hz / 1e3, run.seconds));
                }
                None => c.fail("mode E has no Q"),
            },
            None => c.fail(format!("no mode E ({} labelled modes)", run.record.labeled().count())),
        },
        Err(e) => c.fail(format!("best-device run failed: {e}")),
    }
    c
}

fn criterion_8() -> Criterion {
    let mut c = Criterion::new();
    match room_and_cryo(777e3, 2.14e8, 16e-12) {
        Ok([room, cryo]) => {
            let s_room = room.force_noise * 1e18;
            c.check(within(s_room, 55.0, 0.05), format!("300 K √S_FF = {s_room:.2} aN/√Hz vs 55 ({})", pct(s_room, 55.0)));
            let tau = room.coherence_time * 1e6;
            c.check(within(tau, 5.0, 0.15), format!("300 K τ = {tau:.2} µs vs 5 ({})", pct(tau, 5.0)));
            c.check(
                within(room.gamma_over_2pi, 33_000.0, 0.15),
                format!("300 K γ/2π = {:.0} Hz vs 33000 ({})", room.gamma_over_2pi, pct(room.gamma_over_2pi, 33_000.0)),
            );
            c.check(cryo.q == 2.14e8 * CRYO_Q_BOOST && cryo.q == 5.35e8, format!("4.2 K Q = {:.4e}", cryo.q));
            let s_cryo = cryo.force_noise * 1e18;
            c.check(within(s_cryo, 4.1, 0.10), format!("4.2 K √S_FF = {s_cryo:.2} aN/√Hz vs 4.1 ({})", pct(s_cryo, 4.1)));
            c.check(
                within(cryo.gamma_over_2pi, 175.0, 0.15),
                format!("4.2 K γ/2π = {:.1} Hz vs 175 ({})", cryo.gamma_over_2pi, pct(cryo.gamma_over_2pi, 175.0)),
            );
            let tau = cryo.coherence_time * 1e6;
            c.note(format!("4.2 K τ = {tau:.0} µs (listed 910), 2πfτ = {:.0} (listed 4400)", cryo.coherent_oscillations));
        }
        Err(e) => c.fail(format!("figures of merit failed: {e}")),
    }
    c
}

fn criterion_9(full: Option<&DeviceRun>, ci: Option<&DeviceRun>) -> Criterion {
    let mut c = Criterion::new();

    let worst = [full, ci]
        .into_iter()
        .flatten()
        .flat_map(|r| r.record.modes.iter())
        .map(|m| m.rayleigh_defect)
        .fold(0.0f64, f64::max);
    c.check(worst < 1e-6, format!("largest Rayleigh-quotient defect over device modes {worst:.2e} (< 1e-6)"));

    let Some(ci) = ci else {
        c.fail("9×9 device run unavailable");
        return c;
    };
    let (Some(m), Some(s)) = (&ci.artifacts.mesh, &ci.artifacts.stress) else {
        c.fail("9×9 run kept no mesh");
        return c;
    };
    let mat = ci.record.config.material.spec();

    match relax_stress(m, &mat.with_prestress(mat.prestress * 3.7), false) {
        Ok(scaled) => {
            let expected = s.scaled(3.7);
            let err = scaled
                .sigma
                .iter()
                .zip(&expected.sigma)
                .flat_map(|(x, y)| (0..3).map(move |k| (x[k] - y[k]).abs()))
                .fold(0.0f64, f64::max)
                / (3.7 * mat.prestress);
            c.check(err < 1e-9, format!("stress linear in prestress: max deviation {err:.1e} of σ̄"));
        }
        Err(e) => c.fail(format!("rescaled prestress failed: {e}")),
    }

    let locator = PointLocator::new(m);
    let mut asym = 0.0f64;
    for (e, sigma) in s.sigma.iter().enumerate() {
        let p = m.centroid(e);
        for mirror in [[-p[0], p[1]], [p[0], -p[1]]] {
            match locator.locate(mirror) {
                Some((f, _)) => {
                    let t = s.sigma[f];
                    asym = asym.max((sigma[0] - t[0]).abs()).max((sigma[1] - t[1]).abs()).max((sigma[2] + t[2]).abs());
                }
                None => asym = f64::INFINITY,
            }
        }
    }
    let asym = asym / mat.prestress;
    c.check(asym < 1e-6, format!("stress mirror symmetric: max deviation {asym:.1e} of σ̄"));

    let mut energy = 0.0f64;
    for mode in &ci.artifacts.modes {
        match (
            stored_energy(mode, m, &mat, Some(s), EnergyMethod::Tension),
            stored_energy(mode, m, &mat, Some(s), EnergyMethod::Kinetic),
        ) {
            (Ok(t), Ok(k)) => energy = energy.max((t / k - 1.0).abs()),
            _ => energy = f64::INFINITY,
        }
    }
    c.check(
        energy <= 0.01,
        format!("tension vs kinetic stored energy over {} gap modes: worst {:.3}%", ci.artifacts.modes.len(), 100.0 * energy),
    );

    let mut rim = ci.record.config.clone();
    rim.solver.rim_rows = true;
    rim.solver.window_mhz = ci.record.window_hz.map(|[lo, hi]| [lo / 1e6, hi / 1e6]);
    match execute_with(&rim, false) {
        Ok((other, _)) => {
            let shift = ci
                .record
                .modes
                .iter()
                .map(|m| {
                    other
                        .modes
                        .iter()
                        .map(|o| (o.frequency_hz / m.frequency_hz - 1.0).abs())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0f64, f64::max);
            c.check(
                shift < 0.005,
                format!("rim bending rows on vs off: largest shift of a gap mode {:.3}% ({} vs {} modes)", 100.0 * shift, ci.record.modes.len(), other.modes.len()),
            );
        }
        Err(e) => c.fail(format!("rim-row solve failed: {e}")),
    }

    square_properties(&mut c);
    c
}

fn square_properties(c: &mut Criterion) {
    let mat = MaterialSpec::silicon_nitride(66e-9);
    let loss = LossModel::calibrate(66e-9, 3750.0, f64::INFINITY).expect("calibration");
    let opts = |clamp, length| QOptions {
        energy: EnergyMethod::Tension,
        clamp,
        length_scale: length,
    };
    let solve = |divisions: f64| -> softclamp::Result<_> {
        let m = mesh(&build_square(SQUARE_SIDE)?, SQUARE_SIDE / divisions)?;
        let s = relax_stress(&m, &mat, false)?;
        let region = Region {
            center: [0.0, 0.0],
            radius: SQUARE_SIDE,
        };
        let mode = ModalSystem::new(&m, &s, &mat, &ModalOptions::default())?.lowest(1, &region)?.remove(0);
        Ok((m, s, mode))
    };
    let (coarse, fine) = match (solve(12.0), solve(36.0)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            c.fail("square solves failed");
            return;
        }
    };
    let q = |(m, s, mode): &(_, _, ModeResult)| q_factor(mode, m, &mat, s, &loss, &opts(ClampModel::Soft, SQUARE_SIDE)).map(|r| r.q);
    match (q(&coarse), q(&fine)) {
        (Ok(qc), Ok(qf)) => c.check(
            within(qc, qf, 0.10),
            format!("curvature integral under 3× refinement: Q {qc:.4e} vs {qf:.4e} ({})", pct(qc, qf)),
        ),
        _ => c.fail("refinement Q failed"),
    }

    let (m, s, mode) = &coarse;
    let base = q_factor(mode, m, &mat, s, &loss, &opts(ClampModel::BoundaryLayer, SQUARE_SIDE));
    let mut amp = 0.0f64;
    for scale in [-3.0e3, 1e-3, 42.0] {
        let mut scaled = mode.clone();
        scaled.displacement.iter_mut().for_each(|v| *v *= scale);
        scaled.curvature.iter_mut().for_each(|v| *v *= scale);
        match (&base, q_factor(&scaled, m, &mat, s, &loss, &opts(ClampModel::BoundaryLayer, SQUARE_SIDE))) {
            (Ok(b), Ok(r)) => amp = amp.max((r.q / b.q - 1.0).abs()),
            _ => amp = f64::INFINITY,
        }
    }
    c.check(amp < 1e-9, format!("Q under amplitude rescaling: worst relative change {amp:.1e}"));

    // Geometric scaling with h/L fixed and thickness-independent loss.
    let flat = LossModel {
        volume_q: 3750.0,
        surface_beta: 1e30,
    };
    let base = q_factor(mode, m, &mat, s, &flat, &opts(ClampModel::BoundaryLayer, SQUARE_SIDE));
    let mut geo = 0.0f64;
    for factor in [0.3, 2.0, 7.5] {
        let ms = m.scaled(factor);
        let mats = mat.with_thickness(mat.thickness * factor);
        let mut scaled = mode.clone();
        scaled.frequency /= factor;
        let r = recover_curvature(&ms, &scaled.displacement, &RecoveryOptions::default()).and_then(|rc| {
            scaled.curvature = rc.laplacian;
            q_factor(&scaled, &ms, &mats, s, &flat, &opts(ClampModel::BoundaryLayer, SQUARE_SIDE * factor))
        });
        match (&base, r) {
            (Ok(b), Ok(r)) => geo = geo.max((r.q / b.q - 1.0).abs()),
            _ => geo = f64::INFINITY,
        }
    }
    c.check(geo < 1e-9, format!("Q under joint scaling of lengths and thickness: worst relative change {geo:.1e}"));
}

fn usable(run: &Option<Result<DeviceRun, String>>) -> Option<&DeviceRun> {
    match run {
        Some(Ok(run)) => Some(run),
        Some(Err(e)) => {
            eprintln!("device run failed: {e}");
            None
        }
        None => None,
    }
}

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("SOFTCLAMP_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|s| s.contains(&n));
    let strict = std::env::var("SOFTCLAMP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let titles = [
        "square membrane frequencies",
        "square membrane dilution and Q",
        "unit-cell quasi-bandgap",
        "localized defect modes",
        "evanescent decay of mode A",
        "Q scaling with a and h",
        "headline Q of the large thin device",
        "figures of merit",
        "property suites",
    ];

    let needs_full = [3, 4, 5, 9].into_iter().any(wanted);
    let needs_ci = [4, 9].into_iter().any(wanted);
    let full = needs_full.then(|| run_device(&config("paper_device.toml"), true));
    let ci = needs_ci.then(|| run_device(&config("ci_device.toml"), false));
    let (full, ci) = (usable(&full), usable(&ci));

    let mut failed = 0;
    for (i, title) in titles.iter().enumerate() {
        let n = i as u32 + 1;
        if !wanted(n) {
            continue;
        }
        let c = match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(full),
            4 => criterion_4(full, ci),
            5 => criterion_5(full),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            _ => criterion_9(full, ci),
        };
        if !c.pass {
            failed += 1;
        }
        println!("criterion {n} {}: {title}", if c.pass { "PASS" } else { "FAIL" });
        for l in &c.lines {
            println!("{l}");
        }
    }
    println!("acceptance: {failed} criteria failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
