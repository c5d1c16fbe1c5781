//! Experiment-facing figures of merit of a mechanical mode: effective mass,
//! thermal decoherence, coherence time and thermal force noise.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem;
use crate::material::MaterialSpec;
use crate::mesh::Mesh;
use crate::modal::ModeResult;

/// J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Room temperature used for the quantum-coherence threshold (K).
pub const ROOM_TEMPERATURE: f64 = 300.0;
/// Reduction of intrinsic loss observed at liquid-helium temperature.
pub const CRYO_Q_BOOST: f64 = 2.5;
pub const CRYO_TEMPERATURE: f64 = 4.2;

/// `Qf` above which a resonator completes more than one coherent oscillation
/// before a thermal phonon enters, `k_B T / (2πħ)` (Hz).
pub fn qf_threshold(temperature: f64) -> f64 {
    BOLTZMANN * temperature / (2.0 * PI * HBAR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiguresOfMerit {
    /// K.
    pub temperature: f64,
    /// Hz.
    pub frequency: f64,
    /// kg, referred to the displacement antinode.
    pub effective_mass: f64,
    pub q: f64,
    /// Thermal decoherence rate `k_B T/(ħQ)` (1/s).
    pub gamma: f64,
    /// Hz.
    pub gamma_over_2pi: f64,
    /// s.
    pub coherence_time: f64,
    /// `2πf τ`.
    pub coherent_oscillations: f64,
    /// `√(2 m ω/Q k_B T)` (N/√Hz).
    pub force_noise: f64,
    /// Hz.
    pub qf: f64,
    /// `Qf` exceeds `k_B·300 K/(2πħ)`.
    pub room_temperature_coherent: bool,
}

/// `ρh ∫ u² dA` for a mode scaled to unit peak displacement.
pub fn effective_mass(mode: &ModeResult, mesh: &Mesh, material: &MaterialSpec) -> Result<f64> {
    let u = &mode.displacement;
    if u.len() != mesh.nodes.len() {
        return Err(Error::Domain("mode does not belong to this mesh".into()));
    }
    let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::Domain("mode shape is identically zero".into()));
    }
    let m = fem::mass(mesh, material.density * material.thickness);
    Ok(m.quadratic_form(u) / (peak * peak))
}

/// Figures of merit at `temperature`. A `q_boost` multiplies `q` first, for
/// extrapolating room-temperature data to cryogenic operation.
pub fn figures_of_merit(
    frequency: f64,
    q: f64,
    effective_mass: f64,
    temperature: f64,
    q_boost: Option<f64>,
) -> Result<FiguresOfMerit> {
    for (name, v) in [("frequency", frequency), ("Q", q), ("effective mass", effective_mass)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Domain(format!("temperature must be non-negative, got {temperature}")));
    }
    let boost = q_boost.unwrap_or(1.0);
    if !(boost > 0.0 && boost.is_finite()) {
        return Err(Error::Domain(format!("Q boost must be positive, got {boost}")));
    }
    let q = q * boost;
    let omega = 2.0 * PI * frequency;
    let gamma = BOLTZMANN * temperature / (HBAR * q);
    let coherence_time = gamma.recip();
    Ok(FiguresOfMerit {
        temperature,
        frequency,
        effective_mass,
        q,
        gamma,
        gamma_over_2pi: gamma / (2.0 * PI),
        coherence_time,
        coherent_oscillations: omega * coherence_time,
        force_noise: (2.0 * effective_mass * omega / q * BOLTZMANN * temperature).sqrt(),
        qf: q * frequency,
        room_temperature_coherent: q * frequency > qf_threshold(ROOM_TEMPERATURE),
    })
}

/// Room-temperature and cryogenic columns for one mode.
pub fn room_and_cryo(frequency: f64, q: f64, effective_mass: f64) -> Result<[FiguresOfMerit; 2]> {
    Ok([
        figures_of_merit(frequency, q, effective_mass, ROOM_TEMPERATURE, None)?,
        figures_of_merit(frequency, q, effective_mass, CRYO_TEMPERATURE, Some(CRYO_Q_BOOST))?,
    ])
}

/// Plain-text table, one column per temperature.
pub fn format_table(columns: &[FiguresOfMerit]) -> String {
    type Row = (&'static str, &'static str, fn(&FiguresOfMerit) -> f64, usize);
    let rows: [Row; 9] = [
        ("Temperature", "K", |f| f.temperature, 1),
        ("Frequency", "kHz", |f| f.frequency / 1e3, 1),
        ("Effective mass", "ng", |f| f.effective_mass * 1e12, 2),
        ("Quality factor", "10^6", |f| f.q / 1e6, 1),
        ("fQ-product", "THz", |f| f.qf / 1e12, 1),
        ("Decoherence rate γ/2π", "Hz", |f| f.gamma_over_2pi, 1),
        ("Coherence time 1/γ", "µs", |f| f.coherence_time * 1e6, 2),
        ("Coherent oscillations 2πfτ", "1", |f| f.coherent_oscillations, 1),
        ("Thermal force noise √S_FF", "aN/√Hz", |f| f.force_noise * 1e18, 2),
    ];
    let mut out = String::new();
    for (name, unit, get, digits) in rows {
        let _ = write!(out, "{name:<28}");
        for c in columns {
            let _ = write!(out, " {:>14.*}", digits, get(c));
        }
        let _ = writeln!(out, "  {unit}");
    }
    out
}
