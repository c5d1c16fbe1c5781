use approx::assert_relative_eq;
use proptest::prelude::*;

use softclamp::dissipation::{q_factor, stored_energy, ClampModel, EnergyMethod, QOptions};
use softclamp::geometry::{build_lattice, build_square, DefectSpec, LatticeSpec};
use softclamp::material::{LossModel, MaterialSpec};
use softclamp::mesh::{mesh, Mesh};
use softclamp::modal::{ModalOptions, ModalSystem, ModeResult, PointLocator, Region};
use softclamp::prestress::{relax_stress, StressField};
use softclamp::recovery::{recover_curvature, RecoveryOptions};

const SIDE: f64 = 305e-6;

fn square(divisions: f64) -> (Mesh, MaterialSpec, StressField) {
    let mat = MaterialSpec::silicon_nitride(66e-9);
    let m = mesh(&build_square(SIDE).unwrap(), SIDE / divisions).unwrap();
    let s = relax_stress(&m, &mat, false).unwrap();
    (m, mat, s)
}

fn square_modes(divisions: f64, n: usize) -> (Mesh, MaterialSpec, StressField, Vec<ModeResult>) {
    let (m, mat, s) = square(divisions);
    let region = Region {
        center: [0.0, 0.0],
        radius: SIDE,
    };
    let modes = ModalSystem::new(&m, &s, &mat, &ModalOptions::default())
        .unwrap()
        .lowest(n, &region)
        .unwrap();
    (m, mat, s, modes)
}

fn small_device() -> (Mesh, MaterialSpec) {
    let spec = LatticeSpec {
        lattice_constant: 160e-6,
        hole_radius_ratio: 0.26,
        n_cols: 4.0,
        n_rows: 4.5,
    };
    let g = build_lattice(&spec, &DefectSpec::paper_like()).unwrap();
    (mesh(&g, 0.1 * spec.lattice_constant).unwrap(), MaterialSpec::silicon_nitride(66e-9))
}

fn loss() -> LossModel {
    LossModel::calibrate(66e-9, 3750.0, f64::INFINITY).unwrap()
}

#[test]
fn rayleigh_quotient_matches_eigenvalue() {
    let (_, _, _, modes) = square_modes(20.0, 5);
    for m in &modes {
        assert!(m.rayleigh_defect < 1e-6, "{} Hz: {}", m.frequency, m.rayleigh_defect);
        assert!(m.residual < 1e-6, "{} Hz: residual {}", m.frequency, m.residual);
    }
}

#[test]
fn tension_and_kinetic_energies_agree() {
    let (m, mat, s, modes) = square_modes(24.0, 4);
    for mode in &modes {
        let t = stored_energy(mode, &m, &mat, Some(&s), EnergyMethod::Tension).unwrap();
        let k = stored_energy(mode, &m, &mat, Some(&s), EnergyMethod::Kinetic).unwrap();
        assert_relative_eq!(t, k, max_relative = 0.01);
    }
}

#[test]
fn curvature_integral_stable_under_threefold_refinement() {
    let opts = QOptions {
        energy: EnergyMethod::Tension,
        clamp: ClampModel::Soft,
        length_scale: SIDE,
    };
    let q = |divisions: f64| {
        let (m, mat, s, modes) = square_modes(divisions, 1);
        q_factor(&modes[0], &m, &mat, &s, &loss(), &opts).unwrap().q
    };
    let (coarse, fine) = (q(12.0), q(36.0));
    assert!(
        (coarse / fine - 1.0).abs() <= 0.1,
        "coarse {coarse:.4e} vs fine {fine:.4e}"
    );
}

#[test]
fn stress_respects_device_mirrors() {
    let (m, mat) = small_device();
    let s = relax_stress(&m, &mat, false).unwrap();
    let locator = PointLocator::new(&m);
    let scale = mat.prestress;
    for (e, sigma) in s.sigma.iter().enumerate() {
        let c = m.centroid(e);
        for (mirror, shear_sign) in [([-c[0], c[1]], -1.0), ([c[0], -c[1]], -1.0)] {
            let (f, _) = locator.locate(mirror).expect("mirror image lies on the membrane");
            let t = s.sigma[f];
            assert!((sigma[0] - t[0]).abs() < 1e-6 * scale, "element {e}");
            assert!((sigma[1] - t[1]).abs() < 1e-6 * scale, "element {e}");
            assert!((sigma[2] - shear_sign * t[2]).abs() < 1e-6 * scale, "element {e}");
        }
    }
}

#[test]
fn q_invariant_under_joint_scaling_of_lengths() {
    let (m, mat, s, modes) = square_modes(16.0, 1);
    // Thickness-independent intrinsic loss, so only h/L matters.
    let loss = LossModel {
        volume_q: 3750.0,
        surface_beta: 1e30,
    };
    let opts = |l| QOptions {
        energy: EnergyMethod::Tension,
        clamp: ClampModel::BoundaryLayer,
        length_scale: l,
    };
    let q0 = q_factor(&modes[0], &m, &mat, &s, &loss, &opts(SIDE)).unwrap();
    for factor in [0.3, 2.0, 7.5] {
        let ms = m.scaled(factor);
        let mats = mat.with_thickness(mat.thickness * factor);
        let mut mode = modes[0].clone();
        mode.frequency /= factor;
        mode.curvature = recover_curvature(&ms, &mode.displacement, &RecoveryOptions::default())
            .unwrap()
            .laplacian;
        let q1 = q_factor(&mode, &ms, &mats, &s, &loss, &opts(SIDE * factor)).unwrap();
        assert_relative_eq!(q1.q, q0.q, max_relative = 1e-9);
        assert_relative_eq!(q1.q_norm * factor, q0.q_norm, max_relative = 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stress_is_linear_in_prestress(factor in 0.05f64..20.0) {
        let (m, mat) = small_device();
        let base = relax_stress(&m, &mat, false).unwrap();
        let scaled = relax_stress(&m, &mat.with_prestress(mat.prestress * factor), false).unwrap();
        let expected = base.scaled(factor);
        let tol = 1e-9 * mat.prestress * factor;
        for (a, b) in scaled.sigma.iter().zip(&expected.sigma) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= tol);
            }
        }
    }

    #[test]
    fn q_is_amplitude_invariant(c in prop_oneof![-1e4f64..-1e-4, 1e-4f64..1e4]) {
        let (m, mat, s) = square(10.0);
        let x: Vec<f64> = m.nodes.iter().map(|p| {
            let (u, v) = (p[0] / SIDE + 0.5, p[1] / SIDE + 0.5);
            (std::f64::consts::PI * u).sin() * (std::f64::consts::PI * v).sin()
        }).collect();
        let mode = |scale: f64| {
            let u: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let curvature = recover_curvature(&m, &u, &RecoveryOptions::default()).unwrap().laplacian;
            ModeResult {
                frequency: 3.0e5,
                displacement: u,
                curvature,
                curvature_fallback: 0,
                localization: 1.0,
                residual: 0.0,
                rayleigh_defect: 0.0,
            }
        };
        let opts = QOptions { energy: EnergyMethod::Tension, clamp: ClampModel::BoundaryLayer, length_scale: SIDE };
        let q1 = q_factor(&mode(1.0), &m, &mat, &s, &loss(), &opts).unwrap().q;
        let qc = q_factor(&mode(c), &m, &mat, &s, &loss(), &opts).unwrap().q;
        prop_assert!((qc / q1 - 1.0).abs() < 1e-9);
    }
}
