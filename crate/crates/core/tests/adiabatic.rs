use std::f64::consts::{FRAC_PI_3, TAU};

use num_complex::Complex;
use spinberry::adiabatic::*;
use spinberry::berry_engine::*;
use spinberry::operators::step_propagator;
use spinberry::spin_algebra::HalfInt;
use spinberry::systems::*;

fn spin_half() -> SystemSpec {
    SystemSpec::single_spin(HalfInt::HALF, 2.0, 1.0)
}

fn wilson_phase(spec: &SystemSpec, theta: f64, band: usize) -> f64 {
    let ls = track_bands(spec, &loop_samples(theta, DEFAULT_SAMPLES).unwrap()).unwrap();
    berry_phase_band(&ls, band).unwrap()
}

#[test]
fn infidelity_falls_along_omega_ladder() {
    let spec = spin_half();
    let gap = band_gap(&spec, FRAC_PI_3, 0).unwrap();
    assert!((gap - 2.0).abs() < 1e-12);
    let inf: Vec<f64> = [125.0, 250.0, 500.0]
        .iter()
        .map(|d| evolve_loop(&spec, FRAC_PI_3, gap / d, DEFAULT_STEPS, 0).unwrap().infidelity())
        .collect();
    assert!(inf[0] > inf[1] && inf[1] > inf[2], "{inf:?}");
}

#[test]
fn singlet_like_bands_have_no_phase() {
    let spec = SystemSpec::two_spin_half(1.0, 2.0, -0.7, 0.4);
    let ls = track_bands(&spec, &loop_samples(FRAC_PI_3, 256).unwrap()).unwrap();
    let zero_bands: Vec<usize> = ls.bands().filter(|&b| m_label(&ls, b).unwrap() == HalfInt::ZERO).collect();
    assert_eq!(zero_bands.len(), 2);
    for b in zero_bands {
        let omega = default_omega(&spec, FRAC_PI_3, b).unwrap();
        let run = evolve_loop(&spec, FRAC_PI_3, omega, DEFAULT_STEPS, b).unwrap();
        assert!(extract_geometric_phase(&run).abs() <= 2e-2);
    }
}

#[test]
fn halving_the_time_step() {
    for (spec, band, steps) in [
        (spin_half(), 0, DEFAULT_STEPS),
        (SystemSpec::two_spin_half(1.0, 2.0, -0.7, 0.4), 3, 8 * DEFAULT_STEPS),
    ] {
        let omega = default_omega(&spec, FRAC_PI_3, band).unwrap();
        let a = evolve_loop(&spec, FRAC_PI_3, omega, steps, band).unwrap();
        let b = evolve_loop(&spec, FRAC_PI_3, omega, 2 * steps, band).unwrap();
        let d = circular_distance(a.overlap.arg(), b.overlap.arg());
        assert!(d <= 1e-6, "{}: {d:e}", spec.label());
        assert!(a.max_norm_drift <= 1e-9 && b.max_norm_drift <= 1e-9);
    }
}

/// In the frame co-rotating with the field the Hamiltonian is static:
/// `U(T) = exp(-2πi J_z) exp(-i (H(θ,0) - ω J_z) T)`.
#[test]
fn matches_rotating_frame_solution() {
    let spec = SystemSpec::TwoMomenta { j1: HalfInt::ONE, j2: HalfInt::HALF, coupling: 0.8, g1: -1.0, g2: -2.0, b0: 0.5 };
    let theta = 1.1;
    let model = SystemModel::new(&spec).unwrap();
    let omega = default_omega(&spec, theta, 2).unwrap() * 5.0;
    let run = evolve_loop_unchecked(&spec, theta, omega, 4 * DEFAULT_STEPS, 2).unwrap();
    let jz = &model.total_momentum().z;
    let period = TAU / omega;
    let static_part = &model.hamiltonian(theta, 0.0) - &jz.scale(omega);
    let u = &step_propagator(jz, TAU).unwrap() * &step_propagator(&static_part, period).unwrap();
    let exact = u.apply(&run.initial_state);
    let err = (&exact - &run.final_state).norm();
    assert!(err <= 1e-5, "{err:e}");
}

#[test]
fn phase_difference_is_convention_independent() {
    let spec = SystemSpec::two_spin_half(1.0, 2.0, -0.7, 0.4);
    let band = 3;
    let theta = FRAC_PI_3;
    let omega = default_omega(&spec, theta, band).unwrap();
    let run = evolve_loop(&spec, theta, omega, DEFAULT_STEPS, band).unwrap();
    let ls = track_bands(&spec, &loop_samples(theta, 512).unwrap()).unwrap();
    let base = extract_geometric_phase(&run) - berry_phase_band(&ls, band).unwrap();

    for alpha in [0.3, 1.7, -2.9] {
        let phase = Complex::from_polar(1.0, alpha);
        // the evolution is linear, so a rephased start rephases the end
        let mut rephased = run.clone();
        rephased.initial_state *= phase;
        rephased.final_state *= phase;
        rephased.overlap = rephased.initial_state.dotc(&rephased.final_state);

        let frames: Vec<_> = ls.frames.iter().map(|fs| fs.iter().map(|f| f * phase).collect()).collect();
        let mut shifted =
            LoopSpectrum::from_frames(spec.clone(), ls.field_loop.clone(), ls.energies.clone(), ls.blocks.clone(), frames)
                .unwrap();
        shifted.unwrap_reference = ls.unwrap_reference.clone();
        let diff = extract_geometric_phase(&rephased) - berry_phase_band(&shifted, band).unwrap();
        assert!(circular_distance(diff, base) <= 1e-12);
    }
}

#[test]
fn degenerate_quadrupole_band_cannot_be_evolved() {
    let spec = SystemSpec::Quadrupole { j: HalfInt::ONE, k: 1.0 };
    let ls = track_bands(&spec, &loop_samples(1.0, 64).unwrap()).unwrap();
    let block = ls.degenerate_blocks().next().unwrap();
    assert!(evolve_loop(&spec, 1.0, 1e-3, 2000, block).is_err());
    let band = ls.bands().next().unwrap();
    let omega = default_omega(&spec, 1.0, band).unwrap();
    let run = evolve_loop(&spec, 1.0, omega, DEFAULT_STEPS, band).unwrap();
    assert!(circular_distance(extract_geometric_phase(&run), wilson_phase(&spec, 1.0, band)) <= 2e-2);
}
