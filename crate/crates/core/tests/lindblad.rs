use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use pgc_core::lindblad::{evolve, mean_phonon, EvolveOptions, HilbertLayout, Level, LindbladModel, PhaseSchedule, QuantumState};
use pgc_core::physics::{hz, GradientConfig, IonSpecies, TrapConfig};

fn model(xi: f64, n_max: usize, scale: f64) -> LindbladModel {
    let ca = IonSpecies::calcium40();
    let ion = ca.with_wavelength(ca.wavelength * scale).unwrap();
    let trap = TrapConfig::axial(hz(1088e3)).unwrap();
    let grad = GradientConfig::for_xi(&ion, hz(210e6), xi, trap.omega_z, 0.0).unwrap();
    LindbladModel::new(&ion, &trap, &grad, HilbertLayout::new(n_max).unwrap()).unwrap()
}

fn fixed(step: f64) -> EvolveOptions {
    EvolveOptions { fixed_step: Some(step), track_min_eigenvalue: false, ..EvolveOptions::default() }
}

#[test]
fn initial_sublevel_is_forgotten() {
    let m = model(0.9, 8, 1.0);
    let opts = fixed(1e-7);
    let phase = PhaseSchedule::Fixed(0.3);
    let plus = evolve(&m, &m.ground_state(), 100e-6, &phase, 10e-6, &opts).unwrap();
    let minus_start = QuantumState::pure(m.layout, Level::SMinus, 0).unwrap();
    let minus = evolve(&m, &minus_start, 100e-6, &phase, 10e-6, &opts).unwrap();
    let a = mean_phonon(&plus.final_state);
    let b = mean_phonon(&minus.final_state);
    assert!(a > 0.01);
    // Internal memory is lost after a few pumping times; the motional
    // difference left by the first kicks decays at the cooling rate.
    assert!((a - b).abs() < 1e-2 * a, "{a} vs {b}");
    let mid = plus.samples.len() / 2;
    let gap_mid = (plus.samples[mid].n_mean - minus.samples[mid].n_mean).abs();
    assert!((a - b).abs() < 0.5 * gap_mid, "{} then {}", gap_mid, (a - b).abs());
    let pa = plus.final_state.level_populations();
    let pb = minus.final_state.level_populations();
    for k in 0..4 {
        assert!((pa[k] - pb[k]).abs() < 1e-4, "{pa:?} vs {pb:?}");
    }
}

#[test]
fn stationary_gradient_matches_fixed_phase() {
    let m = model(1.1, 6, 10.0);
    let opts = fixed(2e-6);
    let a = evolve(&m, &m.ground_state(), 2e-4, &PhaseSchedule::Fixed(0.4), 2e-5, &opts).unwrap();
    let b = evolve(&m, &m.ground_state(), 2e-4, &PhaseSchedule::Moving { phi0: 0.4, beam_detuning: 0.0 }, 2e-5, &opts).unwrap();
    for (x, y) in a.n_mean().iter().zip(b.n_mean()) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn populations_stay_physical_over_a_run() {
    let m = model(0.9, 10, 10.0);
    let traj = evolve(&m, &m.ground_state(), 2e-3, &PhaseSchedule::Fixed(0.2), 1e-4, &fixed(5e-6)).unwrap();
    assert!(traj.max_trace_error() < 1e-8);
    assert!(traj.max_hermiticity_error() < 1e-10);
    for s in &traj.samples {
        assert!(s.n_mean >= 0.0);
    }
}

fn random_state(layout: HilbertLayout, entries: &[(f64, f64)]) -> QuantumState {
    let d = layout.dim();
    let a = DMatrix::from_fn(d, d, |i, j| {
        let (re, im) = entries[(i * d + j) % entries.len()];
        C64::new(re, im)
    });
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    QuantumState { layout, rho: rho / tr }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_is_trace_free_and_hermitian(
        xi in 0.2f64..3.0,
        scale in 1.0f64..10.0,
        phi in 0.0f64..std::f64::consts::PI,
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16..64),
    ) {
        let m = model(xi, 4, scale);
        let state = random_state(m.layout, &entries);
        let d = m.rhs_dense(phi, &state);
        let norm = d.iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(d.trace().norm() <= 1e-12 * norm);
        prop_assert!((&d - d.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max) <= 1e-12 * norm);
    }
}
