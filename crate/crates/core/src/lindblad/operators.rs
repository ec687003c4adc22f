//! Dense operators on the full (4 internal levels) ⊗ (truncated Fock)
//! space: Hamiltonian, jump operators and the reference Lindblad
//! right-hand side.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use super::{HilbertLayout, Level};
use crate::error::Result;
use crate::physics::{lamb_dicke, GradientConfig, IonSpecies, TrapConfig};

/// Clebsch-Gordan weights of the two decay polarizations.
pub const CLEBSCH_PI: f64 = 1.0 / 3.0;
pub const CLEBSCH_SIGMA: f64 = 2.0 / 3.0;

/// Squared recoil-direction weights p_mq² for q = +1, 0, −1.
pub const RECOIL_WEIGHTS_PI: [f64; 3] = [0.1, 0.8, 0.1];
pub const RECOIL_WEIGHTS_SIGMA: [f64; 3] = [0.2, 0.6, 0.2];

/// Polarization of a decay channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Pi,
    Sigma,
}

impl Polarization {
    /// Squared Clebsch-Gordan coefficient C_m².
    pub fn branching(self) -> f64 {
        match self {
            Polarization::Pi => CLEBSCH_PI,
            Polarization::Sigma => CLEBSCH_SIGMA,
        }
    }

    /// Squared amplitudes p_mq² indexed by q = +1, 0, −1.
    pub fn recoil_weights(self) -> [f64; 3] {
        match self {
            Polarization::Pi => RECOIL_WEIGHTS_PI,
            Polarization::Sigma => RECOIL_WEIGHTS_SIGMA,
        }
    }
}

/// The four decay channels P → S.
pub const DECAY_CHANNELS: [(Level, Level, Polarization); 4] = [
    (Level::PPlus, Level::SPlus, Polarization::Pi),
    (Level::PMinus, Level::SMinus, Polarization::Pi),
    (Level::PPlus, Level::SMinus, Polarization::Sigma),
    (Level::PMinus, Level::SPlus, Polarization::Sigma),
];

/// Motional operators on the truncated Fock space.
#[derive(Debug, Clone)]
pub struct MotionalOps {
    pub n_max: usize,
    /// e^{+ikẑ} = e^{iη(a+a†)}.
    pub kick_plus: DMatrix<C64>,
    /// e^{−ikẑ}.
    pub kick_minus: DMatrix<C64>,
}

impl MotionalOps {
    pub fn new(n_max: usize, eta: f64) -> Self {
        let x = position_quadrature(n_max);
        let eig = SymmetricEigen::new(x);
        let v = eig.eigenvectors.map(|a| C64::new(a, 0.0));
        let phases_p = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, eta * l)));
        let phases_m = phases_p.map(|c| c.conj());
        let vt = v.transpose();
        let kick_plus = &v * phases_p * &vt;
        let kick_minus = &v * phases_m * &vt;
        Self { n_max, kick_plus, kick_minus }
    }
}

/// a + a† on the lowest `n_max` Fock states.
pub fn position_quadrature(n_max: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n_max, n_max);
    for k in 1..n_max {
        let v = (k as f64).sqrt();
        x[(k - 1, k)] = v;
        x[(k, k - 1)] = v;
    }
    x
}

/// Annihilation operator on the lowest `n_max` Fock states.
pub fn annihilation(n_max: usize) -> DMatrix<C64> {
    let mut a = DMatrix::zeros(n_max, n_max);
    for k in 1..n_max {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Standing-wave coupling blocks for the two circular components:
/// `(cir+, cir−)`, each the motional operator multiplying |S⟩⟨P| in H/ħ.
pub fn coupling_blocks(ops: &MotionalOps, rabi: f64, phi: f64) -> (DMatrix<C64>, DMatrix<C64>) {
    let c = 0.5 * rabi * (1.0f64 / 3.0).sqrt();
    let block = |theta: f64| {
        let em = C64::from_polar(c, -theta);
        let ep = C64::from_polar(c, theta);
        ops.kick_minus.map(|v| v * em) + ops.kick_plus.map(|v| v * ep)
    };
    (block(phi - FRAC_PI_4), block(phi + FRAC_PI_4))
}

/// Place `block` at (row level, column level) of a full operator.
pub(crate) fn embed(full: &mut DMatrix<C64>, layout: &HilbertLayout, row: Level, col: Level, block: &DMatrix<C64>) {
    let n = layout.n_max;
    let r0 = row.index() * n;
    let c0 = col.index() * n;
    full.view_mut((r0, c0), (n, n)).copy_from(block);
}

/// H/ħ in rad/s at gradient phase `phi`: trap oscillator plus the
/// atom-light interaction in the frame rotating at the laser frequency.
pub fn build_hamiltonian(ion: &IonSpecies, trap: &TrapConfig, grad: &GradientConfig, layout: &HilbertLayout, phi: f64) -> Result<DMatrix<C64>> {
    let eta = lamb_dicke(ion, trap.omega_z)?;
    let ops = MotionalOps::new(layout.n_max, eta);
    Ok(hamiltonian_from_ops(&ops, trap.omega_z, grad.detuning, grad.rabi, layout, phi))
}

pub(crate) fn hamiltonian_from_ops(ops: &MotionalOps, omega: f64, detuning: f64, rabi: f64, layout: &HilbertLayout, phi: f64) -> DMatrix<C64> {
    let n = layout.n_max;
    let dim = layout.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for level in Level::ALL {
        for k in 0..n {
            let i = layout.index(level, k);
            let mut e = omega * (k as f64 + 0.5);
            if level.is_excited() {
                e -= detuning;
            }
            h[(i, i)] = C64::new(e, 0.0);
        }
    }
    let (g_plus, g_minus) = coupling_blocks(ops, rabi, phi);
    // cir+ drives S−½ ↔ P+½, cir− drives S+½ ↔ P−½.
    embed(&mut h, layout, Level::SMinus, Level::PPlus, &g_plus);
    embed(&mut h, layout, Level::PPlus, Level::SMinus, &g_plus.adjoint());
    embed(&mut h, layout, Level::SPlus, Level::PMinus, &g_minus);
    embed(&mut h, layout, Level::PMinus, Level::SPlus, &g_minus.adjoint());
    h
}

/// One spontaneous-emission jump operator J = p_mq·C_m·√Γ·e^{−ik_q ẑ}·|g⟩⟨e|.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub excited: Level,
    pub ground: Level,
    pub polarization: Polarization,
    /// Recoil direction q ∈ {+1, 0, −1}; the photon carries k_q = q·k.
    pub q: i8,
    /// p_mq.
    pub recoil_amplitude: f64,
    /// C_m.
    pub clebsch: f64,
    pub op: DMatrix<C64>,
}

/// The twelve jump operators (4 decay channels × 3 recoil directions).
pub fn build_jump_operators(ion: &IonSpecies, trap: &TrapConfig, layout: &HilbertLayout) -> Result<Vec<JumpOperator>> {
    let eta = lamb_dicke(ion, trap.omega_z)?;
    let ops = MotionalOps::new(layout.n_max, eta);
    Ok(jumps_from_ops(&ops, ion.linewidth, layout))
}

pub(crate) fn jumps_from_ops(ops: &MotionalOps, linewidth: f64, layout: &HilbertLayout) -> Vec<JumpOperator> {
    let n = layout.n_max;
    let identity = DMatrix::<C64>::identity(n, n);
    let mut out = Vec::with_capacity(12);
    for (excited, ground, pol) in DECAY_CHANNELS {
        let clebsch = pol.branching().sqrt();
        for (qi, q) in [1i8, 0, -1].into_iter().enumerate() {
            let p = pol.recoil_weights()[qi].sqrt();
            // e^{−ik_q ẑ}
            let motion = match q {
                1 => &ops.kick_minus,
                -1 => &ops.kick_plus,
                _ => &identity,
            };
            let amp = p * clebsch * linewidth.sqrt();
            let mut op = DMatrix::zeros(layout.dim(), layout.dim());
            embed(&mut op, layout, ground, excited, &motion.map(|v| v * amp));
            out.push(JumpOperator { excited, ground, polarization: pol, q, recoil_amplitude: p, clebsch, op });
        }
    }
    out
}

/// Reference dense Lindblad right-hand side −i[H,ρ] + Σ JρJ† − ½{J†J, ρ}.
pub fn lindblad_rhs_dense(h: &DMatrix<C64>, jumps: &[JumpOperator], rho: &DMatrix<C64>) -> DMatrix<C64> {
    let mi = C64::new(0.0, -1.0);
    let mut out = (h * rho - rho * h) * mi;
    for j in jumps {
        let jd = j.op.adjoint();
        let jdj = &jd * &j.op;
        out += &j.op * rho * &jd;
        out -= (&jdj * rho + rho * &jdj) * C64::new(0.5, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::hz;

    fn setup(n: usize, phi: f64) -> (IonSpecies, TrapConfig, GradientConfig, HilbertLayout) {
        let ion = IonSpecies::calcium40();
        let trap = TrapConfig::axial(hz(1088e3)).unwrap();
        let grad = GradientConfig::for_xi(&ion, hz(210e6), 0.9, trap.omega_z, phi).unwrap();
        (ion, trap, grad, HilbertLayout::new(n).unwrap())
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn hamiltonian_dimension_and_hermiticity() {
        for phi in [0.0, 0.3, FRAC_PI_4] {
            let (ion, trap, grad, layout) = setup(24, phi);
            let h = build_hamiltonian(&ion, &trap, &grad, &layout, phi).unwrap();
            assert_eq!(h.nrows(), 96);
            let diff = max_abs(&(&h - h.adjoint()));
            assert!(diff < 1e-12 * max_abs(&h), "phi={phi}: {diff}");
        }
    }

    #[test]
    fn pure_sigma_plus_at_quarter_phase() {
        let ops = MotionalOps::new(6, 1e-9);
        let (gp, gm) = coupling_blocks(&ops, 2.0, FRAC_PI_4);
        let c = (1.0f64 / 3.0).sqrt();
        assert!(max_abs(&gm) < 1e-8);
        // cir+ amplitude 2·(Ω/2)·√(1/3) on the diagonal.
        assert!((gp[(0, 0)] - C64::new(2.0 * c, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn kicks_are_unitary_and_conjugate() {
        let ops = MotionalOps::new(12, 0.3);
        let id = DMatrix::<C64>::identity(12, 12);
        assert!(max_abs(&(&ops.kick_plus * ops.kick_plus.adjoint() - &id)) < 1e-12);
        assert!(max_abs(&(ops.kick_plus.adjoint() - &ops.kick_minus)) < 1e-12);
    }

    #[test]
    fn recoil_weights_sum_to_one() {
        assert_eq!(RECOIL_WEIGHTS_PI.iter().sum::<f64>(), 1.0);
        assert!((RECOIL_WEIGHTS_SIGMA.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((CLEBSCH_PI + CLEBSCH_SIGMA - 1.0).abs() < 1e-15);
    }

    #[test]
    fn total_decay_rate_is_linewidth() {
        let (ion, trap, _, layout) = setup(8, 0.0);
        let jumps = build_jump_operators(&ion, &trap, &layout).unwrap();
        assert_eq!(jumps.len(), 12);
        let mut sum = DMatrix::<C64>::zeros(layout.dim(), layout.dim());
        for j in &jumps {
            sum += j.op.adjoint() * &j.op;
        }
        let g = ion.linewidth;
        for level in Level::ALL {
            for k in 0..layout.n_max {
                let i = layout.index(level, k);
                let expect = if level.is_excited() { g } else { 0.0 };
                assert!((sum[(i, i)].re - expect).abs() < 1e-9 * g);
            }
        }
        // Off-diagonal part vanishes because each kick is unitary.
        let mut offdiag = sum.clone();
        offdiag.fill_diagonal(C64::new(0.0, 0.0));
        assert!(max_abs(&offdiag) < 1e-9 * g);
    }

    #[test]
    fn jumps_annihilate_ground_states() {
        let (ion, trap, _, layout) = setup(6, 0.0);
        let jumps = build_jump_operators(&ion, &trap, &layout).unwrap();
        for j in &jumps {
            for level in [Level::SMinus, Level::SPlus] {
                for k in 0..layout.n_max {
                    let col = j.op.column(layout.index(level, k));
                    assert!(col.iter().all(|c| c.norm() == 0.0));
                }
            }
        }
    }

    #[test]
    fn dense_rhs_is_trace_free() {
        let (ion, trap, grad, layout) = setup(5, 0.0);
        let h = build_hamiltonian(&ion, &trap, &grad, &layout, 0.4).unwrap();
        let jumps = build_jump_operators(&ion, &trap, &layout).unwrap();
        let d = layout.dim();
        let a = DMatrix::<C64>::from_fn(d, d, |i, j| C64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i * 5 + j) % 7) as f64 - 3.0));
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        let rho = rho / tr;
        let out = lindblad_rhs_dense(&h, &jumps, &rho);
        assert!(out.trace().norm() < 1e-12 * max_abs(&h));
    }
}
