//! Four-level ion ⊗ truncated Fock space under a (possibly moving)
//! lin-⊥-lin gradient.
//!
//! Dense operators live in [`operators`]. Time evolution uses the block
//! structure of the problem: the two σ-drives never couple the manifold
//! {S−½, P+½} to {S+½, P−½} coherently, and spontaneous emission only
//! feeds populations. Starting from a state without inter-manifold
//! coherence, only eight n_max × n_max blocks of ρ are ever nonzero.

mod blocks;
mod extract;
mod integrator;
pub mod operators;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::physics::{lamb_dicke, GradientConfig, IonSpecies, TrapConfig};

pub use blocks::BlockGenerator;
pub use extract::{
    extract_cooling, extract_heating_rate, extract_rates, finite_size_extrapolate, moving_gradient_steady_state, simulate_rates, CoolingFit,
    ExtrapolationResult, HeatingFit, MovingGradientOptions, MovingGradientResult, RateExtraction, RatePlan,
};
pub use integrator::{evolve, EvolveOptions, SolverStats, Trajectory, TrajectorySample};
pub use operators::{build_hamiltonian, build_jump_operators, JumpOperator};

/// Internal level, in basis order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Level {
    SMinus,
    SPlus,
    PMinus,
    PPlus,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::SMinus, Level::SPlus, Level::PMinus, Level::PPlus];

    pub fn index(self) -> usize {
        match self {
            Level::SMinus => 0,
            Level::SPlus => 1,
            Level::PMinus => 2,
            Level::PPlus => 3,
        }
    }

    pub fn is_excited(self) -> bool {
        matches!(self, Level::PMinus | Level::PPlus)
    }
}

/// Basis layout: index = level·n_max + fock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HilbertLayout {
    pub n_max: usize,
}

impl HilbertLayout {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return domain(format!("n_max must be at least 2, got {n_max}"));
        }
        Ok(Self { n_max })
    }

    pub fn dim(&self) -> usize {
        4 * self.n_max
    }

    pub fn index(&self, level: Level, fock: usize) -> usize {
        level.index() * self.n_max + fock
    }
}

/// Density matrix on the full 4·n_max space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub layout: HilbertLayout,
    pub rho: DMatrix<C64>,
}

impl QuantumState {
    pub fn new(layout: HilbertLayout, rho: DMatrix<C64>) -> Result<Self> {
        let d = layout.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return domain(format!("density matrix must be {d}×{d}, got {}×{}", rho.nrows(), rho.ncols()));
        }
        Ok(Self { layout, rho })
    }

    /// |level⟩⊗|fock⟩⟨…|.
    pub fn pure(layout: HilbertLayout, level: Level, fock: usize) -> Result<Self> {
        if fock >= layout.n_max {
            return domain(format!("Fock state {fock} outside the truncated space (n_max = {})", layout.n_max));
        }
        let d = layout.dim();
        let mut rho = DMatrix::zeros(d, d);
        let i = layout.index(level, fock);
        rho[(i, i)] = C64::new(1.0, 0.0);
        Ok(Self { layout, rho })
    }

    /// Internal level times a diagonal motional distribution (renormalized
    /// over the retained Fock states).
    pub fn diagonal_motion(layout: HilbertLayout, level: Level, weights: &[f64]) -> Result<Self> {
        if weights.len() != layout.n_max || weights.iter().any(|w| !(*w >= 0.0)) {
            return domain("motional weights must be n_max non-negative numbers");
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return domain("motional weights sum to zero");
        }
        let d = layout.dim();
        let mut rho = DMatrix::zeros(d, d);
        for (k, w) in weights.iter().enumerate() {
            let i = layout.index(level, k);
            rho[(i, i)] = C64::new(w / total, 0.0);
        }
        Ok(Self { layout, rho })
    }

    /// Thermal motional state with mean occupation `nbar` (truncated).
    pub fn thermal(layout: HilbertLayout, level: Level, nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) {
            return domain(format!("nbar must be non-negative, got {nbar}"));
        }
        let ratio = nbar / (nbar + 1.0);
        let w: Vec<f64> = (0..layout.n_max).map(|k| ratio.powi(k as i32) / (nbar + 1.0)).collect();
        if nbar == 0.0 {
            return Self::pure(layout, level, 0);
        }
        Self::diagonal_motion(layout, level, &w)
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Population of each internal level, in [`Level::ALL`] order.
    pub fn level_populations(&self) -> [f64; 4] {
        let n = self.layout.n_max;
        let mut out = [0.0; 4];
        for level in Level::ALL {
            out[level.index()] = (0..n).map(|k| self.rho[(self.layout.index(level, k), self.layout.index(level, k))].re).sum();
        }
        out
    }

    /// Population of each Fock state, summed over internal levels.
    pub fn fock_populations(&self) -> Vec<f64> {
        let n = self.layout.n_max;
        (0..n).map(|k| Level::ALL.iter().map(|l| self.rho[(self.layout.index(*l, k), self.layout.index(*l, k))].re).sum()).collect()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Tr(ρ·(1 ⊗ a†a)).
pub fn mean_phonon(state: &QuantumState) -> f64 {
    state.fock_populations().iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Gradient phase as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PhaseSchedule {
    Fixed(f64),
    /// φ(t) = φ₀ + δt/2.
    Moving {
        phi0: f64,
        beam_detuning: f64,
    },
}

impl PhaseSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            PhaseSchedule::Fixed(p) => p,
            PhaseSchedule::Moving { phi0, beam_detuning } => phi0 + 0.5 * beam_detuning * t,
        }
    }

    pub fn is_fixed(&self) -> bool {
        match *self {
            PhaseSchedule::Fixed(_) => true,
            PhaseSchedule::Moving { beam_detuning, .. } => beam_detuning == 0.0,
        }
    }
}

/// Everything the master equation needs, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LindbladModel {
    pub layout: HilbertLayout,
    pub eta: f64,
    pub omega: f64,
    pub detuning: f64,
    pub rabi: f64,
    pub linewidth: f64,
}

impl LindbladModel {
    pub fn new(ion: &IonSpecies, trap: &TrapConfig, grad: &GradientConfig, layout: HilbertLayout) -> Result<Self> {
        let eta = lamb_dicke(ion, trap.omega_z)?;
        Self::from_parts(layout, eta, trap.omega_z, grad.detuning, grad.rabi, ion.linewidth)
    }

    pub fn from_parts(layout: HilbertLayout, eta: f64, omega: f64, detuning: f64, rabi: f64, linewidth: f64) -> Result<Self> {
        if !(eta > 0.0 && omega > 0.0 && linewidth > 0.0 && rabi >= 0.0 && detuning.is_finite()) {
            return domain("model needs eta, omega, linewidth > 0 and rabi ≥ 0");
        }
        Ok(Self { layout, eta, omega, detuning, rabi, linewidth })
    }

    /// Same field with a different Fock cutoff.
    pub fn with_cutoff(&self, n_max: usize) -> Result<Self> {
        Ok(Self { layout: HilbertLayout::new(n_max)?, ..*self })
    }

    pub fn saturation(&self) -> f64 {
        0.5 * self.rabi * self.rabi / (0.25 * self.linewidth * self.linewidth + self.detuning * self.detuning)
    }

    pub fn xi(&self) -> f64 {
        self.detuning * self.saturation() / (3.0 * self.omega)
    }

    pub fn motional_ops(&self) -> operators::MotionalOps {
        operators::MotionalOps::new(self.layout.n_max, self.eta)
    }

    pub fn hamiltonian(&self, phi: f64) -> DMatrix<C64> {
        operators::hamiltonian_from_ops(&self.motional_ops(), self.omega, self.detuning, self.rabi, &self.layout, phi)
    }

    pub fn jump_operators(&self) -> Vec<JumpOperator> {
        operators::jumps_from_ops(&self.motional_ops(), self.linewidth, &self.layout)
    }

    /// dρ/dt from the dense operators; reference implementation.
    pub fn rhs_dense(&self, phi: f64, state: &QuantumState) -> DMatrix<C64> {
        operators::lindblad_rhs_dense(&self.hamiltonian(phi), &self.jump_operators(), &state.rho)
    }

    /// Ground-state preparation |S,+½⟩⊗|0⟩.
    pub fn ground_state(&self) -> QuantumState {
        QuantumState::pure(self.layout, Level::SPlus, 0).expect("n_max ≥ 2")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_indexing() {
        let l = HilbertLayout::new(24).unwrap();
        assert_eq!(l.dim(), 96);
        assert_eq!(l.index(Level::PPlus, 23), 95);
        assert_eq!(l.index(Level::SPlus, 0), 24);
        assert!(HilbertLayout::new(1).is_err());
    }

    #[test]
    fn mean_phonon_examples() {
        let l = HilbertLayout::new(10).unwrap();
        let s = QuantumState::pure(l, Level::PMinus, 3).unwrap();
        assert_eq!(mean_phonon(&s), 3.0);
        let mut w = vec![0.0; 10];
        w[0] = 0.5;
        w[4] = 0.5;
        let m = QuantumState::diagonal_motion(l, Level::SMinus, &w).unwrap();
        assert!((mean_phonon(&m) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn thermal_mean() {
        // Geometric tail beyond 80 states at nbar = 2 is (2/3)^80 ≈ 1e-14.
        let s = QuantumState::thermal(HilbertLayout::new(80).unwrap(), Level::SPlus, 2.0).unwrap();
        assert!((mean_phonon(&s) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn moving_schedule() {
        let s = PhaseSchedule::Moving { phi0: 0.1, beam_detuning: 4.0 };
        assert_eq!(s.at(0.5), 1.1);
        assert!(PhaseSchedule::Moving { phi0: 0.1, beam_detuning: 0.0 }.is_fixed());
    }
}
