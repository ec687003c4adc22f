//! Physical constants, species/trap/field records and the dimensionless
//! quantities shared by every model.
//!
//! All frequencies are angular frequencies in rad/s. Conversion from
//! ordinary frequencies happens at the configuration boundary
//! ([`hz`]).

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Result};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Convert an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    2.0 * PI * f
}

/// Ion species and the cooling transition it is driven on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IonSpecies {
    /// Mass, kg.
    pub mass: f64,
    /// Transition wavelength, m.
    pub wavelength: f64,
    /// Natural linewidth Γ, rad/s.
    pub linewidth: f64,
    /// Emission anisotropy factor (1/3 for isotropic emission).
    pub alpha: f64,
}

impl IonSpecies {
    pub fn new(mass: f64, wavelength: f64, linewidth: f64, alpha: f64) -> Result<Self> {
        if !(mass > 0.0 && wavelength > 0.0 && linewidth > 0.0) {
            return domain(format!("ion mass, wavelength and linewidth must be positive (got {mass}, {wavelength}, {linewidth})"));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return domain(format!("alpha must lie in (0, 1], got {alpha}"));
        }
        Ok(Self { mass, wavelength, linewidth, alpha })
    }

    /// ⁴⁰Ca⁺ on the S₁/₂ ↔ P₁/₂ line at 397 nm.
    pub fn calcium40() -> Self {
        Self { mass: 39.9626 * ATOMIC_MASS_UNIT, wavelength: 396.847e-9, linewidth: hz(21.57e6), alpha: 1.0 / 3.0 }
    }

    /// Wavenumber k = 2π/λ, 1/m.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Same species probed at a different wavelength (e.g. a quadrupole
    /// transition used for thermometry, or an artificially stretched
    /// wavelength for deep Lamb-Dicke studies).
    pub fn with_wavelength(&self, wavelength: f64) -> Result<Self> {
        Self::new(self.mass, wavelength, self.linewidth, self.alpha)
    }
}

/// Harmonic (pseudopotential) trap frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapConfig {
    /// Axial frequency ω_z, rad/s.
    pub omega_z: f64,
    /// Transverse frequencies, rad/s. Only needed for crystals.
    pub omega_x: Option<f64>,
    pub omega_y: Option<f64>,
    /// Axial Mathieu q parameter.
    pub q_z: f64,
}

impl TrapConfig {
    pub fn new(omega_z: f64, omega_x: Option<f64>, omega_y: Option<f64>, q_z: f64) -> Result<Self> {
        if !(omega_z > 0.0) {
            return domain(format!("omega_z must be positive, got {omega_z}"));
        }
        for (name, w) in [("omega_x", omega_x), ("omega_y", omega_y)] {
            if let Some(w) = w {
                if !(w > 0.0) {
                    return domain(format!("{name} must be positive, got {w}"));
                }
            }
        }
        if !(q_z >= 0.0) {
            return domain(format!("q_z must be non-negative, got {q_z}"));
        }
        Ok(Self { omega_z, omega_x, omega_y, q_z })
    }

    /// Single-ion axial trap.
    pub fn axial(omega_z: f64) -> Result<Self> {
        Self::new(omega_z, None, None, 0.0)
    }
}

/// Lin-⊥-lin field: detuning, single-beam stretched-transition Rabi
/// frequency, gradient phase and beam frequency difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientConfig {
    /// Δ, rad/s; positive is blue.
    pub detuning: f64,
    /// Ω, rad/s.
    pub rabi: f64,
    /// φ, rad.
    pub phase: f64,
    /// δ, rad/s.
    pub beam_detuning: f64,
}

impl GradientConfig {
    pub fn new(detuning: f64, rabi: f64, phase: f64, beam_detuning: f64) -> Result<Self> {
        if !(rabi >= 0.0) {
            return domain(format!("Rabi frequency must be non-negative, got {rabi}"));
        }
        if !(beam_detuning >= 0.0) {
            return domain(format!("beam detuning must be non-negative, got {beam_detuning}"));
        }
        if !detuning.is_finite() || !phase.is_finite() {
            return domain("detuning and phase must be finite");
        }
        Ok(Self { detuning, rabi, phase, beam_detuning })
    }

    /// Field whose Rabi frequency realises the requested ξ at trap
    /// frequency `omega`.
    pub fn for_xi(ion: &IonSpecies, detuning: f64, xi: f64, omega: f64, phase: f64) -> Result<Self> {
        if detuning == 0.0 || !(omega > 0.0) || !(xi >= 0.0) {
            return domain("for_xi needs nonzero detuning, positive omega and non-negative xi");
        }
        let s = 3.0 * omega * xi / detuning;
        if s < 0.0 {
            return domain("xi > 0 requires blue detuning");
        }
        let g = ion.linewidth;
        let rabi = (2.0 * s * (g * g / 4.0 + detuning * detuning)).sqrt();
        Self::new(detuning, rabi, phase, 0.0)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_beam_detuning(mut self, delta: f64) -> Self {
        self.beam_detuning = delta;
        self
    }

    pub fn saturation(&self, ion: &IonSpecies) -> Result<f64> {
        saturation(self.rabi, self.detuning, ion.linewidth)
    }
}

/// η, s and ξ for one ion/field/mode combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionlessParams {
    pub eta: f64,
    pub s: f64,
    pub xi: f64,
}

impl DimensionlessParams {
    pub fn new(eta: f64, s: f64, xi: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return domain(format!("eta must be positive, got {eta}"));
        }
        if !(0.0..1.0).contains(&s) {
            return domain(format!("saturation must lie in [0, 1), got {s}"));
        }
        if !xi.is_finite() {
            return domain("xi must be finite");
        }
        Ok(Self { eta, s, xi })
    }

    /// Derive all three from physical inputs.
    pub fn from_physical(ion: &IonSpecies, grad: &GradientConfig, omega: f64) -> Result<Self> {
        let eta = lamb_dicke(ion, omega)?;
        let s = grad.saturation(ion)?;
        let xi = xi(grad.detuning, s, omega)?;
        Self::new(eta, s, xi)
    }

    /// The low-saturation expansion degrades above s = 0.1.
    pub fn low_saturation(&self) -> bool {
        self.s <= 0.1
    }
}

/// Lamb-Dicke parameter √(ħk²/(2mω)).
pub fn lamb_dicke(ion: &IonSpecies, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return domain(format!("trap frequency must be positive, got {omega}"));
    }
    let k = ion.wavenumber();
    Ok((HBAR * k * k / (2.0 * ion.mass * omega)).sqrt())
}

/// Saturation parameter (Ω²/2)/(Γ²/4 + Δ²).
pub fn saturation(rabi: f64, detuning: f64, linewidth: f64) -> Result<f64> {
    if !(linewidth > 0.0) {
        return domain(format!("linewidth must be positive, got {linewidth}"));
    }
    Ok(0.5 * rabi * rabi / (0.25 * linewidth * linewidth + detuning * detuning))
}

/// Normalized optical depth ξ = Δs/(3ω).
pub fn xi(detuning: f64, s: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return domain(format!("trap frequency must be positive, got {omega}"));
    }
    Ok(detuning * s / (3.0 * omega))
}

/// One-dimensional Doppler cooling limit Γ(1+α)/(4ω) in phonons.
pub fn doppler_limit(linewidth: f64, omega: f64, alpha: f64) -> Result<f64> {
    if !(linewidth > 0.0 && omega > 0.0) {
        return domain("Doppler limit needs positive linewidth and trap frequency");
    }
    if !(alpha >= 0.0) {
        return domain(format!("alpha must be non-negative, got {alpha}"));
    }
    Ok(linewidth * (1.0 + alpha) / (4.0 * omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn calcium_lamb_dicke_at_1088_khz() {
        let ca = IonSpecies::calcium40();
        let eta = lamb_dicke(&ca, hz(1088e3)).unwrap();
        assert!((eta - 0.17).abs() < 0.005, "eta = {eta}");
        let eta4 = lamb_dicke(&ca, 4.0 * hz(1088e3)).unwrap();
        assert_relative_eq!(eta4, eta / 2.0, max_relative = 1e-14);
        let eta217 = lamb_dicke(&ca, hz(217e3)).unwrap();
        assert!((eta217 - 0.38).abs() < 0.01, "eta = {eta217}");
    }

    #[test]
    fn lamb_dicke_rejects_bad_frequency() {
        let ca = IonSpecies::calcium40();
        assert!(lamb_dicke(&ca, 0.0).is_err());
        assert!(lamb_dicke(&ca, -1.0).is_err());
    }

    #[test]
    fn saturation_cases() {
        let g = hz(21.6e6);
        assert_relative_eq!(saturation(g / 2f64.sqrt(), 0.0, g).unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(saturation(0.0, hz(210e6), g).unwrap(), 0.0);
        assert!(saturation(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn xi_at_single_ion_operating_point() {
        let g = hz(21.6e6);
        let delta = hz(210e6);
        // Rabi frequency chosen so that s = 0.021.
        let rabi = (2.0 * 0.021 * (g * g / 4.0 + delta * delta)).sqrt();
        let s = saturation(rabi, delta, g).unwrap();
        assert_relative_eq!(s, 0.021, max_relative = 1e-12);
        let x = xi(delta, s, hz(1088e3)).unwrap();
        assert!((x - 1.35).abs() < 0.01, "xi = {x}");
        assert_eq!(xi(delta, 0.0, hz(1e6)).unwrap(), 0.0);
        assert_relative_eq!(xi(delta, 2.0 * s, hz(1088e3)).unwrap(), 2.0 * x, max_relative = 1e-14);
        assert!(xi(delta, s, 0.0).is_err());
    }

    #[test]
    fn doppler_limit_cases() {
        let g = hz(21.6e6);
        let w = hz(1088e3);
        let n = doppler_limit(g, w, 1.0 / 3.0).unwrap();
        assert!((n - 6.6).abs() < 0.05, "n = {n}");
        assert_relative_eq!(doppler_limit(g, w, 0.0).unwrap(), g / (4.0 * w), max_relative = 1e-14);
        assert_relative_eq!(doppler_limit(g, 2.0 * w, 1.0 / 3.0).unwrap(), n / 2.0, max_relative = 1e-14);
        assert!(doppler_limit(0.0, w, 0.3).is_err());
        assert!(doppler_limit(g, -w, 0.3).is_err());
    }

    #[test]
    fn for_xi_inverts_xi() {
        let ca = IonSpecies::calcium40();
        let w = hz(1088e3);
        let grad = GradientConfig::for_xi(&ca, hz(210e6), 0.9, w, 0.0).unwrap();
        let p = DimensionlessParams::from_physical(&ca, &grad, w).unwrap();
        assert_relative_eq!(p.xi, 0.9, max_relative = 1e-12);
        assert!(p.low_saturation());
    }

    #[test]
    fn species_validation() {
        assert!(IonSpecies::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(IonSpecies::new(1.0, 1.0, 1.0, 1.5).is_err());
        assert!(IonSpecies::new(-1.0, 1.0, 1.0, 0.3).is_err());
        assert!(TrapConfig::new(1.0, Some(-1.0), None, 0.0).is_err());
        assert!(TrapConfig::new(1.0, None, None, -0.1).is_err());
        assert!(GradientConfig::new(1.0, -1.0, 0.0, 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn recoil_identity(w in 1e5f64..1e8) {
                let ca = IonSpecies::calcium40();
                let e = lamb_dicke(&ca, w).unwrap();
                let e0 = lamb_dicke(&ca, 1e6).unwrap();
                prop_assert!(((e * e * w) / (e0 * e0 * 1e6) - 1.0).abs() < 1e-12);
            }

            #[test]
            fn xi_monotone_in_rabi(r1 in 0.0f64..1e9, dr in 1.0f64..1e8) {
                let g = hz(21.6e6);
                let d = hz(210e6);
                let w = hz(1e6);
                let x1 = xi(d, saturation(r1, d, g).unwrap(), w).unwrap();
                let x2 = xi(d, saturation(r1 + dr, d, g).unwrap(), w).unwrap();
                prop_assert!(x2 > x1);
            }
        }
    }
}
