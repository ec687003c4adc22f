//! Closed-form semiclassical model: light-shift potentials, optical
//! pumping, cooling and heating rates in the Lamb-Dicke regime, energy
//! relaxation and the steady-state limits.
//!
//! Energies are in phonon units (E/ħω) and rates in 1/s.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::physics::{DimensionlessParams, GradientConfig, IonSpecies, TrapConfig, HBAR};

/// State-dependent potentials U± at one position, in ħ·rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialPair {
    pub u_plus: f64,
    pub u_minus: f64,
}

/// W, H and the implied steady state for one gradient phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSummary {
    /// Cooling rate, 1/s.
    pub w: f64,
    /// Heating rate, quanta/s.
    pub h: f64,
    /// H/W − ½; +∞ when W = 0.
    pub n_steady: f64,
}

impl RateSummary {
    pub fn new(w: f64, h: f64) -> Self {
        let n_steady = if w > 0.0 { h / w - 0.5 } else { f64::INFINITY };
        Self { w, h, n_steady }
    }

    pub fn has_steady_state(&self) -> bool {
        self.n_steady.is_finite()
    }
}

/// U± = ½mω²z² + Δs/3 ∓ (Δs/3)·sin(2kz + 2φ), divided by ħ.
pub fn light_shift_potentials(z: f64, trap: &TrapConfig, grad: &GradientConfig, ion: &IonSpecies) -> Result<PotentialPair> {
    let s = grad.saturation(ion)?;
    let trap_term = 0.5 * ion.mass * trap.omega_z * trap.omega_z * z * z / HBAR;
    let depth = grad.detuning * s / 3.0;
    let mod_ = depth * (2.0 * ion.wavenumber() * z + 2.0 * grad.phase).sin();
    Ok(PotentialPair { u_plus: trap_term + depth - mod_, u_minus: trap_term + depth + mod_ })
}

/// (Γ_{+→−}, Γ_{−→+}) = (Γs/9)(1 ∓ sin(2kz + 2φ)).
pub fn pumping_rates(z: f64, grad: &GradientConfig, ion: &IonSpecies) -> Result<(f64, f64)> {
    let s = grad.saturation(ion)?;
    let base = ion.linewidth * s / 9.0;
    let sn = (2.0 * ion.wavenumber() * z + 2.0 * grad.phase).sin();
    Ok((base * (1.0 - sn), base * (1.0 + sn)))
}

/// Carrier-scattering and sideband heating contributions, quanta/s.
pub fn heating_components(phi: f64, params: &DimensionlessParams, ion: &IonSpecies) -> (f64, f64) {
    let base = params.eta * params.eta * ion.linewidth * params.s;
    let s2 = (2.0 * phi).sin().powi(2);
    (ion.alpha / 3.0 * base * (1.0 - s2), base / 3.0 * (1.0 + s2))
}

/// Cooling and heating rates at fixed gradient phase.
pub fn rates(phi: f64, params: &DimensionlessParams, ion: &IonSpecies) -> RateSummary {
    let base = params.eta * params.eta * ion.linewidth * params.s;
    let mut c2 = (2.0 * phi).cos().powi(2);
    // cos(2φ) at φ = ±π/4 is ~1e-16 in floating point; treat it as the
    // exact node so W vanishes there.
    if c2 < 1e-30 {
        c2 = 0.0;
    }
    let s2 = (2.0 * phi).sin().powi(2);
    let xi = params.xi;
    let w = 16.0 / 9.0 * base * xi * c2;
    let h = 2.0 / 9.0 * base * (8.0 * xi * xi * c2 * c2 + 2.0 + s2);
    RateSummary::new(w, h)
}

/// Rates averaged over a uniformly distributed gradient phase.
pub fn phase_averaged_rates(params: &DimensionlessParams, ion: &IonSpecies) -> RateSummary {
    let base = params.eta * params.eta * ion.linewidth * params.s;
    let xi = params.xi;
    RateSummary::new(8.0 / 9.0 * base * xi, 2.0 / 9.0 * base * (3.0 * xi * xi + 2.5))
}

/// Rates averaged numerically over `points` equally spaced phases in [0, π).
pub fn grid_averaged_rates(params: &DimensionlessParams, ion: &IonSpecies, points: usize) -> RateSummary {
    let (mut w, mut h) = (0.0, 0.0);
    for i in 0..points {
        let r = rates(PI * i as f64 / points as f64, params, ion);
        w += r.w;
        h += r.h;
    }
    RateSummary::new(w / points as f64, h / points as f64)
}

/// ξ + 1/(4ξ) − ½.
pub fn steady_state_fixed_phase(xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return domain(format!("xi must be positive, got {xi}"));
    }
    Ok(xi + 0.25 / xi - 0.5)
}

/// ¾ξ + 5/(8ξ) − ½.
pub fn steady_state_phase_averaged(xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return domain(format!("xi must be positive, got {xi}"));
    }
    Ok(0.75 * xi + 0.625 / xi - 0.5)
}

/// E(t) for Ė = −W·E + H + R, in phonon units (E = n + ½).
pub fn evolve_energy(e0: f64, t: f64, rates: &RateSummary, anomalous_heating: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("time must be non-negative, got {t}"));
    }
    let drive = rates.h + anomalous_heating;
    if rates.w == 0.0 {
        return Ok(e0 + drive * t);
    }
    let e_inf = drive / rates.w;
    Ok(e_inf + (e0 - e_inf) * (-rates.w * t).exp())
}

/// Result of fitting n(τ) = n_∞ + (n₀ − n_∞)e^{−Wτ}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub n_inf: f64,
    pub n0: f64,
    pub w: f64,
    pub residual_norm: f64,
    /// The trace is flat within round-off; W is reported as 0.
    pub degenerate: bool,
}

/// Least-squares exponential relaxation fit (log-linear seed, then
/// damped Gauss-Newton).
pub fn fit_exponential_cooling(times: &[f64], n: &[f64]) -> Result<ExponentialFit> {
    if times.len() != n.len() || times.len() < 4 {
        return domain("exponential fit needs at least 4 (t, n) points");
    }
    if times.windows(2).any(|w| w[1] < w[0]) || n.iter().chain(times).any(|v| !v.is_finite()) {
        return domain("times must be non-decreasing and all values finite");
    }
    let scale = n.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let spread = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - n.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 1e-12 * scale {
        let mean = n.iter().sum::<f64>() / n.len() as f64;
        return Ok(ExponentialFit { n_inf: mean, n0: mean, w: 0.0, residual_norm: 0.0, degenerate: true });
    }
    let t0 = times[0];
    let tau: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let seed = log_linear_seed(&tau, n);
    let res = |p: &[f64]| DVector::from_iterator(tau.len(), tau.iter().zip(n).map(|(t, y)| p[0] + (p[1] - p[0]) * (-p[2] * t).exp() - y));
    let jac = |p: &[f64]| {
        DMatrix::from_fn(tau.len(), 3, |i, j| {
            let e = (-p[2] * tau[i]).exp();
            match j {
                0 => 1.0 - e,
                1 => e,
                _ => -(p[1] - p[0]) * tau[i] * e,
            }
        })
    };
    let out = levenberg_marquardt(res, jac, |p| p[2] >= 0.0, &seed, LmOptions::default())?;
    if !out.converged {
        return Err(Error::FitFailure(format!("exponential fit did not converge after {} iterations", out.iterations)));
    }
    Ok(ExponentialFit { n_inf: out.params[0], n0: out.params[1], w: out.params[2], residual_norm: out.residual_norm, degenerate: false })
}

/// Seed (n_∞, n₀, W): n_∞ from the tail, W from a line through
/// ln|n − n_∞| over the points that are clearly away from the asymptote.
fn log_linear_seed(tau: &[f64], n: &[f64]) -> [f64; 3] {
    let k = n.len();
    let tail = (k / 5).max(1);
    let n_inf = n[k - tail..].iter().sum::<f64>() / tail as f64;
    let n0 = n[0];
    let amp = (n0 - n_inf).abs().max(1e-300);
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in tau.iter().zip(n) {
        let d = (y - n_inf).abs();
        if d > 0.05 * amp {
            let ly = d.ln();
            sx += t;
            sy += ly;
            sxx += t * t;
            sxy += t * ly;
            m += 1.0;
        }
    }
    let span = tau[k - 1].max(1e-300);
    let w = if m >= 2.0 && (m * sxx - sx * sx) > 0.0 { -(m * sxy - sx * sy) / (m * sxx - sx * sx) } else { 3.0 / span };
    let w = if w.is_finite() && w > 0.0 { w } else { 3.0 / span };
    [n_inf, n0, w]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::hz;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn ion() -> IonSpecies {
        IonSpecies::calcium40()
    }

    fn grad(phase: f64) -> GradientConfig {
        GradientConfig::for_xi(&ion(), hz(210e6), 1.0, hz(1088e3), phase).unwrap()
    }

    fn trap() -> TrapConfig {
        TrapConfig::axial(hz(1088e3)).unwrap()
    }

    #[test]
    fn potentials_at_origin_and_depth() {
        let g = grad(0.0);
        let s = g.saturation(&ion()).unwrap();
        let p = light_shift_potentials(0.0, &trap(), &g, &ion()).unwrap();
        assert_relative_eq!(p.u_plus, g.detuning * s / 3.0, max_relative = 1e-14);
        assert_relative_eq!(p.u_minus, p.u_plus, max_relative = 1e-14);
        // Maximum of U− − U+ over one optical period.
        let k = ion().wavenumber();
        let depth = (0..1000)
            .map(|i| {
                let z = i as f64 / 1000.0 * PI / k;
                let p = light_shift_potentials(z, &trap(), &g, &ion()).unwrap();
                p.u_minus - p.u_plus
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(depth, 2.0 * g.detuning * s / 3.0, max_relative = 1e-5);
    }

    #[test]
    fn potential_sum_rule_and_swap() {
        let g = grad(0.4);
        let s = g.saturation(&ion()).unwrap();
        let g2 = g.with_phase(0.4 + PI / 2.0);
        for z in [-3e-8, 1e-9, 7.7e-8] {
            let p = light_shift_potentials(z, &trap(), &g, &ion()).unwrap();
            let q = light_shift_potentials(z, &trap(), &g2, &ion()).unwrap();
            let u_trap = 0.5 * ion().mass * trap().omega_z.powi(2) * z * z / HBAR;
            assert_relative_eq!(p.u_plus + p.u_minus - 2.0 * u_trap, 2.0 * g.detuning * s / 3.0, max_relative = 1e-9);
            assert_relative_eq!(p.u_plus, q.u_minus, max_relative = 1e-9);
        }
    }

    #[test]
    fn pumping_rate_cases() {
        let g = grad(0.0);
        let s = g.saturation(&ion()).unwrap();
        let gs = ion().linewidth * s;
        let (a, b) = pumping_rates(0.0, &g, &ion()).unwrap();
        assert_relative_eq!(a, gs / 9.0, max_relative = 1e-14);
        assert_relative_eq!(b, gs / 9.0, max_relative = 1e-14);
        let (a, b) = pumping_rates(0.0, &g.with_phase(FRAC_PI_4), &ion()).unwrap();
        assert!(a.abs() < 1e-12 * gs);
        assert_relative_eq!(b, 2.0 * gs / 9.0, max_relative = 1e-14);
        let (a, b) = pumping_rates(3.3e-8, &g.with_phase(0.9), &ion()).unwrap();
        assert_relative_eq!(a + b, 2.0 * gs / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn heating_component_cases() {
        let p = DimensionlessParams::new(0.17, 0.02, 1.0).unwrap();
        let base = 0.17f64.powi(2) * ion().linewidth * 0.02;
        let (c, s) = heating_components(0.0, &p, &ion());
        assert_relative_eq!(c, ion().alpha * base / 3.0, max_relative = 1e-14);
        assert_relative_eq!(s, base / 3.0, max_relative = 1e-14);
        assert_relative_eq!(c / s, ion().alpha, max_relative = 1e-14);
        let (c, s) = heating_components(FRAC_PI_4, &p, &ion());
        assert!(c.abs() < 1e-12 * base);
        assert_relative_eq!(s, 2.0 * base / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn rate_examples() {
        let p = DimensionlessParams::new(0.171, 0.021, 1.35).unwrap();
        let ion = IonSpecies { linewidth: hz(21.6e6), ..ion() };
        assert!(rates(FRAC_PI_4, &p, &ion).w.abs() < 1e-6);
        assert!(!rates(FRAC_PI_4, &p, &ion).has_steady_state());
        let r = rates(0.0, &p, &ion);
        assert_relative_eq!(r.n_steady, steady_state_fixed_phase(1.35).unwrap(), max_relative = 1e-12);
        assert!((r.w - 2.0e5).abs() < 0.1e5, "W = {}", r.w);
        let avg = phase_averaged_rates(&p, &ion);
        assert!((avg.w - 1.0e5).abs() < 0.05e5, "W̄ = {}", avg.w);
    }

    #[test]
    fn limits() {
        assert_eq!(steady_state_fixed_phase(0.5).unwrap(), 0.5);
        assert_eq!(steady_state_fixed_phase(1.0).unwrap(), 0.75);
        assert!((steady_state_fixed_phase(1e6).unwrap() - (1e6 - 0.5)).abs() < 1e-6);
        let xs = (5.0f64 / 6.0).sqrt();
        assert_relative_eq!(steady_state_phase_averaged(xs).unwrap(), (15.0f64 / 8.0).sqrt() - 0.5, max_relative = 1e-14);
        assert_eq!(steady_state_phase_averaged(1.0).unwrap(), 0.875);
        assert!(steady_state_phase_averaged(0.5).unwrap() > steady_state_fixed_phase(0.5).unwrap());
        assert!(steady_state_fixed_phase(0.0).is_err());
        assert!(steady_state_phase_averaged(-1.0).is_err());
    }

    #[test]
    fn stationary_points_by_finite_difference() {
        let h = 1e-6;
        let d = |f: fn(f64) -> Result<f64>, x: f64| (f(x + h).unwrap() - f(x - h).unwrap()) / (2.0 * h);
        assert!(d(steady_state_fixed_phase, 0.5).abs() < 1e-4);
        assert!(d(steady_state_phase_averaged, (5.0f64 / 6.0).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn grid_average_reproduces_phase_averaged_limit() {
        for xi in [0.3, (5.0f64 / 6.0).sqrt(), 3.0] {
            let p = DimensionlessParams::new(0.05, 0.01, xi).unwrap();
            let r = grid_averaged_rates(&p, &ion(), 10_000);
            let want = steady_state_phase_averaged(xi).unwrap();
            assert_relative_eq!(r.n_steady, want, max_relative = 1e-6);
        }
    }

    #[test]
    fn energy_evolution() {
        let r = RateSummary::new(5e4, 6e4);
        assert_eq!(evolve_energy(16.5, 0.0, &r, 0.0).unwrap(), 16.5);
        assert_relative_eq!(evolve_energy(16.5, 1.0, &r, 0.0).unwrap(), r.h / r.w, max_relative = 1e-12);
        assert_relative_eq!(evolve_energy(3.0, 2.0, &RateSummary::new(0.0, 1.5), 0.5).unwrap(), 7.0);
        assert!(evolve_energy(1.0, -1.0, &r, 0.0).is_err());
    }

    #[test]
    fn equilibrium_within_200_us_at_operating_point() {
        let g = GradientConfig::for_xi(&IonSpecies { linewidth: hz(21.6e6), ..ion() }, hz(210e6), 1.35, hz(1088e3), 0.0).unwrap();
        let ion = IonSpecies { linewidth: hz(21.6e6), ..ion() };
        let p = DimensionlessParams::from_physical(&ion, &g, hz(1088e3)).unwrap();
        let r = phase_averaged_rates(&p, &ion);
        let e_inf = r.h / r.w;
        let e = evolve_energy(16.5, 200e-6, &r, 0.0).unwrap();
        assert!((e - e_inf).abs() < 0.05 * (16.5 - e_inf), "E = {e}, E∞ = {e_inf}");
    }

    #[test]
    fn exponential_round_trip() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 5e-6).collect();
        let n: Vec<f64> = t.iter().map(|t| 1.0 + 15.0 * (-5e4 * t).exp()).collect();
        let f = fit_exponential_cooling(&t, &n).unwrap();
        assert_relative_eq!(f.n_inf, 1.0, max_relative = 1e-6);
        assert_relative_eq!(f.n0, 16.0, max_relative = 1e-6);
        assert_relative_eq!(f.w, 5e4, max_relative = 1e-6);
    }

    #[test]
    fn exponential_degenerate_and_invalid() {
        let t: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let f = fit_exponential_cooling(&t, &[3.0; 6]).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.w, 0.0);
        assert_eq!(f.n_inf, 3.0);
        assert!(fit_exponential_cooling(&t[..3], &[1.0; 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rates_periodic_and_even(phi in -3.0f64..3.0, xi in 0.1f64..5.0) {
                let p = DimensionlessParams::new(0.1, 0.01, xi).unwrap();
                let a = rates(phi, &p, &ion());
                let b = rates(phi + PI / 2.0, &p, &ion());
                let c = rates(-phi, &p, &ion());
                prop_assert!((a.w - b.w).abs() <= 1e-9 * a.h);
                prop_assert!((a.h - b.h).abs() <= 1e-9 * a.h);
                prop_assert!((a.w - c.w).abs() <= 1e-12 * a.h);
                prop_assert!((a.h - c.h).abs() <= 1e-12 * a.h);
            }

            #[test]
            fn energy_monotone_toward_fixed_point(e0 in 0.5f64..50.0, t1 in 0.0f64..1e-4, dt in 0.0f64..1e-4) {
                let r = RateSummary::new(4e4, 5e4);
                let e_inf = r.h / r.w;
                let a = evolve_energy(e0, t1, &r, 0.0).unwrap();
                let b = evolve_energy(e0, t1 + dt, &r, 0.0).unwrap();
                prop_assert!((b - e_inf).abs() <= (a - e_inf).abs() + 1e-12);
            }
        }
    }
}
