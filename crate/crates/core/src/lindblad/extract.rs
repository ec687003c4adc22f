//! Rate and limit extraction from master-equation trajectories.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{evolve, EvolveOptions, LindbladModel, PhaseSchedule, Trajectory};
use crate::error::{domain, Error, Result};
use crate::fit::{levenberg_marquardt, polyfit, LmOptions};

/// Tangent fit at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatingFit {
    /// d⟨n⟩/dt at t = 0, quanta/s.
    pub slope: f64,
    /// End of the fit window, s.
    pub window: f64,
    pub points: usize,
    /// |quadratic term / linear term| at the window end.
    pub curvature_ratio: f64,
}

/// Initial slope of ⟨n(t)⟩ by a linear fit over a window that shrinks
/// until the quadratic correction is below 5%.
pub fn extract_heating_rate(times: &[f64], n: &[f64]) -> Result<HeatingFit> {
    const MIN_POINTS: usize = 5;
    const MAX_CURVATURE: f64 = 0.05;
    if times.len() != n.len() || times.len() < MIN_POINTS {
        return domain(format!("heating-rate extraction needs at least {MIN_POINTS} samples"));
    }
    let t0 = times[0];
    let tau: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let dn: Vec<f64> = n.iter().map(|v| v - n[0]).collect();
    let mut k = tau.len();
    loop {
        let q = polyfit(&tau[..k], &dn[..k], 2)?;
        let tw = tau[k - 1];
        let ratio = if q[1] != 0.0 { (q[2] * tw / q[1]).abs() } else { f64::INFINITY };
        if ratio < MAX_CURVATURE {
            let lin = polyfit(&tau[..k], &dn[..k], 1)?;
            // A rising segment is required; noise may wiggle but the
            // fitted slope and the net change must agree in sign.
            if !(lin[1] > 0.0 && dn[k - 1] > 0.0) {
                return Err(Error::FitFailure(format!("initial segment is not rising (slope {:.3e} over {} samples)", lin[1], k)));
            }
            return Ok(HeatingFit { slope: lin[1], window: tw, points: k, curvature_ratio: ratio });
        }
        if k == MIN_POINTS {
            return Err(Error::FitFailure(format!(
                "no window with at least {MIN_POINTS} samples keeps the quadratic correction below 5% (ratio {ratio:.3})"
            )));
        }
        k = (k * 3 / 4).max(MIN_POINTS);
    }
}

/// n_m(1 − e^{−W_m t}) fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingFit {
    pub n_m: f64,
    pub w_m: f64,
    pub residual_norm: f64,
    /// The trajectory never left zero; n_m = 0 and W_m undefined (0).
    pub flat: bool,
}

/// Fit the heating-to-steady-state curve of a trajectory started in the
/// motional ground state.
pub fn extract_cooling(times: &[f64], n: &[f64]) -> Result<CoolingFit> {
    if times.len() != n.len() || times.len() < 3 {
        return domain("cooling fit needs at least 3 samples");
    }
    let t0 = times[0];
    let tau: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let top = n.iter().cloned().fold(0.0, f64::max);
    if top <= 1e-14 {
        return Ok(CoolingFit { n_m: 0.0, w_m: 0.0, residual_norm: 0.0, flat: true });
    }
    let k = n.len();
    let tail = (k / 5).max(1);
    let n_seed = n[k - tail..].iter().sum::<f64>() / tail as f64;
    // Time to reach 1 − 1/e of the plateau.
    let target = n_seed * (1.0 - (-1.0f64).exp());
    let t_e = tau.iter().zip(n).find(|(_, v)| **v >= target).map(|(t, _)| *t).unwrap_or(tau[k - 1]);
    let w_seed = 1.0 / t_e.max(tau[1].max(1e-300));
    let res = |p: &[f64]| DVector::from_iterator(k, tau.iter().zip(n).map(|(t, y)| p[0] * (1.0 - (-p[1] * t).exp()) - y));
    let jac = |p: &[f64]| {
        DMatrix::from_fn(k, 2, |i, j| {
            let e = (-p[1] * tau[i]).exp();
            if j == 0 {
                1.0 - e
            } else {
                p[0] * tau[i] * e
            }
        })
    };
    let out = levenberg_marquardt(res, jac, |p| p[1] > 0.0, &[n_seed, w_seed], LmOptions::default())?;
    if !out.converged {
        return Err(Error::FitFailure(format!("cooling fit did not converge after {} iterations", out.iterations)));
    }
    Ok(CoolingFit { n_m: out.params[0], w_m: out.params[1], residual_norm: out.residual_norm, flat: false })
}

/// Cutoff extrapolation n_m = n_∞ − c·r^m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtrapolationResult {
    pub n_inf: f64,
    /// 1σ half-width of n_∞ from the fit covariance (0 when exact).
    pub half_width: f64,
    pub c: f64,
    pub r: f64,
    /// False when the fit did not produce 0 < r < 1; n_inf is then the
    /// value at the largest cutoff.
    pub converged: bool,
}

pub fn finite_size_extrapolate(points: &[(usize, f64)]) -> Result<ExtrapolationResult> {
    if points.len() < 4 {
        return domain(format!("extrapolation needs at least 4 cutoffs, got {}", points.len()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return domain("cutoffs must be strictly increasing");
    }
    let (m_last, n_last) = *points.last().expect("non-empty");
    let scale = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(1e-300);
    if points.iter().all(|p| (p.1 - n_last).abs() <= 1e-12 * scale) {
        return Ok(ExtrapolationResult { n_inf: n_last, half_width: 0.0, c: 0.0, r: 0.0, converged: true });
    }
    let fallback = ExtrapolationResult { n_inf: n_last, half_width: f64::NAN, c: f64::NAN, r: f64::NAN, converged: false };
    // Seed r from the last two successive differences, then c and n_∞
    // by linear least squares at that r.
    let k = points.len();
    let d1 = points[k - 1].1 - points[k - 2].1;
    let d0 = points[k - 2].1 - points[k - 3].1;
    let gap0 = (points[k - 2].0 - points[k - 3].0) as f64;
    let mut r0 = if d0 != 0.0 && d1 / d0 > 0.0 { (d1 / d0).powf(1.0 / gap0) } else { 0.8 };
    if !(r0 > 0.0 && r0 < 1.0) {
        r0 = 0.8;
    }
    // Work with m relative to the last cutoff so c is O(n_m variation).
    let ms: Vec<f64> = points.iter().map(|p| (p.0 as f64) - m_last as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (n_seed, c_seed) = {
        let a = DMatrix::from_fn(k, 2, |i, j| if j == 0 { 1.0 } else { -r0.powf(ms[i]) });
        let sol = a.svd(true, true).solve(&DVector::from_column_slice(&ys), 1e-14).map_err(|e| Error::FitFailure(e.to_string()))?;
        (sol[0], sol[1])
    };
    let res = |p: &[f64]| DVector::from_iterator(k, ms.iter().zip(&ys).map(|(m, y)| p[0] - p[1] * p[2].powf(*m) - y));
    let jac = |p: &[f64]| {
        DMatrix::from_fn(k, 3, |i, j| match j {
            0 => 1.0,
            1 => -p[2].powf(ms[i]),
            _ => -p[1] * ms[i] * p[2].powf(ms[i] - 1.0),
        })
    };
    let out = match levenberg_marquardt(res, jac, |p| p[2] > 0.0 && p[2] < 1.5, &[n_seed, c_seed, r0], LmOptions::default()) {
        Ok(o) => o,
        Err(_) => return Ok(fallback),
    };
    let (n_inf, c_rel, r) = (out.params[0], out.params[1], out.params[2]);
    if !(out.converged && r > 0.0 && r < 1.0 && n_inf.is_finite()) {
        return Ok(fallback);
    }
    let half_width = out.std_error(0).unwrap_or(0.0);
    // Undo the shift: c·r^m = c_rel·r^(m − m_last).
    let c = c_rel * r.powf(-(m_last as f64));
    Ok(ExtrapolationResult { n_inf, half_width, c, r, converged: true })
}

/// W, H and the plateau from one ground-state trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateExtraction {
    pub cooling: CoolingFit,
    pub tangent: HeatingFit,
    /// Cooling rate W, 1/s.
    pub w: f64,
    /// Heating rate H, quanta/s. ⟨n⟩ excludes the zero-point half
    /// quantum, so its initial slope is H − W/2.
    pub h: f64,
}

pub fn extract_rates(traj: &Trajectory) -> Result<RateExtraction> {
    let t = traj.times();
    let n = traj.n_mean();
    if t.len() < 2 {
        return domain("rate extraction needs a sampled trajectory");
    }
    let cooling = extract_cooling(&t, &n)?;
    // Switching the light on displaces the trap minimum; the resulting
    // offset in ⟨n⟩ settles within a few pumping times, well before the
    // first sample after t = 0. The tangent fit keeps a free intercept.
    let tangent = extract_heating_rate(&t[1..], &n[1..])?;
    let w = cooling.w_m;
    Ok(RateExtraction { cooling, tangent, w, h: tangent.slope + 0.5 * w })
}

/// Time grid of a rate-extraction run started in the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePlan {
    pub duration: f64,
    pub sample_dt: f64,
    /// Fixed integrator step, see [`EvolveOptions::fixed_step`].
    pub step: Option<f64>,
}

impl RatePlan {
    /// Grid sized from an estimate of W: `time_constants`/W long, 100
    /// samples per 1/W so the tangent window of ~0.1/W holds ten of them,
    /// two fixed steps per sample.
    pub fn for_cooling_rate(w_estimate: f64, time_constants: f64) -> Result<Self> {
        if !(w_estimate > 0.0 && time_constants > 0.0) {
            return domain("cooling-rate estimate and run length must be positive");
        }
        let sample_dt = 0.01 / w_estimate;
        Ok(Self { duration: time_constants / w_estimate, sample_dt, step: Some(0.5 * sample_dt) })
    }
}

/// Evolve from |S+, 0⟩ at fixed φ and extract W, H and the plateau.
pub fn simulate_rates(model: &LindbladModel, phi: f64, plan: &RatePlan, opts: &EvolveOptions) -> Result<(Trajectory, RateExtraction)> {
    let mut o = *opts;
    if plan.step.is_some() {
        o.fixed_step = plan.step;
    }
    let traj = evolve(model, &model.ground_state(), plan.duration, &PhaseSchedule::Fixed(phi), plan.sample_dt, &o)?;
    let rates = extract_rates(&traj)?;
    Ok((traj, rates))
}

/// Time-averaged occupation under a moving gradient.
#[derive(Debug, Clone)]
pub struct MovingGradientResult {
    pub n_bar: f64,
    pub n_spread: f64,
    /// Averaging period 2π/δ (1/W for δ = 0), s.
    pub period: f64,
    /// Coarsely sampled run up to the averaging window.
    pub transient: Trajectory,
    /// The averaging window, times continuing from the transient.
    pub window: Trajectory,
}

/// Settings for [`moving_gradient_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MovingGradientOptions {
    /// Estimated cooling rate (1/s) used to size the transient and step.
    pub cooling_rate: f64,
    /// Transient length in units of 1/cooling_rate.
    pub transient_time_constants: f64,
    /// Longest simulated time allowed, s.
    pub max_duration: f64,
    pub samples_per_period: usize,
    /// Integrator steps per modulation period π/δ of the rates.
    pub steps_per_modulation: usize,
}

impl MovingGradientOptions {
    pub fn new(cooling_rate: f64) -> Self {
        Self { cooling_rate, transient_time_constants: 5.0, max_duration: 1.0, samples_per_period: 64, steps_per_modulation: 8 }
    }
}

/// Evolve under φ(t) = φ₀ + δt/2 from the ground state and average ⟨n⟩
/// over one period 2π/δ after the transient.
pub fn moving_gradient_steady_state(
    model: &LindbladModel,
    phi0: f64,
    delta: f64,
    mg: &MovingGradientOptions,
    opts: &EvolveOptions,
) -> Result<MovingGradientResult> {
    if !(delta >= 0.0) || !(mg.cooling_rate > 0.0) || mg.samples_per_period < 2 || mg.steps_per_modulation == 0 {
        return domain("beam detuning must be non-negative, the cooling-rate estimate positive and the sampling non-trivial");
    }
    let transient = mg.transient_time_constants / mg.cooling_rate;
    // δ = 0 degenerates to fixed-phase evolution; average over 1/W then.
    let period = if delta > 0.0 { 2.0 * std::f64::consts::PI / delta } else { 1.0 / mg.cooling_rate };
    if transient + period > mg.max_duration {
        return Err(Error::Budget(format!(
            "δ = {delta:.3e} rad/s needs {:.3e} s including one period, budget is {:.3e} s",
            transient + period,
            mg.max_duration
        )));
    }
    let sample_dt = period / mg.samples_per_period as f64;
    let mut step = 0.005 / mg.cooling_rate;
    if delta > 0.0 {
        step = step.min(std::f64::consts::PI / delta / mg.steps_per_modulation as f64);
    }
    // Whole steps per sample interval so every stretch lands exactly.
    let with_step = |dt: f64| EvolveOptions { fixed_step: Some(dt / (dt / step).ceil()), ..*opts };
    const TRANSIENT_SAMPLES: f64 = 200.0;
    let coarse_dt = transient / TRANSIENT_SAMPLES;
    let schedule = PhaseSchedule::Moving { phi0, beam_detuning: delta };
    let head = evolve(model, &model.ground_state(), transient, &schedule, coarse_dt, &with_step(coarse_dt))?;
    let later = PhaseSchedule::Moving { phi0: schedule.at(transient), beam_detuning: delta };
    let mut window = evolve(model, &head.final_state, period, &later, sample_dt, &with_step(sample_dt))?;
    for s in &mut window.samples {
        s.t += transient;
    }
    let (n_bar, n_spread) = tail_stats(&window);
    Ok(MovingGradientResult { n_bar, n_spread, period, transient: head, window })
}

/// Mean and standard deviation of ⟨n⟩ over one period, the closing
/// sample excluded so the endpoints are not double counted.
fn tail_stats(window: &Trajectory) -> (f64, f64) {
    let v: Vec<f64> = window.samples[..window.samples.len() - 1].iter().map(|s| s.n_mean).collect();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tangent_of_linear_trace() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 1e-5).collect();
        let n: Vec<f64> = t.iter().map(|t| 250.0 * t).collect();
        let f = extract_heating_rate(&t, &n).unwrap();
        assert_relative_eq!(f.slope, 250.0, max_relative = 1e-9);
        assert_eq!(f.points, 40);
    }

    #[test]
    fn tangent_of_exponential_within_five_percent() {
        let (n_inf, w) = (0.9, 300.0);
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 5e-5).collect();
        let n: Vec<f64> = t.iter().map(|t| n_inf * (1.0 - (-w * t).exp())).collect();
        let f = extract_heating_rate(&t, &n).unwrap();
        assert!((f.slope / (n_inf * w) - 1.0).abs() < 0.05, "{f:?}");
        assert!(f.points >= 5);
    }

    #[test]
    fn tangent_rejects_falling_trace() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let n: Vec<f64> = t.iter().map(|t| 1.0 - 0.01 * t).collect();
        assert!(extract_heating_rate(&t, &n).is_err());
    }

    #[test]
    fn cooling_round_trip() {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 2e-4).collect();
        let n: Vec<f64> = t.iter().map(|t| 0.9 * (1.0 - (-300.0 * t).exp())).collect();
        let f = extract_cooling(&t, &n).unwrap();
        assert_relative_eq!(f.n_m, 0.9, max_relative = 1e-6);
        assert_relative_eq!(f.w_m, 300.0, max_relative = 1e-6);
        let z = extract_cooling(&t, &vec![0.0; t.len()]).unwrap();
        assert!(z.flat);
        assert_eq!(z.n_m, 0.0);
    }

    #[test]
    fn extrapolation_cases() {
        let constant: Vec<(usize, f64)> = (4..=24).map(|m| (m, 0.87)).collect();
        let r = finite_size_extrapolate(&constant).unwrap();
        assert_eq!(r.n_inf, 0.87);
        assert!(r.converged);
        let geo: Vec<(usize, f64)> = (4..=24).map(|m| (m, 1.0 - 0.5 * 0.7f64.powi(m as i32))).collect();
        let r = finite_size_extrapolate(&geo).unwrap();
        assert!((r.n_inf - 1.0).abs() < 1e-4, "{r:?}");
        assert!((r.r - 0.7).abs() < 1e-6);
        assert!((r.c - 0.5).abs() < 1e-6);
        assert!(finite_size_extrapolate(&geo[..3]).is_err());
    }

    #[test]
    fn extrapolation_falls_back_on_growth() {
        let grow: Vec<(usize, f64)> = (4..=10).map(|m| (m, 1.3f64.powi(m as i32))).collect();
        let r = finite_size_extrapolate(&grow).unwrap();
        assert!(!r.converged);
        assert_eq!(r.n_inf, grow.last().unwrap().1);
    }
}
