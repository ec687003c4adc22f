//! Carrier-Rabi thermometry of multi-mode crystals: thermal sampling,
//! Monte-Carlo carrier traces, the three-parameter occupation model, its
//! DIRECT fit and sideband spectra.

use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::crystal::{LambDickeMatrix, ModeStructure};
use crate::direct::{minimize, DirectOptions, EvaluationLog, SearchBox};
use crate::error::{domain, Error, Result};

/// Default thermal draws per evaluation.
pub const DEFAULT_SAMPLES: usize = 2000;
/// Modes whose largest η² is below this are left out of the Laguerre
/// product.
pub const DEFAULT_ETA_SQ_THRESHOLD: f64 = 1e-6;
/// Floor on the per-point residual variance.
pub const VARIANCE_FLOOR: f64 = 1e-4;

const STREAM_THERMAL: u64 = 0;
const STREAM_SHOTS: u64 = 1 << 40;

/// n̄_COM = n_c; other modes (n_0/2)(ω/ω_0 + ω_0/ω).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalModel {
    pub n_c: f64,
    pub n_0: f64,
    /// rad/s.
    pub omega_0: f64,
}

impl ThermalModel {
    pub fn new(n_c: f64, n_0: f64, omega_0: f64) -> Result<Self> {
        if !(n_c > 0.0 && n_0 > 0.0 && omega_0 > 0.0) {
            return domain(format!("thermal-model parameters must be positive (got {n_c}, {n_0}, {omega_0})"));
        }
        Ok(Self { n_c, n_0, omega_0 })
    }
}

/// Mean occupation of mode `index` (1 = COM) at frequency `omega`.
pub fn model_nbar(model: &ThermalModel, index: usize, omega: f64) -> Result<f64> {
    if index == 0 {
        return domain("mode indices start at 1 (the centre-of-mass mode)");
    }
    if index == 1 {
        return Ok(model.n_c);
    }
    Ok(0.5 * model.n_0 * (omega / model.omega_0 + model.omega_0 / omega))
}

/// Occupations for modes given in ascending order with the COM first.
pub fn model_nbars(model: &ThermalModel, frequencies: &[f64]) -> Vec<f64> {
    frequencies.iter().enumerate().map(|(i, w)| model_nbar(model, i + 1, *w).unwrap()).collect()
}

/// L_n(x) by upward recurrence.
pub fn laguerre(n: u64, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = ((2 * k + 1) as f64 - x) * cur - k as f64 * prev;
        prev = cur;
        cur = next / (k + 1) as f64;
    }
    cur
}

/// Ω_{0,j}·Π_k L_{n_k}(η_jk²); the sign is kept.
pub fn carrier_rabi_frequency(n: &[u64], eta_row: &[f64], bare: f64) -> Result<f64> {
    if n.len() != eta_row.len() {
        return domain(format!("{} phonon numbers for {} Lamb-Dicke entries", n.len(), eta_row.len()));
    }
    Ok(bare * n.iter().zip(eta_row).map(|(n, e)| laguerre(*n, e * e)).product::<f64>())
}

/// Uniform in [0, 1) at position `index` of `stream` under `seed`.
pub fn counter_uniform(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    to_unit(rng.next_u64())
}

fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The first `count` uniforms of a stream; identical to calling
/// [`counter_uniform`] for each index.
pub fn counter_uniforms(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count).map(|_| to_unit(rng.next_u64())).collect()
}

/// Inverse CDF of the geometric distribution with mean `nbar`.
pub fn thermal_quantile(nbar: f64, u: f64) -> u64 {
    if nbar <= 0.0 {
        return 0;
    }
    let r = nbar / (nbar + 1.0);
    ((1.0 - u).ln() / r.ln()).floor() as u64
}

/// One thermal draw per mode, keyed by (seed, mode, draw).
pub fn sample_thermal(nbars: &[f64], seed: u64, draw: u64) -> Result<Vec<u64>> {
    if nbars.iter().any(|n| !(*n >= 0.0)) {
        return domain("mean occupations must be non-negative");
    }
    Ok(nbars.iter().enumerate().map(|(k, nb)| thermal_quantile(*nb, counter_uniform(seed, STREAM_THERMAL + k as u64, draw))).collect())
}

/// Measured or simulated carrier excitation of every ion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RabiTrace {
    pub times: Vec<f64>,
    /// p[j][t].
    pub p: Vec<Vec<f64>>,
    /// Projective measurements behind each point; 0 for noiseless values.
    pub shots: Vec<Vec<u32>>,
    /// Monte-Carlo standard error of each point (0 for measured data).
    pub std_error: Vec<Vec<f64>>,
    /// Ω_{0,j}, rad/s, micromotion reduction included.
    pub bare_rabi: Vec<f64>,
}

impl RabiTrace {
    pub fn ions(&self) -> usize {
        self.p.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("trace times must be strictly increasing".into()));
        }
        let t = self.times.len();
        if self.p.len() != self.bare_rabi.len() || self.p.iter().chain(&self.std_error).any(|r| r.len() != t) {
            return Err(Error::Config("trace arrays have inconsistent shapes".into()));
        }
        if self.p.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// CSV `t_s,ion,p,shots`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "ion", "p", "shots"])?;
        for (j, row) in self.p.iter().enumerate() {
            for (k, p) in row.iter().enumerate() {
                out.write_record([format!("{:e}", self.times[k]), j.to_string(), format!("{p}"), self.shots[j][k].to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Parse `t_s,ion,p,shots`; Ω_{0,j} come from the caller.
    pub fn read_csv<R: Read>(r: R, bare_rabi: Vec<f64>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t_s: f64,
            ion: usize,
            p: f64,
            shots: u32,
        }
        let mut rows: Vec<Row> = Vec::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            rows.push(rec.map_err(|e| Error::Config(format!("trace file: {e}")))?);
        }
        let ions = bare_rabi.len();
        let mut times: Vec<f64> = rows.iter().filter(|r| r.ion == 0).map(|r| r.t_s).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut p = vec![vec![f64::NAN; times.len()]; ions];
        let mut shots = vec![vec![0; times.len()]; ions];
        for r in &rows {
            if r.ion >= ions {
                return Err(Error::Config(format!("trace has ion {} but {ions} Rabi frequencies were given", r.ion)));
            }
            let k = times
                .iter()
                .position(|t| *t == r.t_s)
                .ok_or_else(|| Error::Config(format!("time {} of ion {} is missing for ion 0", r.t_s, r.ion)))?;
            p[r.ion][k] = r.p;
            shots[r.ion][k] = r.shots;
        }
        if p.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Config("trace file does not cover every (ion, time) pair".into()));
        }
        let trace = Self { std_error: vec![vec![0.0; times.len()]; ions], times, p, shots, bare_rabi };
        trace.validate()?;
        Ok(trace)
    }
}

/// Modes entering the carrier model: η rows per ion and mode frequencies
/// (COM first), after the η² threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierModes {
    pub frequencies: Vec<f64>,
    /// eta_sq[j][k].
    pub eta_sq: Vec<Vec<f64>>,
}

impl CarrierModes {
    pub fn from_structure(modes: &ModeStructure, eta: &LambDickeMatrix, threshold: f64) -> Self {
        let kept: Vec<usize> =
            (0..eta.modes.len()).filter(|&c| (0..eta.eta.nrows()).map(|j| eta.eta[(j, c)].powi(2)).fold(0.0, f64::max) >= threshold).collect();
        let mut order: Vec<usize> = kept.clone();
        order.sort_by(|a, b| modes.frequencies[eta.modes[*a]].total_cmp(&modes.frequencies[eta.modes[*b]]));
        let frequencies = order.iter().map(|&c| modes.frequencies[eta.modes[c]]).collect();
        let eta_sq = (0..eta.eta.nrows()).map(|j| order.iter().map(|&c| eta.eta[(j, c)].powi(2)).collect()).collect();
        Self { frequencies, eta_sq }
    }

    /// Axial modes of a crystal, default threshold.
    pub fn axial(modes: &ModeStructure) -> Self {
        Self::from_structure(modes, &modes.eta_axial, DEFAULT_ETA_SQ_THRESHOLD)
    }
}

/// Indexed [ion][time].
pub type PerIon = Vec<Vec<f64>>;

/// Monte-Carlo evaluator of the carrier model with frozen random numbers.
pub struct CarrierSimulator {
    modes: CarrierModes,
    times: Vec<f64>,
    bare_rabi: Vec<f64>,
    /// uniforms[k][s].
    uniforms: Vec<Vec<f64>>,
    /// laguerre[j][k][n] = L_n(η_jk²), grown on demand.
    laguerre: Vec<Vec<Vec<f64>>>,
}

impl CarrierSimulator {
    pub fn new(modes: CarrierModes, times: Vec<f64>, bare_rabi: Vec<f64>, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return domain("at least one thermal sample is needed");
        }
        if bare_rabi.len() != modes.eta_sq.len() {
            return domain(format!("{} Rabi frequencies for {} ions", bare_rabi.len(), modes.eta_sq.len()));
        }
        let uniforms = (0..modes.frequencies.len()).map(|k| counter_uniforms(seed, STREAM_THERMAL + k as u64, samples)).collect();
        let laguerre = modes.eta_sq.iter().map(|row| row.iter().map(|x| vec![1.0, 1.0 - x]).collect()).collect();
        Ok(Self { modes, times, bare_rabi, uniforms, laguerre })
    }

    pub fn samples(&self) -> usize {
        self.uniforms.first().map_or(0, |u| u.len())
    }

    fn ensure_table(&mut self, n_max: u64) {
        let need = n_max as usize + 1;
        for (j, row) in self.laguerre.iter_mut().enumerate() {
            for (k, tab) in row.iter_mut().enumerate() {
                let x = self.modes.eta_sq[j][k];
                while tab.len() < need {
                    let m = tab.len() - 1;
                    let next = ((2 * m + 1) as f64 - x) * tab[m] - m as f64 * tab[m - 1];
                    tab.push(next / (m + 1) as f64);
                }
            }
        }
    }

    /// p[j][t] and its Monte-Carlo standard error for the given mode
    /// occupations.
    pub fn evaluate_nbars(&mut self, nbars: &[f64]) -> Result<(PerIon, PerIon)> {
        if nbars.len() != self.modes.frequencies.len() {
            return domain(format!("{} occupations for {} modes", nbars.len(), self.modes.frequencies.len()));
        }
        let s = self.samples();
        let draws: Vec<Vec<u64>> = nbars.iter().zip(&self.uniforms).map(|(nb, us)| us.iter().map(|u| thermal_quantile(*nb, *u)).collect()).collect();
        let n_max = draws.iter().flatten().copied().max().unwrap_or(0);
        self.ensure_table(n_max);
        let (ions, nt) = (self.bare_rabi.len(), self.times.len());
        let mut mean = vec![vec![0.0; nt]; ions];
        let mut err = vec![vec![0.0; nt]; ions];
        let mut sq = vec![0.0; nt];
        for j in 0..ions {
            sq.iter_mut().for_each(|v| *v = 0.0);
            for d in 0..s {
                let factor: f64 = (0..draws.len()).map(|k| self.laguerre[j][k][draws[k][d] as usize]).product();
                let half = 0.5 * self.bare_rabi[j] * factor;
                for (i, t) in self.times.iter().enumerate() {
                    let v = (half * t).sin().powi(2);
                    mean[j][i] += v;
                    sq[i] += v * v;
                }
            }
            for i in 0..nt {
                let m = mean[j][i] / s as f64;
                mean[j][i] = m;
                let var = (sq[i] / s as f64 - m * m).max(0.0);
                err[j][i] = if s > 1 { (var / (s - 1) as f64).sqrt() } else { 0.0 };
            }
        }
        Ok((mean, err))
    }

    pub fn evaluate(&mut self, model: &ThermalModel) -> Result<(PerIon, PerIon)> {
        let nbars = model_nbars(model, &self.modes.frequencies);
        self.evaluate_nbars(&nbars)
    }
}

/// Noiseless Monte-Carlo carrier trace of the model.
pub fn simulate_carrier(
    modes: &CarrierModes,
    model: &ThermalModel,
    times: &[f64],
    bare_rabi: &[f64],
    samples: usize,
    seed: u64,
) -> Result<RabiTrace> {
    let mut sim = CarrierSimulator::new(modes.clone(), times.to_vec(), bare_rabi.to_vec(), samples, seed)?;
    let (p, std_error) = sim.evaluate(model)?;
    let ions = bare_rabi.len();
    Ok(RabiTrace { times: times.to_vec(), p, shots: vec![vec![0; times.len()]; ions], std_error, bare_rabi: bare_rabi.to_vec() })
}

/// Replace each probability by the outcome of `shots` projective
/// measurements.
pub fn add_projection_noise(trace: &RabiTrace, shots: u32, seed: u64) -> Result<RabiTrace> {
    if shots == 0 {
        return domain("shot count must be positive");
    }
    let nt = trace.times.len();
    let mut out = trace.clone();
    for (j, row) in out.p.iter_mut().enumerate() {
        for (i, p) in row.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_SHOTS + (j * nt + i) as u64);
            let dist = Binomial::new(shots as u64, p.clamp(0.0, 1.0)).map_err(|e| Error::Domain(e.to_string()))?;
            *p = dist.sample(&mut rng) as f64 / shots as f64;
        }
    }
    out.shots = vec![vec![shots; nt]; trace.ions()];
    out.std_error = vec![vec![0.0; nt]; trace.ions()];
    Ok(out)
}

/// Settings of [`fit_rabi`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    pub samples: usize,
    pub seed: u64,
    pub direct: DirectOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, seed: 0, direct: DirectOptions { budget: 3000, tol: 1e-4, epsilon: 1e-4, polish: false } }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: ThermalModel,
    /// Weighted sum of squared residuals at the optimum.
    pub objective: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Objective increase when each of (n_c, n_0, ω_0) moves by ±10%,
    /// averaged over both signs and clipped to the bounds.
    pub sensitivity: [f64; 3],
    #[serde(skip)]
    pub log: EvaluationLog,
}

fn weighted_residual(data: &RabiTrace, p: &[Vec<f64>], err: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for j in 0..data.ions() {
        for i in 0..data.times.len() {
            let d = data.p[j][i];
            let shots = data.shots[j][i];
            let binom = if shots > 0 { d * (1.0 - d) / shots as f64 } else { 0.0 };
            let var = (binom + err[j][i].powi(2)).max(VARIANCE_FLOOR);
            acc += (d - p[j][i]).powi(2) / var;
        }
    }
    acc
}

/// Fit (n_c, n_0, ω_0) inside `bounds` by DIRECT on the shot-noise
/// weighted residual, with the thermal draws frozen for the whole fit.
pub fn fit_rabi(trace: &RabiTrace, modes: &CarrierModes, bounds: &SearchBox, opts: &FitOptions) -> Result<FitReport> {
    trace.validate()?;
    if bounds.dim() != 3 {
        return domain("bounds must cover (n_c, n_0, omega_0)");
    }
    if bounds.lower.iter().any(|l| !(*l > 0.0)) {
        return domain("lower bounds must be positive");
    }
    if opts.direct.budget < 100 {
        return domain("fit budget must be at least 100 evaluations");
    }
    let mut sim = CarrierSimulator::new(modes.clone(), trace.times.clone(), trace.bare_rabi.clone(), opts.samples, opts.seed)?;
    let mut objective = |x: &[f64]| -> f64 {
        let model = ThermalModel { n_c: x[0], n_0: x[1], omega_0: x[2] };
        match sim.evaluate(&model) {
            Ok((p, e)) => weighted_residual(trace, &p, &e),
            Err(_) => f64::NAN,
        }
    };
    let res = minimize(&mut objective, bounds, &opts.direct)?;
    let best = res.best_point.clone();
    let mut sensitivity = [0.0; 3];
    for (i, s) in sensitivity.iter_mut().enumerate() {
        let mut total = 0.0;
        for sign in [-1.0, 1.0] {
            let mut x = best.clone();
            x[i] = (x[i] * (1.0 + 0.1 * sign)).clamp(bounds.lower[i], bounds.upper[i]);
            total += objective(&x) - res.best_value;
        }
        *s = 0.5 * total;
    }
    Ok(FitReport {
        model: ThermalModel { n_c: best[0], n_0: best[1], omega_0: best[2] },
        objective: res.best_value,
        converged: res.converged,
        evaluations: res.log.len(),
        sensitivity,
        log: res.log,
    })
}

/// Blue-sideband probe pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SidebandProbe {
    /// Carrier Rabi frequency, rad/s.
    pub rabi: f64,
    /// s.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SidebandSpectrum {
    /// Probe detunings from the carrier, rad/s.
    pub detunings: Vec<f64>,
    /// excitation[j][d].
    pub excitation: Vec<Vec<f64>>,
    /// Two resonances lie closer than three Fourier widths.
    pub overlapping: bool,
}

/// Per-ion blue-sideband excitation around each mode, counting only the
/// nearest resonance at every detuning.
pub fn simulate_sideband_spectrum(modes: &CarrierModes, nbars: &[f64], probe: &SidebandProbe, detunings: &[f64]) -> Result<SidebandSpectrum> {
    if nbars.len() != modes.frequencies.len() {
        return domain(format!("{} occupations for {} modes", nbars.len(), modes.frequencies.len()));
    }
    if !(probe.duration > 0.0) {
        return domain("probe duration must be positive");
    }
    let fourier = 2.0 * std::f64::consts::PI / probe.duration;
    let mut sorted = modes.frequencies.clone();
    sorted.sort_by(f64::total_cmp);
    let overlapping = sorted.windows(2).any(|w| w[1] - w[0] < 3.0 * fourier);
    // Thermal weights truncated where the tail drops below 1e-6.
    let weights: Vec<Vec<f64>> = nbars
        .iter()
        .map(|nb| {
            if *nb <= 0.0 {
                return vec![1.0];
            }
            let r = nb / (nb + 1.0);
            let cut = ((1e-6f64).ln() / r.ln()).ceil().max(1.0) as usize;
            (0..cut).map(|n| (1.0 - r) * r.powi(n as i32)).collect()
        })
        .collect();
    let ions = modes.eta_sq.len();
    let mut excitation = vec![vec![0.0; detunings.len()]; ions];
    for (d, det) in detunings.iter().enumerate() {
        let Some(k) = (0..modes.frequencies.len()).min_by(|a, b| (modes.frequencies[*a] - det).abs().total_cmp(&(modes.frequencies[*b] - det).abs()))
        else {
            continue;
        };
        let eps = det - modes.frequencies[k];
        for j in 0..ions {
            let eta = modes.eta_sq[j][k].sqrt();
            excitation[j][d] = weights[k]
                .iter()
                .enumerate()
                .map(|(n, w)| {
                    let omega_n = eta * probe.rabi * ((n + 1) as f64).sqrt();
                    let gen = (omega_n * omega_n + eps * eps).sqrt();
                    if gen == 0.0 {
                        0.0
                    } else {
                        w * (omega_n / gen).powi(2) * (0.5 * gen * probe.duration).sin().powi(2)
                    }
                })
                .sum();
        }
    }
    Ok(SidebandSpectrum { detunings: detunings.to_vec(), excitation, overlapping })
}

/// Sideband-ratio estimate for one ion in one mode.
pub mod single_ion {
    use crate::error::{domain, Result};

    /// n̄ = p_red/(p_blue − p_red). Meaningful only for a single ion;
    /// collective excitation of a crystal breaks the relation.
    pub fn sideband_ratio_nbar(p_red: f64, p_blue: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p_red) || !(0.0..=1.0).contains(&p_blue) || !(p_blue > p_red) {
            return domain(format!("need 0 ≤ p_red < p_blue ≤ 1 (got {p_red}, {p_blue})"));
        }
        Ok(p_red / (p_blue - p_red))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_mode(eta: f64, omega: f64) -> CarrierModes {
        CarrierModes { frequencies: vec![omega], eta_sq: vec![vec![eta * eta]] }
    }

    #[test]
    fn laguerre_values() {
        assert_eq!(laguerre(0, 0.3), 1.0);
        assert_relative_eq!(laguerre(1, 0.01), 0.99, max_relative = 1e-15);
        assert_relative_eq!(laguerre(2, 0.1), 0.805, max_relative = 1e-14);
        // L_3(x) = 1 − 3x + 3x²/2 − x³/6
        let x = 0.37;
        assert_relative_eq!(laguerre(3, x), 1.0 - 3.0 * x + 1.5 * x * x - x * x * x / 6.0, max_relative = 1e-13);
    }

    #[test]
    fn carrier_rabi_cases() {
        assert_eq!(carrier_rabi_frequency(&[0, 0], &[0.1, 0.2], 5.0).unwrap(), 5.0);
        assert_relative_eq!(carrier_rabi_frequency(&[1], &[0.1], 1.0).unwrap(), 0.99, max_relative = 1e-15);
        assert!(carrier_rabi_frequency(&[1], &[0.1, 0.1], 1.0).is_err());
        // Sign survives past the first Laguerre zero.
        assert!(carrier_rabi_frequency(&[1], &[1.2], 1.0).unwrap() < 0.0);
    }

    #[test]
    fn model_nbar_cases() {
        let m = ThermalModel::new(20.0, 3.0, 1e6).unwrap();
        assert_eq!(model_nbar(&m, 1, 5e5).unwrap(), 20.0);
        assert_eq!(model_nbar(&m, 2, 1e6).unwrap(), 3.0);
        assert_relative_eq!(model_nbar(&m, 3, 2e6).unwrap(), 3.75, max_relative = 1e-15);
        assert!(model_nbar(&m, 0, 1e6).is_err());
    }

    #[test]
    fn sampler_is_counter_based() {
        let bulk = counter_uniforms(7, 3, 50);
        for (i, u) in bulk.iter().enumerate() {
            assert_eq!(*u, counter_uniform(7, 3, i as u64));
        }
        assert_eq!(sample_thermal(&[0.0, 2.0], 1, 4).unwrap()[0], 0);
        assert_eq!(sample_thermal(&[1.0, 2.0], 1, 4).unwrap(), sample_thermal(&[1.0, 2.0], 1, 4).unwrap());
    }

    #[test]
    fn thermal_mean_converges() {
        let u = counter_uniforms(11, 0, 100_000);
        let mean = u.iter().map(|u| thermal_quantile(3.0, *u) as f64).sum::<f64>() / u.len() as f64;
        assert!((mean - 3.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn cold_trace_is_a_sinusoid() {
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 1e-6).collect();
        let tr = simulate_carrier(&one_mode(0.1, 1e6), &ThermalModel { n_c: 1e-300, n_0: 1.0, omega_0: 1.0 }, &times, &[2e5], 50, 3).unwrap();
        for (t, p) in times.iter().zip(&tr.p[0]) {
            assert_relative_eq!(*p, (1e5 * t).sin().powi(2), epsilon = 1e-14);
        }
    }

    #[test]
    fn single_mode_matches_direct_sum() {
        let (eta, nbar, bare) = (0.15, 4.0, 2.0 * std::f64::consts::PI * 40e3);
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 2e-6).collect();
        let tr = simulate_carrier(&one_mode(eta, 1e6), &ThermalModel { n_c: nbar, n_0: 1.0, omega_0: 1.0 }, &times, &[bare], 4000, 9).unwrap();
        let r = nbar / (nbar + 1.0);
        for (i, t) in times.iter().enumerate() {
            let mut exact = 0.0;
            let mut n = 0;
            while r.powi(n) > 1e-10 {
                let w = (1.0 - r) * r.powi(n);
                exact += w * (0.5 * bare * laguerre(n as u64, eta * eta) * t).sin().powi(2);
                n += 1;
            }
            let se = tr.std_error[0][i];
            assert!((tr.p[0][i] - exact).abs() <= 3.0 * se + 1e-12, "t {t}: {} vs {exact} (se {se})", tr.p[0][i]);
        }
    }

    #[test]
    fn noise_and_csv_round_trip() {
        let times: Vec<f64> = (1..6).map(|i| i as f64 * 1e-6).collect();
        let modes = CarrierModes { frequencies: vec![1e6], eta_sq: vec![vec![0.01], vec![0.02]] };
        let tr = simulate_carrier(&modes, &ThermalModel { n_c: 2.0, n_0: 1.0, omega_0: 1.0 }, &times, &[3e5, 2.9e5], 100, 1).unwrap();
        let noisy = add_projection_noise(&tr, 100, 5).unwrap();
        assert_eq!(noisy, add_projection_noise(&tr, 100, 5).unwrap());
        let mut buf = Vec::new();
        noisy.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_s,ion,p,shots\n"));
        let back = RabiTrace::read_csv(buf.as_slice(), noisy.bare_rabi.clone()).unwrap();
        assert_eq!(back.p, noisy.p);
        assert_eq!(back.shots, noisy.shots);
    }

    #[test]
    fn noiseless_truth_is_sampled_minimum() {
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 2e-6).collect();
        let modes = one_mode(0.1, 1e6);
        let truth = ThermalModel { n_c: 5.0, n_0: 1.0, omega_0: 1e6 };
        let opts = FitOptions { samples: 300, seed: 4, ..Default::default() };
        let tr = simulate_carrier(&modes, &truth, &times, &[3e5], opts.samples, opts.seed).unwrap();
        let mut sim = CarrierSimulator::new(modes, times, vec![3e5], opts.samples, opts.seed).unwrap();
        let at = |sim: &mut CarrierSimulator, n: f64| {
            let (p, e) = sim.evaluate(&ThermalModel { n_c: n, ..truth }).unwrap();
            weighted_residual(&tr, &p, &e)
        };
        let zero = at(&mut sim, 5.0);
        assert_eq!(zero, 0.0);
        for n in [2.0, 4.0, 4.9, 5.1, 6.0, 9.0] {
            assert!(at(&mut sim, n) > zero);
        }
    }

    #[test]
    fn sideband_cases() {
        let probe = SidebandProbe { rabi: 1e5, duration: 0.0 };
        let modes = CarrierModes { frequencies: vec![1e6, 1.7e6], eta_sq: vec![vec![0.01, 0.0], vec![0.04, 0.02]] };
        assert!(simulate_sideband_spectrum(&modes, &[0.0, 0.0], &probe, &[1e6]).is_err());
        // η Ω t = π on the first ion at mode 0.
        let probe = SidebandProbe { rabi: 1e5, duration: std::f64::consts::PI / (0.1 * 1e5) };
        let s = simulate_sideband_spectrum(&modes, &[0.0, 0.0], &probe, &[1e6, 1.7e6]).unwrap();
        assert_relative_eq!(s.excitation[0][0], 1.0, epsilon = 1e-12);
        assert_eq!(s.excitation[0][1], 0.0);
        assert!(s.excitation[1][1] > 0.0);
        assert!(!s.overlapping);
    }

    #[test]
    fn ratio_estimator() {
        assert_relative_eq!(single_ion::sideband_ratio_nbar(0.1, 0.3).unwrap(), 0.5);
        assert!(single_ion::sideband_ratio_nbar(0.3, 0.3).is_err());
    }
}
