use std::path::Path;

use rayon::prelude::*;
use toml::Table;

use super::output::{flag, num, to_hz, OutputDir};
use super::scenario::{LindbladMode, LindbladTable, Scenario, SemiclassicalTable, ThermometryTable};
use crate::crystal::{lamb_dicke_matrix, micromotion_reduction, normal_modes, CrystalConfig, ModeStructure, DEFAULT_MICROMOTION_KAPPA};
use crate::direct::{DirectOptions, SearchBox};
use crate::error::{Error, Result};
use crate::lindblad::{
    evolve, extract_rates, finite_size_extrapolate, moving_gradient_steady_state, EvolveOptions, HilbertLayout, Level, LindbladModel,
    MovingGradientOptions, PhaseSchedule, QuantumState, RatePlan, Trajectory, TrajectorySample,
};
use crate::physics::{doppler_limit, hz, DimensionlessParams, GradientConfig, IonSpecies};
use crate::semiclassical::{phase_averaged_rates, rates, steady_state_fixed_phase, steady_state_phase_averaged};
use crate::thermometry::{
    add_projection_noise, fit_rabi, model_nbars, simulate_carrier, CarrierModes, CarrierSimulator, FitOptions, RabiTrace, SidebandProbe,
    ThermalModel, DEFAULT_ETA_SQ_THRESHOLD,
};

/// Command-line overrides and execution settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub budget: Option<usize>,
    pub tol: Option<f64>,
}

/// Values derived while running, recorded in the manifest.
pub type Derived = Table;

fn put(d: &mut Derived, key: &str, v: impl Into<toml::Value>) {
    d.insert(key.to_string(), v.into());
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| Error::Io(e.to_string()))?;
    Ok(pool.install(f))
}

fn config_err(field: &str) -> Error {
    Error::Config(format!("missing field `{field}`"))
}

pub fn semiclassical(sc: &Scenario, out: &mut OutputDir) -> Result<Derived> {
    let t: &SemiclassicalTable = sc.semiclassical.as_ref().ok_or_else(|| config_err("semiclassical"))?;
    let g = sc.gradient.as_ref().ok_or_else(|| config_err("gradient"))?;
    let ion = sc.ion.species()?;
    if !t.xi.is_empty() && !t.trap_freq_hz.is_empty() {
        return Err(Error::Config("semiclassical: give either `xi` or `trap_freq_hz`, not both".into()));
    }
    // (axial frequency in Hz, ξ override)
    let points: Vec<(f64, Option<f64>)> = if !t.trap_freq_hz.is_empty() {
        t.trap_freq_hz.iter().map(|f| (*f, None)).collect()
    } else if !t.xi.is_empty() {
        t.xi.iter().map(|x| (sc.trap.omega_z_hz, Some(*x))).collect()
    } else {
        vec![(sc.trap.omega_z_hz, None)]
    };
    let phases = if t.phases.is_empty() && !t.phase_averaged { vec![g.phase] } else { t.phases.clone() };

    let mut fixed = Vec::new();
    let mut averaged = Vec::new();
    let mut limits = Vec::new();
    let mut vs_freq = Vec::new();
    for (f, xi) in &points {
        let omega = sc.trap.config_at(*f)?.omega_z;
        let field = g.field(&ion, omega, *xi)?;
        let mut p = DimensionlessParams::from_physical(&ion, &field, omega)?;
        if let Some(x) = xi {
            // Report the requested value, not its round trip through Ω.
            p.xi = *x;
        }
        for phi in &phases {
            let r = rates(*phi, &p, &ion);
            fixed.push(vec![num(*phi), num(p.xi), num(r.w), num(r.h), num(r.n_steady)]);
        }
        let avg = phase_averaged_rates(&p, &ion);
        if t.phase_averaged {
            averaged.push(vec![num(p.xi), num(avg.w), num(avg.h), num(avg.n_steady)]);
        }
        if !t.xi.is_empty() {
            limits.push(vec![num(p.xi), num(steady_state_fixed_phase(p.xi)?), num(steady_state_phase_averaged(p.xi)?)]);
        }
        if !t.trap_freq_hz.is_empty() {
            vs_freq.push(vec![
                num(*f),
                num(p.xi),
                num(p.eta),
                num(avg.n_steady),
                num(doppler_limit(ion.linewidth, omega, ion.alpha)?),
                // Three-dimensional cooling: recoil heating along the axis
                // from emission and absorption alike.
                num(doppler_limit(ion.linewidth, omega, 1.0)?),
            ]);
        }
    }
    if !phases.is_empty() {
        out.csv("rates.csv", &["phi", "xi", "W_per_s", "H_quanta_per_s", "n_steady"], &fixed)?;
    }
    if t.phase_averaged {
        out.csv("phase_averaged.csv", &["xi", "W_per_s", "H_quanta_per_s", "n_steady"], &averaged)?;
    }
    if !limits.is_empty() {
        out.csv("limits.csv", &["xi", "n_fixed_phase", "n_phase_averaged"], &limits)?;
    }
    if !vs_freq.is_empty() {
        out.csv("limits_vs_freq.csv", &["trap_freq_Hz", "xi", "eta", "n_phase_averaged", "n_doppler_1d", "n_doppler_3d"], &vs_freq)?;
    }
    let mut d = Derived::new();
    put(&mut d, "points", points.len() as i64);
    put(&mut d, "xi_optimum_fixed_phase", 0.5);
    put(&mut d, "xi_optimum_phase_averaged", (5.0f64 / 6.0).sqrt());
    Ok(d)
}

/// Everything one sweep point needs.
struct LindbladPoint {
    param: f64,
    table: LindbladTable,
    model: LindbladModel,
    phase: f64,
    delta: f64,
    params: DimensionlessParams,
    ion: IonSpecies,
}

fn lindblad_points(sc: &Scenario) -> Result<(String, Vec<LindbladPoint>)> {
    let base = sc.lindblad.as_ref().ok_or_else(|| config_err("lindblad"))?;
    let g = sc.gradient.as_ref().ok_or_else(|| config_err("gradient"))?;
    let ion = sc.ion.species()?;
    let trap = sc.trap.config()?;
    let (name, tables): (String, Vec<(f64, LindbladTable)>) = match &sc.sweep {
        Some(sw) => (sw.param.clone(), sw.values.iter().map(|v| base.with(&sw.param, *v).map(|t| (*v, t))).collect::<Result<_>>()?),
        None => match base.mode {
            LindbladMode::Rates => ("phase".into(), vec![(base.phase.unwrap_or(g.phase), base.clone())]),
            LindbladMode::Moving => ("beam_detuning_hz".into(), vec![(base.beam_detuning_hz.unwrap_or(g.beam_detuning_hz), base.clone())]),
        },
    };
    let mut points = Vec::new();
    for (param, table) in tables {
        let field: GradientConfig = g.field(&ion, trap.omega_z, table.xi)?;
        let phase = table.phase.unwrap_or(g.phase);
        let delta = table.beam_detuning_hz.map(hz).unwrap_or(field.beam_detuning);
        let model = LindbladModel::new(&ion, &trap, &field, HilbertLayout::new(table.n_max)?)?;
        let params = DimensionlessParams::from_physical(&ion, &field, trap.omega_z)?;
        points.push(LindbladPoint { param, table, model, phase, delta, params, ion });
    }
    Ok((name, points))
}

fn trajectory_rows(samples: &[TrajectorySample], leak_threshold: f64) -> Vec<Vec<String>> {
    samples
        .iter()
        .map(|s| {
            let mut r = vec![num(s.t), num(s.n_mean)];
            r.extend(s.populations.iter().map(|p| num(*p)));
            r.push(num(s.trace_error));
            r.push(flag(s.edge_population > leak_threshold));
            r
        })
        .collect()
}

const RUN_HEADER: [&str; 8] = ["t_s", "n_mean", "pop_S_minus", "pop_S_plus", "pop_P_minus", "pop_P_plus", "trace_err", "leak_flag"];

fn evolve_options() -> EvolveOptions {
    EvolveOptions { track_min_eigenvalue: false, ..EvolveOptions::default() }
}

struct RatesRun {
    point: usize,
    cutoff: usize,
    traj: Trajectory,
    w: f64,
    h: f64,
    n_m: f64,
}

pub fn lindblad(sc: &Scenario, out: &mut OutputDir, jobs: usize) -> Result<Derived> {
    let (name, points) = lindblad_points(sc)?;
    let mode = sc.lindblad.as_ref().map(|l| l.mode).ok_or_else(|| config_err("lindblad"))?;
    let mut d = Derived::new();
    put(&mut d, "sweep_param", name.clone());
    if let Some(p) = points.first() {
        put(&mut d, "eta", p.params.eta);
        put(&mut d, "saturation", p.params.s);
        put(&mut d, "rabi_rad_per_s", p.model.rabi);
    }
    let opts = evolve_options();
    let oracle: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let r = if mode == LindbladMode::Rates { rates(p.phase, &p.params, &p.ion) } else { phase_averaged_rates(&p.params, &p.ion) };
            vec![num(p.param), num(p.params.xi), num(r.w), num(r.h), num(r.n_steady)]
        })
        .collect();
    out.csv("oracle.csv", &["param", "xi", "W_per_s", "H_quanta_per_s", "n_steady"], &oracle)?;

    match mode {
        LindbladMode::Rates => {
            let mut work = Vec::new();
            for (i, p) in points.iter().enumerate() {
                let mut cutoffs = p.table.cutoffs.clone();
                cutoffs.push(p.table.n_max);
                cutoffs.sort_unstable();
                cutoffs.dedup();
                for m in cutoffs {
                    work.push((i, m));
                }
            }
            let runs: Vec<Result<RatesRun>> = in_pool(jobs, || {
                work.par_iter()
                    .map(|&(i, m)| {
                        let p = &points[i];
                        let model = p.model.with_cutoff(m)?;
                        let avg = phase_averaged_rates(&p.params, &p.ion).w;
                        // W vanishes at the nodes of the gradient; size the
                        // grid from a floor there.
                        let w_est = p.table.cooling_rate_estimate.unwrap_or_else(|| rates(p.phase, &p.params, &p.ion).w.max(0.1 * avg));
                        let plan = RatePlan::for_cooling_rate(w_est, p.table.time_constants.unwrap_or(6.0))?;
                        let level = if p.table.start_in_s_minus { Level::SMinus } else { Level::SPlus };
                        let rho0 = QuantumState::pure(model.layout, level, 0)?;
                        let o = EvolveOptions { fixed_step: plan.step, ..opts };
                        let traj = evolve(&model, &rho0, plan.duration, &PhaseSchedule::Fixed(p.phase), plan.sample_dt, &o)?;
                        let r = extract_rates(&traj)?;
                        Ok(RatesRun { point: i, cutoff: m, w: r.w, h: r.h, n_m: r.cooling.n_m, traj })
                    })
                    .collect()
            })?;
            let runs: Vec<RatesRun> = runs.into_iter().collect::<Result<_>>()?;
            let mut summary = Vec::new();
            let mut scaling = Vec::new();
            let mut leaks = 0;
            for (i, p) in points.iter().enumerate() {
                let mine: Vec<&RatesRun> = runs.iter().filter(|r| r.point == i).collect();
                for r in &mine {
                    let file =
                        if p.table.cutoffs.is_empty() { format!("runs/run_{i:03}.csv") } else { format!("runs/run_{i:03}_m{:02}.csv", r.cutoff) };
                    out.csv(&file, &RUN_HEADER, &trajectory_rows(&r.traj.samples, opts.leak_threshold))?;
                    scaling.push(vec![num(p.param), r.cutoff.to_string(), num(r.w), num(r.h), num(r.n_m)]);
                    leaks += r.traj.leak_flag as i64;
                }
                let main = mine.iter().find(|r| r.cutoff == p.table.n_max).expect("main cutoff is always run");
                let n_inf = if p.table.cutoffs.is_empty() {
                    String::new()
                } else {
                    let pts: Vec<(usize, f64)> = mine.iter().map(|r| (r.cutoff, r.n_m)).collect();
                    num(finite_size_extrapolate(&pts)?.n_inf)
                };
                summary.push(vec![num(p.param), num(main.w), num(main.h), num(main.n_m), n_inf]);
            }
            out.csv("summary.csv", &["param", "W_per_s", "H_quanta_per_s", "n_m", "n_inf"], &summary)?;
            if points.iter().any(|p| !p.table.cutoffs.is_empty()) {
                out.csv("cutoff_scaling.csv", &["param", "m", "W_per_s", "H_quanta_per_s", "n_m"], &scaling)?;
                put(&mut d, "extrapolation_model", "n_m = n_inf - c*r^m, geometric tail fit over all cutoffs");
            }
            put(&mut d, "runs", runs.len() as i64);
            put(&mut d, "runs_with_leak", leaks);
            put(&mut d, "max_trace_error", runs.iter().map(|r| r.traj.max_trace_error()).fold(0.0, f64::max));
        }
        LindbladMode::Moving => {
            let results: Vec<Result<_>> = in_pool(jobs, || {
                points
                    .par_iter()
                    .map(|p| {
                        let avg = phase_averaged_rates(&p.params, &p.ion).w;
                        let mut mg = MovingGradientOptions::new(p.table.cooling_rate_estimate.unwrap_or(avg));
                        if let Some(v) = p.table.transient_time_constants {
                            mg.transient_time_constants = v;
                        }
                        if let Some(v) = p.table.samples_per_period {
                            mg.samples_per_period = v;
                        }
                        if let Some(v) = p.table.steps_per_modulation {
                            mg.steps_per_modulation = v;
                        }
                        if let Some(v) = p.table.max_duration_s {
                            mg.max_duration = v;
                        }
                        moving_gradient_steady_state(&p.model, p.phase, p.delta, &mg, &opts)
                    })
                    .collect()
            })?;
            let mut summary = Vec::new();
            for (i, (p, r)) in points.iter().zip(results).enumerate() {
                let r = r?;
                let mut rows = trajectory_rows(&r.transient.samples, opts.leak_threshold);
                rows.extend(trajectory_rows(&r.window.samples[1..], opts.leak_threshold));
                out.csv(&format!("runs/run_{i:03}.csv"), &RUN_HEADER, &rows)?;
                summary.push(vec![
                    num(p.param),
                    num(p.delta),
                    num(r.n_bar),
                    num(r.n_spread),
                    num(r.period),
                    flag(r.transient.leak_flag || r.window.leak_flag),
                ]);
            }
            out.csv("moving_summary.csv", &["param", "delta_per_s", "n_bar", "n_spread", "period_s", "leak_flag"], &summary)?;
        }
    }
    Ok(d)
}

fn crystal_setup(sc: &Scenario, ions: usize, probe_wavelength: f64) -> Result<(CrystalConfig, ModeStructure)> {
    let probe = sc.ion.species()?.with_wavelength(probe_wavelength)?;
    let cfg = CrystalConfig::new(ions, sc.trap.config()?, probe).map_err(|e| Error::Config(format!("crystal: {e}")))?;
    let modes = normal_modes(&cfg)?;
    Ok((cfg, modes))
}

pub fn crystal(sc: &Scenario, out: &mut OutputDir) -> Result<Derived> {
    let t = sc.crystal.as_ref().ok_or_else(|| config_err("crystal"))?;
    let (cfg, ms) = crystal_setup(sc, t.ions, t.probe_wavelength_m)?;
    let n = ms.ions();
    let positions: Vec<Vec<String>> = ms.positions.iter().enumerate().map(|(j, p)| vec![j.to_string(), num(p[0]), num(p[1]), num(p[2])]).collect();
    out.csv("positions.csv", &["ion", "x_m", "y_m", "z_m"], &positions)?;

    let mut header: Vec<String> = vec!["mode".into(), "freq_Hz".into(), "plane_class".into()];
    for j in 0..n {
        for c in ["x", "y", "z"] {
            header.push(format!("ion{j}_{c}"));
        }
    }
    let modes: Vec<Vec<String>> = (0..ms.frequencies.len())
        .map(|k| {
            let mut r = vec![k.to_string(), num(to_hz(ms.frequencies[k])), ms.classes[k].label().to_string()];
            r.extend(ms.eigenvectors.column(k).iter().map(|v| num(*v)));
            r
        })
        .collect();
    out.csv("modes.csv", &header, &modes)?;

    let eta = if t.probe_axis == [0.0, 0.0, 1.0] { ms.eta_axial.clone() } else { lamb_dicke_matrix(&ms, &cfg.ion, t.probe_axis)? };
    let mut header = vec!["ion".to_string()];
    header.extend(eta.modes.iter().map(|k| format!("mode_{k}")));
    let rows: Vec<Vec<String>> = (0..n)
        .map(|j| {
            let mut r = vec![j.to_string()];
            r.extend((0..eta.modes.len()).map(|c| num(eta.eta[(j, c)])));
            r
        })
        .collect();
    out.csv("eta.csv", &header, &rows)?;

    let mut d = Derived::new();
    if sc.trap.q_z > 0.0 {
        let mm = micromotion_reduction(&ms.positions, &cfg.trap, &cfg.ion, t.micromotion_kappa.unwrap_or(DEFAULT_MICROMOTION_KAPPA))?;
        let rows: Vec<Vec<String>> = (0..n).map(|j| vec![j.to_string(), num(ms.positions[j][2]), num(mm.beta[j]), num(mm.factors[j])]).collect();
        out.csv("micromotion.csv", &["ion", "z_m", "beta", "rabi_factor"], &rows)?;
        put(&mut d, "micromotion_kappa", mm.kappa);
        put(&mut d, "micromotion_spread_ratio", mm.spread_ratio());
    }
    if let Some(s) = &t.spectrum {
        if s.points < 2 || !(s.detuning_max_hz > s.detuning_min_hz) {
            return Err(Error::Config("crystal.spectrum: need points ≥ 2 and detuning_max_hz > detuning_min_hz".into()));
        }
        let cm = CarrierModes::from_structure(&ms, &eta, DEFAULT_ETA_SQ_THRESHOLD);
        let dets: Vec<f64> =
            (0..s.points).map(|i| hz(s.detuning_min_hz + (s.detuning_max_hz - s.detuning_min_hz) * i as f64 / (s.points - 1) as f64)).collect();
        let probe = SidebandProbe { rabi: hz(s.rabi_hz), duration: s.duration_s };
        let spec = crate::thermometry::simulate_sideband_spectrum(&cm, &vec![s.nbar; cm.frequencies.len()], &probe, &dets)?;
        let mut header = vec!["detuning_Hz".to_string()];
        header.extend((0..n).map(|j| format!("ion_{j}")));
        let rows: Vec<Vec<String>> = (0..dets.len())
            .map(|i| {
                let mut r = vec![num(to_hz(dets[i]))];
                r.extend((0..n).map(|j| num(spec.excitation[j][i])));
                r
            })
            .collect();
        out.csv("sideband_spectrum.csv", &header, &rows)?;
        put(&mut d, "spectrum_overlapping", spec.overlapping);
    }
    put(&mut d, "planar", ms.planar);
    put(&mut d, "length_scale_m", cfg.length_scale());
    for class in [
        crate::crystal::ModeClass::Axial,
        crate::crystal::ModeClass::RadialX,
        crate::crystal::ModeClass::RadialY,
        crate::crystal::ModeClass::InPlane,
        crate::crystal::ModeClass::OutOfPlane,
    ] {
        let c = ms.count(class);
        if c > 0 {
            put(&mut d, &format!("modes_{}", class.label()), c as i64);
        }
    }
    Ok(d)
}

struct ThermoSetup {
    modes: CarrierModes,
    times: Vec<f64>,
    bare: Vec<f64>,
}

fn thermo_setup(sc: &Scenario, t: &ThermometryTable, d: &mut Derived) -> Result<ThermoSetup> {
    if t.time_points == 0 || !(t.time_step_s > 0.0) {
        return Err(Error::Config("thermometry: time_points and time_step_s must be positive".into()));
    }
    let (cfg, ms) = crystal_setup(sc, t.ions, t.probe_wavelength_m)?;
    let modes = CarrierModes::from_structure(&ms, &ms.eta_axial, t.eta_sq_threshold.unwrap_or(DEFAULT_ETA_SQ_THRESHOLD));
    let mut bare = vec![hz(t.bare_rabi_hz); t.ions];
    if t.micromotion && sc.trap.q_z > 0.0 {
        let mm = micromotion_reduction(&ms.positions, &cfg.trap, &cfg.ion, t.micromotion_kappa.unwrap_or(DEFAULT_MICROMOTION_KAPPA))?;
        for (b, f) in bare.iter_mut().zip(&mm.factors) {
            *b *= f;
        }
        put(d, "micromotion_spread_ratio", mm.spread_ratio());
    }
    let times = (1..=t.time_points).map(|i| i as f64 * t.time_step_s).collect();
    put(d, "carrier_modes", modes.frequencies.len() as i64);
    Ok(ThermoSetup { modes, times, bare })
}

fn seed_of(sc: &Scenario) -> Result<u64> {
    sc.seed.ok_or_else(|| Error::Config(format!("missing field `seed`: task {} is stochastic and needs a seed", sc.task)))
}

fn truth_model(t: &ThermometryTable) -> Result<ThermalModel> {
    let tr = t.truth.ok_or_else(|| config_err("thermometry.truth"))?;
    ThermalModel::new(tr.n_c, tr.n_0, hz(tr.omega_0_hz))
}

/// Simulated (optionally noisy) trace. Monte-Carlo draws use `seed`,
/// projection noise `seed + 1`.
fn synthetic_trace(t: &ThermometryTable, setup: &ThermoSetup, seed: u64) -> Result<RabiTrace> {
    let truth = truth_model(t)?;
    let clean = simulate_carrier(&setup.modes, &truth, &setup.times, &setup.bare, t.samples, seed)?;
    if t.shots > 0 {
        add_projection_noise(&clean, t.shots, seed.wrapping_add(1))
    } else {
        Ok(clean)
    }
}

fn nbar_rows(modes: &CarrierModes, model: &ThermalModel) -> Vec<Vec<String>> {
    model_nbars(model, &modes.frequencies).iter().enumerate().map(|(k, nb)| vec![k.to_string(), num(to_hz(modes.frequencies[k])), num(*nb)]).collect()
}

pub fn thermometry_simulate(sc: &Scenario, out: &mut OutputDir) -> Result<Derived> {
    let t = sc.thermometry.as_ref().ok_or_else(|| config_err("thermometry"))?;
    let seed = seed_of(sc)?;
    let mut d = Derived::new();
    let setup = thermo_setup(sc, t, &mut d)?;
    let trace = synthetic_trace(t, &setup, seed)?;
    trace.write_csv(out.writer("traces.csv")?)?;
    out.csv("model.csv", &["mode", "freq_Hz", "nbar"], &nbar_rows(&setup.modes, &truth_model(t)?))?;
    Ok(d)
}

pub fn thermometry_fit(sc: &Scenario, base_dir: Option<&Path>, ov: &Overrides, out: &mut OutputDir) -> Result<Derived> {
    let t = sc.thermometry.as_ref().ok_or_else(|| config_err("thermometry"))?;
    let seed = seed_of(sc)?;
    let mut d = Derived::new();
    let setup = thermo_setup(sc, t, &mut d)?;
    let data = match &t.trace {
        Some(file) => {
            let path = base_dir.map_or_else(|| Path::new(file).to_path_buf(), |b| b.join(file));
            let f = std::fs::File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let trace = RabiTrace::read_csv(f, setup.bare.clone())?;
            put(&mut d, "trace_file", path.display().to_string());
            trace
        }
        None => {
            let trace = synthetic_trace(t, &setup, seed)?;
            trace.write_csv(out.writer("traces.csv")?)?;
            trace
        }
    };
    let b = t.bounds.ok_or_else(|| config_err("thermometry.bounds"))?;
    let bounds = SearchBox::new(vec![b.n_c[0], b.n_0[0], hz(b.omega_0_hz[0])], vec![b.n_c[1], b.n_0[1], hz(b.omega_0_hz[1])])
        .map_err(|e| Error::Config(format!("thermometry.bounds: {e}")))?;
    let defaults = FitOptions::default();
    let opts = FitOptions {
        samples: t.samples,
        seed: seed.wrapping_add(2),
        direct: DirectOptions {
            budget: ov.budget.or(t.budget).unwrap_or(defaults.direct.budget),
            tol: ov.tol.or(t.tol).unwrap_or(defaults.direct.tol),
            polish: t.polish,
            ..defaults.direct
        },
    };
    let report = fit_rabi(&data, &setup.modes, &bounds, &opts)?;

    let names = ["n_c", "n_0", "omega_0_Hz"];
    let values = [report.model.n_c, report.model.n_0, to_hz(report.model.omega_0)];
    let lower = [b.n_c[0], b.n_0[0], b.omega_0_hz[0]];
    let upper = [b.n_c[1], b.n_0[1], b.omega_0_hz[1]];
    let at_bound: Vec<bool> =
        (0..3).map(|i| (values[i] - lower[i]).abs() <= 1e-6 * upper[i] || (upper[i] - values[i]).abs() <= 1e-6 * upper[i]).collect();
    let rows: Vec<Vec<String>> = (0..3)
        .map(|i| vec![names[i].to_string(), num(values[i]), num(lower[i]), num(upper[i]), num(report.sensitivity[i]), flag(at_bound[i])])
        .collect();
    out.csv("fit_report.csv", &["parameter", "value", "lower", "upper", "sensitivity", "at_bound"], &rows)?;

    let mut text = String::new();
    text.push_str("# carrier-thermometry fit\n");
    for i in 0..3 {
        text.push_str(&format!("{} = {}\n", names[i], num(values[i])));
    }
    text.push_str(&format!("objective = {}\n", num(report.objective)));
    text.push_str(&format!("data_points = {}\n", data.ions() * data.times.len()));
    text.push_str(&format!("evaluations = {}\n", report.evaluations));
    text.push_str(&format!("budget = {}\n", opts.direct.budget));
    text.push_str(&format!("converged = {}\n", report.converged));
    text.push_str(&format!("samples = {}\n", opts.samples));
    text.push_str(&format!("fit_seed = {}\n", opts.seed));
    for i in 0..3 {
        text.push_str(&format!("sensitivity_{} = {}\n", names[i], num(report.sensitivity[i])));
    }
    for i in 0..3 {
        text.push_str(&format!("at_bound_{} = {}\n", names[i], at_bound[i]));
    }
    out.text("fit_report.txt", &text)?;

    out.csv("fit_model.csv", &["mode", "freq_Hz", "nbar"], &nbar_rows(&setup.modes, &report.model))?;
    let log: Vec<Vec<String>> = report
        .log
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| vec![i.to_string(), num(e.point[0]), num(e.point[1]), num(to_hz(e.point[2])), num(e.value)])
        .collect();
    out.csv("fit_log.csv", &["evaluation", "n_c", "n_0", "omega_0_Hz", "objective"], &log)?;

    let mut sim = CarrierSimulator::new(setup.modes.clone(), data.times.clone(), data.bare_rabi.clone(), opts.samples, opts.seed)?;
    let (p, _) = sim.evaluate(&report.model)?;
    let mut curves = Vec::new();
    for j in 0..data.ions() {
        for (i, tt) in data.times.iter().enumerate() {
            curves.push(vec![num(*tt), j.to_string(), num(data.p[j][i]), num(p[j][i])]);
        }
    }
    out.csv("fit_curves.csv", &["t_s", "ion", "p_data", "p_fit"], &curves)?;

    put(&mut d, "objective", report.objective);
    put(&mut d, "evaluations", report.evaluations as i64);
    put(&mut d, "converged", report.converged);
    Ok(d)
}
