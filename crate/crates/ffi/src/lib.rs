//! C interface to the cooling, crystal and scenario runners.
//!
//! Every function returns a [`PgcStatus`]; on failure the message is kept
//! per thread and read back with [`pgc_last_error`]. Handles are opaque and
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pgc_core::cli::{self, RunOptions, TaskKind};
use pgc_core::crystal::{normal_modes, CrystalConfig, ModeClass, ModeStructure};
use pgc_core::lindblad::{simulate_rates, EvolveOptions, HilbertLayout, LindbladModel, RatePlan};
use pgc_core::physics::{hz, DimensionlessParams, GradientConfig, IonSpecies, TrapConfig};
use pgc_core::semiclassical::{phase_averaged_rates, rates, steady_state_fixed_phase, steady_state_phase_averaged, RateSummary};
use pgc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    OutOfRange = 3,
    Domain = 4,
    FitFailure = 5,
    Integrator = 6,
    Optimization = 7,
    StructuralInstability = 8,
    NonFinite = 9,
    Budget = 10,
    Config = 11,
    Io = 12,
    Panic = 13,
}

/// Cooling rate (1/s), heating rate (quanta/s) and steady-state occupation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PgcRates {
    pub cooling_rate: f64,
    pub heating_rate: f64,
    pub n_steady: f64,
}

impl From<RateSummary> for PgcRates {
    fn from(r: RateSummary) -> Self {
        Self { cooling_rate: r.w, heating_rate: r.h, n_steady: r.n_steady }
    }
}

/// Symmetry class codes returned by [`pgc_crystal_mode`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgcModeClass {
    Axial = 0,
    RadialX = 1,
    RadialY = 2,
    InPlane = 3,
    OutOfPlane = 4,
}

impl From<ModeClass> for PgcModeClass {
    fn from(c: ModeClass) -> Self {
        match c {
            ModeClass::Axial => PgcModeClass::Axial,
            ModeClass::RadialX => PgcModeClass::RadialX,
            ModeClass::RadialY => PgcModeClass::RadialY,
            ModeClass::InPlane => PgcModeClass::InPlane,
            ModeClass::OutOfPlane => PgcModeClass::OutOfPlane,
        }
    }
}

/// Equilibrium and normal modes of an ion crystal.
pub struct PgcCrystal {
    modes: ModeStructure,
}

/// Single-ion master-equation model.
pub struct PgcLindblad {
    model: LindbladModel,
    avg_cooling_rate: f64,
    ion: IonSpecies,
    params: DimensionlessParams,
}

enum Failure {
    Null,
    Utf8,
    Range(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> PgcStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return PgcStatus::Ok,
        Ok(Err(Failure::Null)) => (PgcStatus::NullPointer, "null pointer argument".to_string()),
        Ok(Err(Failure::Utf8)) => (PgcStatus::InvalidString, "string argument is not UTF-8".to_string()),
        Ok(Err(Failure::Range(m))) => (PgcStatus::OutOfRange, m),
        Ok(Err(Failure::Core(e))) => {
            let status = match &e {
                Error::Domain(_) => PgcStatus::Domain,
                Error::FitFailure(_) => PgcStatus::FitFailure,
                Error::Integrator(_) => PgcStatus::Integrator,
                Error::Optimization(_) => PgcStatus::Optimization,
                Error::StructuralInstability(_) => PgcStatus::StructuralInstability,
                Error::NonFiniteObjective { .. } => PgcStatus::NonFinite,
                Error::Budget(_) => PgcStatus::Budget,
                Error::Config(_) => PgcStatus::Config,
                Error::Io(_) => PgcStatus::Io,
            };
            (status, e.to_string())
        }
        Err(p) => {
            let m = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            (PgcStatus::Panic, format!("panic: {}", m.unwrap_or_default()))
        }
    };
    set_error(msg);
    status
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null)
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null)
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null);
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pgc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pgc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Semiclassical occupation limit at fixed gradient phase zero.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pgc_limit_fixed_phase(xi: f64, out: *mut f64) -> PgcStatus {
    guard(|| {
        *out_ref(out)? = steady_state_fixed_phase(xi)?;
        Ok(())
    })
}

/// Semiclassical occupation limit averaged over the gradient phase.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pgc_limit_phase_averaged(xi: f64, out: *mut f64) -> PgcStatus {
    guard(|| {
        *out_ref(out)? = steady_state_phase_averaged(xi)?;
        Ok(())
    })
}

fn ion_with_linewidth(linewidth_hz: f64) -> Result<IonSpecies, Failure> {
    let ca = IonSpecies::calcium40();
    Ok(IonSpecies::new(ca.mass, ca.wavelength, hz(linewidth_hz), ca.alpha)?)
}

/// Rates at gradient phase `phase` for Lamb-Dicke parameter `eta`,
/// saturation `s` and potential depth `xi`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pgc_rates(eta: f64, s: f64, xi: f64, linewidth_hz: f64, phase: f64, out: *mut PgcRates) -> PgcStatus {
    guard(|| {
        let out = out_ref(out)?;
        let p = DimensionlessParams::new(eta, s, xi)?;
        *out = rates(phase, &p, &ion_with_linewidth(linewidth_hz)?).into();
        Ok(())
    })
}

/// Phase-averaged rates, see [`pgc_rates`].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pgc_phase_averaged_rates(eta: f64, s: f64, xi: f64, linewidth_hz: f64, out: *mut PgcRates) -> PgcStatus {
    guard(|| {
        let out = out_ref(out)?;
        let p = DimensionlessParams::new(eta, s, xi)?;
        *out = phase_averaged_rates(&p, &ion_with_linewidth(linewidth_hz)?).into();
        Ok(())
    })
}

/// Crystal of `ions` ⁴⁰Ca⁺ ions. A zero radial frequency means that axis
/// is unconfined; `wavelength_m` sets the axial Lamb-Dicke matrix.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with
/// [`pgc_crystal_free`].
#[no_mangle]
pub unsafe extern "C" fn pgc_crystal_new(
    ions: usize,
    omega_z_hz: f64,
    omega_x_hz: f64,
    omega_y_hz: f64,
    q_z: f64,
    wavelength_m: f64,
    out: *mut *mut PgcCrystal,
) -> PgcStatus {
    guard(|| {
        let out = out_ref(out)?;
        let radial = |f: f64| (f > 0.0).then(|| hz(f));
        let trap = TrapConfig::new(hz(omega_z_hz), radial(omega_x_hz), radial(omega_y_hz), q_z)?;
        let ion = IonSpecies::calcium40().with_wavelength(wavelength_m)?;
        let modes = normal_modes(&CrystalConfig::new(ions, trap, ion)?)?;
        *out = Box::into_raw(Box::new(PgcCrystal { modes }));
        Ok(())
    })
}

/// # Safety
/// `crystal` must be null or a handle from [`pgc_crystal_new`], not used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn pgc_crystal_free(crystal: *mut PgcCrystal) {
    if !crystal.is_null() {
        drop(Box::from_raw(crystal));
    }
}

/// Ion count, mode count (3N) and whether the crystal is planar.
///
/// # Safety
/// `crystal` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn pgc_crystal_info(crystal: *const PgcCrystal, ions: *mut usize, modes: *mut usize, planar: *mut bool) -> PgcStatus {
    guard(|| {
        let c = handle(crystal)?;
        if let Some(n) = ions.as_mut() {
            *n = c.modes.ions();
        }
        if let Some(m) = modes.as_mut() {
            *m = c.modes.frequencies.len();
        }
        if let Some(p) = planar.as_mut() {
            *p = c.modes.planar;
        }
        Ok(())
    })
}

/// Equilibrium position of ion `ion` in metres, written to `xyz[0..3]`.
///
/// # Safety
/// `crystal` must be a live handle and `xyz` point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn pgc_crystal_position(crystal: *const PgcCrystal, ion: usize, xyz: *mut f64) -> PgcStatus {
    guard(|| {
        let c = handle(crystal)?;
        if xyz.is_null() {
            return Err(Failure::Null);
        }
        let p = c.modes.positions.get(ion).ok_or_else(|| Failure::Range(format!("ion {ion} of {}", c.modes.ions())))?;
        std::ptr::copy_nonoverlapping(p.as_ptr(), xyz, 3);
        Ok(())
    })
}

/// Frequency (Hz) and class of mode `mode`, modes in ascending frequency.
///
/// # Safety
/// `crystal` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pgc_crystal_mode(crystal: *const PgcCrystal, mode: usize, freq_hz: *mut f64, class: *mut PgcModeClass) -> PgcStatus {
    guard(|| {
        let c = handle(crystal)?;
        let (f, k) = (out_ref(freq_hz)?, out_ref(class)?);
        let omega = *c.modes.frequencies.get(mode).ok_or_else(|| Failure::Range(format!("mode {mode} of {}", c.modes.frequencies.len())))?;
        *f = omega / (2.0 * std::f64::consts::PI);
        *k = c.modes.classes[mode].into();
        Ok(())
    })
}

/// Single-ion model at potential depth `xi`, detuning 2π × `detuning_hz`
/// and `n_max` Fock states; `wavelength_scale` stretches the cooling
/// wavelength to shrink the Lamb-Dicke parameter.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with
/// [`pgc_lindblad_free`].
#[no_mangle]
pub unsafe extern "C" fn pgc_lindblad_new(
    n_max: usize,
    omega_z_hz: f64,
    detuning_hz: f64,
    xi: f64,
    wavelength_scale: f64,
    out: *mut *mut PgcLindblad,
) -> PgcStatus {
    guard(|| {
        let out = out_ref(out)?;
        let ca = IonSpecies::calcium40();
        let ion = ca.with_wavelength(ca.wavelength * wavelength_scale)?;
        let trap = TrapConfig::axial(hz(omega_z_hz))?;
        let grad = GradientConfig::for_xi(&ion, hz(detuning_hz), xi, trap.omega_z, 0.0)?;
        let model = LindbladModel::new(&ion, &trap, &grad, HilbertLayout::new(n_max)?)?;
        let params = DimensionlessParams::from_physical(&ion, &grad, trap.omega_z)?;
        let avg_cooling_rate = phase_averaged_rates(&params, &ion).w;
        *out = Box::into_raw(Box::new(PgcLindblad { model, avg_cooling_rate, ion, params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`pgc_lindblad_new`], not used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn pgc_lindblad_free(model: *mut PgcLindblad) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Cool from the motional ground state at fixed `phase` for
/// `time_constants` semiclassical cooling times and extract the rates.
/// `n_steady` is the occupation plateau at this cutoff.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pgc_lindblad_rates(model: *const PgcLindblad, phase: f64, time_constants: f64, out: *mut PgcRates) -> PgcStatus {
    guard(|| {
        let m = handle(model)?;
        let out = out_ref(out)?;
        let w_est = rates(phase, &m.params, &m.ion).w.max(0.1 * m.avg_cooling_rate);
        let plan = RatePlan::for_cooling_rate(w_est, time_constants)?;
        let opts = EvolveOptions { track_min_eigenvalue: false, ..EvolveOptions::default() };
        let (_, r) = simulate_rates(&m.model, phase, &plan, &opts)?;
        *out = PgcRates { cooling_rate: r.w, heating_rate: r.h, n_steady: r.cooling.n_m };
        Ok(())
    })
}

/// Run a scenario file or bundled scenario as `pgc <task>` would. `task`
/// is one of semiclassical, lindblad, crystal, thermometry-simulate or
/// thermometry-fit. `out_dir` may be null; `jobs` 0 uses all cores.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pgc_run_scenario(task: *const c_char, scenario: *const c_char, out_dir: *const c_char, jobs: usize) -> PgcStatus {
    guard(|| {
        let task = match string(task)? {
            "semiclassical" => TaskKind::Semiclassical,
            "lindblad" => TaskKind::Lindblad,
            "crystal" => TaskKind::Crystal,
            "thermometry-simulate" => TaskKind::ThermometrySimulate,
            "thermometry-fit" => TaskKind::ThermometryFit,
            other => return Err(Failure::Range(format!("unknown task `{other}`"))),
        };
        let out = if out_dir.is_null() { None } else { Some(PathBuf::from(string(out_dir)?)) };
        let opts = RunOptions { out, jobs: (jobs > 0).then_some(jobs), ..RunOptions::default() };
        cli::run(task, string(scenario)?, &opts)?;
        Ok(())
    })
}
