//! Scenario files: one TOML tree per run. Frequencies carry a `_hz`
//! suffix and are converted to rad/s here, nowhere else.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{hz, GradientConfig, IonSpecies, TrapConfig, ATOMIC_MASS_UNIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Semiclassical,
    Lindblad,
    Crystal,
    ThermometrySimulate,
    ThermometryFit,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Semiclassical => "semiclassical",
            TaskKind::Lindblad => "lindblad",
            TaskKind::Crystal => "crystal",
            TaskKind::ThermometrySimulate => "thermometry-simulate",
            TaskKind::ThermometryFit => "thermometry-fit",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(self, TaskKind::ThermometrySimulate | TaskKind::ThermometryFit)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub task: TaskKind,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub ion: IonSection,
    pub trap: TrapSection,
    #[serde(default)]
    pub gradient: Option<GradientSection>,
    #[serde(default)]
    pub semiclassical: Option<SemiclassicalTable>,
    #[serde(default)]
    pub lindblad: Option<LindbladTable>,
    #[serde(default)]
    pub crystal: Option<CrystalTable>,
    #[serde(default)]
    pub thermometry: Option<ThermometryTable>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonSection {
    #[serde(default = "default_species")]
    pub species: String,
    pub mass_amu: Option<f64>,
    pub wavelength_m: Option<f64>,
    pub linewidth_hz: Option<f64>,
    pub alpha: Option<f64>,
    /// Multiplies the cooling wavelength; 10 divides η by 10.
    #[serde(default = "one")]
    pub wavelength_scale: f64,
}

impl Default for IonSection {
    fn default() -> Self {
        Self { species: default_species(), mass_amu: None, wavelength_m: None, linewidth_hz: None, alpha: None, wavelength_scale: 1.0 }
    }
}

fn default_species() -> String {
    "Ca40".into()
}

fn one() -> f64 {
    1.0
}

impl IonSection {
    pub fn species(&self) -> Result<IonSpecies> {
        let base = match self.species.as_str() {
            "Ca40" | "40Ca+" | "calcium40" => IonSpecies::calcium40(),
            other => return Err(Error::Config(format!("ion.species: unknown species `{other}` (known: Ca40)"))),
        };
        if !(self.wavelength_scale > 0.0) {
            return Err(Error::Config("ion.wavelength_scale must be positive".into()));
        }
        let mass = self.mass_amu.map_or(base.mass, |m| m * ATOMIC_MASS_UNIT);
        let wavelength = self.wavelength_m.unwrap_or(base.wavelength) * self.wavelength_scale;
        let linewidth = self.linewidth_hz.map_or(base.linewidth, hz);
        let alpha = self.alpha.unwrap_or(base.alpha);
        IonSpecies::new(mass, wavelength, linewidth, alpha).map_err(|e| Error::Config(format!("ion: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub omega_z_hz: f64,
    pub omega_x_hz: Option<f64>,
    pub omega_y_hz: Option<f64>,
    #[serde(default)]
    pub q_z: f64,
}

impl TrapSection {
    pub fn config(&self) -> Result<TrapConfig> {
        self.config_at(self.omega_z_hz)
    }

    /// Same trap with a different axial frequency (Hz).
    pub fn config_at(&self, omega_z_hz: f64) -> Result<TrapConfig> {
        TrapConfig::new(hz(omega_z_hz), self.omega_x_hz.map(hz), self.omega_y_hz.map(hz), self.q_z).map_err(|e| Error::Config(format!("trap: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSection {
    pub detuning_hz: f64,
    /// Exactly one of `xi`, `saturation`, `rabi_hz` sets the intensity.
    pub xi: Option<f64>,
    pub saturation: Option<f64>,
    pub rabi_hz: Option<f64>,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub beam_detuning_hz: f64,
}

/// How the beam intensity is pinned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intensity {
    Xi(f64),
    Saturation(f64),
    /// rad/s.
    Rabi(f64),
}

impl GradientSection {
    pub fn intensity(&self) -> Result<Intensity> {
        match (self.xi, self.saturation, self.rabi_hz) {
            (Some(x), None, None) => Ok(Intensity::Xi(x)),
            (None, Some(s), None) => Ok(Intensity::Saturation(s)),
            (None, None, Some(r)) => Ok(Intensity::Rabi(hz(r))),
            _ => Err(Error::Config("gradient: give exactly one of `xi`, `saturation`, `rabi_hz`".into())),
        }
    }

    /// Field at trap frequency `omega` (rad/s); `xi` overrides the
    /// section's intensity when given.
    pub fn field(&self, ion: &IonSpecies, omega: f64, xi: Option<f64>) -> Result<GradientConfig> {
        let detuning = hz(self.detuning_hz);
        let intensity = match xi {
            Some(x) => Intensity::Xi(x),
            None => self.intensity()?,
        };
        let g = match intensity {
            Intensity::Xi(x) => GradientConfig::for_xi(ion, detuning, x, omega, self.phase),
            Intensity::Saturation(s) => {
                let rabi = (2.0 * s * (0.25 * ion.linewidth * ion.linewidth + detuning * detuning)).sqrt();
                GradientConfig::new(detuning, rabi, self.phase, 0.0)
            }
            Intensity::Rabi(r) => GradientConfig::new(detuning, r, self.phase, 0.0),
        };
        Ok(g.map_err(|e| Error::Config(format!("gradient: {e}")))?.with_beam_detuning(hz(self.beam_detuning_hz)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiclassicalTable {
    /// Fixed gradient phases, rad.
    #[serde(default)]
    pub phases: Vec<f64>,
    /// ξ grid; the gradient section's intensity when empty.
    #[serde(default)]
    pub xi: Vec<f64>,
    /// Axial frequency grid (Hz) at the gradient's fixed intensity.
    #[serde(default)]
    pub trap_freq_hz: Vec<f64>,
    #[serde(default)]
    pub phase_averaged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LindbladMode {
    /// Fixed phase, started in the ground state; W, H and the plateau.
    Rates,
    /// Moving gradient; time-averaged occupation.
    Moving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladTable {
    pub mode: LindbladMode,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Extra Fock cutoffs for the finite-size extrapolation.
    #[serde(default)]
    pub cutoffs: Vec<usize>,
    pub phase: Option<f64>,
    pub xi: Option<f64>,
    pub beam_detuning_hz: Option<f64>,
    /// Run length in units of 1/W (rates mode).
    pub time_constants: Option<f64>,
    /// Overrides the semiclassical estimate that sizes the time grid.
    pub cooling_rate_estimate: Option<f64>,
    pub transient_time_constants: Option<f64>,
    pub samples_per_period: Option<usize>,
    pub steps_per_modulation: Option<usize>,
    pub max_duration_s: Option<f64>,
    /// Start in |S−½, 0⟩ instead of |S+½, 0⟩.
    #[serde(default)]
    pub start_in_s_minus: bool,
}

fn default_n_max() -> usize {
    24
}

/// Keys of the lindblad table a sweep may vary.
pub const LINDBLAD_SWEEP_KEYS: [&str; 5] = ["phase", "xi", "beam_detuning_hz", "n_max", "time_constants"];

impl LindbladTable {
    fn has_key(&self, key: &str) -> bool {
        match key {
            "phase" => self.phase.is_some(),
            "xi" => self.xi.is_some(),
            "beam_detuning_hz" => self.beam_detuning_hz.is_some(),
            "n_max" => true,
            "time_constants" => self.time_constants.is_some(),
            _ => false,
        }
    }

    /// Copy with `key` set to `value`.
    pub fn with(&self, key: &str, value: f64) -> Result<Self> {
        let mut t = self.clone();
        match key {
            "phase" => t.phase = Some(value),
            "xi" => t.xi = Some(value),
            "beam_detuning_hz" => t.beam_detuning_hz = Some(value),
            "n_max" => {
                if !(value >= 2.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("sweep: n_max must be an integer ≥ 2, got {value}")));
                }
                t.n_max = value as usize
            }
            "time_constants" => t.time_constants = Some(value),
            other => return Err(Error::Config(format!("sweep.param: `{other}` cannot be swept"))),
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalTable {
    pub ions: usize,
    #[serde(default = "default_probe")]
    pub probe_wavelength_m: f64,
    /// Unit vector of the probe beam; axial by default.
    #[serde(default = "axial")]
    pub probe_axis: [f64; 3],
    pub micromotion_kappa: Option<f64>,
    #[serde(default)]
    pub spectrum: Option<SpectrumTable>,
}

fn default_probe() -> f64 {
    729e-9
}

fn axial() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumTable {
    pub rabi_hz: f64,
    pub duration_s: f64,
    /// Occupation assigned to every mode.
    pub nbar: f64,
    pub detuning_min_hz: f64,
    pub detuning_max_hz: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermometryTable {
    pub ions: usize,
    #[serde(default = "default_probe")]
    pub probe_wavelength_m: f64,
    pub bare_rabi_hz: f64,
    /// Scale Ω₀ per ion by the axial micromotion reduction.
    #[serde(default = "yes")]
    pub micromotion: bool,
    pub micromotion_kappa: Option<f64>,
    pub time_step_s: f64,
    pub time_points: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub eta_sq_threshold: Option<f64>,
    /// Projective measurements per point; 0 keeps the noiseless curve.
    #[serde(default)]
    pub shots: u32,
    /// Trace to fit, relative to the scenario file. Without it the fit
    /// runs on data simulated from `truth`.
    pub trace: Option<String>,
    pub truth: Option<TruthTable>,
    pub bounds: Option<BoundsTable>,
    pub budget: Option<usize>,
    pub tol: Option<f64>,
    #[serde(default)]
    pub polish: bool,
}

fn yes() -> bool {
    true
}

fn default_samples() -> usize {
    crate::thermometry::DEFAULT_SAMPLES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthTable {
    pub n_c: f64,
    pub n_0: f64,
    pub omega_0_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsTable {
    pub n_c: [f64; 2],
    pub n_0: [f64; 2],
    pub omega_0_hz: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.task.stochastic() && self.seed.is_none() {
            return Err(Error::Config(format!("missing field `seed`: task {} is stochastic and needs a seed", self.task)));
        }
        let present = [
            ("semiclassical", self.semiclassical.is_some()),
            ("lindblad", self.lindblad.is_some()),
            ("crystal", self.crystal.is_some()),
            ("thermometry", self.thermometry.is_some()),
        ];
        let wanted = match self.task {
            TaskKind::Semiclassical => "semiclassical",
            TaskKind::Lindblad => "lindblad",
            TaskKind::Crystal => "crystal",
            TaskKind::ThermometrySimulate | TaskKind::ThermometryFit => "thermometry",
        };
        for (table, is) in present {
            if is && table != wanted {
                return Err(Error::Config(format!("table `[{table}]` does not belong to task {}", self.task)));
            }
        }
        if !present.iter().any(|(t, is)| *t == wanted && *is) {
            return Err(Error::Config(format!("missing table `[{wanted}]` for task {}", self.task)));
        }
        if matches!(self.task, TaskKind::Semiclassical | TaskKind::Lindblad) {
            let g = self.gradient.as_ref().ok_or_else(|| Error::Config(format!("missing table `[gradient]` for task {}", self.task)))?;
            let pinned_by_table =
                self.lindblad.as_ref().is_some_and(|l| l.xi.is_some()) || self.semiclassical.as_ref().is_some_and(|s| !s.xi.is_empty());
            if !pinned_by_table {
                g.intensity()?;
            }
        }
        if let Some(sw) = &self.sweep {
            let Some(l) = &self.lindblad else {
                return Err(Error::Config(format!("sweep: task {} takes its grids from its own table", self.task)));
            };
            if !LINDBLAD_SWEEP_KEYS.contains(&sw.param.as_str()) {
                return Err(Error::Config(format!(
                    "sweep.param: `{}` is not a sweepable lindblad key ({})",
                    sw.param,
                    LINDBLAD_SWEEP_KEYS.join(", ")
                )));
            }
            if !l.has_key(&sw.param) {
                return Err(Error::Config(format!("sweep.param: `{}` must also be set in `[lindblad]`", sw.param)));
            }
            if sw.values.is_empty() {
                return Err(Error::Config("sweep.values must not be empty".into()));
            }
        }
        if let Some(l) = &self.lindblad {
            if l.mode == LindbladMode::Moving && l.beam_detuning_hz.is_none() && self.gradient.as_ref().is_some_and(|g| g.beam_detuning_hz == 0.0) {
                return Err(Error::Config("lindblad.beam_detuning_hz: required in moving mode".into()));
            }
            if (1..4).contains(&l.cutoffs.len()) {
                return Err(Error::Config("lindblad.cutoffs: the extrapolation needs at least 4 cutoffs".into()));
            }
        }
        if let Some(t) = &self.thermometry {
            match self.task {
                TaskKind::ThermometrySimulate if t.truth.is_none() => {
                    return Err(Error::Config("missing field `thermometry.truth` for task thermometry-simulate".into()));
                }
                TaskKind::ThermometryFit => {
                    if t.bounds.is_none() {
                        return Err(Error::Config("missing field `thermometry.bounds` for task thermometry-fit".into()));
                    }
                    if t.trace.is_none() && t.truth.is_none() {
                        return Err(Error::Config("thermometry: a fit needs either `trace` or `truth`".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIT: &str = r#"
task = "thermometry-fit"
[trap]
omega_z_hz = 217e3
omega_x_hz = 2.67e6
omega_y_hz = 2.64e6
[thermometry]
ions = 8
bare_rabi_hz = 50e3
time_step_s = 4e-6
time_points = 40
truth = { n_c = 20.0, n_0 = 3.0, omega_0_hz = 475e3 }
bounds = { n_c = [1.0, 60.0], n_0 = [0.5, 15.0], omega_0_hz = [150e3, 1500e3] }
"#;

    #[test]
    fn fit_without_seed_names_the_field() {
        let e = Scenario::parse(FIT).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
        let ok = format!("seed = 3\n{FIT}");
        assert_eq!(Scenario::parse(&ok).unwrap().seed, Some(3));
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = Scenario::parse("task = \"lindblad\"\n[trap]\nomega_z_hz = \"fast\"\n").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = Scenario::parse("task = \"crystal\"\nbogus = 1\n[trap]\nomega_z_hz = 1.0\n").unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
    }

    #[test]
    fn sweep_key_must_exist_in_table() {
        let base = "task = \"lindblad\"\n[trap]\nomega_z_hz = 1088e3\n[gradient]\ndetuning_hz = 210e6\nxi = 0.9\n[lindblad]\nmode = \"rates\"\n";
        let e = Scenario::parse(&format!("{base}[sweep]\nparam = \"phase\"\nvalues = [0.0]\n")).unwrap_err().to_string();
        assert!(e.contains("phase"), "{e}");
        let e = Scenario::parse(&format!("{base}[sweep]\nparam = \"colour\"\nvalues = [0.0]\n")).unwrap_err().to_string();
        assert!(e.contains("colour"), "{e}");
        let ok = base.replace("mode = \"rates\"", "mode = \"rates\"\nphase = 0.0");
        Scenario::parse(&format!("{ok}[sweep]\nparam = \"phase\"\nvalues = [0.0, 0.1]\n")).unwrap();
    }

    #[test]
    fn hz_fields_become_angular() {
        let t = TrapSection { omega_z_hz: 1e3, omega_x_hz: None, omega_y_hz: None, q_z: 0.0 };
        assert!((t.config().unwrap().omega_z - 2e3 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn intensity_must_be_unique() {
        let g = GradientSection { detuning_hz: 1e8, xi: Some(1.0), saturation: Some(0.01), rabi_hz: None, phase: 0.0, beam_detuning_hz: 0.0 };
        assert!(g.intensity().is_err());
    }

    #[test]
    fn wavelength_scale_divides_eta() {
        let ion = IonSection { wavelength_scale: 10.0, ..Default::default() }.species().unwrap();
        let w = hz(1088e3);
        let a = crate::physics::lamb_dicke(&ion, w).unwrap();
        let b = crate::physics::lamb_dicke(&IonSpecies::calcium40(), w).unwrap();
        assert!((b / a - 10.0).abs() < 1e-12);
    }
}
