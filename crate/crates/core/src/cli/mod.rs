//! Scenario-driven batch front end behind the `pgc` binary.

mod catalog;
mod output;
pub mod scenario;
mod tasks;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use catalog::{bundled, catalog, CatalogEntry};
pub use scenario::{Scenario, TaskKind};
pub use tasks::Overrides;

use crate::error::{Error, Result};
use output::OutputDir;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's `output`.
    pub out: Option<PathBuf>,
    /// Worker threads; all available cores when unset.
    pub jobs: Option<usize>,
    pub overrides: Overrides,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    /// Written files relative to `out_dir`, manifest last.
    pub files: Vec<String>,
    pub wall_seconds: f64,
}

/// A scenario file, or the name of a bundled one. Returns the scenario
/// and the directory relative paths inside it resolve against.
pub fn load(source: &str) -> Result<(Scenario, Option<PathBuf>)> {
    let path = Path::new(source);
    if path.exists() {
        let sc = Scenario::load(path)?;
        return Ok((sc, Some(path.parent().map(Path::to_path_buf).unwrap_or_default())));
    }
    match bundled(source) {
        Some(e) => Ok((Scenario::parse(e.source).map_err(|err| Error::Config(format!("{source}: {err}")))?, None)),
        None => Err(Error::Io(format!("{source}: no such file or bundled scenario (see `pgc scenarios`)"))),
    }
}

pub fn run(task: TaskKind, source: &str, opts: &RunOptions) -> Result<RunReport> {
    let (sc, base) = load(source)?;
    let label = sc.name.clone().unwrap_or_else(|| Path::new(source).file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned()));
    run_scenario(task, &sc, base.as_deref(), &label, source, opts)
}

pub fn run_scenario(task: TaskKind, sc: &Scenario, base: Option<&Path>, label: &str, source: &str, opts: &RunOptions) -> Result<RunReport> {
    if sc.task != task {
        return Err(Error::Config(format!("scenario is for task {} but `{}` was requested", sc.task, task)));
    }
    sc.validate()?;
    let out_dir = opts.out.clone().or_else(|| sc.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| Path::new("pgc-out").join(label));
    let jobs = opts.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let mut out = OutputDir::create(&out_dir)?;
    let derived = match task {
        TaskKind::Semiclassical => tasks::semiclassical(sc, &mut out)?,
        TaskKind::Lindblad => tasks::lindblad(sc, &mut out, jobs)?,
        TaskKind::Crystal => tasks::crystal(sc, &mut out)?,
        TaskKind::ThermometrySimulate => tasks::thermometry_simulate(sc, &mut out)?,
        TaskKind::ThermometryFit => tasks::thermometry_fit(sc, base, &opts.overrides, &mut out)?,
    };
    let wall = clock.elapsed().as_secs_f64();

    let mut m = toml::Table::new();
    m.insert("tool".into(), "pgc".into());
    m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    m.insert("task".into(), task.name().into());
    m.insert("scenario".into(), source.into());
    if let Some(seed) = sc.seed {
        m.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    m.insert("jobs".into(), toml::Value::Integer(jobs as i64));
    m.insert("started_unix_s".into(), toml::Value::Integer(started as i64));
    m.insert("wall_seconds".into(), wall.into());
    if let Some(b) = opts.overrides.budget {
        m.insert("budget_override".into(), toml::Value::Integer(b as i64));
    }
    if let Some(t) = opts.overrides.tol {
        m.insert("tol_override".into(), t.into());
    }
    m.insert("files".into(), toml::Value::Array(out.files().iter().map(|f| f.as_str().into()).collect()));
    m.insert("derived".into(), toml::Value::Table(derived));
    let config = toml::Value::try_from(sc).map_err(|e| Error::Io(format!("manifest: {e}")))?;
    m.insert("config".into(), config);
    let body = toml::to_string(&m).map_err(|e| Error::Io(format!("manifest: {e}")))?;
    out.text("manifest.toml", &body)?;

    Ok(RunReport { out_dir: out.root().to_path_buf(), files: out.files().to_vec(), wall_seconds: wall })
}
