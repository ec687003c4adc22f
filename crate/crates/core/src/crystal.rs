//! Coulomb-crystal equilibria and pseudopotential normal modes.
//!
//! Internally everything is dimensionless: lengths in units of
//! ℓ = (e²/(4πε₀ m ω_z²))^{1/3} and energies in m ω_z² ℓ², so the potential
//! is Σ ½(a_x x² + a_y y² + z²) + Σ_{i<j} 1/r_ij with a_u = (ω_u/ω_z)².

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::physics::{IonSpecies, TrapConfig, ELEMENTARY_CHARGE, EPSILON_0, HBAR};

const GRADIENT_TOL: f64 = 1e-12;
const MAX_NEWTON_ITER: usize = 500;
/// Transverse displacement (units of ℓ) above which a crystal is planar.
const PLANAR_THRESHOLD: f64 = 1e-6;
/// Initial transverse zig-zag offset of the seed, units of ℓ.
const SEED_STAGGER: f64 = 1e-3;

/// Carrier reduction calibration: 22 ions at ω_z = 2π×217 kHz, q_z = 0.0013,
/// probed at 729 nm, lose 2% between the outermost and the centre ion.
pub const DEFAULT_MICROMOTION_KAPPA: f64 = 0.901_736_481_857_868;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrystalConfig {
    pub ions: usize,
    pub trap: TrapConfig,
    pub ion: IonSpecies,
}

impl CrystalConfig {
    pub fn new(ions: usize, trap: TrapConfig, ion: IonSpecies) -> Result<Self> {
        if ions == 0 {
            return domain("a crystal needs at least one ion");
        }
        if trap.omega_x.is_none() || trap.omega_y.is_none() {
            return domain("crystal calculations need all three trap frequencies");
        }
        Ok(Self { ions, trap, ion })
    }

    /// ℓ in meters.
    pub fn length_scale(&self) -> f64 {
        let coulomb = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * std::f64::consts::PI * EPSILON_0);
        (coulomb / (self.ion.mass * self.trap.omega_z * self.trap.omega_z)).cbrt()
    }

    /// (a_x, a_y, 1), with a degenerate transverse pair split by 1e-9.
    fn curvatures(&self) -> [f64; 3] {
        let wz = self.trap.omega_z;
        let ax = (self.trap.omega_x.unwrap_or(f64::INFINITY) / wz).powi(2);
        let mut ay = (self.trap.omega_y.unwrap_or(f64::INFINITY) / wz).powi(2);
        if ax == ay {
            ay *= 1.0 - 1e-9;
        }
        [ax, ay, 1.0]
    }

    /// Transverse axis with the lower confinement (0 = x, 1 = y).
    fn soft_transverse_axis(&self) -> usize {
        let [ax, ay, _] = self.curvatures();
        if ay < ax {
            1
        } else {
            0
        }
    }
}

/// Symmetry sector of a normal mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ModeClass {
    Axial,
    RadialX,
    RadialY,
    InPlane,
    OutOfPlane,
}

impl ModeClass {
    pub fn label(self) -> &'static str {
        match self {
            ModeClass::Axial => "axial",
            ModeClass::RadialX => "radial_x",
            ModeClass::RadialY => "radial_y",
            ModeClass::InPlane => "in_plane",
            ModeClass::OutOfPlane => "out_of_plane",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeStructure {
    /// Equilibrium positions, m, one row per ion (x, y, z).
    pub positions: Vec<[f64; 3]>,
    /// ω_k, rad/s, grouped by class and ascending within each class.
    pub frequencies: Vec<f64>,
    pub classes: Vec<ModeClass>,
    /// Column k is mode k; row 3j + c is component c of ion j.
    pub eigenvectors: DMatrix<f64>,
    pub planar: bool,
    /// Lamb-Dicke matrix for a probe along z with the config's wavelength.
    pub eta_axial: LambDickeMatrix,
}

impl ModeStructure {
    pub fn ions(&self) -> usize {
        self.positions.len()
    }

    pub fn count(&self, class: ModeClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }
}

/// η_jk for the modes with a nonzero projection on the probe axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LambDickeMatrix {
    /// Indices into [`ModeStructure::frequencies`].
    pub modes: Vec<usize>,
    /// N × M.
    pub eta: DMatrix<f64>,
}

fn to_vec3(x: &DVector<f64>, i: usize) -> Vector3<f64> {
    Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])
}

fn potential(x: &DVector<f64>, a: &[f64; 3]) -> f64 {
    let n = x.len() / 3;
    let mut v = 0.0;
    for i in 0..n {
        for c in 0..3 {
            v += 0.5 * a[c] * x[3 * i + c] * x[3 * i + c];
        }
        for j in (i + 1)..n {
            v += 1.0 / (to_vec3(x, i) - to_vec3(x, j)).norm();
        }
    }
    v
}

fn gradient(x: &DVector<f64>, a: &[f64; 3]) -> DVector<f64> {
    let n = x.len() / 3;
    let mut g = DVector::zeros(3 * n);
    for i in 0..n {
        for c in 0..3 {
            g[3 * i + c] += a[c] * x[3 * i + c];
        }
        for j in (i + 1)..n {
            let r = to_vec3(x, i) - to_vec3(x, j);
            let f = r / r.norm().powi(3);
            for c in 0..3 {
                g[3 * i + c] -= f[c];
                g[3 * j + c] += f[c];
            }
        }
    }
    g
}

fn hessian(x: &DVector<f64>, a: &[f64; 3]) -> DMatrix<f64> {
    let n = x.len() / 3;
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for c in 0..3 {
            h[(3 * i + c, 3 * i + c)] += a[c];
        }
        for j in (i + 1)..n {
            let r = to_vec3(x, i) - to_vec3(x, j);
            let d = r.norm();
            let k = r * r.transpose() * (3.0 / d.powi(5)) - nalgebra::Matrix3::identity() / d.powi(3);
            for p in 0..3 {
                for q in 0..3 {
                    h[(3 * i + p, 3 * i + q)] += k[(p, q)];
                    h[(3 * j + p, 3 * j + q)] += k[(p, q)];
                    h[(3 * i + p, 3 * j + q)] -= k[(p, q)];
                    h[(3 * j + p, 3 * i + q)] -= k[(p, q)];
                }
            }
        }
    }
    h
}

/// Evenly spaced chain along z with an alternating offset along the soft
/// transverse axis, in units of ℓ.
pub fn seed_positions(cfg: &CrystalConfig) -> Vec<[f64; 3]> {
    let n = cfg.ions;
    let spacing = 2.0 * (n as f64).powf(-0.56);
    let axis = cfg.soft_transverse_axis();
    (0..n)
        .map(|i| {
            let mut p = [0.0; 3];
            p[2] = (i as f64 - 0.5 * (n as f64 - 1.0)) * spacing;
            if n > 1 {
                p[axis] = if i % 2 == 0 { SEED_STAGGER } else { -SEED_STAGGER };
            }
            p
        })
        .collect()
}

/// Damped Newton from `seed` (units of ℓ); returns positions in ℓ.
pub fn relax(cfg: &CrystalConfig, seed: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    if seed.len() != cfg.ions {
        return domain(format!("seed has {} ions, config has {}", seed.len(), cfg.ions));
    }
    let a = cfg.curvatures();
    let mut x = DVector::from_iterator(3 * cfg.ions, seed.iter().flat_map(|p| p.iter().copied()));
    let mut v = potential(&x, &a);
    let mut g = gradient(&x, &a);
    for _ in 0..MAX_NEWTON_ITER {
        let gn = g.norm();
        if gn < GRADIENT_TOL {
            return Ok((0..cfg.ions).map(|i| [x[3 * i], x[3 * i + 1], x[3 * i + 2]]).collect());
        }
        let h = hessian(&x, &a);
        // Shift the Hessian until it is positive definite.
        let mut mu = 0.0;
        let dir = loop {
            let mut hs = h.clone();
            for i in 0..hs.nrows() {
                hs[(i, i)] += mu;
            }
            if let Some(ch) = hs.cholesky() {
                break ch.solve(&(-&g));
            }
            mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
            if mu > 1e12 {
                return Err(Error::Optimization("could not regularize the Hessian".into()));
            }
        };
        let slope = g.dot(&dir);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let xt = &x + &dir * alpha;
            let vt = potential(&xt, &a);
            let gt = gradient(&xt, &a);
            // Near the minimum V stalls at round-off; a shrinking gradient
            // then decides.
            let armijo = vt <= v + 1e-4 * alpha * slope;
            let flat = vt <= v + 1e-13 * v.abs() && gt.norm() < gn;
            if vt.is_finite() && (armijo || flat) {
                x = xt;
                v = vt;
                g = gt;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::Optimization(format!("equilibrium search for {} ions stopped at gradient norm {:.3e}", cfg.ions, g.norm())))
}

/// Equilibrium positions in meters.
pub fn equilibrium_positions(cfg: &CrystalConfig) -> Result<Vec<[f64; 3]>> {
    let l = cfg.length_scale();
    Ok(relax(cfg, &seed_positions(cfg))?.into_iter().map(|p| p.map(|c| c * l)).collect())
}

/// Normal modes at the relaxed equilibrium.
pub fn normal_modes(cfg: &CrystalConfig) -> Result<ModeStructure> {
    let x = relax(cfg, &seed_positions(cfg))?;
    modes_at(cfg, &x)
}

/// Normal modes about the given stationary point (units of ℓ). Fails with
/// a structural-instability error if it is not a minimum.
pub fn modes_at(cfg: &CrystalConfig, x_dimless: &[[f64; 3]]) -> Result<ModeStructure> {
    let n = cfg.ions;
    if x_dimless.len() != n {
        return domain(format!("{} positions for {n} ions", x_dimless.len()));
    }
    let a = cfg.curvatures();
    let x = DVector::from_iterator(3 * n, x_dimless.iter().flat_map(|p| p.iter().copied()));
    let eig = SymmetricEigen::new(hessian(&x, &a));
    let lowest = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lowest < -1e-9 {
        return Err(Error::StructuralInstability(format!("Hessian eigenvalue {lowest:.3e} (ω² in units of ω_z²) is negative")));
    }

    let soft = cfg.soft_transverse_axis();
    let hard = 1 - soft;
    let planar = x_dimless.iter().any(|p| p[soft].abs() > PLANAR_THRESHOLD || p[hard].abs() > PLANAR_THRESHOLD);
    let weight = |k: usize, c: usize| (0..n).map(|j| eig.eigenvectors[(3 * j + c, k)].powi(2)).sum::<f64>();
    let class_of = |k: usize| {
        if planar {
            if weight(k, hard) > 0.5 {
                ModeClass::OutOfPlane
            } else {
                ModeClass::InPlane
            }
        } else {
            let w = [weight(k, 0), weight(k, 1), weight(k, 2)];
            if w[2] >= w[0] && w[2] >= w[1] {
                ModeClass::Axial
            } else if w[0] >= w[1] {
                ModeClass::RadialX
            } else {
                ModeClass::RadialY
            }
        }
    };

    let mut order: Vec<(ModeClass, f64, usize)> = (0..3 * n).map(|k| (class_of(k), eig.eigenvalues[k].max(0.0), k)).collect();
    order.sort_by(|p, q| p.0.cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let mut vecs = DMatrix::zeros(3 * n, 3 * n);
    for (col, &(_, _, k)) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        // Fix the sign: first significant component positive.
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-8) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vecs.set_column(col, &v);
    }
    let frequencies: Vec<f64> = order.iter().map(|&(_, l, _)| cfg.trap.omega_z * l.sqrt()).collect();
    let classes = order.iter().map(|&(c, _, _)| c).collect();
    let l = cfg.length_scale();
    let positions: Vec<[f64; 3]> = x_dimless.iter().map(|p| p.map(|c| c * l)).collect();
    let mut out = ModeStructure {
        positions,
        frequencies,
        classes,
        eigenvectors: vecs,
        planar,
        eta_axial: LambDickeMatrix { modes: vec![], eta: DMatrix::zeros(n, 0) },
    };
    out.eta_axial = lamb_dicke_matrix(&out, &cfg.ion, [0.0, 0.0, 1.0])?;
    Ok(out)
}

/// η_jk = (b_jk · axis)·√(ħk²/(2mω_k)), keeping modes whose projection on
/// the axis does not vanish.
pub fn lamb_dicke_matrix(modes: &ModeStructure, ion: &IonSpecies, axis: [f64; 3]) -> Result<LambDickeMatrix> {
    let norm = axis.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return domain(format!("probe axis must be a unit vector (norm {norm})"));
    }
    let n = modes.ions();
    let k = ion.wavenumber();
    let proj = |j: usize, m: usize| (0..3).map(|c| modes.eigenvectors[(3 * j + c, m)] * axis[c]).sum::<f64>();
    let kept: Vec<usize> =
        (0..modes.frequencies.len()).filter(|&m| (0..n).map(|j| proj(j, m).powi(2)).sum::<f64>() > 1e-12 && modes.frequencies[m] > 0.0).collect();
    let eta = DMatrix::from_fn(n, kept.len(), |j, col| {
        let m = kept[col];
        proj(j, m) * (HBAR * k * k / (2.0 * ion.mass * modes.frequencies[m])).sqrt()
    });
    Ok(LambDickeMatrix { modes: kept, eta })
}

/// Per-ion carrier reduction J₀(β_j) from axial micromotion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicromotionReduction {
    pub kappa: f64,
    /// Modulation indices β_j = k·(q_z·z_j/2)·κ.
    pub beta: Vec<f64>,
    pub factors: Vec<f64>,
}

impl MicromotionReduction {
    /// Smallest over largest factor (outermost over innermost ion).
    pub fn spread_ratio(&self) -> f64 {
        let lo = self.factors.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.factors.iter().cloned().fold(0.0, f64::max);
        lo / hi
    }
}

pub fn micromotion_reduction(positions: &[[f64; 3]], trap: &TrapConfig, ion: &IonSpecies, kappa: f64) -> Result<MicromotionReduction> {
    if !(kappa >= 0.0) {
        return domain(format!("kappa must be non-negative, got {kappa}"));
    }
    let k = ion.wavenumber();
    let beta: Vec<f64> = positions.iter().map(|p| k * trap.q_z * p[2].abs() / 2.0 * kappa).collect();
    let factors = beta.iter().map(|b| libm::j0(*b)).collect();
    Ok(MicromotionReduction { kappa, beta, factors })
}

/// κ giving the requested outermost/innermost ratio for these positions.
pub fn calibrate_micromotion_kappa(positions: &[[f64; 3]], trap: &TrapConfig, ion: &IonSpecies, ratio: f64) -> Result<f64> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return domain(format!("target ratio must lie in (0, 1), got {ratio}"));
    }
    let at = |kappa: f64| micromotion_reduction(positions, trap, ion, kappa).map(|m| m.spread_ratio());
    let (mut lo, mut hi) = (0.0, 1.0);
    while at(hi)? > ratio {
        hi *= 2.0;
        if hi > 1e6 {
            return domain("positions and q_z give no micromotion to calibrate against");
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? > ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::hz;
    use approx::assert_relative_eq;

    fn linear(n: usize, fz: f64) -> CrystalConfig {
        let trap = TrapConfig::new(hz(fz), Some(hz(2.67e6)), Some(hz(2.64e6)), 0.0).unwrap();
        CrystalConfig::new(n, trap, IonSpecies::calcium40()).unwrap()
    }

    fn axial_ratios(m: &ModeStructure) -> Vec<f64> {
        let wz = m.frequencies[0];
        m.frequencies.iter().zip(&m.classes).filter(|(_, c)| **c == ModeClass::Axial).map(|(w, _)| w / wz).collect()
    }

    #[test]
    fn single_ion_sits_at_origin() {
        let p = equilibrium_positions(&linear(1, 1e6)).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].iter().all(|c| c.abs() < 1e-20));
    }

    #[test]
    fn two_and_three_ion_positions() {
        let cfg = linear(2, 1e6);
        let l = cfg.length_scale();
        let p = equilibrium_positions(&cfg).unwrap();
        assert_relative_eq!(p[1][2] / l, 0.25f64.cbrt(), max_relative = 1e-10);
        assert_relative_eq!(p[0][2] / l, -(0.25f64.cbrt()), max_relative = 1e-10);
        let cfg = linear(3, 1e6);
        let p = equilibrium_positions(&cfg).unwrap();
        let l = cfg.length_scale();
        assert!(p[1][2].abs() / l < 1e-12);
        assert_relative_eq!(p[2][2] / l, 1.25f64.cbrt(), max_relative = 1e-10);
    }

    #[test]
    fn small_chain_axial_frequencies() {
        let m = normal_modes(&linear(2, 1e6)).unwrap();
        let r = axial_ratios(&m);
        assert_relative_eq!(r[1], 3f64.sqrt(), max_relative = 1e-9);
        let m = normal_modes(&linear(3, 1e6)).unwrap();
        let r = axial_ratios(&m);
        assert_relative_eq!(r[1], 3f64.sqrt(), max_relative = 1e-9);
        assert_relative_eq!(r[2], (29.0f64 / 5.0).sqrt(), max_relative = 1e-9);
        assert_relative_eq!(m.frequencies[0], hz(1e6), max_relative = 1e-9);
    }

    #[test]
    fn eigenvectors_orthonormal_and_com_uniform() {
        let m = normal_modes(&linear(8, 217e3)).unwrap();
        let b = &m.eigenvectors;
        let id = b.transpose() * b;
        assert!((id - DMatrix::identity(24, 24)).abs().max() < 1e-10);
        for j in 0..8 {
            assert_relative_eq!(b[(3 * j + 2, 0)], 1.0 / 8f64.sqrt(), max_relative = 1e-9);
        }
    }

    #[test]
    fn eta_of_com_and_column_sums() {
        let cfg = linear(5, 500e3);
        let m = normal_modes(&cfg).unwrap();
        let eta1 = crate::physics::lamb_dicke(&cfg.ion, cfg.trap.omega_z).unwrap();
        let e = &m.eta_axial;
        assert_eq!(e.modes.len(), 5);
        for j in 0..5 {
            assert_relative_eq!(e.eta[(j, 0)], eta1 / 5f64.sqrt(), max_relative = 1e-9);
        }
        let k = cfg.ion.wavenumber();
        for (col, &mode) in e.modes.iter().enumerate() {
            let s: f64 = (0..5).map(|j| e.eta[(j, col)].powi(2)).sum();
            assert_relative_eq!(s, HBAR * k * k / (2.0 * cfg.ion.mass * m.frequencies[mode]), max_relative = 1e-9);
        }
    }

    #[test]
    fn reflection_and_seed_permutation_keep_frequencies() {
        let cfg = linear(6, 300e3);
        let seed = seed_positions(&cfg);
        let base = modes_at(&cfg, &relax(&cfg, &seed).unwrap()).unwrap();
        let mirrored: Vec<[f64; 3]> = seed.iter().rev().map(|p| [p[0], p[1], -p[2]]).collect();
        let other = modes_at(&cfg, &relax(&cfg, &mirrored).unwrap()).unwrap();
        for (a, b) in base.frequencies.iter().zip(&other.frequencies) {
            assert_relative_eq!(*a, *b, max_relative = 1e-9);
        }
    }

    #[test]
    fn zigzag_transition_reports_instability_first() {
        // Four ions buckle once ω_x/ω_z drops below about 2.
        let trap = TrapConfig::new(hz(1e6), Some(hz(1.5e6)), Some(hz(3e6)), 0.0).unwrap();
        let cfg = CrystalConfig::new(4, trap, IonSpecies::calcium40()).unwrap();
        let line: Vec<[f64; 3]> = seed_positions(&cfg).iter().map(|p| [0.0, 0.0, p[2]]).collect();
        let line = relax(&cfg, &line).unwrap();
        assert!(matches!(modes_at(&cfg, &line), Err(Error::StructuralInstability(_))));
        let m = normal_modes(&cfg).unwrap();
        assert!(m.planar);
        assert_eq!(m.count(ModeClass::InPlane), 8);
        assert_eq!(m.count(ModeClass::OutOfPlane), 4);
    }

    #[test]
    fn micromotion_factors() {
        let cfg = linear(5, 217e3);
        let p = equilibrium_positions(&cfg).unwrap();
        let r = micromotion_reduction(&p, &cfg.trap, &cfg.ion, 1.0).unwrap();
        assert!(r.factors.iter().all(|f| *f == 1.0));
        let trap = TrapConfig { q_z: 0.0013, ..cfg.trap };
        let r = micromotion_reduction(&p, &trap, &cfg.ion, 1.0).unwrap();
        assert_eq!(r.factors[2], 1.0);
        assert!(r.factors[0] < 1.0 && r.factors[0] > 0.0);
        let kappa = calibrate_micromotion_kappa(&p, &trap, &cfg.ion, 0.99).unwrap();
        let r = micromotion_reduction(&p, &trap, &cfg.ion, kappa).unwrap();
        assert_relative_eq!(r.spread_ratio(), 0.99, max_relative = 1e-12);
    }
}
