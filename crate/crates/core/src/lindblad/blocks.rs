//! Liouvillian restricted to the eight active blocks of ρ.
//!
//! Storage: block b occupies `x[b·n² .. (b+1)·n²]`, column-major.
//! Manifold A = {S−½, P+½} (driven by cir+), manifold B = {S+½, P−½}
//! (driven by cir−):
//!
//! | b | 0     | 1     | 2     | 3     | 4     | 5     | 6     | 7     |
//! |---|-------|-------|-------|-------|-------|-------|-------|-------|
//! |   | S−S− | S−P+ | P+S− | P+P+ | S+S+ | S+P− | P−S+ | P−P− |

use nalgebra::{DMatrix, SMatrix, SVector};
use num_complex::Complex64 as C64;

use super::operators::{coupling_blocks, MotionalOps};
use super::{Level, LindbladModel, QuantumState};
use crate::error::{domain, Result};

pub(crate) const NBLOCKS: usize = 8;

/// (row level, column level) of each stored block.
pub(crate) const BLOCK_LEVELS: [(Level, Level); NBLOCKS] = [
    (Level::SMinus, Level::SMinus),
    (Level::SMinus, Level::PPlus),
    (Level::PPlus, Level::SMinus),
    (Level::PPlus, Level::PPlus),
    (Level::SPlus, Level::SPlus),
    (Level::SPlus, Level::PMinus),
    (Level::PMinus, Level::SPlus),
    (Level::PMinus, Level::PMinus),
];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const MINUS_I: C64 = C64 { re: 0.0, im: -1.0 };
const PLUS_I: C64 = C64 { re: 0.0, im: 1.0 };

// Recycling weights: ground block of manifold A receives
// (2/3)σ(P+P+) + (1/3)π(P−P−); manifold B the mirror image.
// σ(Y) = 3/5·Y + 1/5·U(Y), π(Y) = 4/5·Y + 1/10·U(Y), U(Y) = D+YD− + D−YD+.
const SAME_DIRECT: f64 = 2.0 / 3.0 * 3.0 / 5.0;
const SAME_KICK: f64 = 2.0 / 3.0 * 1.0 / 5.0;
const CROSS_DIRECT: f64 = 1.0 / 3.0 * 4.0 / 5.0;
const CROSS_KICK: f64 = 1.0 / 3.0 * 1.0 / 10.0;

/// c += alpha·a·b for n×n column-major matrices.
#[inline]
fn mm_acc(c: &mut [C64], alpha: C64, a: &[C64], b: &[C64], n: usize) {
    for j in 0..n {
        let cj = &mut c[j * n..(j + 1) * n];
        for k in 0..n {
            let s = alpha * b[k + j * n];
            if s == ZERO {
                continue;
            }
            let ak = &a[k * n..(k + 1) * n];
            for (ci, ai) in cj.iter_mut().zip(ak) {
                *ci += ai * s;
            }
        }
    }
}

fn to_col_major(m: &DMatrix<C64>) -> Vec<C64> {
    m.as_slice().to_vec()
}

/// Active-block Liouvillian at one gradient phase.
#[derive(Debug, Clone)]
pub struct BlockGenerator {
    n: usize,
    linewidth: f64,
    kick_plus: Vec<C64>,
    kick_minus: Vec<C64>,
    kick_diag_plus: Vec<C64>,
    kick_diag_minus: Vec<C64>,
    ops: MotionalOps,
    rabi: f64,
    phase: f64,
    /// cir+ and cir− coupling blocks and their adjoints.
    drive: [Vec<C64>; 2],
    drive_adj: [Vec<C64>; 2],
    /// Elementwise coefficient of the diagonal (free evolution + decay)
    /// part per block type: SS, SP, PS, PP.
    free: [Vec<C64>; 4],
}

impl BlockGenerator {
    pub fn new(model: &LindbladModel, phase: f64) -> Self {
        let n = model.layout.n_max;
        let ops = model.motional_ops();
        let g = model.linewidth;
        let w = model.omega;
        let d = model.detuning;
        let mut free = [vec![ZERO; n * n], vec![ZERO; n * n], vec![ZERO; n * n], vec![ZERO; n * n]];
        for j in 0..n {
            for i in 0..n {
                let dw = w * (i as f64 - j as f64);
                let k = i + j * n;
                free[0][k] = C64::new(0.0, -dw);
                free[1][k] = C64::new(-0.5 * g, -(dw + d));
                free[2][k] = C64::new(-0.5 * g, -(dw - d));
                free[3][k] = C64::new(-g, -dw);
            }
        }
        let kick_diag_plus = (0..n).map(|i| ops.kick_plus[(i, i)]).collect();
        let kick_diag_minus = (0..n).map(|i| ops.kick_minus[(i, i)]).collect();
        let mut out = Self {
            n,
            linewidth: g,
            kick_plus: to_col_major(&ops.kick_plus),
            kick_minus: to_col_major(&ops.kick_minus),
            kick_diag_plus,
            kick_diag_minus,
            ops,
            rabi: model.rabi,
            phase: f64::NAN,
            drive: [Vec::new(), Vec::new()],
            drive_adj: [Vec::new(), Vec::new()],
            free,
        };
        out.set_phase(phase);
        out
    }

    pub fn n_max(&self) -> usize {
        self.n
    }

    /// Length of the stored state vector.
    pub fn len(&self) -> usize {
        NBLOCKS * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn set_phase(&mut self, phase: f64) {
        if phase == self.phase {
            return;
        }
        let (gp, gm) = coupling_blocks(&self.ops, self.rabi, phase);
        self.drive_adj = [to_col_major(&gp.adjoint()), to_col_major(&gm.adjoint())];
        self.drive = [to_col_major(&gp), to_col_major(&gm)];
        self.phase = phase;
    }

    /// y = L(x). `scratch` must hold at least 2·n² elements.
    pub fn apply(&self, x: &[C64], y: &mut [C64], scratch: &mut [C64]) {
        let n = self.n;
        let nn = n * n;
        assert_eq!(x.len(), NBLOCKS * nn);
        assert_eq!(y.len(), NBLOCKS * nn);
        let blk = |b: usize| &x[b * nn..(b + 1) * nn];

        // Diagonal part.
        for b in 0..NBLOCKS {
            let f = &self.free[b % 4];
            let (xb, yb) = (&x[b * nn..(b + 1) * nn], &mut y[b * nn..(b + 1) * nn]);
            for k in 0..nn {
                yb[k] = f[k] * xb[k];
            }
        }

        // Coherent drive within each manifold.
        for (m, base) in [(0usize, 0usize), (1, 4)] {
            let g = &self.drive[m];
            let gd = &self.drive_adj[m];
            let (x0, x1, x2, x3) = (blk(base), blk(base + 1), blk(base + 2), blk(base + 3));
            let (y0, rest) = y[base * nn..(base + 4) * nn].split_at_mut(nn);
            let (y1, rest) = rest.split_at_mut(nn);
            let (y2, y3) = rest.split_at_mut(nn);
            mm_acc(y0, MINUS_I, g, x2, n);
            mm_acc(y0, PLUS_I, x1, gd, n);
            mm_acc(y1, MINUS_I, g, x3, n);
            mm_acc(y1, PLUS_I, x0, g, n);
            mm_acc(y2, MINUS_I, gd, x0, n);
            mm_acc(y2, PLUS_I, x3, gd, n);
            mm_acc(y3, MINUS_I, gd, x1, n);
            mm_acc(y3, PLUS_I, x2, g, n);
        }

        // Spontaneous emission feeding the ground blocks.
        let gam = self.linewidth;
        let (kick, rest) = scratch.split_at_mut(nn);
        let tmp = &mut rest[..nn];
        for (src, same, other) in [(3usize, 0usize, 4usize), (7, 4, 0)] {
            kick.iter_mut().for_each(|v| *v = ZERO);
            tmp.iter_mut().for_each(|v| *v = ZERO);
            mm_acc(tmp, C64::new(1.0, 0.0), &self.kick_plus, blk(src), n);
            mm_acc(kick, C64::new(1.0, 0.0), tmp, &self.kick_minus, n);
            tmp.iter_mut().for_each(|v| *v = ZERO);
            mm_acc(tmp, C64::new(1.0, 0.0), &self.kick_minus, blk(src), n);
            mm_acc(kick, C64::new(1.0, 0.0), tmp, &self.kick_plus, n);
            let xs = blk(src);
            for k in 0..nn {
                y[same * nn + k] += gam * (SAME_DIRECT * xs[k] + SAME_KICK * kick[k]);
                y[other * nn + k] += gam * (CROSS_DIRECT * xs[k] + CROSS_KICK * kick[k]);
            }
        }
    }

    /// Local (Fock-diagonal) approximation of L: an 8×8 matrix per
    /// matrix-element pair (i, j).
    fn local_matrix(&self, i: usize, j: usize) -> SMatrix<C64, 8, 8> {
        let n = self.n;
        let k = i + j * n;
        let mut m = SMatrix::<C64, 8, 8>::zeros();
        for b in 0..NBLOCKS {
            m[(b, b)] = self.free[b % 4][k];
        }
        for (mi, base) in [(0usize, 0usize), (1, 4)] {
            let gi = self.drive[mi][i + i * n];
            let gj = self.drive[mi][j + j * n];
            let gdi = self.drive_adj[mi][i + i * n];
            let gdj = self.drive_adj[mi][j + j * n];
            // y0 = −i(g x2 − x1 g†), y1 = −i(g x3 − x0 g), ...
            m[(base, base + 2)] += MINUS_I * gi;
            m[(base, base + 1)] += PLUS_I * gdj;
            m[(base + 1, base + 3)] += MINUS_I * gi;
            m[(base + 1, base)] += PLUS_I * gj;
            m[(base + 2, base)] += MINUS_I * gdi;
            m[(base + 2, base + 3)] += PLUS_I * gdj;
            m[(base + 3, base + 1)] += MINUS_I * gdi;
            m[(base + 3, base + 2)] += PLUS_I * gj;
        }
        let u = self.kick_diag_plus[i] * self.kick_diag_minus[j] + self.kick_diag_minus[i] * self.kick_diag_plus[j];
        let g = self.linewidth;
        let same = g * (SAME_DIRECT + SAME_KICK * u);
        let cross = g * (CROSS_DIRECT + CROSS_KICK * u);
        m[(0, 3)] += same;
        m[(4, 3)] += cross;
        m[(4, 7)] += same;
        m[(0, 7)] += cross;
        m
    }

    /// Inverse of (I − scale·L_local) for every (i, j).
    pub fn local_preconditioner(&self, scale: f64) -> Result<LocalPreconditioner> {
        let n = self.n;
        let mut inv = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let a = SMatrix::<C64, 8, 8>::identity() - self.local_matrix(i, j) * C64::new(scale, 0.0);
                match a.lu().try_inverse() {
                    Some(m) => inv.push(m),
                    None => return Err(crate::error::Error::Integrator(format!("singular local block at ({i},{j})"))),
                }
            }
        }
        Ok(LocalPreconditioner { n, inv })
    }

    /// Pack the active blocks of a dense state. Fails if the state carries
    /// coherence between the two manifolds or the wrong dimension.
    pub fn pack(&self, state: &QuantumState) -> Result<Vec<C64>> {
        let n = self.n;
        if state.layout.n_max != n {
            return domain(format!("state cutoff {} does not match model cutoff {n}", state.layout.n_max));
        }
        let mut out = vec![ZERO; self.len()];
        let mut active = [[false; 4]; 4];
        for (b, (r, c)) in BLOCK_LEVELS.iter().enumerate() {
            active[r.index()][c.index()] = true;
            let (r0, c0) = (r.index() * n, c.index() * n);
            for j in 0..n {
                for i in 0..n {
                    out[b * n * n + i + j * n] = state.rho[(r0 + i, c0 + j)];
                }
            }
        }
        let scale = state.rho.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for r in Level::ALL {
            for c in Level::ALL {
                if active[r.index()][c.index()] {
                    continue;
                }
                let view = state.rho.view((r.index() * n, c.index() * n), (n, n));
                if view.iter().any(|v| v.norm() > 1e-12 * scale) {
                    return domain(format!(
                        "initial state has coherence between {r:?} and {c:?}; only states without \
                         coherence between the two drive manifolds are supported"
                    ));
                }
            }
        }
        Ok(out)
    }

    /// Expand packed blocks into a dense state.
    pub fn unpack(&self, x: &[C64], layout: super::HilbertLayout) -> QuantumState {
        let n = self.n;
        let d = 4 * n;
        let mut rho = DMatrix::zeros(d, d);
        for (b, (r, c)) in BLOCK_LEVELS.iter().enumerate() {
            let (r0, c0) = (r.index() * n, c.index() * n);
            for j in 0..n {
                for i in 0..n {
                    rho[(r0 + i, c0 + j)] = x[b * n * n + i + j * n];
                }
            }
        }
        QuantumState { layout, rho }
    }
}

/// Exact inverse of the Fock-diagonal part of (I − scale·L).
#[derive(Debug, Clone)]
pub struct LocalPreconditioner {
    n: usize,
    inv: Vec<SMatrix<C64, 8, 8>>,
}

impl LocalPreconditioner {
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let nn = self.n * self.n;
        for k in 0..nn {
            let v = SVector::<C64, 8>::from_fn(|b, _| x[b * nn + k]);
            let r = self.inv[k] * v;
            for b in 0..NBLOCKS {
                y[b * nn + k] = r[b];
            }
        }
    }
}

/// Observables straight from the packed blocks.
pub(crate) mod observe {
    use super::*;

    pub fn trace(x: &[C64], n: usize) -> f64 {
        let nn = n * n;
        [0usize, 3, 4, 7].iter().map(|b| (0..n).map(|i| x[b * nn + i + i * n].re).sum::<f64>()).sum()
    }

    /// (S−, S+, P−, P+) populations.
    pub fn populations(x: &[C64], n: usize) -> [f64; 4] {
        let nn = n * n;
        let p = |b: usize| (0..n).map(|i| x[b * nn + i + i * n].re).sum::<f64>();
        [p(0), p(4), p(7), p(3)]
    }

    pub fn fock_populations(x: &[C64], n: usize) -> Vec<f64> {
        let nn = n * n;
        (0..n).map(|i| [0usize, 3, 4, 7].iter().map(|b| x[b * nn + i + i * n].re).sum()).collect()
    }

    /// max |ρ − ρ†| over the stored blocks.
    pub fn hermiticity_error(x: &[C64], n: usize) -> f64 {
        let nn = n * n;
        let mut err: f64 = 0.0;
        for b in [0usize, 3, 4, 7] {
            for j in 0..n {
                for i in 0..n {
                    err = err.max((x[b * nn + i + j * n] - x[b * nn + j + i * n].conj()).norm());
                }
            }
        }
        for b in [1usize, 5] {
            for j in 0..n {
                for i in 0..n {
                    err = err.max((x[b * nn + i + j * n] - x[(b + 1) * nn + j + i * n].conj()).norm());
                }
            }
        }
        err
    }

    /// Smallest eigenvalue over the two 2n×2n manifold blocks.
    pub fn min_eigenvalue(x: &[C64], n: usize) -> f64 {
        let nn = n * n;
        let mut lo = f64::INFINITY;
        for base in [0usize, 4] {
            let m = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
                let b = base + 2 * (i / n) + (j / n);
                let (ii, jj) = (i % n, j % n);
                let v = x[b * nn + ii + jj * n];
                let w = {
                    let bt = base + 2 * (j / n) + (i / n);
                    x[bt * nn + jj + ii * n].conj()
                };
                (v + w) * 0.5
            });
            let ev = m.symmetric_eigenvalues();
            lo = lo.min(ev.iter().cloned().fold(f64::INFINITY, f64::min));
        }
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::HilbertLayout;
    use crate::physics::{hz, GradientConfig, IonSpecies, TrapConfig};

    fn model(n: usize, eta_scale: f64) -> LindbladModel {
        let ion = IonSpecies::calcium40();
        let ion = ion.with_wavelength(ion.wavelength * eta_scale).unwrap();
        let trap = TrapConfig::axial(hz(1088e3)).unwrap();
        let grad = GradientConfig::for_xi(&ion, hz(210e6), 0.9, trap.omega_z, 0.0).unwrap();
        LindbladModel::new(&ion, &trap, &grad, HilbertLayout::new(n).unwrap()).unwrap()
    }

    fn random_active_state(m: &LindbladModel, seed: u64) -> QuantumState {
        let n = m.layout.n_max;
        let d = 4 * n;
        let mut s = seed;
        let mut rnd = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::<C64>::from_fn(d, d, |_, _| C64::new(rnd(), rnd()));
        let mut rho = &a * a.adjoint();
        // Remove inter-manifold coherence.
        let manifold = |i: usize| match i / n {
            0 | 3 => 0,
            _ => 1,
        };
        for j in 0..d {
            for i in 0..d {
                if manifold(i) != manifold(j) {
                    rho[(i, j)] = ZERO;
                }
            }
        }
        let tr = rho.trace();
        QuantumState::new(m.layout, rho / tr).unwrap()
    }

    #[test]
    fn block_action_matches_dense_rhs() {
        for (eta_scale, phi) in [(1.0, 0.0), (1.0, 0.37), (0.1, 1.1)] {
            let m = model(6, eta_scale);
            let st = random_active_state(&m, 7);
            let gen = BlockGenerator::new(&m, phi);
            let x = gen.pack(&st).unwrap();
            let mut y = vec![ZERO; x.len()];
            let mut scratch = vec![ZERO; 2 * 36];
            gen.apply(&x, &mut y, &mut scratch);
            let dense = m.rhs_dense(phi, &st);
            let scale = dense.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let from_blocks = gen.unpack(&y, m.layout).rho;
            let err = (&from_blocks - &dense).iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12 * scale, "eta_scale={eta_scale} phi={phi}: {err} vs {scale}");
        }
    }

    #[test]
    fn pack_rejects_inter_manifold_coherence() {
        let m = model(3, 1.0);
        let gen = BlockGenerator::new(&m, 0.0);
        let mut st = QuantumState::pure(m.layout, Level::SPlus, 0).unwrap();
        st.rho[(0, 3)] = C64::new(0.1, 0.0);
        assert!(gen.pack(&st).is_err());
    }

    #[test]
    fn block_observables_match_dense() {
        let m = model(5, 1.0);
        let st = random_active_state(&m, 3);
        let gen = BlockGenerator::new(&m, 0.0);
        let x = gen.pack(&st).unwrap();
        assert!((observe::trace(&x, 5) - st.trace().re).abs() < 1e-14);
        let nm: f64 = observe::fock_populations(&x, 5).iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        assert!((nm - crate::lindblad::mean_phonon(&st)).abs() < 1e-13);
        assert!((observe::min_eigenvalue(&x, 5) - st.min_eigenvalue()).abs() < 1e-12);
        let pops = observe::populations(&x, 5);
        let dense = st.level_populations();
        for (k, l) in Level::ALL.iter().enumerate() {
            let _ = k;
            let idx = match l {
                Level::SMinus => 0,
                Level::SPlus => 1,
                Level::PMinus => 2,
                Level::PPlus => 3,
            };
            assert!((pops[idx] - dense[l.index()]).abs() < 1e-14);
        }
    }

    #[test]
    fn local_preconditioner_is_exact_without_recoil() {
        // η ≈ 1e-8: the kicks are the identity and L is Fock-diagonal.
        let m = model(4, 1e7);
        let gen = BlockGenerator::new(&m, 0.2);
        let c = 1e-7;
        let pre = gen.local_preconditioner(c).unwrap();
        let x: Vec<C64> = (0..gen.len()).map(|k| C64::new(k as f64, 1.0)).collect();
        let mut px = vec![ZERO; x.len()];
        pre.apply(&x, &mut px);
        let mut lpx = vec![ZERO; x.len()];
        let mut scratch = vec![ZERO; 32];
        gen.apply(&px, &mut lpx, &mut scratch);
        let err = px.iter().zip(&lpx).zip(&x).map(|((a, b), v)| (a - b * c - v).norm()).fold(0.0, f64::max);
        let scale = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-5 * scale, "{err}");
    }
}
