//! Adaptive L-stable SDIRK time stepping of the active-block master
//! equation.
//!
//! The optical coherences rotate at the detuning (hundreds of MHz) while
//! the motional dynamics of interest is slower by five to seven orders of
//! magnitude, so explicit schemes are confined to nanosecond steps. The
//! five-stage, order-4 stiffly accurate SDIRK of Hairer & Wanner (γ = 1/4)
//! with an embedded order-3 solution is used instead; each stage solves
//! (I − hγL)Y = r by right-preconditioned restarted GMRES.

use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::Serialize;

use super::blocks::{observe, BlockGenerator, LocalPreconditioner};
use super::{LindbladModel, PhaseSchedule, QuantumState};
use crate::error::{domain, Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

const GAMMA: f64 = 0.25;
const STAGES: usize = 5;
const C: [f64; STAGES] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
/// Embedded third-order weights.
const B_HAT: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

/// Step-control and diagnostic settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Steps below this size (s) abort the run.
    pub min_step: f64,
    /// Optional first step (s); default 1e-2 over the fastest rate.
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    /// Take steps of exactly this size (s) without error control. Steps
    /// much longer than the trap period damp the weakly damped oscillation
    /// of the mean position while propagating the slow modes to 4th order.
    pub fixed_step: Option<f64>,
    /// Linear-solve residual as a fraction of `atol` (RMS).
    pub solver_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    /// |Tr ρ − 1| above this aborts.
    pub trace_tolerance: f64,
    /// Population threshold of the two highest Fock states.
    pub leak_threshold: f64,
    /// Compute the minimum eigenvalue at every sample.
    pub track_min_eigenvalue: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            min_step: 1e-12,
            initial_step: None,
            max_step: None,
            max_steps: 2_000_000,
            fixed_step: None,
            solver_tol: 1e-2,
            gmres_restart: 40,
            gmres_max_iter: 2000,
            trace_tolerance: 1e-6,
            leak_threshold: 1e-3,
            track_min_eigenvalue: true,
        }
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub n_mean: f64,
    /// S−½, S+½, P−½, P+½.
    pub populations: [f64; 4],
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Population of the two highest retained Fock states.
    pub edge_population: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub linear_iterations: usize,
    pub linear_solves: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Set when the edge population exceeded the leak threshold.
    pub leak_flag: bool,
    pub final_state: QuantumState,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn n_mean(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.n_mean).collect()
    }

    pub fn max_trace_error(&self) -> f64 {
        self.samples.iter().map(|s| s.trace_error).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.samples.iter().map(|s| s.hermiticity_error).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.samples.iter().map(|s| s.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }
}

/// Restarted GMRES with right preconditioning and Givens rotations.
struct Gmres {
    basis: Vec<Vec<C64>>,
    hess: Vec<Vec<C64>>,
    cs: Vec<f64>,
    sn: Vec<C64>,
    rhs: Vec<C64>,
    work: Vec<C64>,
    work2: Vec<C64>,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

impl Gmres {
    fn new(len: usize, restart: usize) -> Self {
        Self {
            basis: (0..=restart).map(|_| vec![ZERO; len]).collect(),
            hess: (0..restart).map(|_| vec![ZERO; restart + 1]).collect(),
            cs: vec![0.0; restart],
            sn: vec![ZERO; restart],
            rhs: vec![ZERO; restart + 1],
            work: vec![ZERO; len],
            work2: vec![ZERO; len],
        }
    }

    /// Solve A x = b to ‖b − Ax‖ ≤ tol; x holds the initial guess.
    fn solve(
        &mut self,
        op: &mut dyn FnMut(&[C64], &mut [C64]),
        pre: &dyn Fn(&[C64], &mut [C64]),
        b: &[C64],
        x: &mut [C64],
        tol: f64,
        max_iter: usize,
    ) -> Result<usize> {
        let restart = self.cs.len();
        let mut total = 0;
        loop {
            op(x, &mut self.work);
            for ((r, bi), ax) in self.basis[0].iter_mut().zip(b).zip(&self.work) {
                *r = bi - ax;
            }
            let beta = norm(&self.basis[0]);
            if beta <= tol {
                return Ok(total);
            }
            if total >= max_iter {
                return Err(Error::Integrator(format!("GMRES did not converge in {max_iter} iterations (residual {beta:.3e}, target {tol:.3e})")));
            }
            let inv = 1.0 / beta;
            self.basis[0].iter_mut().for_each(|v| *v *= inv);
            self.rhs.iter_mut().for_each(|v| *v = ZERO);
            self.rhs[0] = C64::new(beta, 0.0);
            let mut k_used = 0;
            for k in 0..restart {
                total += 1;
                pre(&self.basis[k], &mut self.work2);
                op(&self.work2, &mut self.work);
                // Modified Gram-Schmidt.
                let col = &mut self.hess[k];
                for i in 0..=k {
                    let h = dot(&self.basis[i], &self.work);
                    col[i] = h;
                    for (w, v) in self.work.iter_mut().zip(&self.basis[i]) {
                        *w -= h * v;
                    }
                }
                let hn = norm(&self.work);
                col[k + 1] = C64::new(hn, 0.0);
                if hn > 0.0 {
                    let inv = 1.0 / hn;
                    for (v, w) in self.basis[k + 1].iter_mut().zip(&self.work) {
                        *v = w * inv;
                    }
                }
                for i in 0..k {
                    let (c, s) = (self.cs[i], self.sn[i]);
                    let (a, bb) = (col[i], col[i + 1]);
                    col[i] = a * c + s.conj() * bb;
                    col[i + 1] = -s * a + bb * c;
                }
                let (a, bb) = (col[k], col[k + 1]);
                let r = (a.norm_sqr() + bb.norm_sqr()).sqrt();
                let (c, s) = if a.norm() == 0.0 {
                    (0.0, C64::new(1.0, 0.0))
                } else {
                    let c = a.norm() / r;
                    (c, (a / a.norm()) * bb.conj() / r)
                };
                let s = s.conj();
                self.cs[k] = c;
                self.sn[k] = s;
                col[k] = a * c + s.conj() * bb;
                col[k + 1] = ZERO;
                let g = self.rhs[k];
                self.rhs[k] = g * c;
                self.rhs[k + 1] = -s * g;
                k_used = k + 1;
                if self.rhs[k + 1].norm() <= tol || hn == 0.0 || total >= max_iter {
                    break;
                }
            }
            // Back substitution.
            let mut y = vec![ZERO; k_used];
            for i in (0..k_used).rev() {
                let mut s = self.rhs[i];
                for j in i + 1..k_used {
                    s -= self.hess[j][i] * y[j];
                }
                y[i] = s / self.hess[i][i];
            }
            self.work.iter_mut().for_each(|v| *v = ZERO);
            for (j, yj) in y.iter().enumerate() {
                for (w, v) in self.work.iter_mut().zip(&self.basis[j]) {
                    *w += yj * v;
                }
            }
            pre(&self.work, &mut self.work2);
            for (xi, d) in x.iter_mut().zip(&self.work2) {
                *xi += d;
            }
        }
    }
}

struct Stepper<'a> {
    generator: BlockGenerator,
    schedule: &'a PhaseSchedule,
    opts: &'a EvolveOptions,
    gmres: Gmres,
    scratch: Vec<C64>,
    stats: SolverStats,
    solve_tol: f64,
    precond: Option<(f64, f64, LocalPreconditioner)>,
}

impl Stepper<'_> {
    fn prepare(&mut self, t: f64, scale: f64) -> Result<()> {
        let phi = self.schedule.at(t);
        self.generator.set_phase(phi);
        let fresh = matches!(&self.precond, Some((s, p, _)) if *s == scale && *p == phi);
        if !fresh {
            let pre = self.generator.local_preconditioner(scale)?;
            self.precond = Some((scale, phi, pre));
        }
        Ok(())
    }

    /// Solve (I − scale·L)y = r with y holding the initial guess.
    fn solve(&mut self, scale: f64, r: &[C64], y: &mut [C64]) -> Result<()> {
        let gen = &self.generator;
        let scratch = &mut self.scratch;
        let pre = &self.precond.as_ref().expect("prepared").2;
        let mut op = |x: &[C64], out: &mut [C64]| {
            gen.apply(x, out, scratch);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = xi - *o * scale;
            }
        };
        let apply_pre = |x: &[C64], out: &mut [C64]| pre.apply(x, out);
        let iters = self.gmres.solve(&mut op, &apply_pre, r, y, self.solve_tol, self.opts.gmres_max_iter)?;
        self.stats.linear_iterations += iters;
        self.stats.linear_solves += 1;
        Ok(())
    }
}

fn error_norm(err: &[C64], y0: &[C64], y1: &[C64], rtol: f64, atol: f64) -> f64 {
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.norm().max(b.norm());
            (e.norm() / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

fn sample(t: f64, x: &[C64], n: usize, track_eig: bool) -> TrajectorySample {
    let fock = observe::fock_populations(x, n);
    TrajectorySample {
        t,
        n_mean: fock.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        populations: observe::populations(x, n),
        trace_error: (observe::trace(x, n) - 1.0).abs(),
        hermiticity_error: observe::hermiticity_error(x, n),
        min_eigenvalue: if track_eig { observe::min_eigenvalue(x, n) } else { f64::NAN },
        edge_population: fock[n - 2] + fock[n - 1],
    }
}

/// Integrate the master equation from `rho0` for `duration` seconds,
/// recording every `sample_dt`.
pub fn evolve(
    model: &LindbladModel,
    rho0: &QuantumState,
    duration: f64,
    schedule: &PhaseSchedule,
    sample_dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if !(duration > 0.0) || !(sample_dt > 0.0) {
        return domain("duration and sample interval must be positive");
    }
    let started = Instant::now();
    let n = model.layout.n_max;
    let generator = BlockGenerator::new(model, schedule.at(0.0));
    let mut y = generator.pack(rho0)?;
    let len = y.len();
    let tr0 = observe::trace(&y, n);
    if (tr0 - 1.0).abs() > 1e-8 {
        return domain(format!("initial state has trace {tr0}"));
    }

    let mut st = Stepper {
        generator,
        schedule,
        opts,
        gmres: Gmres::new(len, opts.gmres_restart),
        scratch: vec![ZERO; 2 * n * n],
        stats: SolverStats::default(),
        solve_tol: opts.solver_tol * opts.atol * (len as f64).sqrt(),
        precond: None,
    };

    let fastest = model.detuning.abs() + model.linewidth + model.rabi + n as f64 * model.omega;
    let mut h = opts.initial_step.unwrap_or(1e-2 / fastest);
    let max_step = opts.max_step.unwrap_or(duration);

    let n_samples = (duration / sample_dt).round() as usize;
    let sample_time = |k: usize| if k == n_samples { duration } else { k as f64 * sample_dt };
    let mut samples = Vec::with_capacity(n_samples + 1);
    samples.push(sample(0.0, &y, n, opts.track_min_eigenvalue));
    let mut leak_flag = samples[0].edge_population > opts.leak_threshold;
    let mut next = 1;

    let mut k_stage: Vec<Vec<C64>> = (0..STAGES).map(|_| vec![ZERO; len]).collect();
    let mut rhs = vec![ZERO; len];
    let mut stage_y = vec![ZERO; len];
    let mut err = vec![ZERO; len];
    let mut err_f = vec![ZERO; len];
    let mut t = 0.0;
    let mut steps = 0usize;

    while next <= n_samples {
        let target = sample_time(next);
        if let Some(hf) = opts.fixed_step {
            h = hf;
        }
        let mut h_try = h.min(max_step);
        // Snap onto the sample instead of leaving a round-off sliver.
        let landing = h_try >= (target - t) * (1.0 - 1e-9);
        if landing {
            h_try = target - t;
        }
        let scale = h_try * GAMMA;

        for i in 0..STAGES {
            rhs.copy_from_slice(&y);
            for (j, kj) in k_stage.iter().enumerate().take(i) {
                let a = A[i][j] * h_try;
                if a != 0.0 {
                    for (r, kv) in rhs.iter_mut().zip(kj) {
                        *r += kv * a;
                    }
                }
            }
            st.prepare(t + C[i] * h_try, scale)?;
            // Guess: explicit Euler from the previous stage derivative.
            if i == 0 {
                stage_y.copy_from_slice(&rhs);
            } else {
                for ((s, r), kp) in stage_y.iter_mut().zip(&rhs).zip(&k_stage[i - 1]) {
                    *s = r + kp * scale;
                }
            }
            st.solve(scale, &rhs, &mut stage_y)?;
            let inv = 1.0 / scale;
            for ((kv, s), r) in k_stage[i].iter_mut().zip(&stage_y).zip(&rhs) {
                *kv = (s - r) * inv;
            }
        }
        // Stiffly accurate: the new state is the last stage value.
        err.iter_mut().for_each(|e| *e = ZERO);
        for (i, ki) in k_stage.iter().enumerate() {
            let w = (A[STAGES - 1][i] - B_HAT[i]) * h_try;
            for (e, kv) in err.iter_mut().zip(ki) {
                *e += kv * w;
            }
        }
        // Filter the estimate through (I − hγL)⁻¹ so stiff components do
        // not dominate it.
        let e = if opts.fixed_step.is_some() {
            0.0
        } else {
            err_f.copy_from_slice(&err);
            st.solve(scale, &err, &mut err_f)?;
            error_norm(&err_f, &y, &stage_y, opts.rtol, opts.atol)
        };
        if !e.is_finite() {
            return Err(Error::Integrator(format!("non-finite error estimate at t = {t:.6e} s")));
        }
        let factor = (0.9 * e.powf(-0.25)).clamp(0.2, 5.0);
        if e <= 1.0 {
            y.copy_from_slice(&stage_y);
            t = if landing { target } else { t + h_try };
            st.stats.accepted += 1;
            // Keep the controller's proposal independent of the landing cut.
            if !landing || h_try >= h {
                h = h_try * factor;
            }
            if landing {
                let s = sample(t, &y, n, opts.track_min_eigenvalue);
                if s.trace_error > opts.trace_tolerance {
                    return Err(Error::Integrator(format!("trace drifted by {:.3e} at t = {t:.6e} s", s.trace_error)));
                }
                leak_flag |= s.edge_population > opts.leak_threshold;
                samples.push(s);
                next += 1;
            }
        } else {
            st.stats.rejected += 1;
            h = h_try * factor.min(1.0);
        }
        if h < opts.min_step {
            return Err(Error::Integrator(format!("step size fell below {:.1e} s at t = {t:.6e} s", opts.min_step)));
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integrator(format!("exceeded {} steps at t = {t:.6e} s", opts.max_steps)));
        }
    }

    let final_state = st.generator.unpack(&y, model.layout);
    st.stats.wall_seconds = started.elapsed().as_secs_f64();
    Ok(Trajectory { samples, leak_flag, final_state, stats: st.stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sdirk_order_conditions() {
        let b = A[STAGES - 1];
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        for i in 0..STAGES {
            assert!((sum(&A[i]) - C[i]).abs() < 1e-14, "row {i}");
        }
        assert!((sum(&b) - 1.0).abs() < 1e-14);
        let bc: f64 = (0..STAGES).map(|i| b[i] * C[i]).sum();
        assert!((bc - 0.5).abs() < 1e-13);
        let bc2: f64 = (0..STAGES).map(|i| b[i] * C[i] * C[i]).sum();
        assert!((bc2 - 1.0 / 3.0).abs() < 1e-13);
        let bac: f64 = (0..STAGES).map(|i| b[i] * (0..STAGES).map(|j| A[i][j] * C[j]).sum::<f64>()).sum();
        assert!((bac - 1.0 / 6.0).abs() < 1e-13);
        let bc3: f64 = (0..STAGES).map(|i| b[i] * C[i].powi(3)).sum();
        assert!((bc3 - 0.25).abs() < 1e-13);
        // Embedded solution is third order.
        assert!((sum(&B_HAT) - 1.0).abs() < 1e-14);
        let bh_c: f64 = (0..STAGES).map(|i| B_HAT[i] * C[i]).sum();
        assert!((bh_c - 0.5).abs() < 1e-13);
        let bh_c2: f64 = (0..STAGES).map(|i| B_HAT[i] * C[i] * C[i]).sum();
        assert!((bh_c2 - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn gmres_solves_small_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let mut op = |x: &[C64], y: &mut [C64]| {
            for i in 0..3 {
                y[i] = (0..3).map(|j| x[j] * a[i][j]).sum();
            }
        };
        let pre = |x: &[C64], y: &mut [C64]| y.copy_from_slice(x);
        let b = [C64::new(1.0, 2.0), C64::new(0.0, -1.0), C64::new(3.0, 0.0)];
        let mut x = [ZERO; 3];
        let mut g = Gmres::new(3, 2);
        g.solve(&mut op, &pre, &b, &mut x, 1e-13, 100).unwrap();
        let mut ax = [ZERO; 3];
        op(&x, &mut ax);
        for i in 0..3 {
            assert!((ax[i] - b[i]).norm() < 1e-12);
        }
    }
}
