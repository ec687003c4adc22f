//! DIRECT (dividing rectangles) global minimization on a box, Jones
//! variant with ε-balanced selection of potentially optimal rectangles.

use serde::Serialize;

use crate::error::{domain, Error, Result};

pub const MAX_DIMENSION: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() || lower.len() > MAX_DIMENSION {
            return domain(format!("search box needs 1..={MAX_DIMENSION} matching bounds"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return domain("search box bounds must be finite with lower < upper");
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_physical(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter().enumerate().map(|(i, u)| self.lower[i] + u * (self.upper[i] - self.lower[i])).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub point: Vec<f64>,
    pub value: f64,
    /// Half-diagonal of the rectangle the point is the centre of, in unit
    /// coordinates (0 for polish steps).
    pub size: f64,
}

/// Append-only record of objective calls.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvaluationLog {
    pub entries: Vec<Evaluation>,
}

impl EvaluationLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Running minimum after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.entries
            .iter()
            .map(|e| {
                best = best.min(e.value);
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectOptions {
    pub budget: usize,
    /// Stop once the largest potentially optimal rectangle has a diagonal
    /// below this (unit coordinates).
    pub tol: f64,
    pub epsilon: f64,
    /// Coordinate-descent refinement after the DIRECT phase; it gets the
    /// last quarter of the evaluation budget.
    pub polish: bool,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self { budget: 1000, tol: 1e-4, epsilon: 1e-4, polish: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub log: EvaluationLog,
    /// Stopped on `tol` rather than on the budget.
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
struct Rect {
    center: Vec<f64>,
    /// Side of dimension i is 3^-levels[i].
    levels: Vec<u32>,
    value: f64,
}

impl Rect {
    fn half_diagonal(&self) -> f64 {
        let mut lv = self.levels.clone();
        lv.sort_unstable();
        0.5 * lv.iter().map(|l| 9f64.powi(-(*l as i32))).sum::<f64>().sqrt()
    }

    #[cfg(test)]
    fn volume(&self) -> f64 {
        self.levels.iter().map(|l| 3f64.powi(-(*l as i32))).product()
    }
}

struct Evaluator<'a, F> {
    f: F,
    bx: &'a SearchBox,
    log: EvaluationLog,
}

impl<F: FnMut(&[f64]) -> f64> Evaluator<'_, F> {
    fn eval(&mut self, unit: &[f64], size: f64) -> Result<f64> {
        let x = self.bx.to_physical(unit);
        let v = (self.f)(&x);
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective { point: x, value: v });
        }
        self.log.entries.push(Evaluation { point: x, value: v, size });
        Ok(v)
    }
}

/// Indices of the potentially optimal rectangles, at most one per size
/// (lowest value, then lowest index).
fn potentially_optimal(rects: &[Rect], epsilon: f64) -> Vec<usize> {
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for (i, r) in rects.iter().enumerate() {
        let d = r.half_diagonal();
        match groups.iter_mut().find(|(gd, _)| *gd == d) {
            Some(g) => {
                if r.value < rects[g.1].value {
                    g.1 = i;
                }
            }
            None => groups.push((d, i)),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let f_min = rects.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let target = f_min - epsilon * f_min.abs();
    let mut out = Vec::new();
    for (j, &(dj, ij)) in groups.iter().enumerate() {
        let fj = rects[ij].value;
        let mut k_low = 0.0f64;
        for &(di, ii) in &groups[..j] {
            k_low = k_low.max((fj - rects[ii].value) / (dj - di));
        }
        let mut k_high = f64::INFINITY;
        for &(di, ii) in &groups[j + 1..] {
            k_high = k_high.min((rects[ii].value - fj) / (di - dj));
        }
        if k_low > k_high {
            continue;
        }
        if k_high.is_finite() && fj - k_high * dj > target {
            continue;
        }
        out.push(ij);
    }
    out.sort_unstable();
    out
}

/// The rectangle-division phase; returns the final partition.
fn search<F: FnMut(&[f64]) -> f64>(ev: &mut Evaluator<'_, F>, d: usize, budget: usize, opts: &DirectOptions) -> Result<(Vec<Rect>, bool, usize)> {
    let first = Rect { center: vec![0.5; d], levels: vec![0; d], value: 0.0 };
    let v0 = ev.eval(&first.center, first.half_diagonal())?;
    let mut rects = vec![Rect { value: v0, ..first }];
    let mut converged = false;
    let mut iterations = 0;
    'outer: loop {
        let chosen = potentially_optimal(&rects, opts.epsilon);
        let largest = chosen.iter().map(|&i| 2.0 * rects[i].half_diagonal()).fold(0.0, f64::max);
        if largest < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        for &ri in &chosen {
            let r = rects[ri].clone();
            let min_level = *r.levels.iter().min().unwrap();
            let long: Vec<usize> = (0..d).filter(|&i| r.levels[i] == min_level).collect();
            if ev.log.len() + 2 * long.len() > budget {
                break 'outer;
            }
            let delta = 3f64.powi(-(min_level as i32)) / 3.0;
            let child_size = {
                let mut lv = r.levels.clone();
                lv[long[0]] += 1;
                Rect { levels: lv, ..r.clone() }.half_diagonal()
            };
            let mut probes = Vec::with_capacity(long.len());
            for &i in &long {
                let mut lo = r.center.clone();
                lo[i] -= delta;
                let mut hi = r.center.clone();
                hi[i] += delta;
                let fl = ev.eval(&lo, child_size)?;
                let fh = ev.eval(&hi, child_size)?;
                probes.push((fl.min(fh), i, lo, fl, hi, fh));
            }
            // Split the best direction first so it ends in the largest pieces.
            probes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut levels = r.levels.clone();
            for (_, i, lo, fl, hi, fh) in probes {
                levels[i] += 1;
                rects.push(Rect { center: lo, levels: levels.clone(), value: fl });
                rects.push(Rect { center: hi, levels: levels.clone(), value: fh });
            }
            rects[ri].levels = levels;
        }
        if ev.log.len() >= budget {
            break;
        }
    }
    Ok((rects, converged, iterations))
}

/// Minimize `f` over `bx`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, bx: &SearchBox, opts: &DirectOptions) -> Result<DirectResult> {
    let d = bx.dim();
    if opts.budget < 2 * d + 1 {
        return domain(format!("budget {} is below 2D + 1 = {}", opts.budget, 2 * d + 1));
    }
    if !(opts.tol > 0.0) || !(opts.epsilon >= 0.0) {
        return domain("tolerance must be positive and epsilon non-negative");
    }
    let mut ev = Evaluator { f, bx, log: EvaluationLog::default() };
    let search_budget = if opts.polish { (opts.budget - opts.budget / 4).max(2 * d + 1) } else { opts.budget };
    let (rects, converged, iterations) = search(&mut ev, d, search_budget, opts)?;
    let best = rects.iter().enumerate().min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0))).unwrap().1;
    let mut best_unit = best.center.clone();
    let mut best_value = best.value;
    if opts.polish {
        let mut step = 3f64.powi(-(*best.levels.iter().max().unwrap() as i32));
        while step > 1e-9 && ev.log.len() < opts.budget {
            let mut improved = false;
            for i in 0..d {
                for sign in [-1.0, 1.0] {
                    if ev.log.len() >= opts.budget {
                        break;
                    }
                    let mut trial = best_unit.clone();
                    trial[i] = (trial[i] + sign * step).clamp(0.0, 1.0);
                    if trial[i] == best_unit[i] {
                        continue;
                    }
                    let v = ev.eval(&trial, 0.0)?;
                    if v < best_value {
                        best_value = v;
                        best_unit = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }
    Ok(DirectResult { best_point: bx.to_physical(&best_unit), best_value, log: ev.log, converged, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(d: usize) -> SearchBox {
        SearchBox::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn convex_three_dimensional() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>();
        let r = minimize(f, &unit(3), &DirectOptions { budget: 500, ..Default::default() }).unwrap();
        assert!(r.best_point.iter().all(|v| (v - 0.3).abs() < 1e-2), "{:?}", r.best_point);
        assert!(r.log.len() <= 500);
    }

    #[test]
    fn kink_off_the_trisection_grid() {
        let r = minimize(|x: &[f64]| (x[0] - 1.0 / 3.0).abs(), &unit(1), &DirectOptions { budget: 100, ..Default::default() }).unwrap();
        assert!((r.best_point[0] - 1.0 / 3.0).abs() < 1e-2);
    }

    #[test]
    fn constant_objective() {
        let r = minimize(|_: &[f64]| 4.2, &unit(2), &DirectOptions { budget: 50, ..Default::default() }).unwrap();
        assert_eq!(r.best_value, 4.2);
    }

    #[test]
    fn non_finite_value_is_reported() {
        let err = minimize(|x: &[f64]| if x[0] > 0.6 { f64::NAN } else { x[0] }, &unit(1), &DirectOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective { .. }));
    }

    #[test]
    fn deterministic_and_polish_helps() {
        let bx = SearchBox::new(vec![-2.0, -1.0], vec![2.0, 3.0]).unwrap();
        let f = |x: &[f64]| (x[0] - 0.123).powi(2) + 3.0 * (x[1] - 1.777).powi(2);
        let opts = DirectOptions { budget: 200, ..Default::default() };
        let a = minimize(f, &bx, &opts).unwrap();
        let b = minimize(f, &bx, &opts).unwrap();
        assert_eq!(a, b);
        let p = minimize(f, &bx, &DirectOptions { polish: true, budget: 400, ..opts }).unwrap();
        assert!(p.best_value <= a.best_value);
        assert!(p.best_value < 1e-10);
    }

    #[test]
    fn partition_volume_preserved() {
        let bx = unit(3);
        let mut ev = Evaluator { f: |x: &[f64]| (x[0] - 0.7).powi(2) + (x[1] * x[2] - 0.1).abs(), bx: &bx, log: EvaluationLog::default() };
        let (rects, _, _) = search(&mut ev, 3, 400, &DirectOptions::default()).unwrap();
        let total: f64 = rects.iter().map(|r| r.volume()).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        assert_eq!(rects.len(), ev.log.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn points_inside_and_best_monotone(c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, budget in 20usize..150) {
            let bx = SearchBox::new(vec![-1.0, 0.0], vec![2.0, 0.5]).unwrap();
            let f = |x: &[f64]| (x[0] - c0).abs() + (x[1] - c1).powi(2);
            let r = minimize(f, &bx, &DirectOptions { budget, ..Default::default() }).unwrap();
            prop_assert!(r.log.entries.iter().all(|e| bx.contains(&e.point)));
            let best = r.log.best_so_far();
            prop_assert!(best.windows(2).all(|w| w[1] <= w[0]));
            let more = minimize(f, &bx, &DirectOptions { budget: 2 * budget, ..Default::default() }).unwrap();
            prop_assert!(more.best_value <= r.best_value);
        }
    }
}
