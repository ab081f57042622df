//! Simulation-based validation of certified regions with fixed-step RK4.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::levelset::{Region, RoaEstimate};
use crate::polyalg::PolyMap;
use crate::sampling::Halton;

/// Norm at which a trajectory is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// Relative slack on `V` increases per step along trajectories.
pub const DECREASE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub conv_radius: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { dt: 1e-3, horizon: 50.0, conv_radius: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Converged,
    Horizon,
    LeftDomain,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub converged: bool,
    pub exit_reason: ExitReason,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Rk4<'a> {
    f: &'a PolyMap,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(f: &'a PolyMap) -> Self {
        let n = f.dim();
        Self { f, k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]], tmp: vec![0.0; n] }
    }

    fn step(&mut self, x: &mut [f64], dt: f64) {
        let n = x.len();
        self.f.eval_into(x, &mut self.k[0]);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k[0][i];
        }
        self.f.eval_into(&self.tmp, &mut self.k[1]);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k[1][i];
        }
        self.f.eval_into(&self.tmp, &mut self.k[2]);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k[2][i];
        }
        self.f.eval_into(&self.tmp, &mut self.k[3]);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
    }
}

/// Runs RK4 from `x0`, calling `observe(step, t, x)` after every step; the
/// observer may stop the run by returning `Some(reason)`.
fn run(
    f: &PolyMap,
    x0: &[f64],
    opts: &SimOptions,
    mut observe: impl FnMut(f64, &[f64]) -> Option<ExitReason>,
) -> (Vec<f64>, ExitReason) {
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(f);
    let steps = (opts.horizon / opts.dt).round() as usize;
    if norm(&x) <= opts.conv_radius {
        return (x, ExitReason::Converged);
    }
    for i in 1..=steps {
        rk.step(&mut x, opts.dt);
        let t = i as f64 * opts.dt;
        let r = norm(&x);
        if !r.is_finite() || r >= DIVERGENCE_NORM {
            return (x, ExitReason::Diverged);
        }
        if let Some(reason) = observe(t, &x) {
            return (x, reason);
        }
        if r <= opts.conv_radius {
            return (x, ExitReason::Converged);
        }
    }
    (x, ExitReason::Horizon)
}

/// Classic fixed-step RK4, stopping on convergence or divergence.
pub fn integrate(f: &PolyMap, x0: &[f64], opts: &SimOptions) -> Trajectory {
    assert!(opts.dt > 0.0 && opts.horizon > opts.dt, "need dt > 0 and horizon > dt");
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let (last, exit_reason) = run(f, x0, opts, |t, x| {
        times.push(t);
        states.push(x.to_vec());
        None
    });
    if exit_reason == ExitReason::Diverged {
        times.push(times.last().unwrap() + opts.dt);
        states.push(last);
    }
    Trajectory { times, states, converged: exit_reason == ExitReason::Converged, exit_reason }
}

/// Up to `count` quasi-random points of `region`.
pub fn sample_region(region: &dyn Region, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let bbox = region.bounding_box();
    let mut h = Halton::seeded(region.dim(), seed);
    let mut out = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(10_000).max(100_000);
    for _ in 0..max_attempts {
        if out.len() == count {
            break;
        }
        let x = bbox.lerp(&h.next_point());
        if region.contains(&x) {
            out.push(x);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tested: usize,
    pub converged: usize,
    /// Trajectories that left the region before converging.
    pub left_region: usize,
    /// First sample (in sampling order) that did not converge.
    pub worst_point: Option<Vec<f64>>,
    pub worst_reason: Option<ExitReason>,
}

impl ValidationReport {
    pub fn fraction(&self) -> f64 {
        if self.tested == 0 {
            return 0.0;
        }
        self.converged as f64 / self.tested as f64
    }

    pub fn all_converged(&self) -> bool {
        self.tested > 0 && self.converged == self.tested
    }
}

/// Integrates the original system from quasi-random in-region samples.
pub fn validate_region(
    region: &dyn Region,
    f: &PolyMap,
    n_samples: usize,
    seed: u64,
    opts: &SimOptions,
) -> ValidationReport {
    let points = sample_region(region, n_samples, seed);
    let outcomes: Vec<(ExitReason, bool)> = points
        .par_iter()
        .map(|x0| {
            let mut left = false;
            let (_, reason) = run(f, x0, opts, |_, x| {
                if !left && !region.contains(x) {
                    left = true;
                }
                None
            });
            (reason, left)
        })
        .collect();
    let mut report = ValidationReport {
        tested: points.len(),
        converged: 0,
        left_region: 0,
        worst_point: None,
        worst_reason: None,
    };
    for (x0, (reason, left)) in points.iter().zip(outcomes) {
        if left {
            report.left_region += 1;
        }
        if reason == ExitReason::Converged {
            report.converged += 1;
        } else if report.worst_point.is_none() {
            report.worst_point = Some(x0.clone());
            report.worst_reason = Some(reason);
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    pub tested: usize,
    /// Largest one-step change of `V(T x)` observed inside the region.
    pub max_increase: f64,
    /// Steps where `V` grew by more than `1e-6 (1 + V)`.
    pub violations: usize,
}

/// Checks that `V(T x(t))` is non-increasing along trajectories while they
/// remain in the estimate.
pub fn lyapunov_decrease_check(
    roa: &RoaEstimate,
    f: &PolyMap,
    n_samples: usize,
    seed: u64,
    opts: &SimOptions,
) -> DecreaseReport {
    let points = sample_region(roa, n_samples, seed);
    let per_point: Vec<(f64, usize)> = points
        .par_iter()
        .map(|x0| {
            let mut prev = roa.value(x0);
            let mut max_inc = f64::NEG_INFINITY;
            let mut violations = 0;
            run(f, x0, opts, |_, x| {
                if !roa.contains(x) {
                    return Some(ExitReason::LeftDomain);
                }
                let v = roa.value(x);
                let inc = v - prev;
                max_inc = max_inc.max(inc);
                if inc > DECREASE_TOL * (1.0 + prev.abs()) {
                    violations += 1;
                }
                prev = v;
                None
            });
            (max_inc, violations)
        })
        .collect();
    DecreaseReport {
        tested: points.len(),
        max_increase: per_point.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        violations: per_point.iter().map(|p| p.1).sum(),
    }
}
