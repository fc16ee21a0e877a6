//! Simulation of the log-mass Levy process and checks of its exponential
//! moments.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::coalescent::fmt_f64;
use crate::error::{Error, Result};
use crate::lambda::{JumpSampler, LambdaSpec, LevyTriplet, COMPENSATION_CUTOFF};
use crate::stats::RunningStats;

/// Largest admissible jump rate per unit time.
pub const DEFAULT_EVENT_CAP: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    PiecewiseConstant,
    PiecewiseLinear,
}

/// A time-stamped scalar trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `jumps[k]` is true when `times[k]` is a jump time.
    pub jumps: Vec<bool>,
    pub interpolation: Interpolation,
}

impl PathGrid {
    pub fn new(times: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::Domain(
                "times and values must be non-empty and of equal length".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        let jumps = vec![false; times.len()];
        Ok(PathGrid {
            times,
            values,
            jumps,
            interpolation,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().expect("non-empty path")
    }

    /// Value at `t` under the path's interpolation (clamped to the ends).
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.partition_point(|&s| s <= t);
        if n == 0 {
            return self.values[0];
        }
        let k = n - 1;
        match self.interpolation {
            Interpolation::PiecewiseConstant => self.values[k],
            Interpolation::PiecewiseLinear => {
                if k + 1 >= self.len() {
                    return self.values[k];
                }
                let (t0, t1) = (self.times[k], self.times[k + 1]);
                let w = (t - t0) / (t1 - t0);
                self.values[k] + w * (self.values[k + 1] - self.values[k])
            }
        }
    }

    /// CSV rows `t,xi,is_jump`.
    pub fn write_csv<W: Write>(&self, mut w: W, value_name: &str) -> Result<()> {
        writeln!(w, "t,{value_name},is_jump")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(self.values[k]),
                self.jumps[k] as u8
            )?;
        }
        Ok(())
    }
}

/// Finite-activity log-mass dynamics: `xi` moves by `drift * dt + sigma dB`
/// between jumps, and by `-log(1 - zeta)` at the atoms of a Poisson process
/// with intensity `dt x zeta^{-2} Lambda(d zeta)`.
#[derive(Debug, Clone)]
pub struct LogMassDriver {
    /// Drift including the compensator of the retained small jumps.
    pub drift: f64,
    pub sigma: f64,
    sampler: Option<JumpSampler>,
    jump_spec: LambdaSpec,
}

impl LogMassDriver {
    /// Uses the triplet's jump measure when it has finite activity and its
    /// truncation to `(eps, 1/2]` otherwise.
    pub fn new(triplet: &LevyTriplet, eps_trunc: f64, event_cap: f64) -> Result<Self> {
        let spec = if triplet.jump_spec.is_finite_activity() {
            triplet.jump_spec.clone()
        } else {
            if !(eps_trunc > 0.0 && eps_trunc < COMPENSATION_CUTOFF) {
                return Err(Error::Domain(format!("eps_trunc = {eps_trunc} not in (0, 1/2)")));
            }
            triplet.jump_spec.truncate(eps_trunc)
        };
        let intensity = spec.jump_intensity()?;
        if intensity > event_cap {
            return Err(Error::Divergence(format!(
                "jump intensity {intensity:.3e} exceeds the event cap {event_cap:.3e}"
            )));
        }
        let compensator = spec.compensator()?;
        let sampler = if intensity > 0.0 {
            Some(spec.jump_sampler()?)
        } else {
            None
        };
        Ok(LogMassDriver {
            drift: triplet.drift - compensator,
            sigma: triplet.gaussian_sigma,
            sampler,
            jump_spec: spec,
        })
    }

    /// The finite-activity jump measure actually simulated.
    pub fn jump_spec(&self) -> &LambdaSpec {
        &self.jump_spec
    }

    pub fn intensity(&self) -> f64 {
        self.sampler.as_ref().map_or(0.0, JumpSampler::intensity)
    }

    /// Waiting time to the next reproduction event (infinite if none).
    pub fn next_wait<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Some(s) => Exp::new(s.intensity()).expect("positive").sample(rng),
            None => f64::INFINITY,
        }
    }

    pub fn sample_zeta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler.as_ref().expect("jump measure is non-empty").sample(rng)
    }

    /// Continuous increment over `dt`.
    pub fn continuous_step<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        let mut dx = self.drift * dt;
        if self.sigma > 0.0 {
            let g: f64 = StandardNormal.sample(rng);
            dx += self.sigma * dt.sqrt() * g;
        }
        dx
    }
}

/// Simulates `xi` on `[0, horizon]`: grid points every `dt` plus the exact
/// jump times, which are flagged.
pub fn simulate_levy<R: Rng + ?Sized>(
    triplet: &LevyTriplet,
    xi0: f64,
    horizon: f64,
    dt: f64,
    eps_trunc: f64,
    rng: &mut R,
) -> Result<PathGrid> {
    let driver = LogMassDriver::new(triplet, eps_trunc, DEFAULT_EVENT_CAP)?;
    simulate_with_driver(&driver, xi0, horizon, dt, rng)
}

pub fn simulate_with_driver<R: Rng + ?Sized>(
    driver: &LogMassDriver,
    xi0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathGrid> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Domain(format!("dt = {dt}, horizon = {horizon}")));
    }
    let steps = (horizon / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut jumps = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(xi0);
    jumps.push(false);
    let mut t = 0.0;
    let mut xi = xi0;
    let mut next_jump = driver.next_wait(rng);
    let mut k = 1;
    while t < horizon {
        let grid_next = (k as f64 * dt).min(horizon);
        if next_jump < grid_next && next_jump > t {
            xi += driver.continuous_step(next_jump - t, rng);
            let zeta = driver.sample_zeta(rng);
            xi += -(-zeta).ln_1p();
            t = next_jump;
            times.push(t);
            values.push(xi);
            jumps.push(true);
            next_jump = t + driver.next_wait(rng);
        } else {
            xi += driver.continuous_step(grid_next - t, rng);
            t = grid_next;
            times.push(t);
            values.push(xi);
            jumps.push(false);
            k += 1;
        }
    }
    Ok(PathGrid {
        times,
        values,
        jumps,
        interpolation: Interpolation::PiecewiseConstant,
    })
}

/// Monte Carlo estimate of `E[sup_{t <= horizon} exp(q xi_t)]` over the
/// simulation grid; returns `(estimate, standard error)`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_sup_moment(
    q: f64,
    triplet: &LevyTriplet,
    xi0: f64,
    horizon: f64,
    dt: f64,
    eps_trunc: f64,
    replicas: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let driver = LogMassDriver::new(triplet, eps_trunc, DEFAULT_EVENT_CAP)?;
    let stats = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::rng::stream(seed, crate::rng::tags::LEVY, r);
            let path = simulate_with_driver(&driver, xi0, horizon, dt, &mut rng)?;
            let sup = path.values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            Ok((q * sup).exp())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .collect::<RunningStats>();
    Ok((stats.mean(), stats.std_err()))
}

/// Explicit upper bound for `E[sup_{t <= T} exp(q xi_t)]`, `q >= 1`:
///
/// `4 e^{q xi_0} e^{q |kappa + d| T} E[e^{q M_T}] E[e^{q J_T}]`
///
/// with `M` the martingale part (Brownian plus compensated jumps of size
/// `zeta <= 1/2`) and `J` the large jumps. The factor 4 is Doob's `L^2`
/// constant applied to the submartingale `exp(q M_t / 2)`.
pub fn sup_moment_bound(q: f64, triplet: &LevyTriplet, xi0: f64, horizon: f64, eps_trunc: f64) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::Domain(format!("q = {q} < 1")));
    }
    let driver = LogMassDriver::new(triplet, eps_trunc, f64::INFINITY)?;
    let spec = driver.jump_spec();
    let s = triplet.gaussian_sigma;
    // (1-zeta)^{-q} - 1 + q log(1-zeta) = O(zeta^2)
    let small = spec.integrate(
        |z| {
            let l = (-z).ln_1p();
            ((-q * l).exp_m1() + q * l) / (z * z)
        },
        0.0,
        COMPENSATION_CUTOFF,
        0.0,
        0.0,
    )?;
    let large = spec.integrate(
        |z| (-q * (-z).ln_1p()).exp_m1() / (z * z),
        COMPENSATION_CUTOFF,
        1.0,
        0.0,
        -0.5,
    )?;
    let log_bound = 4f64.ln() + q * xi0 + horizon * (q * triplet.drift.abs() + 0.5 * q * q * s * s + small + large);
    Ok(log_bound.exp())
}
