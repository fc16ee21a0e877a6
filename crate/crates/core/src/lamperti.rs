//! Lamperti time changes between self-similar and scalar multiplicative
//! homogeneous measure-valued paths, and the log-polar map to Markov
//! additive processes.

use std::io::Write;

use crate::coalescent::fmt_f64;
use crate::error::{Error, Result};
use crate::levy::{Interpolation, PathGrid};
use crate::measures::{inverse_log_polar, log_polar, DiscreteMeasure, ProbabilityMeasure};
use crate::stats::{welch_z, RunningStats};

/// Terminal state entered at the last recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sentinel {
    /// Absorbed at the zero measure.
    Zero,
    /// Sent to the cemetery point at infinity.
    Cemetery,
}

/// Piecewise-constant cadlag measure-valued path. The state recorded at
/// `times[k]` holds on `[times[k], times[k+1])`; the last recorded time is
/// the horizon, unless `terminal` is set, in which case the path sits in
/// the sentinel from then on.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePath {
    pub times: Vec<f64>,
    pub states: Vec<DiscreteMeasure>,
    pub jumps: Vec<bool>,
    pub terminal: Option<Sentinel>,
}

impl MeasurePath {
    pub fn new(times: Vec<f64>, states: Vec<DiscreteMeasure>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::Domain(
                "times and states must be non-empty and of equal length".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        let jumps = vec![false; times.len()];
        Ok(MeasurePath {
            times,
            states,
            jumps,
            terminal: None,
        })
    }

    pub fn constant(state: DiscreteMeasure, horizon: f64) -> Result<Self> {
        if horizon > 0.0 {
            MeasurePath::new(vec![0.0, horizon], vec![state.clone(), state])
        } else {
            MeasurePath::new(vec![0.0], vec![state])
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    pub fn final_state(&self) -> &DiscreteMeasure {
        self.states.last().expect("non-empty path")
    }

    /// Appends a record; times must increase.
    pub fn push(&mut self, t: f64, state: DiscreteMeasure, jump: bool) {
        debug_assert!(t > self.horizon());
        self.times.push(t);
        self.states.push(state);
        self.jumps.push(jump);
    }

    /// Index of the record in force at `t` (clamped to the ends).
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// State at `t`; `None` stands for the cemetery.
    pub fn state_at(&self, t: f64) -> Option<&DiscreteMeasure> {
        if t >= self.horizon() && self.terminal == Some(Sentinel::Cemetery) {
            return None;
        }
        Some(&self.states[self.index_at(t)])
    }

    pub fn masses(&self) -> Vec<f64> {
        self.states.iter().map(DiscreteMeasure::total_mass).collect()
    }

    /// Total-mass subpath.
    pub fn mass_path(&self) -> PathGrid {
        PathGrid {
            times: self.times.clone(),
            values: self.masses(),
            jumps: self.jumps.clone(),
            interpolation: Interpolation::PiecewiseConstant,
        }
    }

    /// CSV rows `t,total_mass,freq_1,...,freq_k`, frequencies sorted in
    /// decreasing order and padded with zeros.
    pub fn write_csv<W: Write>(&self, mut w: W, top_k: usize) -> Result<()> {
        write!(w, "t,total_mass")?;
        for i in 1..=top_k {
            write!(w, ",freq_{i}")?;
        }
        writeln!(w)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let m = s.total_mass();
            let mut f: Vec<f64> = s
                .atoms()
                .iter()
                .map(|&(_, x)| if m > 0.0 { x / m } else { 0.0 })
                .collect();
            f.sort_by(|a, b| b.total_cmp(a));
            f.resize(top_k.max(f.len()), 0.0);
            write!(w, "{},{}", fmt_f64(*t), fmt_f64(m))?;
            for x in &f[..top_k] {
                write!(w, ",{}", fmt_f64(*x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Cumulative additive functional of a piecewise-constant path.
#[derive(Debug, Clone, PartialEq)]
pub struct Clock {
    /// Piecewise-linear, non-decreasing values at the recorded times.
    pub grid: PathGrid,
    /// Time up to which the functional is finite and the path alive.
    pub lifetime: f64,
    /// The functional jumps to `+inf` at `lifetime`.
    pub exploded: bool,
}

impl Clock {
    pub fn total(&self) -> f64 {
        self.grid.last_value()
    }

    /// `int_0^t` of the level, for `t` up to the lifetime.
    pub fn value_at(&self, t: f64) -> f64 {
        if self.exploded && t > self.lifetime {
            return f64::INFINITY;
        }
        self.grid.value_at(t)
    }
}

/// Where a clock computation stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    /// Integrand infinite on a zero-mass segment.
    Explodes,
    /// Integrand zero on a zero-mass segment: nothing more happens.
    Freezes,
}

/// `int_0^t m_u^e du` at the recorded times of a piecewise-constant mass
/// path, stopping at the first zero-mass segment whose rate is not 1.
fn cumulate(times: &[f64], masses: &[f64], e: f64) -> (Vec<f64>, Option<Stop>) {
    let mut cum = Vec::with_capacity(times.len());
    cum.push(0.0);
    for k in 0..times.len() - 1 {
        let m = masses[k];
        let rate = if e == 0.0 {
            1.0
        } else if m > 0.0 {
            m.powf(e)
        } else if e < 0.0 {
            return (cum, Some(Stop::Explodes));
        } else {
            return (cum, Some(Stop::Freezes));
        };
        let next = cum[k] + rate * (times[k + 1] - times[k]);
        cum.push(next);
    }
    (cum, None)
}

fn clock_from(times: &[f64], masses: &[f64], e: f64) -> Result<Clock> {
    let (cum, stop) = cumulate(times, masses, e);
    let n = cum.len();
    let grid = PathGrid {
        times: times[..n].to_vec(),
        values: cum,
        jumps: vec![false; n],
        interpolation: Interpolation::PiecewiseLinear,
    };
    Ok(Clock {
        lifetime: grid.times[n - 1],
        exploded: stop == Some(Stop::Explodes),
        grid,
    })
}

/// `t -> int_0^t ||X_u||^{-alpha} du`, exact for piecewise-constant paths.
pub fn additive_functional(path: &MeasurePath, alpha: f64) -> Result<Clock> {
    clock_from(&path.times, &path.masses(), -alpha)
}

/// Same as [`additive_functional`] for a scalar mass path.
pub fn additive_functional_mass(mass: &PathGrid, alpha: f64) -> Result<Clock> {
    if mass.values.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::Domain("masses must be non-negative".into()));
    }
    clock_from(&mass.times, &mass.values, -alpha)
}

/// Generalized inverse `inf{s : A(s) >= t}`, clamped to the lifetime.
pub fn invert_clock(clock: &Clock, t: f64) -> f64 {
    let g = &clock.grid;
    if t <= g.values[0] {
        return g.times[0];
    }
    let k = g.values.partition_point(|&v| v < t);
    if k >= g.len() {
        return clock.lifetime;
    }
    let (v0, v1) = (g.values[k - 1], g.values[k]);
    let (t0, t1) = (g.times[k - 1], g.times[k]);
    t0 + (t - v0) / (v1 - v0) * (t1 - t0)
}

fn time_change(path: &MeasurePath, e: f64, freeze_sentinel: Sentinel) -> Result<MeasurePath> {
    let masses = path.masses();
    let (cum, stop) = cumulate(&path.times, &masses, e);
    let n = cum.len();
    let terminal = match stop {
        None => path.terminal,
        Some(Stop::Explodes) => Some(Sentinel::Zero),
        Some(Stop::Freezes) => Some(freeze_sentinel),
    };
    Ok(MeasurePath {
        times: cum,
        states: path.states[..n].to_vec(),
        jumps: path.jumps[..n].to_vec(),
        terminal,
    })
}

/// `Y_t = X_{c_alpha(t)}` with `c_alpha` the inverse of
/// `int ||X||^{-alpha}`. The recorded times of `Y` are the images of those
/// of `X`.
pub fn c_alpha_transform(path: &MeasurePath, alpha: f64) -> Result<MeasurePath> {
    time_change(path, -alpha, Sentinel::Zero)
}

/// `X_t = Y_{gamma_alpha(t)}` with `gamma_alpha` the inverse of
/// `int ||Y||^{alpha}`. A path frozen at zero mass ends in the cemetery
/// when `alpha > 0` and at zero otherwise.
pub fn gamma_alpha_transform(path: &MeasurePath, alpha: f64) -> Result<MeasurePath> {
    let sentinel = if alpha > 0.0 {
        Sentinel::Cemetery
    } else {
        Sentinel::Zero
    };
    time_change(path, alpha, sentinel)
}

/// Largest atom-wise mass difference between two measures.
pub fn measure_sup_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let (x, y) = (a.atoms(), b.atoms());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() || j < y.len() {
        let diff = match (x.get(i), y.get(j)) {
            (Some(&(p, m)), Some(&(q, n))) if p == q => {
                i += 1;
                j += 1;
                m - n
            }
            (Some(&(p, m)), Some(&(q, _))) if p < q => {
                i += 1;
                m
            }
            (Some(&(_, m)), None) => {
                i += 1;
                m
            }
            (_, Some(&(_, n))) => {
                j += 1;
                n
            }
            (None, None) => unreachable!(),
        };
        d = d.max(diff.abs());
    }
    d
}

/// Largest deviation between two paths on the recorded grid of `a`,
/// comparing states and times, the latter relative to `max(1, |t|)` since
/// clocks of near-extinct paths reach large values; `inf` if the grids
/// differ in length.
pub fn path_distance(a: &MeasurePath, b: &MeasurePath) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut d = 0.0f64;
    for k in 0..a.len() {
        d = d.max((a.times[k] - b.times[k]).abs() / a.times[k].abs().max(1.0));
        d = d.max(measure_sup_distance(&a.states[k], &b.states[k]));
    }
    d
}

/// `gamma_alpha` applied after `c_alpha`; returns the reconstruction error.
pub fn roundtrip_error(path: &MeasurePath, alpha: f64) -> Result<f64> {
    let y = c_alpha_transform(path, alpha)?;
    let x = gamma_alpha_transform(&y, alpha)?;
    Ok(path_distance(path, &x))
}

/// Residual of `mu_t = nu_{int_0^t ||mu_s||^{-alpha} ds}` over the recorded
/// times of `mu`.
pub fn sssmh_residual(mu: &MeasurePath, nu: &MeasurePath, alpha: f64) -> Result<f64> {
    let clock = additive_functional(mu, alpha)?;
    let mut worst = 0.0f64;
    for k in 0..clock.grid.len() {
        let s = clock.grid.values[k];
        let snap = s + 1e-9 * (1.0 + s.abs());
        let state = &nu.states[nu.index_at(snap)];
        worst = worst.max(measure_sup_distance(&mu.states[k], state));
    }
    Ok(worst)
}

/// Log-polar coordinates of a path: frequencies and log total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPath {
    pub times: Vec<f64>,
    pub rho: Vec<ProbabilityMeasure>,
    pub xi: Vec<f64>,
    pub jumps: Vec<bool>,
}

impl MapPath {
    pub fn xi_path(&self) -> PathGrid {
        PathGrid {
            times: self.times.clone(),
            values: self.xi.clone(),
            jumps: self.jumps.clone(),
            interpolation: Interpolation::PiecewiseConstant,
        }
    }
}

/// Pointwise `(rho, xi) -> e^xi rho`.
pub fn map_to_process(map: &MapPath) -> Result<MeasurePath> {
    if map.rho.len() != map.times.len() || map.xi.len() != map.times.len() {
        return Err(Error::Domain("MAP coordinates must share one time grid".into()));
    }
    let states = map
        .rho
        .iter()
        .zip(&map.xi)
        .map(|(r, &x)| inverse_log_polar(r, x))
        .collect();
    Ok(MeasurePath {
        times: map.times.clone(),
        states,
        jumps: map.jumps.clone(),
        terminal: None,
    })
}

/// Pointwise `nu -> (nu / ||nu||, log ||nu||)`.
pub fn process_to_map(path: &MeasurePath) -> Result<MapPath> {
    let mut rho = Vec::with_capacity(path.len());
    let mut xi = Vec::with_capacity(path.len());
    for s in &path.states {
        let (r, x) = log_polar(s)?;
        rho.push(r);
        xi.push(x);
    }
    Ok(MapPath {
        times: path.times.clone(),
        rho,
        xi,
        jumps: path.jumps.clone(),
    })
}

/// Observable evaluated on a path state; `None` is the cemetery.
pub type PathFunctional<'a> = (&'a str, &'a (dyn Fn(Option<&DiscreteMeasure>) -> f64 + Sync));

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub functional: String,
    pub t: f64,
    pub mean_a: f64,
    pub se_a: f64,
    pub mean_b: f64,
    pub se_b: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.z.abs())
            .filter(|z| z.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn pass(&self, threshold: f64) -> bool {
        self.rows
            .iter()
            .all(|r| r.z.abs() < threshold || (r.z.is_nan() && r.se_a == 0.0 && r.se_b == 0.0))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "functional,t,mean_a,se_a,mean_b,se_b,z")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.functional,
                fmt_f64(r.t),
                fmt_f64(r.mean_a),
                fmt_f64(r.se_a),
                fmt_f64(r.mean_b),
                fmt_f64(r.se_b),
                fmt_f64(r.z)
            )?;
        }
        Ok(())
    }
}

/// Compares `E[f(X_t)]` over `ensemble_a` (started at `x`) with
/// `E[f(a X'_{a^{-alpha} t})]` over `ensemble_b` (started at `x / a`).
pub fn check_self_similarity(
    ensemble_a: &[MeasurePath],
    ensemble_b: &[MeasurePath],
    alpha: f64,
    a_scale: f64,
    times: &[f64],
    functionals: &[PathFunctional<'_>],
) -> Result<ScalingReport> {
    if !(a_scale > 0.0) {
        return Err(Error::Domain(format!("scale a = {a_scale} must be positive")));
    }
    let mut rows = Vec::new();
    for &(name, f) in functionals {
        for &t in times {
            let sa: RunningStats = ensemble_a.iter().map(|p| f(p.state_at(t))).collect();
            let tb = a_scale.powf(-alpha) * t;
            let sb: RunningStats = ensemble_b
                .iter()
                .map(|p| f(p.state_at(tb).map(|s| s.scaled(a_scale)).as_ref()))
                .collect();
            let z = welch_z(sa.mean(), sa.std_err(), sb.mean(), sb.std_err());
            rows.push(ScalingRow {
                functional: name.to_string(),
                t,
                mean_a: sa.mean(),
                se_a: sa.std_err(),
                mean_b: sb.mean(),
                se_b: sb.std_err(),
                z,
            });
        }
    }
    Ok(ScalingReport { rows })
}
