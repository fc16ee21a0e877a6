//! The coupled dual `(Pi_t, Z_t)`: a coalescent and an exponential Levy
//! process driven by one Poisson stream of reproduction events.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::coalescent::{binomial, fmt_f64, partition_distance, simulate_coalescent, Partition};
use crate::error::{Error, Result};
use crate::lambda::{levy_exponent, levy_triplet, LambdaSpec, LevyTriplet, SMHParams};
use crate::levy::{LogMassDriver, DEFAULT_EVENT_CAP};
use crate::rng::{stream, tags};
use crate::stats::{ks_two_sample, RunningStats};

/// State of the dual process.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub partition: Partition,
    pub log_z: f64,
}

impl DualState {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }
}

/// What a record of a dual path corresponds to.
#[derive(Debug, Clone, PartialEq)]
pub enum DualEvent {
    Start,
    Grid,
    /// Reproduction atom of size `zeta`; `participants` are the blocks that
    /// took part (a merger happened iff there are at least two).
    Atom {
        zeta: f64,
        participants: Vec<usize>,
    },
    /// Kingman merger of blocks `i < j`.
    Kingman(usize, usize),
}

impl DualEvent {
    pub fn label(&self) -> &'static str {
        match self {
            DualEvent::Start => "start",
            DualEvent::Grid => "grid",
            DualEvent::Atom { .. } => "atom",
            DualEvent::Kingman(..) => "kingman",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPath {
    pub times: Vec<f64>,
    pub states: Vec<DualState>,
    pub events: Vec<DualEvent>,
}

impl DualPath {
    pub fn final_state(&self) -> &DualState {
        self.states.last().expect("non-empty path")
    }

    /// CSV rows `t,num_blocks,log_z,event_kind`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,num_blocks,log_z,event_kind")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(self.times[k]),
                self.states[k].partition.num_blocks(),
                fmt_f64(self.states[k].log_z),
                self.events[k].label()
            )?;
        }
        Ok(())
    }
}

/// Blocks whose least element drew a uniform below `zeta`.
fn participants(pi: &Partition, zeta: f64, uniforms: &[f64]) -> Vec<usize> {
    pi.least_elements()
        .into_iter()
        .enumerate()
        .filter(|&(_, e)| uniforms[e] < zeta)
        .map(|(b, _)| b)
        .collect()
}

/// Kingman merger proposed by the element pair `(i, j)`: it takes effect
/// iff both are least elements of distinct blocks, which gives every pair
/// of blocks rate `pair_rate`.
fn kingman_blocks(pi: &Partition, i: usize, j: usize) -> Option<(usize, usize)> {
    let b = pi.block_of();
    let (bi, bj) = (b[i], b[j]);
    let least = |e: usize| b[..e].iter().all(|&x| x != b[e]);
    (bi != bj && least(i) && least(j)).then(|| (bi.min(bj), bi.max(bj)))
}

/// Uniformly random pair `i < j` from `0..p`.
fn random_pair<R: Rng + ?Sized>(p: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..p);
    let mut j = rng.random_range(0..p - 1);
    if j >= i {
        j += 1;
    }
    (i.min(j), i.max(j))
}

fn validate(p: usize, pi0: &Partition, z0: f64, horizon: f64, dt: f64) -> Result<()> {
    if pi0.len() != p || p == 0 {
        return Err(Error::Domain(format!(
            "initial partition has {} elements, expected p = {p}",
            pi0.len()
        )));
    }
    if !(z0 > 0.0) {
        return Err(Error::Domain(format!("z0 = {z0} must be positive")));
    }
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Domain(format!("dt = {dt}, horizon = {horizon}")));
    }
    Ok(())
}

/// The dual with its driver prepared once, for ensembles.
#[derive(Debug, Clone)]
pub struct DualSim {
    p: usize,
    driver: LogMassDriver,
    kingman_rate: f64,
}

impl DualSim {
    pub fn new(p: usize, params: &SMHParams, eps_trunc: f64) -> Result<Self> {
        let driver = LogMassDriver::new(&levy_triplet(params), eps_trunc, DEFAULT_EVENT_CAP)?;
        Ok(DualSim {
            p,
            driver,
            kingman_rate: params.pair_rate() * binomial(p, 2),
        })
    }

    /// Final state at `horizon` from `(pi0, z0)`.
    pub fn final_state<R: Rng + ?Sized>(
        &self,
        pi0: &Partition,
        z0: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Result<DualState> {
        run_dual(self, pi0, z0, horizon, horizon.max(1e-300), rng, |_, _, _| {})
    }
}

fn run_dual<R: Rng + ?Sized, F: FnMut(f64, &DualState, DualEvent)>(
    sim: &DualSim,
    pi0: &Partition,
    z0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut R,
    mut record: F,
) -> Result<DualState> {
    let p = sim.p;
    validate(p, pi0, z0, horizon, dt)?;
    let driver = &sim.driver;
    let kingman_rate = sim.kingman_rate;
    let kingman_exp = (kingman_rate > 0.0).then(|| Exp::new(kingman_rate).expect("positive rate"));
    let mut s = DualState {
        partition: pi0.clone(),
        log_z: z0.ln(),
    };
    let mut t = 0.0;
    record(t, &s, DualEvent::Start);
    let mut next_atom = driver.next_wait(rng);
    let mut next_kingman = kingman_exp.map_or(f64::INFINITY, |e| e.sample(rng));
    let mut uniforms = vec![0.0; p];
    let mut k = 1usize;
    while t < horizon {
        let grid = (k as f64 * dt).min(horizon);
        let next = next_atom.min(next_kingman);
        if next < grid {
            s.log_z += driver.continuous_step(next - t, rng);
            t = next;
            if next_atom <= next_kingman {
                let zeta = driver.sample_zeta(rng);
                uniforms.iter_mut().for_each(|u| *u = rng.random());
                let part = participants(&s.partition, zeta, &uniforms);
                if part.len() >= 2 {
                    s.partition = s.partition.coagulate(&part)?;
                }
                s.log_z += -(-zeta).ln_1p();
                record(
                    t,
                    &s,
                    DualEvent::Atom {
                        zeta,
                        participants: part,
                    },
                );
                next_atom = t + driver.next_wait(rng);
            } else {
                let (i, j) = random_pair(p, rng);
                if let Some((bi, bj)) = kingman_blocks(&s.partition, i, j) {
                    s.partition = s.partition.coagulate(&[bi, bj])?;
                    record(t, &s, DualEvent::Kingman(bi, bj));
                }
                next_kingman = t + kingman_exp.map_or(f64::INFINITY, |e| e.sample(rng));
            }
        } else {
            s.log_z += driver.continuous_step(grid - t, rng);
            t = grid;
            record(t, &s, DualEvent::Grid);
            k += 1;
        }
    }
    Ok(s)
}

/// Simulates `(Pi_t, Z_t)` on `[0, horizon]`, recording grid points every
/// `dt` and every event.
#[allow(clippy::too_many_arguments)]
pub fn simulate_dual<R: Rng + ?Sized>(
    p: usize,
    pi0: &Partition,
    z0: f64,
    params: &SMHParams,
    horizon: f64,
    eps_trunc: f64,
    dt: f64,
    rng: &mut R,
) -> Result<DualPath> {
    let mut path = DualPath {
        times: Vec::new(),
        states: Vec::new(),
        events: Vec::new(),
    };
    let sim = DualSim::new(p, params, eps_trunc)?;
    run_dual(&sim, pi0, z0, horizon, dt, rng, |t, s, e| {
        path.times.push(t);
        path.states.push(s.clone());
        path.events.push(e);
    })?;
    Ok(path)
}

/// Final state only. The continuous part of `log Z` is stepped only at
/// event times, so `dt` does not matter here.
#[allow(clippy::too_many_arguments)]
pub fn simulate_dual_final<R: Rng + ?Sized>(
    p: usize,
    pi0: &Partition,
    z0: f64,
    params: &SMHParams,
    horizon: f64,
    eps_trunc: f64,
    rng: &mut R,
) -> Result<DualState> {
    DualSim::new(p, params, eps_trunc)?.final_state(pi0, z0, horizon, rng)
}

type AtomSource = Option<(Exp<f64>, crate::lambda::JumpSampler)>;

/// Two coalescents started from singletons that share the atoms on
/// `(eps, 1/2]` and the Kingman stream; the finer one also sees
/// independent atoms on `(eps/2, eps]`. Built once per ensemble.
pub struct NestedTruncation {
    p: usize,
    coarse: AtomSource,
    fill: AtomSource,
    kingman: Option<Exp<f64>>,
}

impl NestedTruncation {
    pub fn new(p: usize, params: &SMHParams, eps: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::Domain("nested truncation needs p >= 2".into()));
        }
        let coarse = atom_source(&params.lambda.truncate(eps))?;
        let fill = atom_source(&params.lambda.restrict(eps / 2.0, eps))?;
        let kingman_rate = params.pair_rate() * binomial(p, 2);
        let kingman = (kingman_rate > 0.0).then(|| Exp::new(kingman_rate).expect("positive rate"));
        Ok(NestedTruncation {
            p,
            coarse,
            fill,
            kingman,
        })
    }

    /// `sup_{t <= horizon} d(Pi^eps_t, Pi^{eps/2}_t)` for one coupled pair.
    pub fn sup_distance<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<f64> {
        let p = self.p;
        let wait = |src: &AtomSource, rng: &mut R| src.as_ref().map_or(f64::INFINITY, |(e, _)| e.sample(rng));
        let mut a = Partition::singletons(p);
        let mut b = Partition::singletons(p);
        let mut next_coarse = wait(&self.coarse, rng);
        let mut next_fill = wait(&self.fill, rng);
        let mut next_kingman = self.kingman.map_or(f64::INFINITY, |e| e.sample(rng));
        let mut uniforms = vec![0.0; p];
        let mut sup = 0.0f64;
        loop {
            let t = next_coarse.min(next_fill).min(next_kingman);
            if t > horizon {
                return Ok(sup);
            }
            if t == next_coarse {
                let zeta = self.coarse.as_ref().expect("finite time").1.sample(rng);
                uniforms.iter_mut().for_each(|u| *u = rng.random());
                for pi in [&mut a, &mut b] {
                    let part = participants(pi, zeta, &uniforms);
                    if part.len() >= 2 {
                        *pi = pi.coagulate(&part)?;
                    }
                }
                next_coarse = t + wait(&self.coarse, rng);
            } else if t == next_fill {
                let zeta = self.fill.as_ref().expect("finite time").1.sample(rng);
                uniforms.iter_mut().for_each(|u| *u = rng.random());
                let part = participants(&b, zeta, &uniforms);
                if part.len() >= 2 {
                    b = b.coagulate(&part)?;
                }
                next_fill = t + wait(&self.fill, rng);
            } else {
                let (i, j) = random_pair(p, rng);
                for pi in [&mut a, &mut b] {
                    if let Some((bi, bj)) = kingman_blocks(pi, i, j) {
                        *pi = pi.coagulate(&[bi, bj])?;
                    }
                }
                next_kingman = t + self.kingman.map_or(f64::INFINITY, |e| e.sample(rng));
            }
            sup = sup.max(partition_distance(&a, &b, p)?);
        }
    }
}

/// One-off [`NestedTruncation::sup_distance`].
pub fn nested_truncation_sup_distance<R: Rng + ?Sized>(
    p: usize,
    params: &SMHParams,
    horizon: f64,
    eps: f64,
    rng: &mut R,
) -> Result<f64> {
    NestedTruncation::new(p, params, eps)?.sup_distance(horizon, rng)
}

fn atom_source(spec: &LambdaSpec) -> Result<AtomSource> {
    let rate = spec.jump_intensity()?;
    if rate <= 0.0 {
        return Ok(None);
    }
    Ok(Some((Exp::new(rate).expect("positive rate"), spec.jump_sampler()?)))
}

/// Comparison of the dual marginals against the standalone simulators.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    /// KS statistic and p-value of `min(absorption time, horizon)` against
    /// the standalone coalescent.
    pub ks_d: f64,
    pub ks_p: f64,
    /// `(theta, |empirical - exact| / SE)` for the characteristic function
    /// of `log Z_T - log z0`.
    pub cf_z: Vec<(f64, f64)>,
}

impl MarginalReport {
    pub fn pass(&self) -> bool {
        self.ks_p > 0.01 && self.cf_z.iter().all(|&(_, z)| z < 3.0)
    }
}

/// Empirical characteristic function of a sample with its standard error.
pub fn empirical_cf(sample: &[f64], theta: f64) -> (Complex64, f64) {
    let re: RunningStats = sample.iter().map(|x| (theta * x).cos()).collect();
    let im: RunningStats = sample.iter().map(|x| (theta * x).sin()).collect();
    let se = (re.std_err().powi(2) + im.std_err().powi(2)).sqrt();
    (Complex64::new(re.mean(), im.mean()), se)
}

/// Exact characteristic function of `xi_T - xi_0` for the simulated
/// (finite-activity) triplet.
pub fn exact_cf(triplet: &LevyTriplet, eps_trunc: f64, horizon: f64, theta: f64) -> Result<Complex64> {
    let driver = LogMassDriver::new(triplet, eps_trunc, f64::INFINITY)?;
    let simulated = LevyTriplet::new(triplet.drift, triplet.gaussian_sigma, driver.jump_spec().clone());
    Ok((-horizon * levy_exponent(theta, &simulated)?).exp())
}

/// Checks both dual marginals over `replicas` paths started from
/// singletons.
#[allow(clippy::too_many_arguments)]
pub fn dual_marginal_check(
    p: usize,
    params: &SMHParams,
    horizon: f64,
    eps_trunc: f64,
    thetas: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<MarginalReport> {
    let pi0 = Partition::singletons(p);
    let finite = params.finite_activity(eps_trunc);
    let sim = DualSim::new(p, params, eps_trunc)?;
    let dual: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, tags::DUAL, r);
            let mut absorbed = horizon;
            let fin = run_dual(&sim, &pi0, 1.0, horizon, horizon.max(1e-300), &mut rng, |t, s, _| {
                if s.partition.num_blocks() == 1 && absorbed == horizon && t < horizon {
                    absorbed = t;
                }
            })?;
            Ok((absorbed, fin.log_z))
        })
        .collect::<Result<_>>()?;
    let standalone: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, tags::COALESCENT, r);
            let path = simulate_coalescent(&pi0, &finite, horizon, &mut rng)?;
            Ok(path.absorption_time().map_or(horizon, |t| t.min(horizon)))
        })
        .collect::<Result<_>>()?;
    let absorbed: Vec<f64> = dual.iter().map(|d| d.0).collect();
    let (ks_d, ks_p) = ks_two_sample(&absorbed, &standalone);
    let log_z: Vec<f64> = dual.iter().map(|d| d.1).collect();
    let triplet = levy_triplet(params);
    let mut cf_z = Vec::new();
    for &theta in thetas {
        let (emp, se) = empirical_cf(&log_z, theta);
        let exact = exact_cf(&triplet, eps_trunc, horizon, theta)?;
        cf_z.push((theta, (emp - exact).norm() / se.max(1e-300)));
    }
    Ok(MarginalReport { ks_d, ks_p, cf_z })
}
