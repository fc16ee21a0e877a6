//! Forward simulation of the SMH population `nu_t` (MAP and Poissonian
//! constructions), the Dawson-Watanabe process and the self-similar
//! population `mu_t`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use crate::coalescent::{binomial, Partition};
use crate::error::{Error, Result};
use crate::lambda::{levy_triplet, SMHParams};
use crate::lamperti::{gamma_alpha_transform, MapPath, MeasurePath, Sentinel};
use crate::levy::LogMassDriver;
use crate::measures::{monomial, phi_pi, DiscreteMeasure, Phi, ProbabilityMeasure, TypePoint, MONOMIAL_TUPLE_CAP};

/// Default Moran population size.
pub const DEFAULT_PARTICLES: usize = 1000;

/// Log-mass drop (relative to the start) below which a population is
/// treated as extinct when running the self-similar clock.
pub const EXTINCTION_LOG_DROP: f64 = 30.0;

/// Guard on the number of steps of one path.
pub const MAX_STEPS: usize = 50_000_000;

/// `N` particles with types; every unordered pair resamples at `pair_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoranSystem {
    particles: Vec<TypePoint>,
    pair_rate: f64,
}

impl MoranSystem {
    pub fn new(particles: Vec<TypePoint>, pair_rate: f64) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::Domain(format!(
                "Moran system needs N >= 2, got {}",
                particles.len()
            )));
        }
        if !(pair_rate >= 0.0) {
            return Err(Error::Domain(format!("pair rate {pair_rate} must be non-negative")));
        }
        Ok(MoranSystem { particles, pair_rate })
    }

    /// `n` particles with iid types drawn from `rho`.
    pub fn sample<R: Rng + ?Sized>(rho: &ProbabilityMeasure, n: usize, pair_rate: f64, rng: &mut R) -> Result<Self> {
        let particles = (0..n).map(|_| rho.sample(rng)).collect();
        Self::new(particles, pair_rate)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[TypePoint] {
        &self.particles
    }

    pub fn pair_rate(&self) -> f64 {
        self.pair_rate
    }

    /// All particles share one type; resampling no longer changes anything.
    pub fn is_monomorphic(&self) -> bool {
        self.particles.iter().all(|&p| p == self.particles[0])
    }

    /// Total resampling rate `pair_rate * C(N, 2)`.
    pub fn event_rate(&self) -> f64 {
        self.pair_rate * binomial(self.len(), 2)
    }

    /// One resampling event: a uniformly chosen particle copies its type
    /// onto another.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.len();
        let parent = rng.random_range(0..n);
        let mut child = rng.random_range(0..n - 1);
        if child >= parent {
            child += 1;
        }
        self.particles[child] = self.particles[parent];
    }

    /// Paintbox event: every particle joins independently with probability
    /// `zeta`, and all participants take the type of one of them chosen
    /// uniformly. Returns that type, if any particle joined.
    pub fn paintbox<R: Rng + ?Sized>(&mut self, zeta: f64, rng: &mut R) -> Option<TypePoint> {
        let joined: Vec<usize> = (0..self.len()).filter(|_| rng.random::<f64>() < zeta).collect();
        if joined.is_empty() {
            return None;
        }
        let a = self.particles[joined[rng.random_range(0..joined.len())]];
        for i in joined {
            self.particles[i] = a;
        }
        Some(a)
    }

    /// Relabels every particle to one uniformly chosen type.
    pub fn fixate<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let a = self.particles[rng.random_range(0..self.len())];
        self.particles.iter_mut().for_each(|p| *p = a);
    }

    /// Type counts in label order.
    pub fn counts(&self) -> Vec<(TypePoint, usize)> {
        let mut sorted = self.particles.clone();
        sorted.sort_unstable();
        let mut out: Vec<(TypePoint, usize)> = Vec::new();
        for a in sorted {
            match out.last_mut() {
                Some((b, c)) if *b == a => *c += 1,
                _ => out.push((a, 1)),
            }
        }
        out
    }

    pub fn empirical(&self) -> ProbabilityMeasure {
        let n = self.len() as f64;
        let mu = DiscreteMeasure::new(self.counts().into_iter().map(|(a, c)| (a, c as f64 / n)))
            .expect("counts are positive");
        ProbabilityMeasure::new(mu).expect("empirical measure is normalized")
    }

    /// Sampling-without-replacement moment: the mean of `phi` over ordered
    /// tuples of distinct particles.
    pub fn u_statistic(&self, phi: &Phi) -> Result<f64> {
        let k = phi.arity();
        let n = self.len();
        if k > n {
            return Err(Error::Domain(format!("arity {k} exceeds particle count {n}")));
        }
        let counts = self.counts();
        let d = counts.len();
        if (d as f64).powi(k as i32) > MONOMIAL_TUPLE_CAP as f64 {
            return Err(Error::Resource(format!("{d}^{k} type tuples exceed cap")));
        }
        if k == 0 {
            return phi.eval(&[]);
        }
        let mut idx = vec![0usize; k];
        let mut args = vec![TypePoint(0); k];
        let mut used = vec![0usize; d];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            used.iter_mut().for_each(|u| *u = 0);
            for (pos, &i) in idx.iter().enumerate() {
                let avail = counts[i].1 - used[i].min(counts[i].1);
                w *= avail as f64 / (n - pos) as f64;
                used[i] += 1;
                args[pos] = counts[i].0;
            }
            if w > 0.0 {
                total += w * phi.eval_unchecked(&args);
            }
            let mut pos = 0;
            loop {
                if pos == k {
                    return Ok(total);
                }
                idx[pos] += 1;
                if idx[pos] < d {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// Frequency coordinate of a population: exact when there is no diffusive
/// resampling, a Moran particle system otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum FreqState {
    Exact(ProbabilityMeasure),
    /// Exact frequencies that turn into `n` particles drawn from `rho` at
    /// the first event. Since `rho` is constant until then, this has the
    /// law of sampling at time zero, without the noise when no event occurs.
    Pending {
        rho: ProbabilityMeasure,
        n: usize,
        pair_rate: f64,
    },
    Particles(MoranSystem),
}

impl FreqState {
    /// Exact frequencies when `pair_rate = 0`, `n` particles otherwise.
    pub fn init(rho: &ProbabilityMeasure, pair_rate: f64, n: usize) -> Result<Self> {
        if pair_rate > 0.0 {
            if n < 2 {
                return Err(Error::Domain(format!("N = {n} particles; need at least 2")));
            }
            Ok(FreqState::Pending {
                rho: rho.clone(),
                n,
                pair_rate,
            })
        } else {
            Ok(FreqState::Exact(rho.clone()))
        }
    }

    /// The particle system, drawing it first if still pending; `None` for
    /// exact frequencies.
    pub fn particles<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<&mut MoranSystem>> {
        if let FreqState::Pending { rho, n, pair_rate } = self {
            *self = FreqState::Particles(MoranSystem::sample(rho, *n, *pair_rate, rng)?);
        }
        Ok(match self {
            FreqState::Particles(m) => Some(m),
            _ => None,
        })
    }

    pub fn rho(&self) -> ProbabilityMeasure {
        match self {
            FreqState::Exact(r) | FreqState::Pending { rho: r, .. } => r.clone(),
            FreqState::Particles(m) => m.empirical(),
        }
    }

    /// `<phi_pi, rho^{otimes #pi}>`; for particles, the unbiased
    /// without-replacement version.
    pub fn h_pi(&self, phi: &Phi, pi: &Partition) -> Result<f64> {
        let f = phi_pi(phi, pi)?;
        match self {
            FreqState::Exact(r) | FreqState::Pending { rho: r, .. } => monomial(&f, r),
            FreqState::Particles(m) => m.u_statistic(&f),
        }
    }

    /// Frequencies can no longer move: a single type is left.
    fn is_fixed(&self) -> bool {
        match self {
            FreqState::Exact(r) | FreqState::Pending { rho: r, .. } => r.measure().atoms().len() == 1,
            FreqState::Particles(m) => m.is_monomorphic(),
        }
    }

    fn resample_rate(&self) -> f64 {
        match self {
            FreqState::Exact(_) => 0.0,
            FreqState::Pending { n, pair_rate, .. } => pair_rate * binomial(*n, 2),
            FreqState::Particles(m) => m.event_rate(),
        }
    }

    /// `rho -> (1 - zeta) rho + zeta delta_a` with `a ~ rho`.
    pub fn reproduce<R: Rng + ?Sized>(&mut self, zeta: f64, rng: &mut R) -> Result<()> {
        match self {
            FreqState::Exact(r) => {
                let a = r.sample(rng);
                let next = r.measure().scaled(1.0 - zeta).perturbed(a, zeta)?;
                *r = ProbabilityMeasure::new(next)?;
            }
            _ => {
                if let Some(m) = self.particles(rng)? {
                    m.paintbox(zeta, rng);
                }
            }
        }
        Ok(())
    }
}

/// Which construction of `nu` to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// Log-polar coordinates `(rho, xi)` driven by one Poisson stream.
    Map,
    /// `e^{kappa_hat s}` times the time-changed DW process between atoms,
    /// with a new atom added at each reproduction event.
    Poissonian,
}

/// Configuration of a forward population run.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationScenario {
    pub params: SMHParams,
    pub alpha: f64,
    pub nu0: DiscreteMeasure,
    pub horizon: f64,
    pub dt: f64,
    pub eps_trunc: f64,
    pub n_particles: usize,
}

impl PopulationScenario {
    pub fn new(params: SMHParams, nu0: DiscreteMeasure, horizon: f64) -> Self {
        PopulationScenario {
            params,
            alpha: 0.0,
            nu0,
            horizon,
            dt: 0.01,
            eps_trunc: 0.01,
            n_particles: DEFAULT_PARTICLES,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nu0.is_zero() {
            return Err(Error::ZeroMeasure);
        }
        if !(self.dt > 0.0) || !(self.horizon >= 0.0) {
            return Err(Error::Domain(format!("dt = {}, horizon = {}", self.dt, self.horizon)));
        }
        Ok(())
    }

    /// A note when paintbox events are coarse relative to `1 / N`.
    pub fn resolution_warning(&self) -> Option<String> {
        let eps = self.eps_trunc.max(1e-300);
        let n = self.n_particles as f64;
        (self.params.pair_rate() > 0.0 && n < 10.0 / eps).then(|| {
            format!(
                "N = {} particles resolves reproduction events only down to zeta ~ {:.3}",
                self.n_particles,
                10.0 / n
            )
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum StepRule {
    Fixed(f64),
    /// Steps of `dt` on the clock `int ||nu||^alpha`.
    SsClock {
        dt: f64,
        alpha: f64,
    },
}

/// When to end a run besides the horizon.
#[derive(Debug, Clone, Copy)]
struct StopRule {
    horizon: f64,
    /// Stop once the step clock reaches this value.
    clock_target: Option<f64>,
    /// Stop once the log-mass drops below this level.
    extinction_level: f64,
}

/// Mutable state of a forward run.
#[derive(Debug, Clone)]
struct Forward {
    t: f64,
    /// Log total mass (MAP) or `log` of the Poissonian mass.
    xi: f64,
    freq: FreqState,
    /// Full measure, used by the Poissonian construction when frequencies
    /// are exact.
    nu_exact: Option<DiscreteMeasure>,
    /// `int ||nu||^alpha` up to `clock_t`.
    clock: f64,
    clock_t: f64,
    /// `||nu||^alpha` since `clock_t`.
    level: f64,
}

impl Forward {
    fn tick(&mut self, alpha: f64) {
        self.clock += self.level * (self.t - self.clock_t);
        self.clock_t = self.t;
        self.level = self.mass().powf(alpha);
    }

    fn measure(&self) -> DiscreteMeasure {
        match &self.nu_exact {
            Some(nu) => nu.clone(),
            None => self.freq.rho().measure().scaled(self.xi.exp()),
        }
    }

    fn mass(&self) -> f64 {
        match &self.nu_exact {
            Some(nu) => nu.total_mass(),
            None => self.xi.exp(),
        }
    }
}

/// Per-step observer of a forward run.
trait Recorder {
    fn record(&mut self, state: &Forward, jump: bool);
}

struct NoRecord;

impl Recorder for NoRecord {
    fn record(&mut self, _: &Forward, _: bool) {}
}

#[derive(Default)]
struct PathRecorder {
    times: Vec<f64>,
    rho: Vec<ProbabilityMeasure>,
    xi: Vec<f64>,
    states: Vec<DiscreteMeasure>,
    jumps: Vec<bool>,
}

impl Recorder for PathRecorder {
    fn record(&mut self, s: &Forward, jump: bool) {
        if let Some(&last) = self.times.last() {
            if s.t <= last {
                // simultaneous record: keep the later state
                self.times.pop();
                self.rho.pop();
                self.xi.pop();
                self.states.pop();
                let j = self.jumps.pop().unwrap_or(false);
                return self.push(s, jump || j);
            }
        }
        self.push(s, jump);
    }
}

impl PathRecorder {
    fn push(&mut self, s: &Forward, jump: bool) {
        let nu = s.measure();
        self.times.push(s.t);
        self.xi.push(nu.total_mass().ln());
        self.rho.push(nu.normalized().unwrap_or_else(|_| s.freq.rho()));
        self.states.push(nu);
        self.jumps.push(jump);
    }

    fn into_paths(self) -> (MapPath, MeasurePath) {
        let map = MapPath {
            times: self.times.clone(),
            rho: self.rho,
            xi: self.xi,
            jumps: self.jumps.clone(),
        };
        let nu = MeasurePath {
            times: self.times,
            states: self.states,
            jumps: self.jumps,
            terminal: None,
        };
        (map, nu)
    }
}

/// Event-driven forward engine shared by both constructions.
struct Engine {
    driver: LogMassDriver,
    construction: Construction,
}

impl Engine {
    fn new(scn: &PopulationScenario, construction: Construction) -> Result<Self> {
        let triplet = levy_triplet(&scn.params);
        if construction == Construction::Poissonian && !scn.params.lambda.is_finite_activity() {
            return Err(Error::Divergence(
                "the Poissonian construction needs a finite zeta^-2 Lambda; truncate first".into(),
            ));
        }
        let driver = LogMassDriver::new(&triplet, scn.eps_trunc, crate::levy::DEFAULT_EVENT_CAP)?;
        Ok(Engine { driver, construction })
    }

    fn start(&self, scn: &PopulationScenario) -> Result<Forward> {
        scn.validate()?;
        let rho = scn.nu0.normalized()?;
        let freq = FreqState::init(&rho, scn.params.pair_rate(), scn.n_particles)?;
        let nu_exact = match (&freq, self.construction) {
            (FreqState::Exact(_), Construction::Poissonian) => Some(scn.nu0.clone()),
            _ => None,
        };
        Ok(Forward {
            t: 0.0,
            xi: scn.nu0.total_mass().ln(),
            freq,
            nu_exact,
            clock: 0.0,
            clock_t: 0.0,
            level: 1.0,
        })
    }

    fn continuous<R: Rng + ?Sized>(&self, s: &mut Forward, dt: f64, rng: &mut R) {
        if dt <= 0.0 {
            return;
        }
        let dx = self.driver.continuous_step(dt, rng);
        match &mut s.nu_exact {
            Some(nu) => *nu = nu.scaled(dx.exp()),
            None => s.xi += dx,
        }
    }

    fn jump<R: Rng + ?Sized>(&self, s: &mut Forward, zeta: f64, rng: &mut R) -> Result<()> {
        match (&mut s.nu_exact, self.construction) {
            (Some(nu), _) => {
                let a = nu.normalized()?.sample(rng);
                *nu = crate::measures::add_scaled_atom(nu, a, zeta)?;
            }
            (None, Construction::Map) => {
                s.xi += -(-zeta).ln_1p();
                s.freq.reproduce(zeta, rng)?;
            }
            (None, Construction::Poissonian) => {
                s.xi = (s.xi.exp() / (1.0 - zeta)).ln();
                s.freq.reproduce(zeta, rng)?;
            }
        }
        Ok(())
    }

    fn run<R: Rng + ?Sized, Rec: Recorder>(
        &self,
        s: &mut Forward,
        steps: StepRule,
        stop: StopRule,
        rec: &mut Rec,
        rng: &mut R,
    ) -> Result<bool> {
        let alpha = match steps {
            StepRule::Fixed(_) => 0.0,
            StepRule::SsClock { alpha, .. } => alpha,
        };
        s.level = s.mass().powf(alpha);
        s.clock_t = s.t;
        rec.record(s, false);
        let moran_rate = s.freq.resample_rate();
        let moran_exp = (moran_rate > 0.0).then(|| Exp::new(moran_rate).expect("positive rate"));
        let mut next_atom = s.t + self.driver.next_wait(rng);
        let mut next_moran = s.t + moran_exp.map_or(f64::INFINITY, |e| e.sample(rng));
        let mut n_steps = 0usize;
        loop {
            if s.t >= stop.horizon {
                return Ok(false);
            }
            if let Some(target) = stop.clock_target {
                if s.clock >= target * (1.0 - 1e-13) {
                    return Ok(false);
                }
            }
            if s.mass().ln() < stop.extinction_level {
                return Ok(true);
            }
            n_steps += 1;
            if n_steps > MAX_STEPS {
                return Err(Error::Resource(format!("more than {MAX_STEPS} steps")));
            }
            let dt = match steps {
                StepRule::Fixed(dt) => dt,
                StepRule::SsClock { dt, .. } => dt / s.level,
            };
            let mut t_end = (s.t + dt).min(stop.horizon);
            if let Some(target) = stop.clock_target {
                t_end = t_end.min(s.t + (target - s.clock) / s.level);
            }
            loop {
                if next_atom.min(next_moran) >= t_end {
                    break;
                }
                if next_moran <= next_atom {
                    if let Some(m) = s.freq.particles(rng)? {
                        m.resample(rng);
                    }
                    next_moran += moran_exp.map_or(f64::INFINITY, |e| e.sample(rng));
                } else {
                    self.continuous(s, next_atom - s.t, rng);
                    s.t = next_atom;
                    let zeta = self.driver.sample_zeta(rng);
                    self.jump(s, zeta, rng)?;
                    s.tick(alpha);
                    rec.record(s, true);
                    next_atom += self.driver.next_wait(rng);
                }
            }
            self.continuous(s, t_end - s.t, rng);
            s.t = t_end;
            s.tick(alpha);
            rec.record(s, false);
            // resampling a fixed population is a no-op; skip its events
            if next_moran.is_finite() && s.freq.is_fixed() {
                next_moran = f64::INFINITY;
            }
        }
    }
}

/// Result of a MAP-construction run.
#[derive(Debug, Clone, PartialEq)]
pub struct SmhRun {
    pub map: MapPath,
    pub nu: MeasurePath,
}

/// `nu_t = e^{xi_t} rho_t` from the MAP coordinates driven by one Poisson
/// stream of reproduction events.
pub fn simulate_smh_map<R: Rng + ?Sized>(scn: &PopulationScenario, rng: &mut R) -> Result<SmhRun> {
    ForwardSim::new(scn, Construction::Map)?.smh_run(rng)
}

/// Poissonian construction; needs a finite-activity `Lambda`.
pub fn simulate_poissonian<R: Rng + ?Sized>(scn: &PopulationScenario, rng: &mut R) -> Result<MeasurePath> {
    Ok(ForwardSim::new(scn, Construction::Poissonian)?.smh_run(rng)?.nu)
}

fn fixed_stop(horizon: f64) -> StopRule {
    StopRule {
        horizon,
        clock_target: None,
        extinction_level: f64::NEG_INFINITY,
    }
}

/// Terminal state of a run without path recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalState {
    pub mass: f64,
    pub freq: FreqState,
}

impl FinalState {
    pub fn measure(&self) -> DiscreteMeasure {
        self.freq.rho().measure().scaled(self.mass)
    }

    /// `h(||nu|| z) H_pi(nu)` with the particle-unbiased `H_pi`.
    pub fn eval_g(&self, tf: &crate::measures::TestFunction, pi_tilde: &Partition, z: f64) -> Result<f64> {
        let pi = pi_tilde.restrict(tf.p())?;
        let hv = tf.h.value(self.mass * z);
        if hv == 0.0 {
            return Ok(0.0);
        }
        Ok(hv * self.freq.h_pi(&tf.phi, &pi)?)
    }
}

/// A scenario with its jump driver prepared once, for ensembles.
pub struct ForwardSim {
    scn: PopulationScenario,
    engine: Engine,
}

impl ForwardSim {
    pub fn new(scn: &PopulationScenario, construction: Construction) -> Result<Self> {
        scn.validate()?;
        Ok(ForwardSim {
            scn: scn.clone(),
            engine: Engine::new(scn, construction)?,
        })
    }

    /// Runs to the horizon and returns only the final state.
    pub fn final_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<FinalState> {
        let (scn, engine) = (&self.scn, &self.engine);
        let mut s = engine.start(scn)?;
        engine.run(
            &mut s,
            StepRule::Fixed(scn.dt),
            fixed_stop(scn.horizon),
            &mut NoRecord,
            rng,
        )?;
        Ok(match s.nu_exact {
            Some(nu) => {
                let rho = nu.normalized()?;
                FinalState {
                    mass: nu.total_mass(),
                    freq: FreqState::Exact(rho),
                }
            }
            None => FinalState {
                mass: s.xi.exp(),
                freq: s.freq,
            },
        })
    }

    /// Records the path on the `dt` grid and at every event.
    pub fn smh_run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SmhRun> {
        let (scn, engine) = (&self.scn, &self.engine);
        let mut s = engine.start(scn)?;
        let mut rec = PathRecorder::default();
        engine.run(&mut s, StepRule::Fixed(scn.dt), fixed_stop(scn.horizon), &mut rec, rng)?;
        let (map, nu) = rec.into_paths();
        Ok(SmhRun { map, nu })
    }

    /// Self-similar run, see [`simulate_ss_population`].
    pub fn ss_run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SsRun> {
        let (scn, engine) = (&self.scn, &self.engine);
        if scn.alpha == 0.0 {
            let run = self.smh_run(rng)?;
            return Ok(SsRun {
                mu: run.nu.clone(),
                nu: run.nu,
                extinct: false,
            });
        }
        let mut s = engine.start(scn)?;
        let mut rec = PathRecorder::default();
        let stop = StopRule {
            horizon: f64::INFINITY,
            clock_target: Some(scn.horizon),
            extinction_level: s.xi - EXTINCTION_LOG_DROP,
        };
        let steps = StepRule::SsClock {
            dt: scn.dt,
            alpha: scn.alpha,
        };
        let extinct = engine.run(&mut s, steps, stop, &mut rec, rng)?;
        let (_, nu) = rec.into_paths();
        let mut mu = gamma_alpha_transform(&nu, scn.alpha)?;
        if extinct {
            let last = mu.states.len() - 1;
            mu.states[last] = DiscreteMeasure::zero();
            mu.terminal = Some(Sentinel::Zero);
        }
        truncate_path(&mut mu, scn.horizon);
        Ok(SsRun { mu, nu, extinct })
    }
}

/// Runs to the horizon and returns only the final state.
pub fn simulate_final<R: Rng + ?Sized>(
    scn: &PopulationScenario,
    construction: Construction,
    rng: &mut R,
) -> Result<FinalState> {
    ForwardSim::new(scn, construction)?.final_state(rng)
}

/// Dawson-Watanabe process: Feller-diffusion total mass with generator
/// `(sigma^2 / 2) x f''(x)` (Euler steps, absorbed at 0) and Moran
/// frequencies at pair rate `sigma^2 / ||mu||`.
pub fn simulate_dw<R: Rng + ?Sized>(
    mu0: &DiscreteMeasure,
    sigma: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> Result<MeasurePath> {
    if mu0.is_zero() {
        return Err(Error::ZeroMeasure);
    }
    if !(dt > 0.0) || !(horizon >= 0.0) || !(sigma >= 0.0) {
        return Err(Error::Domain(format!(
            "dt = {dt}, horizon = {horizon}, sigma = {sigma}"
        )));
    }
    let rho = mu0.normalized()?;
    let s2 = sigma * sigma;
    let mut freq = FreqState::init(&rho, s2, n)?;
    let mut x = mu0.total_mass();
    let mut path = MeasurePath::new(vec![0.0], vec![mu0.clone()])?;
    let steps = (horizon / dt).ceil() as usize;
    for k in 1..=steps {
        let t = (k as f64 * dt).min(horizon);
        let h = t - path.horizon();
        if let Some(m) = freq.particles(rng)? {
            let mean = s2 / x * binomial(m.len(), 2) * h;
            let n2 = (m.len() * m.len()) as f64;
            if mean > 20.0 * n2 {
                m.fixate(rng);
            } else if mean > 0.0 {
                let events = Poisson::new(mean)
                    .map_err(|e| Error::Domain(e.to_string()))?
                    .sample(rng) as u64;
                for _ in 0..events {
                    m.resample(rng);
                }
            }
        }
        let g: f64 = StandardNormal.sample(rng);
        x = (x + (s2 * x * h).sqrt() * g).max(0.0);
        if x == 0.0 {
            path.push(t, DiscreteMeasure::zero(), false);
            path.terminal = Some(Sentinel::Zero);
            return Ok(path);
        }
        path.push(t, freq.rho().measure().scaled(x), false);
    }
    Ok(path)
}

/// Result of a self-similar population run.
#[derive(Debug, Clone, PartialEq)]
pub struct SsRun {
    /// The self-similar path on `[0, horizon]`.
    pub mu: MeasurePath,
    /// The underlying SMH path.
    pub nu: MeasurePath,
    /// The log-mass fell by more than [`EXTINCTION_LOG_DROP`].
    pub extinct: bool,
}

/// `mu = gamma_alpha(nu)`: the SMH path is run with steps of `dt` on the
/// self-similar clock until that clock reaches the scenario horizon.
pub fn simulate_ss_population<R: Rng + ?Sized>(scn: &PopulationScenario, rng: &mut R) -> Result<SsRun> {
    ForwardSim::new(scn, Construction::Map)?.ss_run(rng)
}

/// Restricts a path to `[0, t]`, adding a record at `t` when the path
/// extends beyond it.
fn truncate_path(path: &mut MeasurePath, t: f64) {
    let keep = path.times.partition_point(|&s| s <= t * (1.0 + 1e-12));
    if keep < path.len() {
        let carried = path.states[keep - 1].clone();
        path.times.truncate(keep);
        path.states.truncate(keep);
        path.jumps.truncate(keep);
        path.terminal = None;
        if path.horizon() < t {
            path.push(t, carried, false);
        }
    } else if path.horizon() < t && path.terminal.is_some() {
        let last = path.final_state().clone();
        path.push(t, last, false);
    }
}
