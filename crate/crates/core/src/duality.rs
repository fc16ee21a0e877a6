//! Monte Carlo comparison of the forward population with its dual: the
//! moment duality for `G_{p,phi,h}`, the frequency/coalescent duality,
//! and the agreement of the two forward constructions.

use std::io::Write;

use rayon::prelude::*;

use crate::coalescent::{fmt_f64, simulate_coalescent, Partition};
use crate::dual::DualSim;
use crate::error::Result;
use crate::generator::hashed_phi;
use crate::lambda::{LambdaSpec, SMHParams};
use crate::measures::{eval_g, monomial, phi_pi, BumpFunction, DiscreteMeasure, Phi, ProbabilityMeasure, TestFunction};
use crate::population::{Construction, FinalState, ForwardSim, PopulationScenario};
use crate::rng::{stream, tags, SimRng};
use crate::stats::{welch_z, RunningStats};

/// Pass threshold on the Welch z-score.
pub const Z_THRESHOLD: f64 = 3.0;

/// Particles of the forward frequency process in duality runs. Any
/// `N >= p` is exact in expectation.
pub const DUALITY_PARTICLES: usize = 32;

/// Mean and standard error of `f` over `replicas` independent streams
/// `(seed, tag, i)`. The reduction runs in replica order, so the result
/// does not depend on the thread count.
pub fn ensemble<F>(replicas: usize, seed: u64, tag: u64, f: F) -> Result<RunningStats>
where
    F: Fn(&mut SimRng) -> Result<f64> + Sync,
{
    let values: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| f(&mut stream(seed, tag, i)))
        .collect::<Result<_>>()?;
    Ok(values.into_iter().collect())
}

/// One side-by-side comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub id: String,
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs_mean: f64,
    pub rhs_se: f64,
    pub z: f64,
    pub pass: bool,
}

impl DualityReport {
    pub fn from_stats(id: impl Into<String>, lhs: &RunningStats, rhs: &RunningStats) -> Self {
        Self::from_moments(id, lhs.mean(), lhs.std_err(), rhs.mean(), rhs.std_err())
    }

    pub fn from_moments(id: impl Into<String>, lhs_mean: f64, lhs_se: f64, rhs_mean: f64, rhs_se: f64) -> Self {
        let z = welch_z(lhs_mean, lhs_se, rhs_mean, rhs_se);
        DualityReport {
            id: id.into(),
            lhs_mean,
            lhs_se,
            rhs_mean,
            rhs_se,
            z,
            pass: z.abs() < Z_THRESHOLD,
        }
    }
}

/// CSV with header `experiment_id,lhs_mean,lhs_se,rhs_mean,rhs_se,z,pass`.
pub fn write_results<W: Write>(rows: &[DualityReport], mut w: W) -> Result<()> {
    writeln!(w, "experiment_id,lhs_mean,lhs_se,rhs_mean,rhs_se,z,pass")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.id,
            fmt_f64(r.lhs_mean),
            fmt_f64(r.lhs_se),
            fmt_f64(r.rhs_mean),
            fmt_f64(r.rhs_se),
            fmt_f64(r.z),
            r.pass
        )?;
    }
    Ok(())
}

/// `E_nu0[G(nu_T, pi0, z0)]` against `E_(pi0, z0)[G(nu0, Pi_T, Z_T)]`.
#[derive(Debug, Clone)]
pub struct DualityExperiment {
    pub id: String,
    pub tf: TestFunction,
    pub nu0: DiscreteMeasure,
    pub pi0: Partition,
    pub z0: f64,
    pub params: SMHParams,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub eps_trunc: f64,
    pub dt: f64,
    pub n_particles: usize,
}

impl DualityExperiment {
    fn scenario(&self) -> PopulationScenario {
        PopulationScenario {
            params: self.params.clone(),
            alpha: 0.0,
            nu0: self.nu0.clone(),
            horizon: self.horizon,
            dt: self.dt,
            eps_trunc: self.eps_trunc,
            n_particles: self.n_particles,
        }
    }
}

/// Forward side via the log-polar construction, dual side via the
/// coupled coalescent; both use the same truncation.
pub fn run_duality(exp: &DualityExperiment) -> Result<DualityReport> {
    let scn = exp.scenario();
    let p = exp.tf.p();
    let pi0 = exp.pi0.restrict(p)?;
    let fwd = ForwardSim::new(&scn, Construction::Map)?;
    let lhs = ensemble(exp.replicas, exp.seed, tags::FORWARD, |rng| {
        fwd.final_state(rng)?.eval_g(&exp.tf, &pi0, exp.z0)
    })?;
    let dual = DualSim::new(p, &exp.params, exp.eps_trunc)?;
    let rhs = ensemble(exp.replicas, exp.seed, tags::DUAL, |rng| {
        let s = dual.final_state(&pi0, exp.z0, exp.horizon, rng)?;
        eval_g(&exp.tf, &exp.nu0, &s.partition, s.z())
    })?;
    Ok(DualityReport::from_stats(exp.id.clone(), &lhs, &rhs))
}

/// `E[<1{a=b}, rho_t^{otimes 2}>]` under pure Kingman resampling at pair
/// rate `s2`, started from identity probability `f0`.
pub fn kingman_identity_closed_form(s2: f64, t: f64, f0: f64) -> f64 {
    let decay = (-s2 * t).exp();
    decay * f0 + (1.0 - decay)
}

/// Frequency-process experiment.
#[derive(Debug, Clone)]
pub struct FvExperiment {
    pub id: String,
    pub phi: Phi,
    pub rho0: ProbabilityMeasure,
    pub lambda: LambdaSpec,
    pub sigma: f64,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub eps_trunc: f64,
    pub n_particles: usize,
}

/// `E[<phi, rho_T^{otimes p}>]` from the Moran ensemble against
/// `E[<phi_{Pi_T}, rho0^{otimes #Pi_T}>]` from the coalescent started at
/// singletons.
pub fn run_fv_duality(exp: &FvExperiment) -> Result<DualityReport> {
    let p = exp.phi.arity();
    let params = SMHParams::new(0.0, exp.sigma, exp.lambda.clone())?;
    let finite = params.finite_activity(exp.eps_trunc);
    let singletons = Partition::singletons(p);
    let scn = PopulationScenario {
        params: finite.clone(),
        alpha: 0.0,
        nu0: exp.rho0.measure().clone(),
        horizon: exp.horizon,
        dt: exp.horizon.max(1e-3),
        eps_trunc: exp.eps_trunc,
        n_particles: exp.n_particles,
    };
    let fwd = ForwardSim::new(&scn, Construction::Map)?;
    let lhs = ensemble(exp.replicas, exp.seed, tags::FORWARD, |rng| {
        let FinalState { freq, .. } = fwd.final_state(rng)?;
        freq.h_pi(&exp.phi, &singletons)
    })?;
    let rhs = ensemble(exp.replicas, exp.seed, tags::COALESCENT, |rng| {
        let path = simulate_coalescent(&singletons, &finite, exp.horizon, rng)?;
        monomial(&phi_pi(&exp.phi, path.final_partition())?, &exp.rho0)
    })?;
    Ok(DualityReport::from_stats(exp.id.clone(), &lhs, &rhs))
}

/// Functionals of `nu_T` compared between the two constructions.
#[allow(clippy::type_complexity)]
pub fn construction_functionals<'a>(
    tf: &'a TestFunction,
    pi0: &'a Partition,
    z0: f64,
) -> Vec<(String, Box<dyn Fn(&FinalState) -> Result<f64> + Sync + 'a>)> {
    let het = Phi::all_equal(2);
    let single2 = Partition::singletons(2);
    vec![
        ("mass".into(), Box::new(|s: &FinalState| Ok(s.mass))),
        ("mass_sq".into(), Box::new(|s: &FinalState| Ok(s.mass * s.mass))),
        (
            "identity".into(),
            Box::new(move |s: &FinalState| s.freq.h_pi(&het, &single2)),
        ),
        ("eval_g".into(), Box::new(move |s: &FinalState| s.eval_g(tf, pi0, z0))),
    ]
}

/// Map construction against the Poissonian one, functional by functional,
/// with independent streams.
pub fn run_construction_equivalence(
    id: &str,
    scn: &PopulationScenario,
    tf: &TestFunction,
    pi0: &Partition,
    z0: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<DualityReport>> {
    let run = |c: Construction, tag: u64| -> Result<Vec<FinalState>> {
        let sim = ForwardSim::new(scn, c)?;
        (0..replicas as u64)
            .into_par_iter()
            .map(|i| sim.final_state(&mut stream(seed, tag, i)))
            .collect()
    };
    let a = run(Construction::Map, tags::FORWARD)?;
    let b = run(Construction::Poissonian, tags::POISSONIAN)?;
    let mut out = Vec::new();
    for (name, f) in construction_functionals(tf, pi0, z0) {
        let sa: RunningStats = a.iter().map(&f).collect::<Result<Vec<_>>>()?.into_iter().collect();
        let sb: RunningStats = b.iter().map(&f).collect::<Result<Vec<_>>>()?.into_iter().collect();
        out.push(DualityReport::from_stats(format!("{id}:{name}"), &sa, &sb));
    }
    Ok(out)
}

/// Parameter families of the standard battery.
pub fn battery_params() -> Result<Vec<(&'static str, SMHParams, f64)>> {
    Ok(vec![
        ("kingman", SMHParams::new(0.3, 1.0, LambdaSpec::zero())?, 0.05),
        (
            "atom",
            SMHParams::new(0.0, 0.0, LambdaSpec::atoms(vec![(0.5, 1.0)])?)?,
            0.05,
        ),
        ("beta", SMHParams::new(-0.2, 0.0, LambdaSpec::beta(1.5, 1.0)?)?, 0.1),
        (
            "mixed",
            SMHParams::new(0.5, 0.7, LambdaSpec::atoms(vec![(0.3, 0.5)])?)?,
            0.05,
        ),
        (
            "kingman_beta",
            SMHParams::new(0.1, 0.0, LambdaSpec::beta(1.5, 0.8)?.with_kingman(0.5))?,
            0.05,
        ),
        (
            "large_atom",
            SMHParams::new(-0.3, 0.5, LambdaSpec::atoms(vec![(0.75, 0.4), (0.2, 0.6)])?)?,
            0.05,
        ),
    ])
}

/// Standard battery: every parameter family with `p` in {2, 3} and
/// `T` in {0.2, 0.5}.
pub fn standard_battery(replicas: usize, seed: u64) -> Result<Vec<DualityExperiment>> {
    let nu0 = DiscreteMeasure::from_labels(&[(0, 0.5), (1, 0.3), (2, 0.7)])?;
    let h = BumpFunction::new(1.6, 1.5)?;
    let mut out = Vec::new();
    for (k, (name, params, eps)) in battery_params()?.into_iter().enumerate() {
        for p in [2usize, 3] {
            for horizon in [0.2, 0.5] {
                let i = out.len() as u64;
                let phi = if p == 3 && k % 2 == 0 {
                    Phi::all_equal(3)
                } else {
                    hashed_phi(p, 100 + i)
                };
                let pi0 = if p == 3 && k % 2 == 1 {
                    Partition::from_labels(&[0, 0, 1])
                } else {
                    Partition::singletons(p)
                };
                out.push(DualityExperiment {
                    id: format!("{name}_p{p}_t{horizon}"),
                    tf: TestFunction::new(phi, h),
                    nu0: nu0.clone(),
                    pi0,
                    z0: 1.0,
                    params: params.clone(),
                    horizon,
                    replicas,
                    seed: seed.wrapping_add(i),
                    eps_trunc: eps,
                    dt: 0.05,
                    n_particles: DUALITY_PARTICLES,
                });
            }
        }
    }
    Ok(out)
}
