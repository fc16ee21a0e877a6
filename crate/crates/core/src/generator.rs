//! Numerical generators on finitely supported measures: the forward
//! operator via finite-difference Gateaux derivatives, the joint dual
//! operator in closed combinatorial form, and the total-mass generator.

use std::io::Write;

use rand::Rng;

use crate::coalescent::{binomial, fmt_f64, Partition};
use crate::error::{Error, Result};
use crate::lambda::{ContinuousPart, LambdaSpec, SMHParams, COMPENSATION_CUTOFF};
use crate::measures::{eval_g, BumpFunction, DiscreteMeasure, Phi, Profile, TestFunction, TypePoint};
use crate::quadrature::{self, Tolerance};

/// Below this `zeta` the compensated jump integrands are replaced by their
/// second-order Taylor coefficient.
pub const TAYLOR_CUTOFF: f64 = 1e-4;

/// Finite-difference settings for Gateaux derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateauxConfig {
    /// Relative step of first differences.
    pub eps_fd: f64,
    /// Relative step of second differences.
    pub eps_fd2: f64,
    pub richardson: bool,
}

impl Default for GateauxConfig {
    fn default() -> Self {
        GateauxConfig {
            eps_fd: 1e-5,
            eps_fd2: 1e-4,
            richardson: true,
        }
    }
}

/// A real functional of finite measures.
pub type MeasureFn<'a> = dyn Fn(&DiscreteMeasure) -> Result<f64> + Sync + 'a;

/// `F'(nu; a)` (order 1) or `F''(nu; a, a)` (order 2) by central
/// differences in the mass of `delta_a`, Richardson-extrapolated.
pub fn gateaux(f: &MeasureFn<'_>, nu: &DiscreteMeasure, a: TypePoint, order: u8, cfg: &GateauxConfig) -> Result<f64> {
    if !(cfg.eps_fd > 0.0) || !(cfg.eps_fd2 > 0.0) {
        return Err(Error::Domain("finite-difference steps must be positive".into()));
    }
    let scale = nu.total_mass().max(1e-300);
    let rel = match order {
        1 => cfg.eps_fd,
        2 => cfg.eps_fd2,
        _ => return Err(Error::Domain(format!("Gateaux order {order} not in {{1, 2}}"))),
    };
    // steps below a quarter of the local mass keep nu - h delta_a non-negative
    let local = nu.mass_at(a);
    let mut h = rel * scale;
    if local > 0.0 {
        h = h.min(0.25 * local);
    } else {
        // one-sided perturbations only; fall back to forward differences
        return forward_difference(f, nu, a, order, h);
    }
    if h < 1e-12 * scale {
        return Err(Error::StepUnderflow);
    }
    let f0 = if order == 2 { f(nu)? } else { 0.0 };
    let at = |s: f64| -> Result<f64> { f(&nu.perturbed(a, s)?) };
    let d = |h: f64| -> Result<f64> {
        match order {
            1 => Ok((at(h)? - at(-h)?) / (2.0 * h)),
            _ => Ok((at(h)? - 2.0 * f0 + at(-h)?) / (h * h)),
        }
    };
    let coarse = d(h)?;
    if !cfg.richardson {
        return Ok(coarse);
    }
    let fine = d(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

fn forward_difference(f: &MeasureFn<'_>, nu: &DiscreteMeasure, a: TypePoint, order: u8, h: f64) -> Result<f64> {
    let at = |s: f64| -> Result<f64> {
        if s == 0.0 {
            f(nu)
        } else {
            f(&nu.perturbed(a, s)?)
        }
    };
    let (f0, f1, f2, f3) = (at(0.0)?, at(h)?, at(2.0 * h)?, at(3.0 * h)?);
    Ok(match order {
        1 => (-11.0 * f0 + 18.0 * f1 - 9.0 * f2 + 2.0 * f3) / (6.0 * h),
        _ => (2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3) / (h * h),
    })
}

/// Drift, diffusion and jump parts of a generator value (before the
/// `||nu||^{-alpha}` factor).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorTerms {
    pub drift: f64,
    pub diffusion: f64,
    pub jump: f64,
}

impl GeneratorTerms {
    pub fn total(&self) -> f64 {
        self.drift + self.diffusion + self.jump
    }
}

/// `int_{(0,1)} g(zeta) zeta^{-2} Lambda(d zeta)` for a compensated
/// integrand `g = O(zeta^2)` given through `bracket(zeta) = g(zeta)` and
/// its Taylor coefficient `c2 = lim g(zeta) / zeta^2`.
fn compensated_integral<G: Fn(f64) -> f64>(lambda: &LambdaSpec, bracket: G, c2: f64) -> Result<f64> {
    if let ContinuousPart::Zero = lambda.continuous {
        return Ok(0.0);
    }
    let small = if c2 != 0.0 {
        c2 * lambda.integrate(|_| 1.0, 0.0, TAYLOR_CUTOFF, 0.0, 0.0)?
    } else {
        0.0
    };
    let g = |z: f64| bracket(z) / (z * z);
    let mid = lambda.integrate(g, TAYLOR_CUTOFF, COMPENSATION_CUTOFF, 0.0, 0.0)?;
    let high = lambda.integrate(g, COMPENSATION_CUTOFF, 1.0, 0.0, 0.0)?;
    Ok(small + mid + high)
}

/// `|log(1 - zeta)| 1{zeta <= 1/2}`.
fn compensator(zeta: f64) -> f64 {
    if zeta <= COMPENSATION_CUTOFF {
        -(-zeta).ln_1p()
    } else {
        0.0
    }
}

/// Terms of the SMH generator applied to `F` at `nu`.
pub fn generator_terms(
    f: &MeasureFn<'_>,
    nu: &DiscreteMeasure,
    params: &SMHParams,
    cfg: &GateauxConfig,
) -> Result<GeneratorTerms> {
    let x = nu.total_mass();
    if !(x > 0.0) {
        return Err(Error::ZeroMeasure);
    }
    let s2 = params.pair_rate();
    let f0 = f(nu)?;
    let mut terms = GeneratorTerms::default();
    for &(a, m) in nu.atoms() {
        let d1 = gateaux(f, nu, a, 1, cfg)?;
        let d2 = if s2 > 0.0 || !matches!(params.lambda.continuous, ContinuousPart::Zero) {
            gateaux(f, nu, a, 2, cfg)?
        } else {
            0.0
        };
        terms.drift += params.kappa * m * d1;
        terms.diffusion += 0.5 * s2 * x * m * d2;
        let bracket = |z: f64| -> f64 {
            let added = x * z / (1.0 - z);
            match nu.perturbed(a, added).and_then(|v| f(&v)) {
                Ok(v) => v - f0 - x * compensator(z) * d1,
                Err(_) => f64::NAN,
            }
        };
        let c2 = 0.5 * x * d1 + 0.5 * x * x * d2;
        let j = compensated_integral(&params.lambda, bracket, c2)?;
        if !j.is_finite() {
            return Err(Error::Quadrature { achieved: f64::NAN });
        }
        terms.jump += m / x * j;
    }
    Ok(terms)
}

/// `||nu||^{-alpha} (drift + diffusion + jump)` applied to `F`.
pub fn apply_g(
    f: &MeasureFn<'_>,
    nu: &DiscreteMeasure,
    params: &SMHParams,
    alpha: f64,
    cfg: &GateauxConfig,
) -> Result<f64> {
    let t = generator_terms(f, nu, params, cfg)?;
    Ok(nu.total_mass().powf(-alpha) * t.total())
}

/// `sum_{|J| = l} H_{pi^(J)}(nu)` for `l = 0..=k`, `J` ranging over sets of
/// blocks of `pi`.
fn merged_sums(tf: &TestFunction, nu: &DiscreteMeasure, pi: &Partition) -> Result<Vec<f64>> {
    let k = pi.num_blocks();
    if k > 20 {
        return Err(Error::Resource(format!("{k} blocks: too many subsets")));
    }
    let mut sums = vec![0.0; k + 1];
    for mask in 0u32..(1u32 << k) {
        let j: Vec<usize> = (0..k).filter(|&b| mask & (1 << b) != 0).collect();
        let merged = pi.coagulate(&j)?;
        sums[j.len()] += tf.h_pi(nu, &merged)?;
    }
    Ok(sums)
}

/// Terms of the joint operator applied to `G_{p,phi,h}` at
/// `(nu, pi_tilde, z)`.
pub fn joint_terms(
    tf: &TestFunction,
    nu: &DiscreteMeasure,
    pi_tilde: &Partition,
    z: f64,
    params: &SMHParams,
) -> Result<GeneratorTerms> {
    let m = nu.total_mass();
    if !(m > 0.0) {
        return Err(Error::ZeroMeasure);
    }
    if !(z > 0.0) {
        return Err(Error::Domain(format!("z = {z} must be positive")));
    }
    let pi = pi_tilde.restrict(tf.p())?;
    let k = pi.num_blocks();
    let x = m * z;
    let (h0, h1, h2) = (tf.h.value(x), tf.h.d1(x), tf.h.d2(x));
    let sums = merged_sums(tf, nu, &pi)?;
    let hp = sums[0];
    let s2 = params.pair_rate();
    let pairs = if k >= 2 { sums[2] - binomial(k, 2) * hp } else { 0.0 };
    let drift = params.kappa * x * h1 * hp;
    let diffusion = 0.5 * s2 * x * x * h2 * hp + s2 * h0 * pairs;
    let bracket = |zeta: f64| -> f64 {
        let mut mix = 0.0;
        for (l, &a) in sums.iter().enumerate() {
            let w = binomial(k, l);
            let per = if l <= 1 { hp * w } else { a };
            mix += zeta.powi(l as i32) * (1.0 - zeta).powi((k - l) as i32) * per;
        }
        tf.h.value(x / (1.0 - zeta)) * mix - h0 * hp - x * h1 * hp * compensator(zeta)
    };
    let c2 = h0 * pairs + 0.5 * x * h1 * hp + 0.5 * x * x * h2 * hp;
    let jump = compensated_integral(&params.lambda, bracket, c2)?;
    Ok(GeneratorTerms { drift, diffusion, jump })
}

/// The joint operator `M G_{p,phi,h}(nu, pi_tilde, z)`.
pub fn apply_m(
    tf: &TestFunction,
    nu: &DiscreteMeasure,
    pi_tilde: &Partition,
    z: f64,
    params: &SMHParams,
) -> Result<f64> {
    Ok(joint_terms(tf, nu, pi_tilde, z, params)?.total())
}

/// Tolerance of the operator identity.
pub const OPERATOR_TOL: f64 = 1e-4;

/// One comparison of the forward generator with the joint operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_diff: f64,
    pub pass: bool,
    pub lhs_terms: GeneratorTerms,
    pub rhs_terms: GeneratorTerms,
}

impl OperatorCheck {
    /// The term family with the largest discrepancy.
    pub fn worst_family(&self) -> &'static str {
        let d = [
            ((self.lhs_terms.drift - self.rhs_terms.drift).abs(), "drift"),
            ((self.lhs_terms.diffusion - self.rhs_terms.diffusion).abs(), "diffusion"),
            ((self.lhs_terms.jump - self.rhs_terms.jump).abs(), "jump"),
        ];
        d.iter()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|x| x.1)
            .unwrap_or("none")
    }
}

/// `G F` with `F = G_{p,phi,h}(., pi_tilde, z)` against `M G` at `nu`;
/// passes when `|GF - MG| / (1 + |MG|) < 1e-4`.
pub fn check_operator_duality(
    tf: &TestFunction,
    nu: &DiscreteMeasure,
    pi_tilde: &Partition,
    z: f64,
    params: &SMHParams,
    cfg: &GateauxConfig,
) -> Result<OperatorCheck> {
    let f = |v: &DiscreteMeasure| eval_g(tf, v, pi_tilde, z);
    let lhs_terms = generator_terms(&f, nu, params, cfg)?;
    let rhs_terms = joint_terms(tf, nu, pi_tilde, z, params)?;
    let (lhs, rhs) = (lhs_terms.total(), rhs_terms.total());
    let rel_diff = (lhs - rhs).abs() / (1.0 + rhs.abs());
    Ok(OperatorCheck {
        lhs,
        rhs,
        rel_diff,
        pass: rel_diff < OPERATOR_TOL,
        lhs_terms,
        rhs_terms,
    })
}

/// Generator of the total mass:
/// `kappa x^{1-a} f' + (s^2/2) x^{2-a} f'' + x^{-a} int [f(x y) - f(x) - x f'(x) log(y) 1{y <= 2}] Theta(dy)`
/// with `Theta` the image of `zeta^{-2} Lambda` under `zeta -> 1 / (1 - zeta)`.
pub fn apply_pssmp_generator(f: &Profile, x: f64, alpha: f64, params: &SMHParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("x = {x} must be positive")));
    }
    let (f0, f1, f2) = (f.value(x), f.d1(x), f.d2(x));
    let s2 = params.pair_rate();
    let bracket = |zeta: f64| {
        let y = 1.0 / (1.0 - zeta);
        let log_y = if y <= 1.0 / (1.0 - COMPENSATION_CUTOFF) {
            y.ln()
        } else {
            0.0
        };
        f.value(x * y) - f0 - x * f1 * log_y
    };
    let c2 = 0.5 * x * f1 + 0.5 * x * x * f2;
    let jump = compensated_integral(&params.lambda, bracket, c2)?;
    Ok(x.powf(-alpha) * (params.kappa * x * f1 + 0.5 * s2 * x * x * f2 + jump))
}

/// `(kappa*, 0, Beta(beta, c))` with
/// `kappa* = -int zeta^{-2} Lambda(d zeta) [zeta / (1 - zeta) - |log(1 - zeta)| 1{zeta <= 1/2}]`,
/// for which the self-similar population with `alpha = beta - 1` is a
/// beta-stable branching process.
pub fn beta_stable_params(beta: f64, c: f64) -> Result<SMHParams> {
    if beta <= 1.0 {
        return Err(Error::Divergence(format!(
            "beta = {beta} <= 1: the stable drift integral diverges"
        )));
    }
    if beta >= 2.0 {
        return Err(Error::Domain(format!("beta = {beta} >= 2; use a Kingman atom instead")));
    }
    let lambda = LambdaSpec::beta(beta, c)?;
    // zeta/(1-zeta) + log(1-zeta) = sum_{n>=2} (n-1)/n zeta^n
    let low = |z: f64| {
        if z < 0.25 {
            let mut term = z * z;
            let mut sum = 0.0;
            for n in 2..60 {
                sum += term * (n - 1) as f64 / n as f64;
                term *= z;
            }
            sum / (z * z)
        } else {
            (z / (1.0 - z) + (-z).ln_1p()) / (z * z)
        }
    };
    let a = lambda.integrate(low, 0.0, COMPENSATION_CUTOFF, 0.0, 0.0)?;
    let b = lambda.integrate(|z| 1.0 / (z * (1.0 - z)), COMPENSATION_CUTOFF, 1.0, 0.0, -1.0)?;
    SMHParams::new(-(a + b), 0.0, lambda)
}

/// `c x int_0^inf h^{-1-beta} [f(x+h) - f(x) - h f'(x)] dh`.
pub fn stable_csbp_generator(f: &Profile, x: f64, beta: f64, c: f64) -> Result<f64> {
    if !(beta > 1.0 && beta < 2.0) {
        return Err(Error::Domain(format!("beta = {beta} not in (1, 2)")));
    }
    let (f0, f1, f2) = (f.value(x), f.d1(x), f.d2(x));
    let hi = f.terms.iter().map(|(_, b)| b.support().1).fold(x, f64::max);
    let cut = (hi - x).max(1e-3);
    let tol = Tolerance::default();
    let small = 1e-4 * cut;
    // Taylor part on (0, small]: f''(x)/2 h^{1-beta}
    let taylor = 0.5 * f2 * small.powf(2.0 - beta) / (2.0 - beta);
    let body = quadrature::integrate(
        |h: f64| (f.value(x + h) - f0 - h * f1) * h.powf(-1.0 - beta),
        small,
        cut,
        tol,
    )?;
    // beyond `cut` the profile vanishes at x + h
    let tail = -f0 * cut.powf(-beta) / beta - f1 * cut.powf(1.0 - beta) / (beta - 1.0);
    Ok(c * x * (taylor + body + tail))
}

/// `S_b F (nu) = F(b nu)`.
pub fn scaled_functional<'a>(f: &'a MeasureFn<'a>, b: f64) -> impl Fn(&DiscreteMeasure) -> Result<f64> + Sync + 'a {
    move |nu: &DiscreteMeasure| f(&nu.scaled(b))
}

/// Both sides of `F_alpha F(nu) = b^{-alpha} (F_alpha S_b F)(nu / b)`.
pub fn scaling_identity(
    f: &MeasureFn<'_>,
    nu: &DiscreteMeasure,
    params: &SMHParams,
    alpha: f64,
    b: f64,
    cfg: &GateauxConfig,
) -> Result<(f64, f64)> {
    let lhs = apply_g(f, nu, params, alpha, cfg)?;
    let sb = scaled_functional(f, b);
    let rhs = b.powf(-alpha) * apply_g(&sb, &nu.scaled(1.0 / b), params, alpha, cfg)?;
    Ok((lhs, rhs))
}

/// One randomized operator-identity configuration.
#[derive(Debug, Clone)]
pub struct OperatorConfig {
    pub id: String,
    pub tf: TestFunction,
    pub nu: DiscreteMeasure,
    pub pi_tilde: Partition,
    pub z: f64,
    pub params: SMHParams,
}

/// A bounded, non-symmetric pseudo-random function of label tuples.
pub fn hashed_phi(arity: usize, seed: u64) -> Phi {
    Phi::from_fn(arity, 1.0, move |a| {
        let mut h = crate::rng::splitmix(seed);
        for t in a {
            h = crate::rng::splitmix(h ^ t.0.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        2.0 * (h >> 11) as f64 / (1u64 << 53) as f64 - 1.0
    })
}

/// Randomized configurations: `p` in {1,2,3}, 1-5 atoms, a bump profile
/// around `||nu|| z`, `kappa` in [-2,2], `sigma` in [0,2], and `Lambda`
/// cycling through zero, a single atom, Beta(1.2) and Beta(1.5).
pub fn random_operator_configs(n: usize, seed: u64) -> Result<Vec<OperatorConfig>> {
    let mut rng = crate::rng::stream(seed, 0x6e6, 0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let p = 1 + i % 3;
        let n_atoms = rng.random_range(1..=5);
        let atoms: Vec<(u64, f64)> = (0..n_atoms).map(|l| (l as u64, rng.random_range(0.2..2.0))).collect();
        let nu = DiscreteMeasure::from_labels(&atoms)?;
        let z = rng.random_range(0.5..2.0);
        let x = nu.total_mass() * z;
        let center = x * rng.random_range(0.7..1.4);
        let width = center * rng.random_range(0.6..0.95);
        let mut h = Profile::from(BumpFunction::new(center, width)?);
        if rng.random::<f64>() < 0.5 {
            h.terms.push((
                rng.random_range(-1.0..1.0),
                BumpFunction::new(x * rng.random_range(1.5..3.0), x)?,
            ));
        }
        let labels: Vec<usize> = (0..p).map(|_| rng.random_range(0..p)).collect();
        let pi_tilde = Partition::from_labels(&labels);
        let lambda = match i % 4 {
            0 => LambdaSpec::zero(),
            1 => LambdaSpec::atoms(vec![(rng.random_range(0.05..0.95), rng.random_range(0.1..1.0))])?,
            2 => LambdaSpec::beta(1.2, rng.random_range(0.2..1.0))?,
            _ => LambdaSpec::beta(1.5, rng.random_range(0.2..1.0))?,
        };
        let params = SMHParams::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0), lambda)?;
        let phi = hashed_phi(p, rng.random());
        out.push(OperatorConfig {
            id: format!("op{i:02}"),
            tf: TestFunction::new(phi, h),
            nu,
            pi_tilde,
            z,
            params,
        });
    }
    Ok(out)
}

/// One report row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_diff: f64,
    pub pass: bool,
}

/// CSV with header `config_id,lhs,rhs,rel_diff,pass`.
pub fn write_report<W: Write>(rows: &[ReportRow], mut w: W) -> Result<()> {
    writeln!(w, "config_id,lhs,rhs,rel_diff,pass")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.id,
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.rel_diff),
            r.pass
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(atoms: &[(u64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::from_labels(atoms).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + b.abs())
    }

    #[test]
    fn gateaux_examples() {
        let cfg = GateauxConfig::default();
        let nu = dm(&[(1, 0.7), (2, 1.3)]);
        let mass = |v: &DiscreteMeasure| Ok(v.total_mass());
        let sq = |v: &DiscreteMeasure| Ok(v.total_mass().powi(2));
        assert!(rel(gateaux(&mass, &nu, TypePoint(1), 1, &cfg).unwrap(), 1.0) < 1e-10);
        assert!(gateaux(&mass, &nu, TypePoint(1), 2, &cfg).unwrap().abs() < 1e-6);
        assert!(rel(gateaux(&sq, &nu, TypePoint(2), 1, &cfg).unwrap(), 4.0) < 1e-9);
        assert!(rel(gateaux(&sq, &nu, TypePoint(2), 2, &cfg).unwrap(), 2.0) < 1e-6);
        // outside the support: one-sided differences
        assert!(rel(gateaux(&sq, &nu, TypePoint(9), 1, &cfg).unwrap(), 4.0) < 1e-8);
    }

    #[test]
    fn gateaux_of_monomial_matches_closed_form() {
        // F(nu) = <phi, nu^{otimes 2}> (unnormalized):
        // F'(nu; a) = int phi(a, b) + phi(b, a) nu(db)
        let cfg = GateauxConfig::default();
        let phi = hashed_phi(2, 7);
        let nu = dm(&[(0, 0.4), (1, 1.1), (2, 0.9)]);
        let f = |v: &DiscreteMeasure| -> Result<f64> {
            let mut s = 0.0;
            for &(a, ma) in v.atoms() {
                for &(b, mb) in v.atoms() {
                    s += ma * mb * phi.eval(&[a, b])?;
                }
            }
            Ok(s)
        };
        for &(a, _) in nu.atoms() {
            let want: f64 = nu
                .atoms()
                .iter()
                .map(|&(b, mb)| mb * (phi.eval(&[a, b]).unwrap() + phi.eval(&[b, a]).unwrap()))
                .sum();
            let got = gateaux(&f, &nu, a, 1, &cfg).unwrap();
            assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "{got} {want}");
            let want2 = 2.0 * phi.eval(&[a, a]).unwrap();
            let got2 = gateaux(&f, &nu, a, 2, &cfg).unwrap();
            assert!((got2 - want2).abs() < 1e-5, "{got2} {want2}");
        }
    }

    #[test]
    fn apply_g_examples() {
        let cfg = GateauxConfig::default();
        let nu = dm(&[(1, 0.5), (2, 1.5)]);
        let mass = |v: &DiscreteMeasure| Ok(v.total_mass());
        let p = SMHParams::new(0.8, 1.3, LambdaSpec::zero()).unwrap();
        assert!(rel(apply_g(&mass, &nu, &p, 0.0, &cfg).unwrap(), 1.6) < 1e-7);
        // single atom at 1/2: 4 [h(2x) - h(x) - x log 2 h'(x)]
        let h = Profile::from(BumpFunction::new(2.5, 2.0).unwrap());
        let f = |v: &DiscreteMeasure| Ok(h.value(v.total_mass()));
        let p = SMHParams::new(0.0, 0.0, LambdaSpec::atoms(vec![(0.5, 1.0)]).unwrap()).unwrap();
        let x = 2.0;
        let want = 4.0 * (h.value(2.0 * x) - h.value(x) - x * 2f64.ln() * h.d1(x));
        assert!(rel(apply_g(&f, &nu, &p, 0.0, &cfg).unwrap(), want) < 1e-8);
    }

    #[test]
    fn apply_m_reductions() {
        let h = Profile::from(BumpFunction::new(2.0, 1.5).unwrap());
        let nu = dm(&[(1, 0.5), (2, 1.0)]);
        let x: f64 = 1.5 * 1.2;
        // sigma = Lambda = 0: kappa x h'(x) H_pi
        let tf = TestFunction::new(Phi::all_equal(2), h.clone());
        let pi = Partition::singletons(2);
        let hp = tf.h_pi(&nu, &pi).unwrap();
        let p = SMHParams::new(0.7, 0.0, LambdaSpec::zero()).unwrap();
        assert!(rel(apply_m(&tf, &nu, &pi, 1.2, &p).unwrap(), 0.7 * x * h.d1(x) * hp) < 1e-14);
        // p = 2, singletons, Lambda = 0: extra sigma^2 h [H_merged - H_pi]
        let p = SMHParams::new(0.0, 0.9, LambdaSpec::zero()).unwrap();
        let merged = tf.h_pi(&nu, &Partition::one_block(2)).unwrap();
        let want = 0.5 * 0.81 * x * x * h.d2(x) * hp + 0.81 * h.value(x) * (merged - hp);
        assert!(rel(apply_m(&tf, &nu, &pi, 1.2, &p).unwrap(), want) < 1e-14);
        // phi = 1, p = 1: the total-mass generator at alpha = 0
        let tf1 = TestFunction::new(Phi::constant(1, 1.0), h.clone());
        let p = SMHParams::new(0.4, 0.6, LambdaSpec::beta(1.5, 0.7).unwrap()).unwrap();
        let m = apply_m(&tf1, &nu, &Partition::singletons(1), 1.2, &p).unwrap();
        let k = apply_pssmp_generator(&h, x, 0.0, &p).unwrap();
        assert!(rel(m, k) < 1e-9, "{m} {k}");
    }

    #[test]
    fn operator_identity_small_battery() {
        let cfg = GateauxConfig::default();
        for c in random_operator_configs(12, 11).unwrap() {
            let r = check_operator_duality(&c.tf, &c.nu, &c.pi_tilde, c.z, &c.params, &cfg).unwrap();
            assert!(r.pass, "{}: {r:?} worst {}", c.id, r.worst_family());
        }
    }

    #[test]
    fn pssmp_matches_measure_generator() {
        let cfg = GateauxConfig::default();
        let f = Profile::from(BumpFunction::new(3.0, 2.5).unwrap());
        let nu = dm(&[(1, 1.0), (2, 1.5)]);
        let fm = |v: &DiscreteMeasure| Ok(f.value(v.total_mass()));
        for lambda in [
            LambdaSpec::zero(),
            LambdaSpec::atoms(vec![(0.3, 0.5), (0.8, 0.2)]).unwrap(),
            LambdaSpec::beta(1.5, 1.0).unwrap(),
        ] {
            let p = SMHParams::new(-0.4, 0.7, lambda).unwrap();
            for alpha in [0.0, 1.0, -0.5] {
                let a = apply_g(&fm, &nu, &p, alpha, &cfg).unwrap();
                let b = apply_pssmp_generator(&f, 2.5, alpha, &p).unwrap();
                assert!(rel(a, b) < 1e-6, "{a} {b}");
            }
        }
        // alpha = 1, Lambda = 0: kappa f' + (s^2/2) x f''
        let p = SMHParams::new(0.3, 0.5, LambdaSpec::zero()).unwrap();
        let want = 0.3 * f.d1(2.0) + 0.125 * 2.0 * f.d2(2.0);
        assert!(rel(apply_pssmp_generator(&f, 2.0, 1.0, &p).unwrap(), want) < 1e-14);
        // an atom of Lambda at zeta gives a Theta atom at 1/(1-zeta)
        let p = SMHParams::new(0.0, 0.0, LambdaSpec::atoms(vec![(0.75, 0.5)]).unwrap()).unwrap();
        let want = 0.5 / 0.5625 * (f.value(8.0) - f.value(2.0));
        assert!(rel(apply_pssmp_generator(&f, 2.0, 0.0, &p).unwrap(), want) < 1e-14);
    }

    #[test]
    fn beta_stable_generator_matches_csbp() {
        let cfg = GateauxConfig::default();
        let (beta, c) = (1.5, 1.0);
        let p = beta_stable_params(beta, c).unwrap();
        assert!(p.kappa.is_finite());
        let f = Profile::from(BumpFunction::new(2.0, 1.8).unwrap());
        for x in [0.8, 1.5, 2.6] {
            let nu = dm(&[(1, 0.4 * x), (3, 0.6 * x)]);
            let fm = |v: &DiscreteMeasure| Ok(f.value(v.total_mass()));
            let a = apply_g(&fm, &nu, &p, beta - 1.0, &cfg).unwrap();
            let b = stable_csbp_generator(&f, x, beta, c).unwrap();
            assert!(rel(a, b) < 1e-4, "x={x}: {a} {b}");
        }
        assert!(matches!(beta_stable_params(1.0, 1.0), Err(Error::Divergence(_))));
    }

    #[test]
    fn scaling_identity_holds() {
        let cfg = GateauxConfig::default();
        let tf = TestFunction::new(hashed_phi(2, 3), BumpFunction::new(2.0, 1.7).unwrap());
        let pi = Partition::singletons(2);
        let f = |v: &DiscreteMeasure| eval_g(&tf, v, &pi, 1.1);
        let nu = dm(&[(0, 0.6), (1, 1.2)]);
        let p = SMHParams::new(0.5, 0.8, LambdaSpec::beta(1.2, 0.6).unwrap()).unwrap();
        for (alpha, b) in [(0.7, 2.0), (-0.4, 0.5), (1.0, 3.0)] {
            let (l, r) = scaling_identity(&f, &nu, &p, alpha, b, &cfg).unwrap();
            assert!((l - r).abs() < 1e-6 * (1.0 + l.abs()), "{l} {r}");
        }
    }

    #[test]
    fn operators_are_linear() {
        let cfg = GateauxConfig::default();
        let h = Profile::from(BumpFunction::new(2.0, 1.5).unwrap());
        let t1 = TestFunction::new(hashed_phi(2, 1), h.clone());
        let t2 = TestFunction::new(hashed_phi(2, 2), h.clone());
        let sum = TestFunction::new(
            {
                let (a, b) = (t1.phi.clone(), t2.phi.clone());
                Phi::from_fn(2, 2.0, move |x| 2.0 * a.eval(x).unwrap() - b.eval(x).unwrap())
            },
            h,
        );
        let nu = dm(&[(0, 0.6), (1, 1.2)]);
        let pi = Partition::singletons(2);
        let p = SMHParams::new(0.5, 0.8, LambdaSpec::atoms(vec![(0.3, 0.7)]).unwrap()).unwrap();
        let m = |t: &TestFunction| apply_m(t, &nu, &pi, 1.0, &p).unwrap();
        assert!((m(&sum) - 2.0 * m(&t1) + m(&t2)).abs() < 1e-12);
        let g = |t: &TestFunction| {
            let f = |v: &DiscreteMeasure| eval_g(t, v, &pi, 1.0);
            apply_g(&f, &nu, &p, 0.0, &cfg).unwrap()
        };
        assert!((g(&sum) - 2.0 * g(&t1) + g(&t2)).abs() < 1e-7);
    }

    #[test]
    fn tv_continuity_in_lambda() {
        let cfg = GateauxConfig::default();
        let f = Profile::from(BumpFunction::new(2.0, 1.5).unwrap());
        let nu = dm(&[(0, 0.8), (1, 1.0)]);
        let fm = |v: &DiscreteMeasure| Ok(f.value(v.total_mass()));
        let base = LambdaSpec::atoms(vec![(0.3, 1.0)]).unwrap();
        let g0 = apply_g(&fm, &nu, &SMHParams::new(0.1, 0.2, base.clone()).unwrap(), 0.0, &cfg).unwrap();
        let mut ratios = Vec::new();
        for d in [0.1, 0.01, 0.001] {
            let other = LambdaSpec::atoms(vec![(0.3, 1.0 + d)]).unwrap();
            let tv = base.total_variation(&other).unwrap();
            let g1 = apply_g(&fm, &nu, &SMHParams::new(0.1, 0.2, other).unwrap(), 0.0, &cfg).unwrap();
            ratios.push((g1 - g0).abs() / tv);
        }
        assert!(ratios.iter().all(|r| r.is_finite()));
        assert!((ratios[0] - ratios[2]).abs() < 1e-3 * (1.0 + ratios[2]));
    }
}
