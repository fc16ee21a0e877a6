//! The reproduction measure `Lambda`, the model parameters `(kappa, sigma,
//! Lambda)` and everything derived from them: merger rates, the jump
//! compensated drift `kappa_hat`, truncations, the Levy triplet of the
//! log-mass and its characteristic exponent.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

/// Jumps of size `zeta <= COMPENSATION_CUTOFF` are compensated.
pub const COMPENSATION_CUTOFF: f64 = 0.5;

/// Continuous (non-Kingman) part of `Lambda`, supported in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousPart {
    /// No continuous part.
    Zero,
    /// `c zeta^{1-beta} (1-zeta)^{beta-1} d zeta` on the window `(lo, hi]`.
    BetaFamily { beta: f64, c: f64, lo: f64, hi: f64 },
    /// Finitely many atoms `(zeta_i, mass_i)`.
    Atoms(Vec<(f64, f64)>),
    /// Piecewise-linear density through `(zeta, density)` nodes, on `(lo, hi]`.
    Tabulated { nodes: Vec<(f64, f64)>, lo: f64, hi: f64 },
}

/// `Lambda = kingman * delta_0 + continuous`.
///
/// `kingman` contributes `kingman` to the pairwise merger rate `beta_{j,2}`,
/// exactly like `sigma^2` does in [`SMHParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSpec {
    pub kingman: f64,
    pub continuous: ContinuousPart,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::zero()
    }
}

impl LambdaSpec {
    pub fn zero() -> Self {
        LambdaSpec {
            kingman: 0.0,
            continuous: ContinuousPart::Zero,
        }
    }

    pub fn beta(beta: f64, c: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) || !(c > 0.0) {
            return Err(Error::Domain(format!(
                "Beta family needs beta in (0,2), c > 0; got {beta}, {c}"
            )));
        }
        Ok(LambdaSpec {
            kingman: 0.0,
            continuous: ContinuousPart::BetaFamily {
                beta,
                c,
                lo: 0.0,
                hi: 1.0,
            },
        })
    }

    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(z, m) in &atoms {
            if !(z > 0.0 && z < 1.0) || !(m > 0.0) {
                return Err(Error::Domain(format!(
                    "atom ({z}, {m}) must have zeta in (0,1), mass > 0"
                )));
            }
        }
        Ok(LambdaSpec {
            kingman: 0.0,
            continuous: if atoms.is_empty() {
                ContinuousPart::Zero
            } else {
                ContinuousPart::Atoms(atoms)
            },
        })
    }

    pub fn tabulated(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Domain("tabulated density needs at least two nodes".into()));
        }
        let mut nodes = nodes;
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(z, d) in &nodes {
            if !(0.0..=1.0).contains(&z) || !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Domain(format!("tabulated node ({z}, {d})")));
            }
        }
        let (lo, hi) = (nodes[0].0, nodes[nodes.len() - 1].0);
        Ok(LambdaSpec {
            kingman: 0.0,
            continuous: ContinuousPart::Tabulated { nodes, lo, hi },
        })
    }

    pub fn with_kingman(mut self, kingman: f64) -> Self {
        self.kingman = kingman;
        self
    }

    /// Density of the continuous part at `zeta` (zero for atoms).
    pub fn density(&self, zeta: f64) -> f64 {
        match &self.continuous {
            ContinuousPart::BetaFamily { beta, c, lo, hi } => {
                if zeta > *lo && zeta <= *hi && zeta > 0.0 && zeta < 1.0 {
                    c * zeta.powf(1.0 - beta) * (1.0 - zeta).powf(beta - 1.0)
                } else {
                    0.0
                }
            }
            ContinuousPart::Tabulated { nodes, lo, hi } => {
                if zeta <= *lo || zeta > *hi {
                    return 0.0;
                }
                let i = nodes.partition_point(|n| n.0 < zeta);
                if i == 0 {
                    return nodes[0].1;
                }
                if i >= nodes.len() {
                    return nodes[nodes.len() - 1].1;
                }
                let (x0, y0) = nodes[i - 1];
                let (x1, y1) = nodes[i];
                if x1 == x0 {
                    y1
                } else {
                    y0 + (y1 - y0) * (zeta - x0) / (x1 - x0)
                }
            }
            _ => 0.0,
        }
    }

    /// Power-law exponents of the continuous density at 0 and at 1.
    fn density_exponents(&self) -> (f64, f64) {
        match &self.continuous {
            ContinuousPart::BetaFamily { beta, .. } => (1.0 - beta, beta - 1.0),
            _ => (0.0, 0.0),
        }
    }

    fn window(&self) -> (f64, f64) {
        match &self.continuous {
            ContinuousPart::BetaFamily { lo, hi, .. } | ContinuousPart::Tabulated { lo, hi, .. } => (*lo, *hi),
            ContinuousPart::Atoms(_) | ContinuousPart::Zero => (0.0, 1.0),
        }
    }

    /// `int_{(a, b]} f(zeta) Lambda(d zeta)` over the continuous part (the
    /// Kingman atom is never included). `f_exp0` and `f_exp1` give the
    /// power-law behaviour of `f` at 0 and at 1, so singular endpoints can be
    /// removed by substitution.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, f_exp0: f64, f_exp1: f64) -> Result<f64> {
        match &self.continuous {
            ContinuousPart::Zero => Ok(0.0),
            ContinuousPart::Atoms(atoms) => Ok(atoms
                .iter()
                .filter(|&&(z, _)| z > a && z <= b)
                .map(|&(z, m)| m * f(z))
                .sum()),
            _ => {
                let (wlo, whi) = self.window();
                let lo = a.max(wlo).max(0.0);
                let hi = b.min(whi).min(1.0);
                if lo >= hi {
                    return Ok(0.0);
                }
                let (d0, d1) = self.density_exponents();
                let g = |z: f64| f(z) * self.density(z);
                integrate_two_sided(&g, lo, hi, f_exp0 + d0, f_exp1 + d1)
            }
        }
    }

    /// Total mass of the continuous part.
    pub fn continuous_mass(&self) -> Result<f64> {
        self.integrate(|_| 1.0, 0.0, 1.0, 0.0, 0.0)
    }

    /// `beta_{j,i} = int zeta^{i-2} (1-zeta)^{j-i} Lambda(d zeta)`, Kingman
    /// atom included (it contributes to `i = 2` only).
    pub fn merger_rate(&self, j: usize, i: usize) -> Result<f64> {
        if i < 2 || i > j {
            return Err(Error::Domain(format!(
                "merger rate needs 2 <= i <= j, got i={i}, j={j}"
            )));
        }
        let kingman = if i == 2 { self.kingman } else { 0.0 };
        let (ei, ej) = ((i - 2) as i32, (j - i) as i32);
        let cont = match &self.continuous {
            ContinuousPart::Zero => 0.0,
            ContinuousPart::Atoms(atoms) => atoms.iter().map(|&(z, m)| m * z.powi(ei) * (1.0 - z).powi(ej)).sum(),
            ContinuousPart::BetaFamily { beta, c, lo, hi } if *lo <= 0.0 && *hi >= 1.0 => {
                c * statrs::function::beta::beta(i as f64 - beta, (j - i) as f64 + beta)
            }
            _ => self.integrate(|z| z.powi(ei) * (1.0 - z).powi(ej), 0.0, 1.0, ei as f64, ej as f64)?,
        };
        Ok(kingman + cont)
    }

    /// Restriction of the continuous part to `(eps, 1/2]`.
    pub fn truncate(&self, eps: f64) -> LambdaSpec {
        self.restrict(eps, COMPENSATION_CUTOFF)
    }

    /// Restriction of the continuous part to `(lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> LambdaSpec {
        let lo = lo.max(0.0);
        let continuous = if lo >= hi {
            ContinuousPart::Zero
        } else {
            match &self.continuous {
                ContinuousPart::Zero => ContinuousPart::Zero,
                ContinuousPart::Atoms(atoms) => {
                    let kept: Vec<(f64, f64)> = atoms.iter().copied().filter(|&(z, _)| z > lo && z <= hi).collect();
                    if kept.is_empty() {
                        ContinuousPart::Zero
                    } else {
                        ContinuousPart::Atoms(kept)
                    }
                }
                ContinuousPart::BetaFamily {
                    beta,
                    c,
                    lo: l0,
                    hi: h0,
                } => {
                    let (nlo, nhi) = (l0.max(lo), h0.min(hi));
                    if nlo >= nhi {
                        ContinuousPart::Zero
                    } else {
                        ContinuousPart::BetaFamily {
                            beta: *beta,
                            c: *c,
                            lo: nlo,
                            hi: nhi,
                        }
                    }
                }
                ContinuousPart::Tabulated { nodes, lo: l0, hi: h0 } => {
                    let (nlo, nhi) = (l0.max(lo), h0.min(hi));
                    if nlo >= nhi {
                        ContinuousPart::Zero
                    } else {
                        ContinuousPart::Tabulated {
                            nodes: nodes.clone(),
                            lo: nlo,
                            hi: nhi,
                        }
                    }
                }
            }
        };
        LambdaSpec {
            kingman: self.kingman,
            continuous,
        }
    }

    /// Whether `zeta^{-2} Lambda(d zeta)` has finite total mass.
    pub fn is_finite_activity(&self) -> bool {
        match &self.continuous {
            ContinuousPart::Zero | ContinuousPart::Atoms(_) => true,
            ContinuousPart::BetaFamily { lo, .. } => *lo > 0.0,
            ContinuousPart::Tabulated { lo, nodes, .. } => {
                *lo > 0.0 || nodes[0].1 == 0.0 && nodes.len() > 1 && nodes[1].1 == 0.0
            }
        }
    }

    /// `int zeta^{-2} Lambda(d zeta)`, the rate of reproduction events.
    pub fn jump_intensity(&self) -> Result<f64> {
        if !self.is_finite_activity() {
            return Err(Error::Divergence(
                "zeta^-2 Lambda has infinite mass; truncate first".into(),
            ));
        }
        self.integrate(|z| z.powi(-2), 0.0, 1.0, -2.0, 0.0)
    }

    /// `int_{(0,1/2]} |log(1-zeta)| zeta^{-2} Lambda(d zeta)`.
    pub fn compensator(&self) -> Result<f64> {
        if let ContinuousPart::BetaFamily { beta, lo, .. } = &self.continuous {
            if *lo <= 0.0 && *beta >= 1.0 {
                return Err(Error::Divergence(format!(
                    "compensator integral diverges for untruncated Beta family with beta = {beta}"
                )));
            }
        }
        if let ContinuousPart::Tabulated { lo, nodes, .. } = &self.continuous {
            if *lo <= 0.0 && nodes[0].1 > 0.0 {
                return Err(Error::Divergence(
                    "compensator diverges for density positive at 0".into(),
                ));
            }
        }
        self.integrate(|z| -(-z).ln_1p() / (z * z), 0.0, COMPENSATION_CUTOFF, -1.0, 0.0)
    }

    /// Total variation distance between the continuous parts (plus the
    /// Kingman coefficients).
    pub fn total_variation(&self, other: &LambdaSpec) -> Result<f64> {
        let k = (self.kingman - other.kingman).abs();
        let atoms = |s: &LambdaSpec| match &s.continuous {
            ContinuousPart::Atoms(a) => a.clone(),
            _ => Vec::new(),
        };
        let (a1, a2) = (atoms(self), atoms(other));
        let mut atom_tv = 0.0;
        let mut locs: Vec<f64> = a1.iter().chain(&a2).map(|a| a.0).collect();
        locs.sort_by(f64::total_cmp);
        locs.dedup();
        for z in locs {
            let m1: f64 = a1.iter().filter(|a| a.0 == z).map(|a| a.1).sum();
            let m2: f64 = a2.iter().filter(|a| a.0 == z).map(|a| a.1).sum();
            atom_tv += (m1 - m2).abs();
        }
        let (d0a, _) = self.density_exponents();
        let (d0b, _) = other.density_exponents();
        let e0 = d0a.min(d0b);
        let dens = integrate_two_sided(&|z| (self.density(z) - other.density(z)).abs(), 0.0, 1.0, e0, -0.5)?;
        Ok(k + atom_tv + dens)
    }

    /// Builds a sampler for `zeta` under the normalized `zeta^{-2} Lambda`.
    pub fn jump_sampler(&self) -> Result<JumpSampler> {
        JumpSampler::new(self)
    }
}

/// Integrates on `[lo, hi]` with power-law behaviour `e0` at 0 and `e1` at 1;
/// splits in the middle and removes each singular end by substitution.
fn integrate_two_sided<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, e0: f64, e1: f64) -> Result<f64> {
    let tol = Tolerance::default();
    let mid = 0.5 * (lo + hi);
    let left = if lo == 0.0 && e0 < 0.0 {
        quadrature::integrate_singular_left(f, 0.0, mid, e0, tol)?
    } else {
        quadrature::integrate(f, lo, mid, tol)?
    };
    let right = if hi == 1.0 && e1 < 0.0 {
        quadrature::integrate_singular_left(|w| f(1.0 - w), 0.0, 1.0 - mid, e1, tol)?
    } else {
        quadrature::integrate(f, mid, hi, tol)?
    };
    Ok(left + right)
}

/// Model parameters `(kappa, sigma, Lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SMHParams {
    pub kappa: f64,
    pub sigma: f64,
    pub lambda: LambdaSpec,
}

impl SMHParams {
    pub fn new(kappa: f64, sigma: f64, lambda: LambdaSpec) -> Result<Self> {
        if !(sigma >= 0.0) || !kappa.is_finite() || !(lambda.kingman >= 0.0) {
            return Err(Error::Domain(format!(
                "kappa={kappa}, sigma={sigma}, kingman={}",
                lambda.kingman
            )));
        }
        Ok(SMHParams { kappa, sigma, lambda })
    }

    /// Pairwise Kingman rate of the dual coalescent: `sigma^2 + Lambda({0})`.
    pub fn pair_rate(&self) -> f64 {
        self.sigma * self.sigma + self.lambda.kingman
    }

    /// Diffusion coefficient of the log-mass, `sqrt(pair_rate)`.
    pub fn sigma_eff(&self) -> f64 {
        self.pair_rate().sqrt()
    }

    /// Same parameters with the continuous part truncated to `(eps, 1/2]`,
    /// unless it already has finite activity (atoms keep their large jumps).
    pub fn finite_activity(&self, eps: f64) -> SMHParams {
        let lambda = match &self.lambda.continuous {
            ContinuousPart::Zero | ContinuousPart::Atoms(_) => self.lambda.clone(),
            _ if self.lambda.is_finite_activity() => self.lambda.clone(),
            _ => self.lambda.truncate(eps),
        };
        SMHParams { lambda, ..self.clone() }
    }
}

/// `kappa_hat = kappa - int_{(0,1/2]} |log(1-zeta)| zeta^{-2} Lambda(d zeta)`.
pub fn kappa_hat(params: &SMHParams) -> Result<f64> {
    Ok(params.kappa - params.lambda.compensator()?)
}

/// Characteristic triplet of the log-mass Levy process.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    /// `kappa + d` with `d = -sigma^2 / 2`.
    pub drift: f64,
    pub gaussian_sigma: f64,
    /// Jumps are `-log(1-zeta)` at intensity `zeta^{-2} Lambda(d zeta)`,
    /// compensated on `zeta <= 1/2`. The Kingman coefficient is ignored.
    pub jump_spec: LambdaSpec,
}

impl LevyTriplet {
    pub fn new(drift: f64, gaussian_sigma: f64, jump_spec: LambdaSpec) -> Self {
        LevyTriplet {
            drift,
            gaussian_sigma,
            jump_spec: LambdaSpec {
                kingman: 0.0,
                ..jump_spec
            },
        }
    }
}

pub fn levy_triplet(params: &SMHParams) -> LevyTriplet {
    let s = params.sigma_eff();
    LevyTriplet::new(params.kappa - 0.5 * s * s, s, params.lambda.clone())
}

/// `Psi(theta)` with `E[exp(i theta xi_t)] = exp(-t Psi(theta))`, `xi_0 = 0`.
pub fn levy_exponent(theta: f64, triplet: &LevyTriplet) -> Result<Complex64> {
    let s = triplet.gaussian_sigma;
    let mut psi = Complex64::new(0.5 * s * s * theta * theta, -triplet.drift * theta);
    if theta == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let lam = &triplet.jump_spec;
    // 1 - cos(theta y), y = -log(1 - zeta)
    let re = |z: f64| {
        let y = -(-z).ln_1p();
        let half = (0.5 * theta * y).sin();
        2.0 * half * half / (z * z)
    };
    // -sin(theta y) + theta y 1{zeta <= 1/2}
    let im = |z: f64| {
        let y = -(-z).ln_1p();
        let ty = theta * y;
        let v = if z <= COMPENSATION_CUTOFF {
            if ty.abs() < 1e-3 {
                ty * ty * ty / 6.0 - ty.powi(5) / 120.0
            } else {
                ty - ty.sin()
            }
        } else {
            -ty.sin()
        };
        v / (z * z)
    };
    let r = lam.integrate(re, 0.0, 1.0, 0.0, -0.1)?;
    let i = lam.integrate(im, 0.0, 1.0, 1.0, -0.1)?;
    psi += Complex64::new(r, i);
    Ok(psi)
}

/// Exact sampler for `zeta` distributed as `zeta^{-2} Lambda(d zeta) / intensity`.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    intensity: f64,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Empty,
    Atoms {
        cum: Vec<f64>,
        zetas: Vec<f64>,
    },
    Cells {
        spec: LambdaSpec,
        cells: Vec<Cell>,
        cum: Vec<f64>,
    },
}

/// Piece of the support on which the target density is dominated by a
/// power law `amp * zeta^k`.
#[derive(Debug, Clone)]
struct Cell {
    lo: f64,
    hi: f64,
    k: f64,
    amp: f64,
    bound: f64,
}

const SAMPLER_CELLS: usize = 400;

impl JumpSampler {
    fn new(spec: &LambdaSpec) -> Result<Self> {
        let intensity = spec.jump_intensity()?;
        if intensity == 0.0 {
            return Ok(JumpSampler {
                intensity,
                kind: SamplerKind::Empty,
            });
        }
        match &spec.continuous {
            ContinuousPart::Zero => Ok(JumpSampler {
                intensity: 0.0,
                kind: SamplerKind::Empty,
            }),
            ContinuousPart::Atoms(atoms) => {
                let mut acc = 0.0;
                let mut cum = Vec::with_capacity(atoms.len());
                let mut zetas = Vec::with_capacity(atoms.len());
                for &(z, m) in atoms {
                    acc += m / (z * z);
                    cum.push(acc);
                    zetas.push(z);
                }
                Ok(JumpSampler {
                    intensity,
                    kind: SamplerKind::Atoms { cum, zetas },
                })
            }
            _ => {
                let (lo, hi) = spec.window();
                let (lo, hi) = (lo.max(0.0), hi.min(1.0));
                let target = |z: f64| spec.density(z) / (z * z);
                let mut cells = Vec::with_capacity(SAMPLER_CELLS);
                let mut cum = Vec::with_capacity(SAMPLER_CELLS);
                let ratio = (hi / lo).powf(1.0 / SAMPLER_CELLS as f64);
                let mut a = lo;
                let mut acc = 0.0;
                for n in 0..SAMPLER_CELLS {
                    let b = if n + 1 == SAMPLER_CELLS { hi } else { a * ratio };
                    // endpoints nudged inward so the density is evaluated inside the window
                    let (ua, ub) = (a + 1e-12 * a, b);
                    let (ga, gb) = (target(ua), target(ub));
                    let k = if ga > 0.0 && gb > 0.0 {
                        (gb / ga).ln() / (ub / ua).ln()
                    } else {
                        0.0
                    };
                    let amp = if ga > 0.0 {
                        ga / ua.powf(k)
                    } else {
                        gb.max(1e-300) / ub.powf(k)
                    };
                    let mut bound: f64 = 1.0;
                    for s in 0..=32 {
                        let z = ua + (ub - ua) * s as f64 / 32.0;
                        let approx = amp * z.powf(k);
                        if approx > 0.0 {
                            bound = bound.max(target(z) / approx);
                        }
                    }
                    let w = quadrature::integrate(target, a, b, Tolerance::default())?;
                    acc += w;
                    cum.push(acc);
                    cells.push(Cell {
                        lo: a,
                        hi: b,
                        k,
                        amp,
                        bound: bound * 1.001,
                    });
                    a = b;
                }
                Ok(JumpSampler {
                    intensity,
                    kind: SamplerKind::Cells {
                        spec: spec.clone(),
                        cells,
                        cum,
                    },
                })
            }
        }
    }

    /// Total rate `int zeta^{-2} Lambda(d zeta)`.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Empty => panic!("sampling from an empty jump measure"),
            SamplerKind::Atoms { cum, zetas } => {
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let i = cum.partition_point(|&c| c <= u).min(zetas.len() - 1);
                zetas[i]
            }
            SamplerKind::Cells { spec, cells, cum } => loop {
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let i = cum.partition_point(|&c| c <= u).min(cells.len() - 1);
                let c = &cells[i];
                let v: f64 = rng.random();
                let e = c.k + 1.0;
                let z = if e.abs() < 1e-12 {
                    c.lo * (c.hi / c.lo).powf(v)
                } else {
                    let (la, lb) = (c.lo.powf(e), c.hi.powf(e));
                    (la + v * (lb - la)).powf(1.0 / e)
                };
                let z = z.clamp(c.lo, c.hi);
                let accept = spec.density(z) / (z * z) / (c.bound * c.amp * z.powf(c.k));
                if rng.random::<f64>() < accept {
                    return z;
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    /// Midpoint-rule oracle on a substituted variable, independent of the
    /// Gauss-Kronrod path.
    fn oracle(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        // zeta = lo + (hi-lo) u^4 smooths power singularities at lo
        let n = 400_000;
        let mut s = 0.0;
        for k in 0..n {
            let u = (k as f64 + 0.5) / n as f64;
            let z = lo + (hi - lo) * u.powi(4);
            s += f(z) * 4.0 * (hi - lo) * u.powi(3);
        }
        s / n as f64
    }

    #[test]
    fn merger_rate_examples() {
        let l = LambdaSpec::atoms(vec![(0.5, 1.0)]).unwrap();
        assert_eq!(l.merger_rate(2, 2).unwrap(), 1.0);
        assert_eq!(l.merger_rate(3, 2).unwrap(), 0.5);
        let b = LambdaSpec::beta(1.5, 1.0).unwrap();
        let want = oracle(|z| z.powf(-0.5) * (1.0 - z).powf(0.5), 0.0, 1.0);
        assert!(close(want, std::f64::consts::FRAC_PI_2, 1e-4));
        assert!(close(b.merger_rate(2, 2).unwrap(), std::f64::consts::FRAC_PI_2, 1e-12));
        assert!(l.merger_rate(3, 1).is_err());
        assert!(l.merger_rate(3, 4).is_err());
    }

    #[test]
    fn merger_rate_quadrature_matches_closed_form() {
        let b = LambdaSpec::beta(1.5, 1.0).unwrap();
        let windowed = LambdaSpec {
            kingman: 0.0,
            continuous: ContinuousPart::BetaFamily {
                beta: 1.5,
                c: 1.0,
                lo: 0.0,
                hi: 0.999_999_999_999,
            },
        };
        for j in 2..7 {
            for i in 2..=j {
                let exact = b.merger_rate(j, i).unwrap();
                let quad = windowed.merger_rate(j, i).unwrap();
                assert!(close(quad, exact, 1e-8), "j={j} i={i} {quad} {exact}");
            }
        }
    }

    #[test]
    fn kappa_hat_examples() {
        let zero = SMHParams::new(0.0, 0.0, LambdaSpec::zero()).unwrap();
        assert_eq!(kappa_hat(&zero).unwrap(), 0.0);
        let p = SMHParams::new(0.0, 0.0, LambdaSpec::atoms(vec![(0.5, 1.0)]).unwrap()).unwrap();
        assert!(close(kappa_hat(&p).unwrap(), -4.0 * 2f64.ln(), 1e-14));
        let p = SMHParams::new(5.0, 0.0, LambdaSpec::atoms(vec![(0.25, 1.0)]).unwrap()).unwrap();
        assert!(close(kappa_hat(&p).unwrap(), 5.0 - 16.0 * (4.0f64 / 3.0).ln(), 1e-14));
        assert!((kappa_hat(&p).unwrap() - 0.397087).abs() < 1e-5);
    }

    #[test]
    fn kappa_hat_beta_divergence_and_truncation() {
        let b = LambdaSpec::beta(1.5, 1.0).unwrap();
        let p = SMHParams::new(0.0, 0.0, b.clone()).unwrap();
        assert!(matches!(kappa_hat(&p), Err(Error::Divergence(_))));
        let t = SMHParams::new(0.0, 0.0, b.truncate(0.1)).unwrap();
        let want = oracle(|z| -(-z).ln_1p() * z.powf(-2.5) * (1.0 - z).sqrt(), 0.1, 0.5);
        assert!(close(-kappa_hat(&t).unwrap(), want, 1e-6));
        // beta < 1 converges without truncation
        let small = SMHParams::new(0.0, 0.0, LambdaSpec::beta(0.5, 1.0).unwrap()).unwrap();
        let want = oracle(|z| -(-z).ln_1p() * z.powf(-1.5) * (1.0 - z).powf(-0.5), 0.0, 0.5);
        assert!(close(-kappa_hat(&small).unwrap(), want, 1e-4));
    }

    #[test]
    fn levy_triplet_examples() {
        let t = levy_triplet(&SMHParams::new(0.0, 0.0, LambdaSpec::zero()).unwrap());
        assert_eq!((t.drift, t.gaussian_sigma), (0.0, 0.0));
        let t = levy_triplet(&SMHParams::new(2.0, 0.0, LambdaSpec::atoms(vec![(0.5, 1.0)]).unwrap()).unwrap());
        assert_eq!(t.drift, 2.0);
        let t = levy_triplet(&SMHParams::new(0.0, 1.0, LambdaSpec::zero()).unwrap());
        assert_eq!((t.drift, t.gaussian_sigma), (-0.5, 1.0));
    }

    #[test]
    fn truncate_examples() {
        let l = LambdaSpec::atoms(vec![(0.25, 1.0), (0.6, 1.0)]).unwrap();
        assert_eq!(l.truncate(0.1).continuous, ContinuousPart::Atoms(vec![(0.25, 1.0)]));
        let b = LambdaSpec::beta(1.5, 1.0).unwrap().truncate(0.1);
        let got = b.jump_intensity().unwrap();
        let want = oracle(|z| z.powf(-2.5) * (1.0 - z).sqrt(), 0.1, 0.5);
        assert!(close(got, want, 1e-7), "{got} {want}");
        assert!((got - 52.0 / 3.0).abs() < 1e-7);
        assert_eq!(
            LambdaSpec::beta(1.5, 1.0).unwrap().truncate(0.5).continuous,
            ContinuousPart::Zero
        );
        assert!(LambdaSpec::beta(1.5, 1.0).unwrap().jump_intensity().is_err());
    }

    #[test]
    fn levy_exponent_examples() {
        let zero = LevyTriplet::new(0.0, 0.0, LambdaSpec::zero());
        assert_eq!(levy_exponent(1.3, &zero).unwrap(), Complex64::new(0.0, 0.0));
        let gauss = levy_triplet(&SMHParams::new(0.0, 1.0, LambdaSpec::zero()).unwrap());
        let psi = levy_exponent(1.0, &gauss).unwrap();
        assert!((psi - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        let atom = LevyTriplet::new(0.0, 0.0, LambdaSpec::atoms(vec![(0.5, 1.0)]).unwrap());
        assert_eq!(levy_exponent(0.0, &atom).unwrap(), Complex64::new(0.0, 0.0));
        // single atom: rate 4 jumps of log 2 compensated by 4 log 2
        let y = 2f64.ln();
        let want = Complex64::new(4.0 * (1.0 - y.cos()), 4.0 * (y - y.sin()));
        assert!((levy_exponent(1.0, &atom).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn jump_sampler_matches_intensity_shape() {
        let l = LambdaSpec::beta(1.5, 1.0).unwrap().truncate(0.05);
        let s = l.jump_sampler().unwrap();
        let mut rng = crate::rng::stream(3, 0, 0);
        let n = 200_000;
        let mut below = 0usize;
        for _ in 0..n {
            let z = s.sample(&mut rng);
            assert!(z > 0.05 && z <= 0.5);
            if z < 0.1 {
                below += 1;
            }
        }
        let p = l
            .truncate(0.05)
            .integrate(|z| z.powi(-2), 0.05, 0.1, -2.0, 0.0)
            .unwrap()
            / s.intensity();
        let phat = below as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((phat - p).abs() < 4.0 * se, "{phat} {p}");
    }

    proptest! {
        #[test]
        fn merger_rates_consistent(beta in 0.2f64..1.9, j in 2usize..8, pick in 0usize..8,
                                   z in 0.05f64..0.95, m in 0.1f64..3.0) {
            let i = 2 + pick % (j - 1);
            for l in [LambdaSpec::beta(beta, 1.0).unwrap(), LambdaSpec::atoms(vec![(z, m)]).unwrap().with_kingman(0.7)] {
                let lhs = l.merger_rate(j, i).unwrap();
                let rhs = l.merger_rate(j + 1, i).unwrap() + l.merger_rate(j + 1, i + 1).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
                prop_assert!(l.merger_rate(j + 1, i).unwrap() <= lhs + 1e-12);
            }
        }

        #[test]
        fn psi_symmetry(theta in -3.0f64..3.0, drift in -2.0f64..2.0, s in 0.0f64..2.0) {
            let t = LevyTriplet::new(drift, s, LambdaSpec::beta(1.5, 1.0).unwrap().truncate(0.05));
            let a = levy_exponent(theta, &t).unwrap();
            let b = levy_exponent(-theta, &t).unwrap();
            prop_assert!((a - b.conj()).norm() < 1e-9 * (1.0 + a.norm()));
        }

        #[test]
        fn truncation_tv_monotone(e1 in 0.01f64..0.2, gap in 0.001f64..0.2) {
            let l = LambdaSpec::beta(1.5, 1.0).unwrap();
            let e2 = e1 + gap;
            let full = l.truncate(0.0);
            let tv1 = full.total_variation(&l.truncate(e1)).unwrap();
            let tv2 = full.total_variation(&l.truncate(e2)).unwrap();
            prop_assert!(tv1 <= tv2 + 1e-12);
        }
    }
}
