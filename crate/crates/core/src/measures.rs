//! Finite discrete measures on a labelled type space, the log-polar
//! decomposition, measure monomials and the duality test functions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::coalescent::Partition;
use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`ProbabilityMeasure`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest number of tuples `monomial` enumerates exactly.
pub const MONOMIAL_TUPLE_CAP: usize = 1_000_000;

/// An element of the type space, identified by an opaque label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypePoint(pub u64);

impl fmt::Display for TypePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A finite positive measure with finitely many atoms, kept in canonical
/// form: atoms sorted by label, duplicates merged, zero masses dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscreteMeasure {
    atoms: Vec<(TypePoint, f64)>,
}

impl DiscreteMeasure {
    /// The zero measure.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new<I: IntoIterator<Item = (TypePoint, f64)>>(atoms: I) -> Result<Self> {
        let mut v: Vec<(TypePoint, f64)> = atoms.into_iter().collect();
        for &(a, m) in &v {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::Domain(format!("mass {m} at atom {a}")));
            }
        }
        v.sort_by_key(|&(a, _)| a);
        let mut out: Vec<(TypePoint, f64)> = Vec::with_capacity(v.len());
        for (a, m) in v {
            match out.last_mut() {
                Some(last) if last.0 == a => last.1 += m,
                _ => out.push((a, m)),
            }
        }
        out.retain(|&(_, m)| m > 0.0);
        Ok(DiscreteMeasure { atoms: out })
    }

    /// Convenience constructor from `(label, mass)` pairs.
    pub fn from_labels(atoms: &[(u64, f64)]) -> Result<Self> {
        Self::new(atoms.iter().map(|&(l, m)| (TypePoint(l), m)))
    }

    pub fn atoms(&self) -> &[(TypePoint, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, m)| m).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass_at(&self, a: TypePoint) -> f64 {
        self.atoms
            .binary_search_by_key(&a, |&(l, _)| l)
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    /// `c * self` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> DiscreteMeasure {
        if c == 0.0 {
            return DiscreteMeasure::zero();
        }
        DiscreteMeasure {
            atoms: self.atoms.iter().map(|&(a, m)| (a, m * c)).collect(),
        }
    }

    /// `self + eps * delta_a`; `eps` may be negative as long as the mass at
    /// `a` stays non-negative (used by finite differences).
    pub fn perturbed(&self, a: TypePoint, eps: f64) -> Result<DiscreteMeasure> {
        let mut atoms = self.atoms.clone();
        match atoms.binary_search_by_key(&a, |&(l, _)| l) {
            Ok(i) => atoms[i].1 += eps,
            Err(i) => atoms.insert(i, (a, eps)),
        }
        if atoms.iter().any(|&(_, m)| m < 0.0) {
            return Err(Error::Domain(format!("perturbation {eps} at {a} is negative")));
        }
        atoms.retain(|&(_, m)| m > 0.0);
        Ok(DiscreteMeasure { atoms })
    }

    /// The normalized measure `self / ||self||`.
    pub fn normalized(&self) -> Result<ProbabilityMeasure> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(Error::ZeroMeasure);
        }
        Ok(ProbabilityMeasure(self.scaled(1.0 / m)))
    }
}

/// A [`DiscreteMeasure`] of total mass one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMeasure(DiscreteMeasure);

impl ProbabilityMeasure {
    pub fn new(mu: DiscreteMeasure) -> Result<Self> {
        let m = mu.total_mass();
        if (m - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!("total mass {m} is not 1")));
        }
        Ok(ProbabilityMeasure(mu))
    }

    /// Uniform distribution on the given labels.
    pub fn uniform(labels: &[u64]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::ZeroMeasure);
        }
        let w = 1.0 / labels.len() as f64;
        DiscreteMeasure::new(labels.iter().map(|&l| (TypePoint(l), w)))?.normalized()
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.0
    }

    pub fn atoms(&self) -> &[(TypePoint, f64)] {
        self.0.atoms()
    }

    /// Draws a label with probability proportional to its mass.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TypePoint {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(a, m) in self.atoms() {
            acc += m;
            if u < acc {
                return a;
            }
        }
        self.atoms().last().expect("probability measure has atoms").0
    }
}

/// Log-polar decomposition `mu -> (mu / ||mu||, log ||mu||)`.
pub fn log_polar(mu: &DiscreteMeasure) -> Result<(ProbabilityMeasure, f64)> {
    let m = mu.total_mass();
    if m <= 0.0 {
        return Err(Error::ZeroMeasure);
    }
    Ok((mu.normalized()?, m.ln()))
}

/// Inverse of [`log_polar`]: `(rho, xi) -> e^xi rho`.
pub fn inverse_log_polar(rho: &ProbabilityMeasure, xi: f64) -> DiscreteMeasure {
    rho.measure().scaled(xi.exp())
}

/// The reproduction jump `nu -> nu + ||nu|| zeta/(1-zeta) delta_a`.
pub fn add_scaled_atom(nu: &DiscreteMeasure, a: TypePoint, zeta: f64) -> Result<DiscreteMeasure> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::Domain(format!("zeta = {zeta} not in (0,1)")));
    }
    let m = nu.total_mass();
    if m <= 0.0 {
        return Err(Error::ZeroMeasure);
    }
    nu.perturbed(a, m * zeta / (1.0 - zeta))
}

type PhiFn = dyn Fn(&[TypePoint]) -> f64 + Send + Sync;

/// A bounded function on `p`-tuples of types.
#[derive(Clone)]
pub struct Phi {
    arity: usize,
    sup_norm: f64,
    f: Arc<PhiFn>,
}

impl fmt::Debug for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Phi")
            .field("arity", &self.arity)
            .field("sup_norm", &self.sup_norm)
            .finish_non_exhaustive()
    }
}

impl Phi {
    /// Wraps an arbitrary function; `sup_norm` must bound `|f|`.
    pub fn from_fn<F>(arity: usize, sup_norm: f64, f: F) -> Self
    where
        F: Fn(&[TypePoint]) -> f64 + Send + Sync + 'static,
    {
        Phi {
            arity,
            sup_norm,
            f: Arc::new(f),
        }
    }

    pub fn constant(arity: usize, c: f64) -> Self {
        Self::from_fn(arity, c.abs(), move |_| c)
    }

    /// `1{a_1 = a_2 = ... = a_p}`.
    pub fn all_equal(arity: usize) -> Self {
        Self::from_fn(arity, 1.0, |a| a.windows(2).all(|w| w[0] == w[1]) as u8 as f64)
    }

    /// `prod_i f_i(a_i)` with each factor tabulated on labels (missing
    /// labels take the factor's default).
    pub fn product(factors: Vec<LabelTable>) -> Self {
        let sup = factors.iter().map(LabelTable::sup_norm).product();
        let arity = factors.len();
        Self::from_fn(arity, sup, move |a| {
            factors.iter().zip(a).map(|(t, &x)| t.get(x)).product()
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn eval(&self, args: &[TypePoint]) -> Result<f64> {
        if args.len() != self.arity {
            return Err(Error::Arity {
                expected: self.arity,
                got: args.len(),
            });
        }
        Ok((self.f)(args))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, args: &[TypePoint]) -> f64 {
        (self.f)(args)
    }
}

/// A real function on labels given by a finite table and a default.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub values: Vec<(TypePoint, f64)>,
    pub default: f64,
}

impl LabelTable {
    pub fn get(&self, a: TypePoint) -> f64 {
        self.values
            .iter()
            .find(|(l, _)| *l == a)
            .map(|&(_, v)| v)
            .unwrap_or(self.default)
    }

    fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&(_, v)| v.abs())
            .fold(self.default.abs(), f64::max)
    }
}

/// `phi_pi(a_1..a_#pi) = phi(a_{pi(1)}, ..., a_{pi(p)})`, identifying the
/// coordinates of `phi` along the blocks of `pi`.
pub fn phi_pi(phi: &Phi, pi: &Partition) -> Result<Phi> {
    if pi.len() != phi.arity() {
        return Err(Error::Arity {
            expected: phi.arity(),
            got: pi.len(),
        });
    }
    let blocks: Vec<usize> = pi.block_of().to_vec();
    let inner = phi.clone();
    let p = blocks.len();
    Ok(Phi::from_fn(pi.num_blocks(), phi.sup_norm(), move |a| {
        let mut buf = [TypePoint(0); 16];
        if p <= buf.len() {
            for (slot, &b) in buf.iter_mut().zip(&blocks) {
                *slot = a[b];
            }
            inner.eval_unchecked(&buf[..p])
        } else {
            let v: Vec<TypePoint> = blocks.iter().map(|&b| a[b]).collect();
            inner.eval_unchecked(&v)
        }
    }))
}

/// Exact `<phi, rho^{otimes p}>` by enumeration of all tuples, `p = arity`.
pub fn monomial(phi: &Phi, rho: &ProbabilityMeasure) -> Result<f64> {
    let p = phi.arity();
    let atoms = rho.atoms();
    let k = atoms.len();
    let tuples = (k as f64).powi(p as i32);
    if tuples > MONOMIAL_TUPLE_CAP as f64 {
        return Err(Error::Resource(format!("{k}^{p} tuples exceed cap")));
    }
    if p == 0 {
        return Ok(phi.eval_unchecked(&[]));
    }
    let mut idx = vec![0usize; p];
    let mut args: Vec<TypePoint> = vec![atoms[0].0; p];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for (slot, &i) in args.iter_mut().zip(&idx) {
            *slot = atoms[i].0;
            w *= atoms[i].1;
        }
        total += w * phi.eval_unchecked(&args);
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == p {
                return Ok(total);
            }
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Monte Carlo estimate of `<phi, rho^{otimes p}>` with its standard error.
pub fn monomial_mc<R: Rng + ?Sized>(phi: &Phi, rho: &ProbabilityMeasure, samples: usize, rng: &mut R) -> (f64, f64) {
    let mut args = vec![TypePoint(0); phi.arity()];
    let mut stats = crate::stats::RunningStats::default();
    for _ in 0..samples.max(2) {
        for slot in args.iter_mut() {
            *slot = rho.sample(rng);
        }
        stats.push(phi.eval_unchecked(&args));
    }
    (stats.mean(), stats.std_err())
}

/// Exact enumeration below [`MONOMIAL_TUPLE_CAP`], Monte Carlo above it.
/// The second component is the standard error (zero when exact).
pub fn monomial_or_mc<R: Rng + ?Sized>(
    phi: &Phi,
    rho: &ProbabilityMeasure,
    mc_samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    match monomial(phi, rho) {
        Ok(v) => (v, 0.0),
        Err(_) => monomial_mc(phi, rho, mc_samples, rng),
    }
}

/// Smooth compactly supported bump on `(c - w, c + w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpFunction {
    pub center: f64,
    pub half_width: f64,
}

impl BumpFunction {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && center - half_width > 0.0) {
            return Err(Error::Domain(format!(
                "bump support ({}, {}) must lie in (0, inf)",
                center - half_width,
                center + half_width
            )));
        }
        Ok(BumpFunction { center, half_width })
    }

    fn local(&self, x: f64) -> Option<f64> {
        let u = (x - self.center) / self.half_width;
        (u.abs() < 1.0).then_some(u)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.local(x) {
            Some(u) => (-1.0 / (1.0 - u * u)).exp(),
            None => 0.0,
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self.local(x) {
            Some(u) => {
                let s = 1.0 - u * u;
                let g1 = -2.0 * u / (s * s);
                (-1.0 / s).exp() * g1 / self.half_width
            }
            None => 0.0,
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self.local(x) {
            Some(u) => {
                let s = 1.0 - u * u;
                let g1 = -2.0 * u / (s * s);
                let g2 = -2.0 / (s * s) - 8.0 * u * u / (s * s * s);
                (-1.0 / s).exp() * (g1 * g1 + g2) / (self.half_width * self.half_width)
            }
            None => 0.0,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }
}

/// A finite linear combination of bumps; the family used for the mass
/// profile `h` of the duality test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub terms: Vec<(f64, BumpFunction)>,
}

impl From<BumpFunction> for Profile {
    fn from(b: BumpFunction) -> Self {
        Profile { terms: vec![(1.0, b)] }
    }
}

impl Profile {
    pub fn value(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, b)| c * b.value(x)).sum()
    }
    pub fn d1(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, b)| c * b.d1(x)).sum()
    }
    pub fn d2(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, b)| c * b.d2(x)).sum()
    }
    pub fn sup_norm(&self) -> f64 {
        // each bump peaks at e^{-1}
        self.terms.iter().map(|(c, _)| c.abs()).sum::<f64>() * (-1.0f64).exp()
    }
}

/// The test function `G(nu, pi, z) = h(||nu|| z) <phi_pi, (nu/||nu||)^{otimes p}>`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub phi: Phi,
    pub h: Profile,
}

impl TestFunction {
    pub fn new(phi: Phi, h: impl Into<Profile>) -> Self {
        TestFunction { phi, h: h.into() }
    }

    pub fn p(&self) -> usize {
        self.phi.arity()
    }

    /// `H_pi(nu) = <phi_pi, rho^{otimes #pi}>`.
    pub fn h_pi(&self, nu: &DiscreteMeasure, pi: &Partition) -> Result<f64> {
        let rho = nu.normalized()?;
        monomial(&phi_pi(&self.phi, pi)?, &rho)
    }
}

/// Evaluates `G_{p,phi,h}(nu, pi_tilde, z)`; `pi_tilde` is restricted to `[p]`.
pub fn eval_g(tf: &TestFunction, nu: &DiscreteMeasure, pi_tilde: &Partition, z: f64) -> Result<f64> {
    let m = nu.total_mass();
    if m <= 0.0 {
        return Err(Error::ZeroMeasure);
    }
    if !(z > 0.0) {
        return Err(Error::Domain(format!("z = {z} must be positive")));
    }
    let pi = pi_tilde.restrict(tf.p())?;
    let hv = tf.h.value(m * z);
    if hv == 0.0 {
        return Ok(0.0);
    }
    Ok(hv * tf.h_pi(nu, &pi)?)
}
