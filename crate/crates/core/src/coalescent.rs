//! Partitions of `[p]` and the `(p, Lambda)`-coalescent.
//!
//! Elements and blocks are indexed from 0 internally; blocks are numbered
//! increasingly by their least element. CSV output is 1-based.

use std::fmt;
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::lambda::{ContinuousPart, SMHParams};

/// A partition of `{0, .., p-1}` in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    block_of: Vec<usize>,
    num_blocks: usize,
}

impl Partition {
    pub fn singletons(p: usize) -> Self {
        Partition {
            block_of: (0..p).collect(),
            num_blocks: p,
        }
    }

    pub fn one_block(p: usize) -> Self {
        Partition {
            block_of: vec![0; p],
            num_blocks: p.min(1),
        }
    }

    /// Canonicalizes an arbitrary labelling of elements by block ids.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let mut block_of = Vec::with_capacity(labels.len());
        for &l in labels {
            let id = match map.iter().find(|(k, _)| *k == l) {
                Some(&(_, v)) => v,
                None => {
                    map.push((l, map.len()));
                    map.len() - 1
                }
            };
            block_of.push(id);
        }
        Partition {
            num_blocks: map.len(),
            block_of,
        }
    }

    /// Builds a partition of `[p]` from explicit 0-based blocks.
    pub fn from_blocks(p: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; p];
        for (b, block) in blocks.iter().enumerate() {
            for &e in block {
                if e >= p || labels[e] != usize::MAX {
                    return Err(Error::Domain(format!("element {e} invalid or repeated")));
                }
                labels[e] = b;
            }
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::Domain("blocks do not cover [p]".into()));
        }
        Ok(Self::from_labels(&labels))
    }

    /// Number of elements `p`.
    pub fn len(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_of.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks];
        for (e, &b) in self.block_of.iter().enumerate() {
            out[b].push(e);
        }
        out
    }

    /// Least element of each block, in block order.
    pub fn least_elements(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_blocks);
        for (e, &b) in self.block_of.iter().enumerate() {
            if b == out.len() {
                out.push(e);
            }
        }
        out
    }

    /// Restriction to the first `p` elements.
    pub fn restrict(&self, p: usize) -> Result<Partition> {
        if p > self.len() {
            return Err(Error::Domain(format!(
                "cannot restrict a partition of [{}] to [{p}]",
                self.len()
            )));
        }
        Ok(Self::from_labels(&self.block_of[..p]))
    }

    /// `pi^{(J)}`: merges the blocks with indices in `j` into one block.
    pub fn coagulate(&self, j: &[usize]) -> Result<Partition> {
        for &b in j {
            if b >= self.num_blocks {
                return Err(Error::IndexOutOfRange {
                    index: b,
                    len: self.num_blocks,
                });
            }
        }
        if j.len() < 2 {
            return Ok(self.clone());
        }
        let target = *j.iter().min().expect("non-empty");
        let labels: Vec<usize> = self
            .block_of
            .iter()
            .map(|&b| if j.contains(&b) { target } else { b })
            .collect();
        Ok(Self::from_labels(&labels))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks = self.blocks();
        write!(f, "{{")?;
        for (i, b) in blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (k, e) in b.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", e + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

/// `pi^{(J)}` as a free function.
pub fn coagulate_subset(pi: &Partition, j: &[usize]) -> Result<Partition> {
    pi.coagulate(j)
}

/// One paintbox trial: each block participates independently with
/// probability `zeta`; participants merge if there are at least two.
pub fn paintbox_merge<R: Rng + ?Sized>(pi: &Partition, zeta: f64, rng: &mut R) -> (Partition, Vec<usize>) {
    let flagged: Vec<usize> = (0..pi.num_blocks()).filter(|_| rng.random::<f64>() < zeta).collect();
    let next = pi.coagulate(&flagged).expect("flagged indices are in range");
    (next, flagged)
}

/// `d(pi1, pi2) = 1 / max{m <= depth : pi1|[m] = pi2|[m]}`, and 0 when the
/// partitions agree up to `depth`.
pub fn partition_distance(pi1: &Partition, pi2: &Partition, depth: usize) -> Result<f64> {
    if pi1.len() < depth || pi2.len() < depth {
        return Err(Error::Domain(format!("partitions shallower than depth {depth}")));
    }
    // Canonical labels of a prefix are the prefix of the canonical labels.
    let mut agree = 0;
    for m in 1..=depth {
        if pi1.block_of[..m] == pi2.block_of[..m] {
            agree = m;
        } else {
            break;
        }
    }
    if agree == depth {
        Ok(0.0)
    } else {
        Ok(1.0 / agree.max(1) as f64)
    }
}

/// What happened at a coalescent event.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Kingman merger of blocks `i < j`.
    Pairwise(usize, usize),
    /// Multiple merger driven by a reproduction event of size `zeta`
    /// (`NaN` when the `LambdaSpec` has no closed-form posterior for `zeta`).
    Paintbox { zeta: f64, blocks: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalescentEvent {
    pub time: f64,
    pub kind: EventKind,
    pub blocks_before: usize,
    pub blocks_after: usize,
}

/// A simulated coalescent trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescentPath {
    pub initial: Partition,
    pub horizon: f64,
    pub events: Vec<CoalescentEvent>,
    states: Vec<Partition>,
}

impl CoalescentPath {
    /// Partition at time `t` (right-continuous).
    pub fn partition_at(&self, t: f64) -> &Partition {
        let n = self.events.partition_point(|e| e.time <= t);
        if n == 0 {
            &self.initial
        } else {
            &self.states[n - 1]
        }
    }

    pub fn final_partition(&self) -> &Partition {
        self.states.last().unwrap_or(&self.initial)
    }

    /// Time at which a single block remains, if reached before the horizon.
    pub fn absorption_time(&self) -> Option<f64> {
        if self.initial.num_blocks() <= 1 {
            return Some(0.0);
        }
        self.events.iter().find(|e| e.blocks_after == 1).map(|e| e.time)
    }

    /// CSV rows `time,kind,zeta,blocks_before,blocks_after`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,kind,zeta,blocks_before,blocks_after")?;
        for e in &self.events {
            let (kind, zeta) = match &e.kind {
                EventKind::Pairwise(..) => ("pairwise", String::new()),
                EventKind::Paintbox { zeta, .. } => ("paintbox", fmt_f64(*zeta)),
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(e.time),
                kind,
                zeta,
                e.blocks_before,
                e.blocks_after
            )?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.12e}")
    }
}

/// Precomputed merger rates for block counts up to `p`.
#[derive(Debug, Clone)]
pub struct RateTable {
    /// `rates[j][i]` = total rate of `i`-mergers from `j` blocks, split as
    /// (Kingman part, reproduction part).
    rates: Vec<Vec<(f64, f64)>>,
    totals: Vec<f64>,
}

impl RateTable {
    pub fn new(p: usize, params: &SMHParams) -> Result<Self> {
        let mut rates = vec![Vec::new(); p + 1];
        let mut totals = vec![0.0; p + 1];
        let cont_only = crate::lambda::LambdaSpec {
            kingman: 0.0,
            continuous: params.lambda.continuous.clone(),
        };
        for j in 2..=p {
            let mut row = vec![(0.0, 0.0); j + 1];
            for (i, slot) in row.iter_mut().enumerate().skip(2) {
                let c = binomial(j, i);
                let kingman = if i == 2 { c * params.pair_rate() } else { 0.0 };
                let repro = c * cont_only.merger_rate(j, i)?;
                if !repro.is_finite() {
                    return Err(Error::Divergence(format!("merger rate beta_({j},{i}) is infinite")));
                }
                *slot = (kingman, repro);
                totals[j] += kingman + repro;
            }
            rates[j] = row;
        }
        Ok(RateTable { rates, totals })
    }

    /// Total event rate from `j` blocks.
    pub fn total(&self, j: usize) -> f64 {
        self.totals.get(j).copied().unwrap_or(0.0)
    }

    /// Rate of `i`-mergers from `j` blocks: `C(j,i) beta_{j,i}` (+ Kingman).
    pub fn rate(&self, j: usize, i: usize) -> f64 {
        self.rates
            .get(j)
            .and_then(|r| r.get(i))
            .map(|(a, b)| a + b)
            .unwrap_or(0.0)
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Gillespie simulation of the coalescent of `pi0` with pairwise rate
/// `sigma^2 + Lambda({0})` per pair and `i`-of-`j` mergers at rate
/// `C(j,i) beta_{j,i}`, up to `horizon` or absorption.
pub fn simulate_coalescent<R: Rng + ?Sized>(
    pi0: &Partition,
    params: &SMHParams,
    horizon: f64,
    rng: &mut R,
) -> Result<CoalescentPath> {
    let table = RateTable::new(pi0.num_blocks(), params)?;
    simulate_with_table(pi0, params, &table, horizon, rng)
}

/// As [`simulate_coalescent`] with a precomputed rate table (ensemble use).
pub fn simulate_with_table<R: Rng + ?Sized>(
    pi0: &Partition,
    params: &SMHParams,
    table: &RateTable,
    horizon: f64,
    rng: &mut R,
) -> Result<CoalescentPath> {
    let mut t = 0.0;
    let mut pi = pi0.clone();
    let mut events = Vec::new();
    let mut states = Vec::new();
    loop {
        let j = pi.num_blocks();
        let total = table.total(j);
        if j <= 1 || total <= 0.0 {
            break;
        }
        t += Exp::new(total).expect("positive rate").sample(rng);
        if t > horizon {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        let mut last = (2, true);
        'pick: for i in 2..=j {
            let (k, r) = table.rates[j][i];
            for (part, is_kingman) in [(k, true), (r, false)] {
                if part <= 0.0 {
                    continue;
                }
                last = (i, is_kingman);
                if u < part {
                    chosen = Some((i, is_kingman));
                    break 'pick;
                }
                u -= part;
            }
        }
        let (i, is_kingman) = chosen.unwrap_or(last);
        let mut subset: Vec<usize> = index::sample(rng, j, i).into_vec();
        subset.sort_unstable();
        let next = pi.coagulate(&subset)?;
        let kind = if is_kingman {
            EventKind::Pairwise(subset[0], subset[1])
        } else {
            EventKind::Paintbox {
                zeta: posterior_zeta(params, j, i, rng),
                blocks: subset,
            }
        };
        events.push(CoalescentEvent {
            time: t,
            kind,
            blocks_before: j,
            blocks_after: next.num_blocks(),
        });
        states.push(next.clone());
        pi = next;
    }
    Ok(CoalescentPath {
        initial: pi0.clone(),
        horizon,
        events,
        states,
    })
}

/// Draws the size of the reproduction event behind an `i`-of-`j` merger.
fn posterior_zeta<R: Rng + ?Sized>(params: &SMHParams, j: usize, i: usize, rng: &mut R) -> f64 {
    match &params.lambda.continuous {
        ContinuousPart::Atoms(atoms) => {
            let w: Vec<f64> = atoms
                .iter()
                .map(|&(z, m)| m * z.powi(i as i32 - 2) * (1.0 - z).powi((j - i) as i32))
                .collect();
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (k, wk) in w.iter().enumerate() {
                if u < *wk {
                    return atoms[k].0;
                }
                u -= wk;
            }
            atoms[atoms.len() - 1].0
        }
        ContinuousPart::BetaFamily { beta, lo, hi, .. } if *lo <= 0.0 && *hi >= 1.0 => {
            rand_distr::Beta::new(i as f64 - beta, (j - i) as f64 + beta)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN)
        }
        _ => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda::LambdaSpec;
    use crate::stats::RunningStats;

    fn blocks(p: &Partition) -> Vec<Vec<usize>> {
        p.blocks()
    }

    #[test]
    fn coagulate_examples() {
        let s = Partition::singletons(3);
        assert_eq!(
            blocks(&coagulate_subset(&s, &[0, 2]).unwrap()),
            vec![vec![0, 2], vec![1]]
        );
        assert_eq!(coagulate_subset(&s, &[]).unwrap(), s);
        assert_eq!(coagulate_subset(&s, &[1]).unwrap(), s);
        let p = Partition::from_blocks(3, &[vec![0, 1], vec![2]]).unwrap();
        assert_eq!(blocks(&coagulate_subset(&p, &[0, 1]).unwrap()), vec![vec![0, 1, 2]]);
        assert_eq!(
            coagulate_subset(&p, &[0, 5]),
            Err(Error::IndexOutOfRange { index: 5, len: 2 })
        );
    }

    #[test]
    fn canonical_labels() {
        let p = Partition::from_labels(&[7, 3, 7, 1]);
        assert_eq!(p.block_of(), &[0, 1, 0, 2]);
        assert_eq!(p.to_string(), "{{1,3},{2},{4}}");
        assert_eq!(p.least_elements(), vec![0, 1, 3]);
        assert_eq!(p.restrict(2).unwrap().block_of(), &[0, 1]);
    }

    #[test]
    fn paintbox_two_blocks_merges_with_prob_quarter() {
        let mut rng = crate::rng::stream(11, 0, 0);
        let pi = Partition::singletons(2);
        let n = 200_000;
        let merged = (0..n)
            .filter(|_| paintbox_merge(&pi, 0.5, &mut rng).0.num_blocks() == 1)
            .count();
        let p = merged as f64 / n as f64;
        assert!((p - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt());
        let one = Partition::one_block(3);
        for _ in 0..100 {
            assert_eq!(paintbox_merge(&one, 0.9, &mut rng).0, one);
        }
    }

    #[test]
    fn distance_examples() {
        let a = Partition::from_labels(&[0, 1, 2, 3, 4]);
        assert_eq!(partition_distance(&a, &a, 5).unwrap(), 0.0);
        let b = Partition::from_labels(&[0, 0, 2, 3, 4]);
        assert_eq!(partition_distance(&a, &b, 5).unwrap(), 1.0);
        let c = Partition::from_labels(&[0, 1, 2, 3, 0]);
        assert_eq!(partition_distance(&a, &c, 5).unwrap(), 0.25);
    }

    #[test]
    fn kingman_initial_rate_and_absorption() {
        let params = SMHParams::new(0.0, 1.0, LambdaSpec::zero()).unwrap();
        let table = RateTable::new(3, &params).unwrap();
        assert_eq!(table.total(3), 3.0);
        let mut stats = RunningStats::default();
        for r in 0..20_000 {
            let mut rng = crate::rng::stream(5, 1, r);
            let path = simulate_coalescent(&Partition::singletons(6), &params, f64::INFINITY, &mut rng).unwrap();
            stats.push(path.absorption_time().unwrap());
            for w in path.events.windows(2) {
                assert!(w[0].time < w[1].time);
                assert!(w[1].blocks_after < w[1].blocks_before);
            }
        }
        let want = 2.0 * (1.0 - 1.0 / 6.0);
        assert!((stats.mean() - want).abs() < 3.5 * stats.std_err());
    }

    #[test]
    fn single_atom_pair_absorption_is_exp1() {
        let params = SMHParams::new(0.0, 0.0, LambdaSpec::atoms(vec![(0.5, 1.0)]).unwrap()).unwrap();
        let mut stats = RunningStats::default();
        for r in 0..20_000 {
            let mut rng = crate::rng::stream(6, 1, r);
            let path = simulate_coalescent(&Partition::singletons(2), &params, f64::INFINITY, &mut rng).unwrap();
            stats.push(path.absorption_time().unwrap());
            if let EventKind::Paintbox { zeta, .. } = &path.events[0].kind {
                assert_eq!(*zeta, 0.5);
            } else {
                panic!("expected a paintbox event");
            }
        }
        assert!((stats.mean() - 1.0).abs() < 3.5 * stats.std_err());
    }

    #[test]
    fn path_lookup_and_csv() {
        let params = SMHParams::new(0.0, 1.0, LambdaSpec::zero()).unwrap();
        let mut rng = crate::rng::stream(9, 0, 0);
        let path = simulate_coalescent(&Partition::singletons(4), &params, 10.0, &mut rng).unwrap();
        assert_eq!(path.partition_at(0.0), &Partition::singletons(4));
        let t1 = path.events[0].time;
        assert_eq!(path.partition_at(t1).num_blocks(), 3);
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,kind,zeta,blocks_before,blocks_after\n"));
        assert_eq!(text.lines().count(), path.events.len() + 1);
    }
}
