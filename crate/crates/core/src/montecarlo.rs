//! Direct simulation of the doubling repeater.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, out_of_range, Result};

pub const MAX_LEVEL: u32 = 10;
/// Trials per random stream; stream `i` of a seed always covers the same trials.
pub const BATCH: u64 = 10_000;
/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489004;

/// One simulated run: elementary time steps and failed outermost swaps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub steps: u64,
    pub restarts: u64,
}

/// Alias table for `max(G1, G2)` of two independent geometric leaves over
/// `1..=t`, with one extra slot for `max > t`.
struct PairMax {
    alias: WeightedAliasIndex<f64>,
    t: usize,
    /// `P(both > t | max > t) = q^t / (2 - q^t)` as a `u64` threshold.
    both_threshold: u64,
}

/// Longest table worth building; below `MIN_TABLE_P` the leaves are drawn one by one.
const MAX_TABLE: usize = 4096;
const MIN_TABLE_P: f64 = 2e-4;

impl PairMax {
    fn new(p: f64, overflow: f64) -> Option<Self> {
        if !(MIN_TABLE_P..1.0).contains(&p) {
            return None;
        }
        let t = ((overflow.ln() / (-p).ln_1p()).ceil() as usize).clamp(1, MAX_TABLE);
        let q = 1.0 - p;
        // P(max = k) = q^(k-1) p (2 - q^(k-1) (1 + q)).
        let mut weights = Vec::with_capacity(t + 1);
        let mut qk = 1.0;
        for _ in 0..t {
            weights.push(qk * p * (2.0 - qk * (1.0 + q)));
            qk *= q;
        }
        weights.push(qk * (2.0 - qk));
        Some(Self {
            alias: WeightedAliasIndex::new(weights).ok()?,
            t,
            both_threshold: to_threshold(qk / (2.0 - qk)),
        })
    }
}

fn to_threshold(prob: f64) -> u64 {
    (prob * 2f64.powi(64)).min(u64::MAX as f64) as u64
}

/// Tabulated duration `S` of a whole level-1 block: a geometric number of
/// pair maxima, plus the announcement delay after each failed swap.
struct LevelOne {
    alias: WeightedAliasIndex<f64>,
    t: usize,
    /// `P(max = m)` for `m` in `0..=t`.
    pair_pmf: Vec<f64>,
    /// `P(S > r)` for `r` in `0..=t`.
    tail: Vec<f64>,
}

/// Mass left in the overflow slot of either table.
const OVERFLOW_MASS: f64 = 1.0 / 4096.0;

impl LevelOne {
    fn new(p: f64, a: f64, cc: bool, overflow: f64) -> Option<Self> {
        if p < MIN_TABLE_P {
            return None;
        }
        let q = 1.0 - p;
        let c = cc as usize;
        let mut pair_pmf = vec![0.0];
        let mut pmf = vec![0.0];
        let mut tail = vec![1.0];
        let mut qk = 1.0;
        while tail[tail.len() - 1] > overflow {
            if pmf.len() > MAX_TABLE {
                return None;
            }
            let k = pmf.len();
            pair_pmf.push(qk * p * (2.0 - qk * (1.0 + q)));
            qk *= q;
            // P(S = k) = a P(max = k) + (1 - a) sum_m P(max = m) P(S = k - m - c).
            let retry: f64 = (1..k.saturating_sub(c)).map(|m| pair_pmf[m] * pmf[k - m - c]).sum();
            let sk = a * pair_pmf[k] + (1.0 - a) * retry;
            pmf.push(sk);
            tail.push((tail[k - 1] - sk).max(0.0));
        }
        let t = pmf.len() - 1;
        let mut weights = pmf[1..].to_vec();
        weights.push(tail[t]);
        Some(Self {
            alias: WeightedAliasIndex::new(weights).ok()?,
            t,
            pair_pmf,
            tail,
        })
    }

    fn tail_at(&self, r: i64) -> f64 {
        if r < 0 {
            1.0
        } else {
            self.tail[r as usize]
        }
    }
}

struct Sampler {
    p: f64,
    a: f64,
    /// `1 / -ln q`, the scale turning a unit exponential into a geometric.
    scale: f64,
    a_threshold: u64,
    always: bool,
    cc: bool,
    pair: Option<PairMax>,
    level_one: Option<LevelOne>,
}

impl Sampler {
    /// Sampler drawing every leaf; `tabulated` swaps in the alias tables,
    /// which cost up to a few milliseconds to build.
    fn new(p: f64, a: f64, cc: bool, tabulated: bool) -> Self {
        Self {
            p,
            a,
            scale: if p < 1.0 { -1.0 / (-p).ln_1p() } else { 0.0 },
            // P(next_u64 < threshold) = a, up to 2^-64.
            a_threshold: to_threshold(a),
            always: a >= 1.0,
            cc,
            pair: if tabulated { PairMax::new(p, OVERFLOW_MASS) } else { None },
            level_one: if tabulated { LevelOne::new(p, a, cc, OVERFLOW_MASS) } else { None },
        }
    }

    /// `P(floor(E / -ln q) >= k) = q^k` for a unit exponential `E`.
    #[inline(always)]
    fn geometric<R: Rng>(&self, rng: &mut R) -> u64 {
        if self.p >= 1.0 {
            return 1;
        }
        let e: f64 = rng.sample(Exp1);
        (e * self.scale) as u64 + 1
    }

    /// `max` of two fresh leaves. Past the table both leaves are memoryless,
    /// so the excess is another pair maximum or a single geometric.
    #[inline(always)]
    fn pair_max<R: Rng>(&self, rng: &mut R) -> u64 {
        let Some(pair) = &self.pair else {
            return self.geometric(rng).max(self.geometric(rng));
        };
        let mut base = 0;
        loop {
            let i = pair.alias.sample(rng);
            if i < pair.t {
                return base + i as u64 + 1;
            }
            base += pair.t as u64;
            if rng.next_u64() >= pair.both_threshold {
                return base + self.geometric(rng);
            }
        }
    }

    /// `max` of two fresh leaves conditioned on exceeding `r`.
    fn pair_max_above<R: Rng>(&self, r: u64, rng: &mut R) -> u64 {
        if r == 0 {
            return self.pair_max(rng);
        }
        let qr = (1.0 - self.p).powi(r as i32);
        if rng.next_u64() < to_threshold(qr / (2.0 - qr)) {
            r + self.pair_max(rng)
        } else {
            r + self.geometric(rng)
        }
    }

    /// Duration of a level-1 block.
    #[inline(always)]
    fn level_one_steps<R: Rng>(&self, rng: &mut R) -> u64 {
        let Some(table) = &self.level_one else {
            return self.run_level_one(rng).steps;
        };
        let i = table.alias.sample(rng);
        if i < table.t {
            return i as u64 + 1;
        }
        self.level_one_beyond(table, rng)
    }

    /// `S` conditioned on `S > t`, one attempt at a time, each attempt
    /// weighted by the probability that the rest still overshoots.
    #[cold]
    fn level_one_beyond<R: Rng>(&self, table: &LevelOne, rng: &mut R) -> u64 {
        let c = self.cc as u64;
        let mut need = table.t as i64;
        let mut steps = 0;
        while need >= 0 {
            let r = need as usize;
            let mut u = rng.random::<f64>() * table.tail[r];
            let mut failed_with = None;
            for m in 1..=r {
                u -= table.pair_pmf[m] * (1.0 - self.a) * table.tail_at(r as i64 - m as i64 - c as i64);
                if u < 0.0 {
                    failed_with = Some(m as u64);
                    break;
                }
            }
            match failed_with {
                Some(m) => {
                    steps += m + c;
                    need -= (m + c) as i64;
                }
                None => {
                    steps += self.pair_max_above(r as u64, rng);
                    if self.swap(rng) {
                        return steps;
                    }
                    return steps + c + self.level_one_steps(rng);
                }
            }
        }
        steps + self.level_one_steps(rng)
    }

    fn swap<R: Rng>(&self, rng: &mut R) -> bool {
        self.always || rng.next_u64() < self.a_threshold
    }

    fn run<R: Rng>(&self, d: u32, rng: &mut R) -> Sample {
        match d {
            0 => Sample {
                steps: self.geometric(rng),
                restarts: 0,
            },
            1 => self.run_level_one(rng),
            _ => self.run_nested(d, rng),
        }
    }

    fn steps<R: Rng>(&self, d: u32, rng: &mut R) -> u64 {
        match d {
            0 => self.geometric(rng),
            1 => self.level_one_steps(rng),
            _ => self.run_nested(d, rng).steps,
        }
    }

    /// Level 1 of the recursion with the leaves drawn inline.
    #[inline]
    fn run_level_one<R: Rng>(&self, rng: &mut R) -> Sample {
        let mut k = 0;
        let mut restarts = 0;
        loop {
            k += self.pair_max(rng);
            if self.swap(rng) {
                return Sample { steps: k, restarts };
            }
            restarts += 1;
            if self.cc {
                k += 1;
            }
        }
    }

    fn run_nested<R: Rng>(&self, d: u32, rng: &mut R) -> Sample {
        let mut k = 0;
        let mut restarts = 0;
        loop {
            let k1 = self.steps(d - 1, rng);
            let k2 = self.steps(d - 1, rng);
            k += k1.max(k2);
            if self.swap(rng) {
                return Sample { steps: k, restarts };
            }
            restarts += 1;
            if self.cc {
                k += 1 << (d - 1);
            }
        }
    }
}

fn check_args(d: u32, p: f64, a: f64) -> Result<()> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    if d > MAX_LEVEL {
        return Err(out_of_range("d", d, "at most 10 levels (1024 segments)"));
    }
    Ok(())
}

/// Waiting time of a doubling repeater over `2^d` segments. With `cc`, a
/// failed swap at level `i` costs an extra `2^(i-1)` steps.
pub fn simulate_once<R: Rng>(d: u32, p: f64, a: f64, cc: bool, rng: &mut R) -> Result<u64> {
    simulate_sample(d, p, a, cc, rng).map(|s| s.steps)
}

pub fn simulate_sample<R: Rng>(d: u32, p: f64, a: f64, cc: bool, rng: &mut R) -> Result<Sample> {
    check_args(d, p, a)?;
    Ok(Sampler::new(p, a, cc, false).run(d, rng))
}

/// Count, mean and centered second moment, mergeable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub d: u32,
    pub p: f64,
    pub a: f64,
    pub cc: bool,
    pub trials: u64,
    pub seed: u64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// Half-width of the 99% normal confidence interval for the mean.
    pub ci99: f64,
    pub restarts: RunningStats,
    /// Statistics of `steps * restarts`.
    pub steps_times_restarts: RunningStats,
    #[serde(skip)]
    pub histogram: BTreeMap<u64, u64>,
}

#[derive(Default)]
struct Batch {
    steps: RunningStats,
    restarts: RunningStats,
    product: RunningStats,
    histogram: BTreeMap<u64, u64>,
}

impl Batch {
    fn merge(mut self, other: Batch) -> Batch {
        self.steps.merge(&other.steps);
        self.restarts.merge(&other.restarts);
        self.product.merge(&other.product);
        for (k, c) in other.histogram {
            *self.histogram.entry(k).or_default() += c;
        }
        self
    }
}

/// Generator for batch `index`: its state is drawn from stream `index` of a
/// ChaCha8 generator keyed by `seed`.
pub fn batch_rng(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    let mut keyed = ChaCha8Rng::seed_from_u64(seed);
    keyed.set_stream(index);
    Xoshiro256PlusPlus::from_rng(&mut keyed)
}

fn run_batch(sampler: &Sampler, d: u32, seed: u64, index: u64, trials: u64) -> Batch {
    let mut rng = batch_rng(seed, index);
    let mut batch = Batch::default();
    for _ in 0..trials {
        let s = sampler.run(d, &mut rng);
        batch.steps.push(s.steps as f64);
        batch.restarts.push(s.restarts as f64);
        batch.product.push((s.steps * s.restarts) as f64);
        *batch.histogram.entry(s.steps).or_default() += 1;
    }
    batch
}

/// Repeat [`simulate_once`] `trials` times. The result depends only on the
/// arguments, not on thread scheduling.
pub fn estimate(d: u32, p: f64, a: f64, cc: bool, trials: u64, seed: u64) -> Result<Estimate> {
    check_args(d, p, a)?;
    if trials == 0 {
        return Err(out_of_range("trials", trials, "must be at least 1"));
    }
    let sampler = Sampler::new(p, a, cc, true);
    let batches = trials.div_ceil(BATCH);
    let size = |b: u64| BATCH.min(trials - b * BATCH);

    #[cfg(feature = "parallel")]
    let results: Vec<Batch> = {
        use rayon::prelude::*;
        (0..batches)
            .into_par_iter()
            .map(|b| run_batch(&sampler, d, seed, b, size(b)))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Batch> = (0..batches).map(|b| run_batch(&sampler, d, seed, b, size(b))).collect();

    let total = results.into_iter().fold(Batch::default(), Batch::merge);
    let std_error = total.steps.std_error();
    Ok(Estimate {
        d,
        p,
        a,
        cc,
        trials,
        seed,
        mean: total.steps.mean,
        variance: total.steps.variance(),
        std_error,
        ci99: Z99 * std_error,
        restarts: total.restarts,
        steps_times_restarts: total.product,
        histogram: total.histogram,
    })
}

/// Two-column CSV `steps,count`.
pub fn write_histogram_csv<W: Write>(histogram: &BTreeMap<u64, u64>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "steps,count")?;
    for (k, c) in histogram {
        writeln!(out, "{k},{c}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_moments(samples: &[u64], chain: &crate::AbsorbingChain) {
        let (k, k2) = crate::analysis::moments(chain).unwrap();
        let mut stats = RunningStats::default();
        samples.iter().for_each(|&x| stats.push(x as f64));
        assert!((stats.mean - k[0]).abs() <= 4.0 * stats.std_error() + 1e-12, "{} vs {}", stats.mean, k[0]);
        let variance = k2[0] - k[0] * k[0];
        assert!((stats.variance() - variance).abs() <= 0.03 * variance + 1e-12);
    }

    #[test]
    fn tables_with_frequent_overflow() {
        use crate::builders::{build_fixed_scheme, build_single_segment, double_with_cc, SchemeTree};
        for (p, a, cc) in [(0.3, 0.3, false), (0.6, 0.5, true), (1.0, 0.4, true), (0.05, 0.7, false)] {
            let sampler = Sampler {
                pair: PairMax::new(p, 0.2),
                level_one: LevelOne::new(p, a, cc, 0.2),
                ..Sampler::new(p, a, cc, false)
            };
            assert!(sampler.level_one.is_some());
            let mut rng = batch_rng(3, 0);
            let pairs: Vec<u64> = (0..200_000).map(|_| sampler.pair_max(&mut rng)).collect();
            check_moments(&pairs, &build_fixed_scheme(&SchemeTree::balanced(2).unwrap(), p, 1.0).unwrap());
            let blocks: Vec<u64> = (0..200_000).map(|_| sampler.level_one_steps(&mut rng)).collect();
            let single = build_single_segment(p).unwrap();
            let chain = if cc {
                double_with_cc(&single, a, 1).unwrap()
            } else {
                build_fixed_scheme(&SchemeTree::balanced(2).unwrap(), p, a).unwrap()
            };
            check_moments(&blocks, &chain);
        }
    }

    #[test]
    fn trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(simulate_once(0, 1.0, 0.3, false, &mut rng).unwrap(), 1);
            assert_eq!(simulate_once(3, 1.0, 1.0, true, &mut rng).unwrap(), 1);
        }
        assert!(simulate_once(11, 0.5, 0.5, false, &mut rng).is_err());
        assert!(estimate(1, 0.5, 0.5, false, 0, 1).is_err());
    }

    #[test]
    fn merging_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64).collect();
        let mut all = RunningStats::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (RunningStats::default(), RunningStats::default());
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count, all.count);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.m2 - all.m2).abs() < 1e-8 * all.m2);
    }

    #[test]
    fn reproducible_and_batch_independent() {
        let e1 = estimate(2, 0.4, 0.6, true, 25_000, 9).unwrap();
        let e2 = estimate(2, 0.4, 0.6, true, 25_000, 9).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.histogram.values().sum::<u64>(), 25_000);
        let e3 = estimate(2, 0.4, 0.6, true, 25_000, 10).unwrap();
        assert_ne!(e1.mean, e3.mean);
    }

    #[test]
    fn histogram_csv() {
        let h = BTreeMap::from([(1, 5), (3, 2)]);
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "steps,count\n1,5\n3,2\n");
    }
}
