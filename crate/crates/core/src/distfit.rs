//! Impostor-distance distributions `P_s(x)`, Gaussian fits, entropy, and the
//! standard normal CDF.
//!
//! `P_s(x)` is the population-averaged probability that a template drawn
//! from a uniformly chosen user lies at distance strictly less than `x` from
//! the probe `s`. On discrete spaces it is a left-continuous step function;
//! [`DistanceDistribution`] stores it as sorted support points with exclusive
//! prefix sums, so `P_s(v_i) = cumulative_below[i]`.
//!
//! Comparisons without any jointly available bit never accept; they are
//! carried as mass at `+inf` so the masses still add up to one.

use std::f64::consts::{E, FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::population::{exact_distribution, lane_rng, sample_probe, Population, LANE_EMPIRICAL};
use crate::sum::CompensatedSum;
use crate::template::{DistanceFn, PackedPoint, Template, TemplateShape};

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceDistribution {
    support: Vec<f64>,
    mass: Vec<f64>,
    cumulative_below: Vec<f64>,
    total: f64,
}

impl DistanceDistribution {
    /// Builds the distribution from `(distance, mass)` pairs in any order;
    /// equal distances are merged and zero masses dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().filter(|p| p.1 > 0.0).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = Vec::new();
        let mut mass = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let v = pairs[i].0;
            let mut acc = CompensatedSum::new();
            while i < pairs.len() && pairs[i].0 == v {
                acc.add(pairs[i].1);
                i += 1;
            }
            support.push(v);
            mass.push(acc.value());
        }
        let mut cumulative_below = Vec::with_capacity(mass.len());
        let mut running = CompensatedSum::new();
        for m in &mass {
            cumulative_below.push(running.value());
            running.add(*m);
        }
        DistanceDistribution {
            support,
            mass,
            cumulative_below,
            total: running.value(),
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn cumulative_below(&self) -> &[f64] {
        &self.cumulative_below
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `P(D < x)`.
    pub fn p_below(&self, x: f64) -> f64 {
        let idx = self.support.partition_point(|v| *v < x);
        if idx == self.support.len() {
            self.total
        } else {
            self.cumulative_below[idx]
        }
    }

    /// Mass at distances that never accept (no comparable bits).
    pub fn incomparable_mass(&self) -> f64 {
        match self.support.last() {
            Some(v) if v.is_infinite() => *self.mass.last().unwrap(),
            _ => 0.0,
        }
    }
}

/// Population-averaged template distribution, merged by template.
#[derive(Clone, Debug)]
pub(crate) struct PooledTable {
    pub entries: Vec<(PackedPoint, f64)>,
}

impl PooledTable {
    pub fn build(pop: &Population) -> Result<Self> {
        pop.check_exact()?;
        let tables = pop
            .users()
            .iter()
            .map(|u| exact_distribution(u, pop.space()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_tables(pop.shape(), pop.n(), tables.iter().map(|t| t.entries())))
    }

    pub fn from_tables<'a>(
        shape: TemplateShape,
        n: usize,
        tables: impl Iterator<Item = &'a [(u64, f64)]>,
    ) -> Self {
        let mut all: Vec<(u64, f64)> = tables.flat_map(|t| t.iter().copied()).collect();
        all.sort_by_key(|e| e.0);
        let mut entries = Vec::new();
        let mut i = 0;
        while i < all.len() {
            let idx = all[i].0;
            let mut acc = CompensatedSum::new();
            while i < all.len() && all[i].0 == idx {
                acc.add(all[i].1);
                i += 1;
            }
            entries.push((shape.packed(idx), acc.value() / n as f64));
        }
        PooledTable { entries }
    }

    pub fn distribution(&self, distance: DistanceFn, probe: PackedPoint) -> Result<DistanceDistribution> {
        let pairs = self
            .entries
            .iter()
            .map(|&(t, w)| Ok((packed_distance(distance, probe, t)?, w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DistanceDistribution::from_pairs(pairs))
    }
}

/// Distance used inside distributions: `+inf` for incomparable pairs.
#[inline]
pub(crate) fn packed_distance(distance: DistanceFn, a: PackedPoint, b: PackedPoint) -> Result<f64> {
    match distance.compare_packed(a, b) {
        Ok(c) => Ok(c.distance),
        Err(Error::NoComparableBits) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn template_distance(distance: DistanceFn, a: &Template, b: &Template) -> Result<f64> {
    match distance.compare(a, b) {
        Ok(c) => Ok(c.distance),
        Err(Error::NoComparableBits) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Exact `P_s` by enumerating every user's template distribution.
pub fn p_s_exact(s: &Template, pop: &Population) -> Result<DistanceDistribution> {
    if pop.is_score() {
        return Err(Error::NotApplicable(
            "score-model distance distributions are continuous; use the Gaussian parameters".into(),
        ));
    }
    let shape = pop.shape();
    let probe = shape.packed(shape.index_of(s)?);
    PooledTable::build(pop)?.distribution(pop.distance(), probe)
}

/// Monte Carlo estimate of `P_s` from `samples` draws of (user, template).
pub fn p_s_empirical(
    s: &Template,
    pop: &Population,
    samples: u64,
    seed: u64,
) -> Result<DistanceDistribution> {
    if samples == 0 {
        return Err(Error::InvalidConfig("samples must be at least 1".into()));
    }
    pop.shape().check(s)?;
    let mut rng = lane_rng(seed, LANE_EMPIRICAL, 0);
    let mut draws = Vec::with_capacity(samples as usize);
    if let Template::Score(h) = s {
        let p = pop.score_params(*h)?;
        let normal = Normal::new(p.m, p.sigma).expect("validated sigma");
        for _ in 0..samples {
            draws.push(normal.sample(&mut rng));
        }
    } else {
        let n = pop.n();
        for _ in 0..samples {
            let v = rng.random_range(0..n);
            let t = sample_probe(&pop.users()[v], &mut rng);
            draws.push(template_distance(pop.distance(), s, &t)?);
        }
    }
    draws.sort_by(|a, b| a.total_cmp(b));
    let w = 1.0 / samples as f64;
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < draws.len() {
        let j = draws[i..].partition_point(|x| *x == draws[i]) + i;
        pairs.push((draws[i], (j - i) as f64 * w));
        i = j;
    }
    Ok(DistanceDistribution::from_pairs(pairs))
}

/// Moment fit of a distance distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFit {
    pub m: f64,
    pub sigma: f64,
    /// Differential entropy in bits.
    pub entropy: f64,
}

impl GaussianFit {
    pub fn new(m: f64, sigma: f64) -> Result<Self> {
        Ok(GaussianFit {
            m,
            sigma,
            entropy: entropy_gaussian(sigma)?,
        })
    }
}

pub fn fit_gaussian(dist: &DistanceDistribution) -> Result<GaussianFit> {
    if dist.support().iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit(
            "distribution has incomparable (infinite) mass".into(),
        ));
    }
    if dist.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 support points, got {}",
            dist.len()
        )));
    }
    let total = dist.total();
    let mut mean = CompensatedSum::new();
    for (v, m) in dist.support().iter().zip(dist.masses()) {
        mean.add(v * m);
    }
    let m = mean.value() / total;
    let mut var = CompensatedSum::new();
    for (v, w) in dist.support().iter().zip(dist.masses()) {
        var.add((v - m) * (v - m) * w);
    }
    let sigma = (var.value() / total).sqrt();
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::DegenerateFit(format!("standard deviation {sigma}")));
    }
    GaussianFit::new(m, sigma)
}

/// `log2(sqrt(2 pi e) * sigma)`; negative when `sigma < 1/sqrt(2 pi e)`.
pub fn entropy_gaussian(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "standard deviation must be positive and finite, got {sigma}"
        )));
    }
    Ok(((2.0 * PI * E).sqrt() * sigma).log2())
}

/// Inverse of [`entropy_gaussian`].
pub fn sigma_from_entropy(entropy: f64) -> f64 {
    entropy.exp2() / (2.0 * PI * E).sqrt()
}

/// `delta(alpha)`: standard normal CDF. Absolute error below 1e-12 on the
/// whole line; relative accuracy is kept in the lower tail.
pub fn std_normal_cdf(alpha: f64) -> f64 {
    if alpha.is_nan() {
        return f64::NAN;
    }
    let x = alpha.abs() * FRAC_1_SQRT_2;
    let tail = 0.5 * erfc_nonneg(x);
    if alpha < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Complementary error function for `x >= 0`.
///
/// Three regimes: the alternating Maclaurin series of erf below 0.5, the
/// positive-term series `erf x = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1}/(2n+1)!!`
/// below 2, and the Laplace continued fraction above.
fn erfc_nonneg(x: f64) -> f64 {
    const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
    debug_assert!(x >= 0.0);
    if x < 0.5 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for n in 1..60 {
            term *= -x2 / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        1.0 - TWO_OVER_SQRT_PI * sum
    } else if x < 2.0 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= 2.0 * x2 / (2 * n + 1) as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        1.0 - TWO_OVER_SQRT_PI * (-x2).exp() * sum
    } else if x > 27.3 {
        // below the smallest subnormal
        0.0
    } else {
        // modified Lentz on x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))
        let tiny = 1e-300;
        let mut f = x;
        let mut c = f;
        let mut d = 0.0;
        for k in 1..5000 {
            let a = k as f64 * 0.5;
            d = x + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            d = 1.0 / d;
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / (f * PI.sqrt())
    }
}
