//! Exact rates by enumeration (bit worlds) or closed form (score worlds).

use rayon::prelude::*;

use super::Attacker;
use crate::distfit::{std_normal_cdf, PooledTable};
use crate::error::{Error, Result};
use crate::matcher::{MatcherPolicy, ProbeThreshold};
use crate::population::{exact_distribution, Population, ProbabilityTable};
use crate::sum::CompensatedSum;
use crate::template::{DistanceFn, PackedPoint, Template, TemplateShape};

pub enum ExactEngine<'a> {
    Bits(BitsEngine<'a>),
    Score(ScoreEngine<'a>),
}

impl<'a> ExactEngine<'a> {
    pub fn new(pop: &'a Population, policy: &'a MatcherPolicy) -> Result<Self> {
        policy.check_compatible(pop)?;
        if pop.is_score() {
            Ok(ExactEngine::Score(ScoreEngine { pop, policy }))
        } else {
            Ok(ExactEngine::Bits(BitsEngine::new(pop, policy)?))
        }
    }

    pub fn frr_u(&self, u: usize) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => Ok(e.frr_u(u)),
            ExactEngine::Score(_) => Err(not_applicable("FRR")),
        }
    }

    pub fn frr(&self) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => Ok(e.frr()),
            ExactEngine::Score(_) => Err(not_applicable("FRR")),
        }
    }

    pub fn far_u(&self, w: usize) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => Ok(e.far_u(w)),
            ExactEngine::Score(_) => Err(not_applicable("FAR")),
        }
    }

    pub fn far_w(&self, w: &Attacker) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => e.far_w(w),
            ExactEngine::Score(_) => Err(not_applicable("FAR")),
        }
    }

    pub fn far(&self) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => Ok(e.far()),
            ExactEngine::Score(_) => Err(not_applicable("FAR")),
        }
    }

    pub fn ar_u(&self, u: usize) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => Ok(e.ar_u(u)),
            ExactEngine::Score(e) => e.ar_point(u as u32),
        }
    }

    pub fn ar_w(&self, w: &Attacker) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => e.ar_w(w),
            ExactEngine::Score(e) => e.ar_w(w),
        }
    }

    pub fn ar(&self) -> Result<f64> {
        match self {
            ExactEngine::Bits(e) => Ok(e.ar()),
            ExactEngine::Score(e) => e.ar(),
        }
    }

    /// `(WAP, argmax probe)`, ties to the lowest template index.
    pub fn wap(&self) -> Result<(f64, Template)> {
        match self {
            ExactEngine::Bits(e) => e.wap(),
            ExactEngine::Score(e) => e.wap(),
        }
    }
}

fn not_applicable(rate: &str) -> Error {
    Error::NotApplicable(format!(
        "{rate} is undefined in score-model worlds: users have no genuine-sample distribution"
    ))
}

#[inline]
fn accepts(th: &ProbeThreshold, d: DistanceFn, s: PackedPoint, t: PackedPoint) -> Result<bool> {
    Ok(th.decide(d.compare_packed(s, t))?.is_accept())
}

fn mean(values: impl IntoIterator<Item = f64>, n: usize) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.value() / n as f64
}

/// Keeps the larger value; equal values keep the lower index.
fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Enumerated bit world. Precomputes, for every template `s` in the union of
/// user supports, `A[s][v] = sum_t P(X_v = t) [accept(s, t)]` and the
/// matching rejected mass.
pub struct BitsEngine<'a> {
    pop: &'a Population,
    policy: &'a MatcherPolicy,
    shape: TemplateShape,
    tables: Vec<ProbabilityTable>,
    support: Vec<u64>,
    accept: Vec<f64>,
    reject: Vec<f64>,
    pooled: PooledTable,
}

impl<'a> BitsEngine<'a> {
    pub fn new(pop: &'a Population, policy: &'a MatcherPolicy) -> Result<Self> {
        pop.check_exact()?;
        policy.check_compatible(pop)?;
        let shape = pop.shape();
        let tables = pop
            .users()
            .iter()
            .map(|u| exact_distribution(u, pop.space()))
            .collect::<Result<Vec<_>>>()?;
        let mut support: Vec<u64> = tables
            .iter()
            .flat_map(|t| t.entries().iter().map(|e| e.0))
            .collect();
        support.sort_unstable();
        support.dedup();
        let pooled = PooledTable::from_tables(shape, pop.n(), tables.iter().map(|t| t.entries()));
        let mut engine = BitsEngine {
            pop,
            policy,
            shape,
            tables,
            support,
            accept: Vec::new(),
            reject: Vec::new(),
            pooled,
        };
        let rows = engine
            .support
            .par_iter()
            .map(|&s| engine.row(s))
            .collect::<Result<Vec<_>>>()?;
        let n = pop.n();
        engine.accept.reserve(rows.len() * n);
        engine.reject.reserve(rows.len() * n);
        for (acc, rej) in rows {
            engine.accept.extend(acc);
            engine.reject.extend(rej);
        }
        Ok(engine)
    }

    pub fn n(&self) -> usize {
        self.pop.n()
    }

    pub fn tables(&self) -> &[ProbabilityTable] {
        &self.tables
    }

    /// Accepted and rejected mass of each user's distribution against probe `s`.
    fn row(&self, s: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let th = self.policy.probe_threshold_at(self.shape, s)?;
        let d = self.pop.distance();
        let sp = self.shape.packed(s);
        let mut acc = Vec::with_capacity(self.n());
        let mut rej = Vec::with_capacity(self.n());
        for table in &self.tables {
            let (mut a, mut r) = (CompensatedSum::new(), CompensatedSum::new());
            for &(t, p) in table.entries() {
                if accepts(&th, d, sp, self.shape.packed(t))? {
                    a.add(p);
                } else {
                    r.add(p);
                }
            }
            acc.push(a.value());
            rej.push(r.value());
        }
        Ok((acc, rej))
    }

    fn row_of(&self, s: u64) -> usize {
        self.support
            .binary_search(&s)
            .expect("user support templates have precomputed rows")
    }

    pub fn frr_u(&self, u: usize) -> f64 {
        let n = self.n();
        let mut acc = CompensatedSum::new();
        for &(s, p) in self.tables[u].entries() {
            acc.add(p * self.reject[self.row_of(s) * n + u]);
        }
        acc.value()
    }

    pub fn frr(&self) -> f64 {
        mean((0..self.n()).map(|u| self.frr_u(u)), self.n())
    }

    /// Enrolled `w` against the other `n - 1` users.
    pub fn far_u(&self, w: usize) -> f64 {
        let n = self.n();
        let mut acc = CompensatedSum::new();
        for &(s, p) in self.tables[w].entries() {
            let row = self.row_of(s) * n;
            for v in (0..n).filter(|v| *v != w) {
                acc.add(p * self.accept[row + v]);
            }
        }
        acc.value() / (n - 1) as f64
    }

    pub fn far(&self) -> f64 {
        mean((0..self.n()).map(|u| self.far_u(u)), self.n())
    }

    pub fn ar_u(&self, w: usize) -> f64 {
        let n = self.n();
        let mut acc = CompensatedSum::new();
        for &(s, p) in self.tables[w].entries() {
            let row = self.row_of(s) * n;
            for v in 0..n {
                acc.add(p * self.accept[row + v]);
            }
        }
        acc.value() / n as f64
    }

    pub fn ar(&self) -> f64 {
        mean((0..self.n()).map(|u| self.ar_u(u)), self.n())
    }

    fn attacker_table(&self, w: &Attacker) -> Result<Vec<(u64, f64)>> {
        match w {
            Attacker::User(u) => Ok(self.tables[*u].entries().to_vec()),
            Attacker::PointMass(t) => Ok(vec![(self.shape.index_of(t)?, 1.0)]),
            Attacker::Model(m) => Ok(exact_distribution(m, self.pop.space())?.entries().to_vec()),
        }
    }

    /// Non-enrolled attacker against all `n` users, via per-user rows.
    fn outsider_rate(&self, table: &[(u64, f64)]) -> Result<f64> {
        let n = self.n();
        let mut acc = CompensatedSum::new();
        for &(s, p) in table {
            let computed;
            let row: &[f64] = match self.support.binary_search(&s) {
                Ok(i) => &self.accept[i * n..(i + 1) * n],
                Err(_) => {
                    computed = self.row(s)?.0;
                    &computed
                }
            };
            for a in row {
                acc.add(p * a);
            }
        }
        Ok(acc.value() / n as f64)
    }

    pub fn far_w(&self, w: &Attacker) -> Result<f64> {
        match w {
            Attacker::User(u) => Ok(self.far_u(*u)),
            _ => self.outsider_rate(&self.attacker_table(w)?),
        }
    }

    pub fn ar_w(&self, w: &Attacker) -> Result<f64> {
        match w {
            Attacker::User(u) => Ok(self.ar_u(*u)),
            _ => self.outsider_rate(&self.attacker_table(w)?),
        }
    }

    /// `AR` of a point mass on template index `s`, from the pooled table:
    /// `sum_t (1/n) sum_v P(X_v = t) [accept(s, t)]`.
    pub fn ar_point(&self, s: u64) -> Result<f64> {
        let th = self.policy.probe_threshold_at(self.shape, s)?;
        let d = self.pop.distance();
        let sp = self.shape.packed(s);
        let mut acc = CompensatedSum::new();
        for &(t, w) in &self.pooled.entries {
            if accepts(&th, d, sp, t)? {
                acc.add(w);
            }
        }
        Ok(acc.value())
    }

    /// Residual of the identity linking `AR_w` to `FRR_w` and `FAR_w`. The
    /// left side sums point-mass rates from the pooled table, the right
    /// side uses the per-user rows.
    pub fn lemma1_residual(&self, w: &Attacker) -> Result<f64> {
        let mut lhs = CompensatedSum::new();
        for (s, p) in self.attacker_table(w)? {
            lhs.add(p * self.ar_point(s)?);
        }
        let rhs = match w {
            Attacker::User(u) => {
                let n = self.n() as f64;
                (1.0 - self.frr_u(*u)) / n + (1.0 - 1.0 / n) * self.far_u(*u)
            }
            _ => self.far_w(w)?,
        };
        Ok((lhs.value() - rhs).abs())
    }

    pub fn lemma1_max_residual(&self) -> Result<f64> {
        (0..self.n())
            .map(|u| self.lemma1_residual(&Attacker::User(u)))
            .try_fold(0.0f64, |m, r| Ok(m.max(r?)))
    }

    pub fn wap(&self) -> Result<(f64, Template)> {
        let count = self.shape.count() as u64;
        let (value, index) = (0..count)
            .into_par_iter()
            .map(|s| Ok::<_, Error>((self.ar_point(s)?, s)))
            .try_reduce(|| (f64::NEG_INFINITY, u64::MAX), |a, b| Ok(better(a, b)))?;
        Ok((value, self.shape.at_index(index)))
    }
}

/// Score-model world: a point mass on handle `h` is accepted with
/// probability `Phi((tau_h - m_h) / sigma_h)`.
pub struct ScoreEngine<'a> {
    pop: &'a Population,
    policy: &'a MatcherPolicy,
}

impl ScoreEngine<'_> {
    pub fn ar_point(&self, h: u32) -> Result<f64> {
        let p = self.pop.score_params(h)?;
        let tau = match self.policy.probe_threshold(&Template::Score(h))? {
            ProbeThreshold::Below(t) => t,
            ProbeThreshold::PerComparison { .. } => {
                return Err(Error::NotApplicable(
                    "daugman thresholds need bit templates".into(),
                ))
            }
        };
        Ok(std_normal_cdf((tau - p.m) / p.sigma))
    }

    pub fn ar_w(&self, w: &Attacker) -> Result<f64> {
        self.ar_point(score_handle(w)?)
    }

    pub fn ar(&self) -> Result<f64> {
        let n = self.pop.n();
        let rates = (0..n as u32).map(|h| self.ar_point(h)).collect::<Result<Vec<_>>>()?;
        Ok(mean(rates, n))
    }

    pub fn wap(&self) -> Result<(f64, Template)> {
        let TemplateShape::Score(count) = self.pop.shape() else { unreachable!() };
        let mut best = (f64::NEG_INFINITY, u64::MAX);
        for h in 0..count {
            best = better(best, (self.ar_point(h)?, h as u64));
        }
        Ok((best.0, Template::Score(best.1 as u32)))
    }
}

pub(crate) fn score_handle(w: &Attacker) -> Result<u32> {
    match w {
        Attacker::User(u) => Ok(*u as u32),
        Attacker::PointMass(Template::Score(h)) => Ok(*h),
        Attacker::Model(m) => match m.reference {
            Template::Score(h) => Ok(h),
            _ => Err(Error::Validation("score-world attacker needs a score handle".into())),
        },
        Attacker::PointMass(t) => Err(Error::Validation(format!(
            "{t} is not a score handle"
        ))),
    }
}
