//! Threshold policies and the accept/reject rule.
//!
//! A comparison is accepted iff `d(s, t) < threshold`; equality rejects.
//! Adaptive policies take their per-probe threshold from a calibration,
//! either a precomputed table or a Monte Carlo estimate made on first use.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distfit::{fit_gaussian, p_s_empirical, sigma_from_entropy, DistanceDistribution, GaussianFit, PooledTable};
use crate::error::{Error, Result};
use crate::population::{EvalMode, Population, Space};
use crate::template::{Comparison, DistanceFn, Template, TemplateShape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    Fixed { tau: f64 },
    GeneralAdaptive { delta: f64 },
    GaussianAdaptive { alpha: f64 },
    Daugman { alpha_prime: f64 },
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyKind::Fixed { tau } if !(tau >= 0.0) => Err(Error::InvalidConfig(format!(
                "fixed threshold must be >= 0, got {tau}"
            ))),
            PolicyKind::GeneralAdaptive { delta } if !(delta > 0.0 && delta < 1.0) => {
                Err(Error::InvalidConfig(format!(
                    "delta must lie in (0, 1), got {delta}"
                )))
            }
            PolicyKind::GaussianAdaptive { alpha: x } | PolicyKind::Daugman { alpha_prime: x }
                if !x.is_finite() =>
            {
                Err(Error::InvalidConfig(format!("parameter must be finite, got {x}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(
            self,
            PolicyKind::GeneralAdaptive { .. } | PolicyKind::GaussianAdaptive { .. }
        )
    }

    pub fn family(&self) -> &'static str {
        match self {
            PolicyKind::Fixed { .. } => "fixed",
            PolicyKind::GeneralAdaptive { .. } => "general",
            PolicyKind::GaussianAdaptive { .. } => "gaussian",
            PolicyKind::Daugman { .. } => "daugman",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            PolicyKind::Fixed { tau } => tau,
            PolicyKind::GeneralAdaptive { delta } => delta,
            PolicyKind::GaussianAdaptive { alpha } => alpha,
            PolicyKind::Daugman { alpha_prime } => alpha_prime,
        }
    }

    pub fn with_parameter(family: &str, value: f64) -> Result<Self> {
        let kind = match family {
            "fixed" => PolicyKind::Fixed { tau: value },
            "general" => PolicyKind::GeneralAdaptive { delta: value },
            "gaussian" => PolicyKind::GaussianAdaptive { alpha: value },
            "daugman" => PolicyKind::Daugman { alpha_prime: value },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown policy family {other:?} (fixed, general, gaussian, daugman)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// `fixed:0.32`, `general:0.01`, `gaussian:-5.4`, `daugman:-0.35`.
    fn from_str(s: &str) -> Result<Self> {
        let (family, value) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("policy {s:?} is not <family>:<value>")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad policy parameter in {s:?}")))?;
        Self::with_parameter(family.trim(), value)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family(), self.parameter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CalibrationEntry {
    Tau { tau: f64 },
    Moments { m: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
enum Store {
    /// One entry per template, in enumeration order.
    Dense(Vec<CalibrationEntry>),
    Sparse(HashMap<Template, CalibrationEntry>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTable {
    shape: TemplateShape,
    store: Store,
}

impl CalibrationTable {
    pub fn sparse(shape: TemplateShape, entries: HashMap<Template, CalibrationEntry>) -> Self {
        CalibrationTable {
            shape,
            store: Store::Sparse(entries),
        }
    }

    pub fn get(&self, s: &Template) -> Option<CalibrationEntry> {
        match &self.store {
            Store::Dense(v) => self
                .shape
                .index_of(s)
                .ok()
                .and_then(|i| v.get(i as usize).copied()),
            Store::Sparse(m) => m.get(s).copied(),
        }
    }

    fn get_index(&self, index: u64) -> Option<CalibrationEntry> {
        match &self.store {
            Store::Dense(v) => v.get(index as usize).copied(),
            Store::Sparse(m) => m.get(&self.shape.at_index(index)).copied(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.store {
            Store::Dense(v) => v.len(),
            Store::Sparse(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries keyed by template key, sorted.
    pub fn to_map(&self) -> BTreeMap<String, CalibrationEntry> {
        match &self.store {
            Store::Dense(v) => v
                .iter()
                .enumerate()
                .map(|(i, e)| (self.shape.at_index(i as u64).key(), *e))
                .collect(),
            Store::Sparse(m) => m.iter().map(|(t, e)| (t.key(), *e)).collect(),
        }
    }
}

/// Monte Carlo calibration computed per probe on first use. Each probe's
/// estimate uses its own seed lane, so the result does not depend on the
/// order or thread in which probes are first seen.
#[derive(Debug)]
pub struct OnDemand {
    pop: Population,
    samples: u64,
    seed: u64,
    cache: RwLock<HashMap<Template, CalibrationEntry>>,
}

impl OnDemand {
    pub fn cached(&self) -> CalibrationTable {
        CalibrationTable::sparse(self.pop.shape(), self.cache.read().unwrap().clone())
    }
}

#[derive(Clone, Debug)]
pub enum Calibration {
    Table(CalibrationTable),
    OnDemand(Arc<OnDemand>),
}

#[derive(Clone, Debug)]
pub struct MatcherPolicy {
    kind: PolicyKind,
    calibration: Option<Calibration>,
}

/// Threshold rule resolved for one probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeThreshold {
    /// Accept iff distance < value.
    Below(f64),
    /// Threshold depends on the number of jointly available bits.
    PerComparison { alpha_prime: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
    /// Rejected because no bit was available in both templates.
    NoComparableBits,
}

impl Decision {
    pub fn is_accept(self) -> bool {
        self == Decision::Accept
    }
}

impl ProbeThreshold {
    #[inline]
    pub fn decide(&self, cmp: Result<Comparison>) -> Result<Decision> {
        let c = match cmp {
            Ok(c) => c,
            Err(Error::NoComparableBits) => return Ok(Decision::NoComparableBits),
            Err(e) => return Err(e),
        };
        let threshold = match *self {
            ProbeThreshold::Below(t) => t,
            ProbeThreshold::PerComparison { alpha_prime } => {
                daugman_threshold(c.available, alpha_prime)?
            }
        };
        Ok(if c.distance < threshold {
            Decision::Accept
        } else {
            Decision::Reject
        })
    }

    /// Decision on a bare distance value (score-model worlds).
    pub fn accepts_distance(&self, d: f64) -> Result<bool> {
        match *self {
            ProbeThreshold::Below(t) => Ok(d < t),
            ProbeThreshold::PerComparison { .. } => Err(Error::NotApplicable(
                "per-comparison thresholds need bit counts".into(),
            )),
        }
    }
}

impl MatcherPolicy {
    pub fn new(kind: PolicyKind) -> Result<Self> {
        kind.validate()?;
        Ok(MatcherPolicy {
            kind,
            calibration: None,
        })
    }

    pub fn fixed(tau: f64) -> Result<Self> {
        Self::new(PolicyKind::Fixed { tau })
    }

    pub fn with_table(kind: PolicyKind, table: CalibrationTable) -> Result<Self> {
        kind.validate()?;
        Ok(MatcherPolicy {
            kind,
            calibration: Some(Calibration::Table(table)),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    pub fn is_calibrated(&self) -> bool {
        !self.kind.is_adaptive() || self.calibration.is_some()
    }

    /// Snapshot of the calibration entries (table, or on-demand cache).
    pub fn calibration_table(&self) -> Option<CalibrationTable> {
        match self.calibration.as_ref()? {
            Calibration::Table(t) => Some(t.clone()),
            Calibration::OnDemand(o) => Some(o.cached()),
        }
    }

    /// Resolves the threshold of every probe in `probes` and returns the
    /// policy with a fixed table holding exactly those entries.
    pub fn materialize(&self, pop: &Population, probes: impl IntoIterator<Item = Template>) -> Result<Self> {
        if !self.kind.is_adaptive() {
            return Ok(self.clone());
        }
        let mut entries = HashMap::new();
        for s in probes {
            let entry = match &self.calibration {
                Some(Calibration::Table(t)) => t.get(&s),
                Some(Calibration::OnDemand(o)) => Some(self.on_demand_entry(o, &s)?),
                None => None,
            };
            entries.insert(s.clone(), entry.ok_or_else(|| Error::MissingCalibration(s.key()))?);
        }
        Self::with_table(self.kind, CalibrationTable::sparse(pop.shape(), entries))
    }

    /// Fails when this policy cannot run on `pop`.
    pub fn check_compatible(&self, pop: &Population) -> Result<()> {
        if let PolicyKind::Daugman { .. } = self.kind {
            if pop.distance() != DistanceFn::FractionalHamming {
                return Err(Error::InvalidConfig(format!(
                    "daugman thresholds need fractional-hamming distance, population uses {}",
                    pop.distance().name()
                )));
            }
        }
        if !self.is_calibrated() {
            return Err(Error::Calibration(format!(
                "{} policy is not calibrated",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn probe_threshold(&self, s: &Template) -> Result<ProbeThreshold> {
        match self.kind {
            PolicyKind::Fixed { tau } => Ok(ProbeThreshold::Below(tau)),
            PolicyKind::Daugman { alpha_prime } => Ok(ProbeThreshold::PerComparison { alpha_prime }),
            _ => {
                let entry = match &self.calibration {
                    None => None,
                    Some(Calibration::Table(t)) => t.get(s),
                    Some(Calibration::OnDemand(o)) => Some(self.on_demand_entry(o, s)?),
                };
                let entry = entry.ok_or_else(|| Error::MissingCalibration(s.key()))?;
                self.threshold_from_entry(entry)
            }
        }
    }

    /// [`MatcherPolicy::probe_threshold`] addressed by enumeration index.
    pub fn probe_threshold_at(&self, shape: TemplateShape, index: u64) -> Result<ProbeThreshold> {
        match (&self.kind, &self.calibration) {
            (PolicyKind::Fixed { .. } | PolicyKind::Daugman { .. }, _) => {
                self.probe_threshold(&Template::Score(0))
            }
            (_, Some(Calibration::Table(t))) => {
                let entry = t
                    .get_index(index)
                    .ok_or_else(|| Error::MissingCalibration(shape.at_index(index).key()))?;
                self.threshold_from_entry(entry)
            }
            _ => self.probe_threshold(&shape.at_index(index)),
        }
    }

    fn threshold_from_entry(&self, entry: CalibrationEntry) -> Result<ProbeThreshold> {
        match (self.kind, entry) {
            (PolicyKind::GeneralAdaptive { .. }, CalibrationEntry::Tau { tau }) => {
                Ok(ProbeThreshold::Below(tau))
            }
            (PolicyKind::GaussianAdaptive { alpha }, CalibrationEntry::Moments { m, sigma }) => {
                Ok(ProbeThreshold::Below(alpha * sigma + m))
            }
            (kind, entry) => Err(Error::Calibration(format!(
                "calibration entry {entry:?} does not fit policy {kind}"
            ))),
        }
    }

    fn on_demand_entry(&self, o: &OnDemand, s: &Template) -> Result<CalibrationEntry> {
        if let Some(e) = o.cache.read().unwrap().get(s) {
            return Ok(*e);
        }
        let seed = o.seed ^ fnv1a(s.key().as_bytes());
        let dist = p_s_empirical(s, &o.pop, o.samples, seed)?;
        let entry = entry_for(self.kind, &dist).map_err(|e| calibration_failure(s, e))?;
        // idempotent: a racing thread computes the same entry from the same lane
        o.cache.write().unwrap().insert(s.clone(), entry);
        Ok(entry)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn calibration_failure(s: &Template, e: Error) -> Error {
    match e {
        Error::DegenerateFit(msg) => Error::Calibration(format!("probe {s}: {msg}")),
        other => other,
    }
}

fn entry_for(kind: PolicyKind, dist: &DistanceDistribution) -> Result<CalibrationEntry> {
    match kind {
        PolicyKind::GeneralAdaptive { delta } => Ok(CalibrationEntry::Tau {
            tau: general_adaptive_threshold(dist, delta)?,
        }),
        PolicyKind::GaussianAdaptive { .. } => {
            let fit = fit_gaussian(dist)?;
            Ok(CalibrationEntry::Moments {
                m: fit.m,
                sigma: fit.sigma,
            })
        }
        other => Err(Error::Calibration(format!(
            "{other} policy has nothing to calibrate"
        ))),
    }
}

/// `d(s, t) < threshold(s)` with the policy resolved for `s`.
pub fn decide(policy: &MatcherPolicy, s: &Template, t: &Template, d: DistanceFn) -> Result<Decision> {
    policy.probe_threshold(s)?.decide(d.compare(s, t))
}

/// Tolerance for cumulative masses that tie with `delta`.
pub const TIE_MARGIN: f64 = 1e-12;

/// Largest support value whose exclusive cumulative mass is below `delta`.
///
/// `P_s` is constant on `(v_i, v_{i+1}]`, so `{x >= 0 : P_s(x) < delta}` is
/// the closed interval `[0, v*]` for that value and `P_s(v*) < delta`.
/// Returns `f64::MAX` when every finite distance qualifies and only
/// incomparable mass is left above.
///
/// Masses are summed in floating point, so a cumulative mass that equals
/// `delta` exactly can come out a few ulps low. Values within
/// [`TIE_MARGIN`] of `delta` count as reaching it.
pub fn general_adaptive_threshold(dist: &DistanceDistribution, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if dist.is_empty() {
        return Err(Error::DegenerateFit("empty distance distribution".into()));
    }
    let count = dist
        .cumulative_below()
        .partition_point(|c| *c < delta - TIE_MARGIN)
        .max(1);
    let v = dist.support()[count - 1];
    Ok(if v.is_finite() { v } else { f64::MAX })
}

/// `alpha * sigma + m`.
pub fn gaussian_adaptive_threshold(fit: &GaussianFit, alpha: f64) -> f64 {
    alpha * fit.sigma + fit.m
}

/// Entropy form of [`gaussian_adaptive_threshold`]:
/// `alpha * 2^H / sqrt(2 pi e) + m`.
pub fn gaussian_adaptive_threshold_from_entropy(m: f64, entropy: f64, alpha: f64) -> f64 {
    alpha * sigma_from_entropy(entropy) + m
}

/// `alpha' / sqrt(k) + 1/2`.
pub fn daugman_threshold(k: u32, alpha_prime: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::NoComparableBits);
    }
    Ok(alpha_prime / (k as f64).sqrt() + 0.5)
}

/// Attaches a calibration to an adaptive policy.
///
/// Exact mode tabulates every template of an enumerable space. Score worlds
/// copy their model parameters. Monte Carlo mode estimates `P_s` for each
/// probe on first use, with `samples` draws per probe.
pub fn calibrate(policy: &MatcherPolicy, pop: &Population, mode: &EvalMode) -> Result<MatcherPolicy> {
    let kind = policy.kind;
    if !kind.is_adaptive() {
        return Err(Error::Calibration(format!(
            "{kind} policy has nothing to calibrate"
        )));
    }
    let shape = pop.shape();
    if let Space::Score { .. } = pop.space() {
        match (kind, mode) {
            (PolicyKind::GaussianAdaptive { .. }, _) => {
                let TemplateShape::Score(count) = shape else { unreachable!() };
                let entries = (0..count)
                    .map(|h| {
                        let p = pop.score_params(h)?;
                        Ok((Template::Score(h), CalibrationEntry::Moments { m: p.m, sigma: p.sigma }))
                    })
                    .collect::<Result<HashMap<_, _>>>()?;
                return MatcherPolicy::with_table(kind, CalibrationTable::sparse(shape, entries));
            }
            (PolicyKind::GeneralAdaptive { .. }, EvalMode::Exact) => {
                return Err(Error::Calibration(
                    "general-adaptive thresholds need a discrete distance distribution; \
                     a continuous Gaussian never attains P_s(x) < delta at its supremum"
                        .into(),
                ))
            }
            _ => {}
        }
    }
    match mode {
        EvalMode::Exact => {
            pop.check_exact()?;
            let pooled = PooledTable::build(pop)?;
            let count = shape.count() as u64;
            let entries = (0..count)
                .into_par_iter()
                .map(|i| {
                    let dist = pooled.distribution(pop.distance(), shape.packed(i))?;
                    entry_for(kind, &dist).map_err(|e| calibration_failure(&shape.at_index(i), e))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MatcherPolicy {
                kind,
                calibration: Some(Calibration::Table(CalibrationTable {
                    shape,
                    store: Store::Dense(entries),
                })),
            })
        }
        EvalMode::MonteCarlo { samples, seed } => {
            if *samples == 0 {
                return Err(Error::InvalidConfig("calibration samples must be positive".into()));
            }
            Ok(MatcherPolicy {
                kind,
                calibration: Some(Calibration::OnDemand(Arc::new(OnDemand {
                    pop: pop.clone(),
                    samples: *samples,
                    seed: *seed,
                    cache: RwLock::new(HashMap::new()),
                }))),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Calibration file

pub const CALIBRATION_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    version: u32,
    policy: String,
    template_count: u64,
    entries: BTreeMap<String, CalibrationEntry>,
}

pub fn calibration_to_json(policy: &MatcherPolicy, pop: &Population) -> Result<String> {
    let table = policy
        .calibration_table()
        .ok_or_else(|| Error::Calibration(format!("{} policy has no calibration", policy.kind)))?;
    let file = CalibrationFile {
        version: CALIBRATION_VERSION,
        policy: policy.kind.to_string(),
        template_count: pop.shape().count().min(u64::MAX as u128) as u64,
        entries: table.to_map(),
    };
    let mut out = serde_json::to_string_pretty(&file)?;
    out.push('\n');
    Ok(out)
}

pub fn calibration_from_json(text: &str, pop: &Population) -> Result<MatcherPolicy> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != CALIBRATION_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: CALIBRATION_VERSION,
        });
    }
    let file: CalibrationFile = serde_json::from_value(value)?;
    let kind: PolicyKind = file.policy.parse()?;
    let shape = pop.shape();
    let mut entries = HashMap::with_capacity(file.entries.len());
    for (key, entry) in file.entries {
        entries.insert(shape.parse_key(&key)?, entry);
    }
    let store = if entries.len() as u128 == shape.count() && !pop.is_score() {
        let mut dense = vec![CalibrationEntry::Tau { tau: 0.0 }; entries.len()];
        for (t, e) in entries {
            dense[shape.index_of(&t)? as usize] = e;
        }
        Store::Dense(dense)
    } else {
        Store::Sparse(entries)
    };
    let policy = MatcherPolicy::with_table(kind, CalibrationTable { shape, store })?;
    Ok(policy)
}

pub fn save_calibration(policy: &MatcherPolicy, pop: &Population, path: &Path) -> Result<()> {
    std::fs::write(path, calibration_to_json(policy, pop)?).map_err(|e| Error::io(path, e))
}

pub fn load_calibration(path: &Path, pop: &Population) -> Result<MatcherPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    calibration_from_json(&text, pop)
}
