//! Synthetic user populations: per-user noise models, exact probability
//! tables for enumerable worlds, sampling, and the versioned JSON format.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::template::{BitTemplate, DistanceFn, MaskedTemplate, Template, TemplateShape, MAX_LEN, MIN_LEN};

pub const FILE_VERSION: u32 = 1;

/// Largest template count admitted by exact evaluation.
pub const EXACT_LIMIT: u128 = 1 << 20;

/// Tolerance on the total mass of an explicit probability table.
pub const TABLE_SUM_TOLERANCE: f64 = 1e-12;

// Stream domains handed to `lane_rng`. Every consumer of randomness owns a
// disjoint range of ChaCha streams under the master seed.
pub const LANE_USERS: u64 = 1;
pub const LANE_EXTRA_PROBES: u64 = 2;
pub const LANE_TRIALS: u64 = 3;
pub const LANE_EMPIRICAL: u64 = 4;
pub const LANE_SEARCH: u64 = 5;
pub const LANE_SEARCH_EVAL: u64 = 6;
pub const LANE_REESTIMATE: u64 = 7;

/// Independent generator for `(domain, index)` under a master seed.
pub fn lane_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain << 48 ^ index);
    rng
}

/// Parameters of a Gaussian impostor-distance model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub m: f64,
    pub sigma: f64,
}

impl ScoreParams {
    fn validate(&self, what: &str) -> Result<()> {
        if !self.m.is_finite() || !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::Validation(format!(
                "{what}: gaussian-score needs finite m and sigma > 0, got m={} sigma={}",
                self.m, self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    Bits { len: usize, masked: bool },
    /// Score-model world. Handles `0..n` belong to the users, handles
    /// `n..n + extra_probes.len()` are candidate attacker probes.
    Score { extra_probes: Vec<ScoreParams> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    IidBitFlip { p: f64 },
    ExplicitTable(Vec<(Template, f64)>),
    GaussianScore(ScoreParams),
}

impl NoiseModel {
    pub fn family(&self) -> &'static str {
        match self {
            NoiseModel::IidBitFlip { .. } => "iid-bit-flip",
            NoiseModel::ExplicitTable(_) => "explicit-table",
            NoiseModel::GaussianScore(_) => "gaussian-score",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserModel {
    pub id: String,
    pub reference: Template,
    pub noise: NoiseModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    users: Vec<UserModel>,
    distance: DistanceFn,
    space: Space,
}

/// Evaluation mode of every rate computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvalMode {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::Exact => "exact",
            EvalMode::MonteCarlo { .. } => "monte-carlo",
        }
    }
}

impl Population {
    pub fn new(users: Vec<UserModel>, distance: DistanceFn, space: Space) -> Result<Self> {
        let pop = Population {
            users,
            distance,
            space,
        };
        pop.validate()?;
        Ok(pop)
    }

    pub fn users(&self) -> &[UserModel] {
        &self.users
    }

    pub fn n(&self) -> usize {
        self.users.len()
    }

    pub fn distance(&self) -> DistanceFn {
        self.distance
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn shape(&self) -> TemplateShape {
        match &self.space {
            Space::Bits { len, masked: false } => TemplateShape::Bits(*len),
            Space::Bits { len, masked: true } => TemplateShape::Masked(*len),
            Space::Score { extra_probes } => {
                TemplateShape::Score((self.users.len() + extra_probes.len()) as u32)
            }
        }
    }

    pub fn is_score(&self) -> bool {
        matches!(self.space, Space::Score { .. })
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.iter().position(|u| u.id == id)
    }

    /// Gaussian impostor-distance parameters of a score handle.
    pub fn score_params(&self, handle: u32) -> Result<ScoreParams> {
        let Space::Score { extra_probes } = &self.space else {
            return Err(Error::NotApplicable("not a score-model population".into()));
        };
        let h = handle as usize;
        if h < self.users.len() {
            match &self.users[h].noise {
                NoiseModel::GaussianScore(p) => Ok(*p),
                other => Err(Error::Validation(format!(
                    "user {} has {} noise in a score space",
                    self.users[h].id,
                    other.family()
                ))),
            }
        } else {
            extra_probes
                .get(h - self.users.len())
                .copied()
                .ok_or_else(|| Error::Validation(format!("score handle {handle} out of range")))
        }
    }

    /// Fails unless exact (or, for score worlds, analytic) evaluation is
    /// admissible.
    pub fn check_exact(&self) -> Result<()> {
        let count = self.shape().count();
        if !self.is_score() && count > EXACT_LIMIT {
            return Err(Error::SpaceTooLarge {
                templates: count,
                limit: EXACT_LIMIT,
            });
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.users.len() < 2 {
            return Err(Error::Validation(format!(
                "population needs at least 2 users, got {}",
                self.users.len()
            )));
        }
        let mut ids = HashSet::new();
        for u in &self.users {
            if !ids.insert(u.id.as_str()) {
                return Err(Error::Validation(format!("duplicate user id {:?}", u.id)));
            }
        }
        match &self.space {
            Space::Bits { len, .. } => {
                if !(MIN_LEN..=MAX_LEN).contains(len) {
                    return Err(Error::Validation(format!(
                        "template length {len} outside [{MIN_LEN}, {MAX_LEN}]"
                    )));
                }
                if !matches!(self.distance, DistanceFn::Hamming | DistanceFn::FractionalHamming) {
                    return Err(Error::Validation(format!(
                        "{} distance does not apply to bit templates",
                        self.distance.name()
                    )));
                }
            }
            Space::Score { extra_probes } => {
                if self.distance != DistanceFn::AbsoluteScoreDifference {
                    return Err(Error::Validation(
                        "score-model populations use absolute-score-difference".into(),
                    ));
                }
                for (j, p) in extra_probes.iter().enumerate() {
                    p.validate(&format!("extra probe {j}"))?;
                }
            }
        }
        let shape = self.shape();
        let mut handles = HashSet::new();
        for u in &self.users {
            shape.check(&u.reference)?;
            match (&self.space, &u.noise) {
                (Space::Bits { .. }, NoiseModel::IidBitFlip { p }) => {
                    if !(0.0..=0.5).contains(p) {
                        return Err(Error::Validation(format!(
                            "user {}: flip probability {p} outside [0, 0.5]",
                            u.id
                        )));
                    }
                }
                (Space::Bits { .. }, NoiseModel::ExplicitTable(table)) => {
                    validate_table(&u.id, table, shape)?;
                }
                (Space::Score { .. }, NoiseModel::GaussianScore(p)) => {
                    p.validate(&format!("user {}", u.id))?;
                    let Template::Score(h) = u.reference else { unreachable!() };
                    if h as usize >= self.users.len() || !handles.insert(h) {
                        return Err(Error::Validation(format!(
                            "user {}: score handle {h} must be unique and below {}",
                            u.id,
                            self.users.len()
                        )));
                    }
                }
                (_, noise) => {
                    return Err(Error::Validation(format!(
                        "user {}: {} noise does not fit the population space",
                        u.id,
                        noise.family()
                    )))
                }
            }
        }
        if self.is_score() {
            // handle i must be user i so that handles index users directly
            for (i, u) in self.users.iter().enumerate() {
                if u.reference != Template::Score(i as u32) {
                    return Err(Error::Validation(format!(
                        "user {} must own score handle s{i}",
                        u.id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn validate_table(id: &str, table: &[(Template, f64)], shape: TemplateShape) -> Result<()> {
    if table.is_empty() {
        return Err(Error::Validation(format!("user {id}: empty probability table")));
    }
    let mut seen = HashSet::new();
    let mut total = 0.0;
    for (t, p) in table {
        shape.check(t)?;
        if !p.is_finite() || *p < 0.0 {
            return Err(Error::Validation(format!(
                "user {id}: invalid probability {p} for {t}"
            )));
        }
        if !seen.insert(t) {
            return Err(Error::Validation(format!(
                "user {id}: template {t} listed twice"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > TABLE_SUM_TOLERANCE {
        return Err(Error::Validation(format!(
            "user {id}: probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Sparse probability table over an enumerable space, sorted by template
/// index; zero-probability templates are omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTable {
    shape: TemplateShape,
    entries: Vec<(u64, f64)>,
}

impl ProbabilityTable {
    pub fn shape(&self) -> TemplateShape {
        self.shape
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (Template, f64)> + '_ {
        self.entries
            .iter()
            .map(|&(i, p)| (self.shape.at_index(i), p))
    }

    pub fn probability(&self, t: &Template) -> f64 {
        let Ok(idx) = self.shape.index_of(t) else {
            return 0.0;
        };
        self.entries
            .binary_search_by_key(&idx, |e| e.0)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        crate::sum::compensated(self.entries.iter().map(|e| e.1))
    }
}

/// Full distribution of `X_u` over the template space.
pub fn exact_distribution(user: &UserModel, space: &Space) -> Result<ProbabilityTable> {
    let (len, masked) = match space {
        Space::Bits { len, masked } => (*len, *masked),
        Space::Score { .. } => {
            return Err(Error::NotApplicable(
                "gaussian-score users have a continuous distance model, not a table".into(),
            ))
        }
    };
    let shape = if masked {
        TemplateShape::Masked(len)
    } else {
        TemplateShape::Bits(len)
    };
    if shape.count() > EXACT_LIMIT {
        return Err(Error::SpaceTooLarge {
            templates: shape.count(),
            limit: EXACT_LIMIT,
        });
    }
    let mut entries = match &user.noise {
        NoiseModel::IidBitFlip { p } => {
            let reference = shape.index_of(&user.reference)?;
            let bits_mask = (1u64 << len) - 1;
            let (ref_bits, mask_part) = (reference & bits_mask, reference & !bits_mask);
            let mut out = Vec::new();
            for bits in 0..1u64 << len {
                let h = (bits ^ ref_bits).count_ones() as i32;
                let prob = p.powi(h) * (1.0 - p).powi(len as i32 - h);
                if prob > 0.0 {
                    out.push((mask_part | bits, prob));
                }
            }
            out
        }
        NoiseModel::ExplicitTable(table) => table
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(t, p)| Ok((shape.index_of(t)?, *p)))
            .collect::<Result<Vec<_>>>()?,
        NoiseModel::GaussianScore(_) => {
            return Err(Error::NotApplicable(
                "gaussian-score users have no template table".into(),
            ))
        }
    };
    entries.sort_by_key(|e| e.0);
    Ok(ProbabilityTable { shape, entries })
}

/// One draw from `X_u`.
pub fn sample_probe(user: &UserModel, rng: &mut impl RngCore) -> Template {
    match &user.noise {
        NoiseModel::IidBitFlip { p } => {
            let flip = |b: &BitTemplate, rng: &mut dyn RngCore| {
                if *p == 0.0 {
                    return b.clone();
                }
                BitTemplate::from_fn(b.len(), |i| b.get(i) ^ rng.random_bool(*p))
            };
            match &user.reference {
                Template::Bits(b) => Template::Bits(flip(b, rng)),
                Template::Masked(m) => Template::Masked(
                    MaskedTemplate::new(flip(m.bits(), rng), m.mask().clone())
                        .expect("same length"),
                ),
                Template::Score(_) => user.reference.clone(),
            }
        }
        NoiseModel::ExplicitTable(table) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (t, p) in table {
                acc += p;
                if u < acc {
                    return t.clone();
                }
            }
            // rounding left a sliver above the cumulative total
            table
                .iter()
                .rev()
                .find(|(_, p)| *p > 0.0)
                .map(|(t, _)| t.clone())
                .expect("validated table has positive mass")
        }
        NoiseModel::GaussianScore(_) => user.reference.clone(),
    }
}

/// Noise family and parameter ranges for [`generate_population`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseFamily {
    Iid { p_min: f64, p_max: f64 },
    /// Random table on `support` templates (the reference plus random others).
    Explicit { support: usize },
    /// Each user independently iid (probability 1/2) or explicit.
    Mixed { p_min: f64, p_max: f64, support: usize },
    Gaussian {
        m_min: f64,
        m_max: f64,
        sigma_min: f64,
        sigma_max: f64,
        extra_probes: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub n: usize,
    pub len: usize,
    pub masked: bool,
    /// Probability that a reference bit is available (masked spaces only).
    pub mask_density: f64,
    pub noise: NoiseFamily,
    pub distance: DistanceFn,
}

impl PopulationConfig {
    pub fn iid(n: usize, len: usize, p_min: f64, p_max: f64) -> Self {
        PopulationConfig {
            n,
            len,
            masked: false,
            mask_density: 1.0,
            noise: NoiseFamily::Iid { p_min, p_max },
            distance: DistanceFn::Hamming,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        match &self.noise {
            NoiseFamily::Iid { p_min, p_max } | NoiseFamily::Mixed { p_min, p_max, .. } => {
                if !ordered(*p_min, *p_max) || *p_min < 0.0 || *p_max > 0.5 {
                    return bad(format!(
                        "flip probability range [{p_min}, {p_max}] must lie in [0, 0.5]"
                    ));
                }
            }
            NoiseFamily::Gaussian {
                m_min,
                m_max,
                sigma_min,
                sigma_max,
                ..
            } => {
                if !ordered(*m_min, *m_max) || !ordered(*sigma_min, *sigma_max) || *sigma_min <= 0.0
                {
                    return bad(format!(
                        "gaussian ranges m=[{m_min}, {m_max}] sigma=[{sigma_min}, {sigma_max}] need sigma > 0"
                    ));
                }
            }
            NoiseFamily::Explicit { .. } => {}
        }
        if let NoiseFamily::Explicit { support } | NoiseFamily::Mixed { support, .. } = self.noise {
            let room = if self.len >= 64 { u64::MAX } else { 1u64 << self.len };
            if support == 0 || support as u64 > room {
                return bad(format!(
                    "explicit support {support} must lie in [1, 2^{}]",
                    self.len
                ));
            }
        }
        if !matches!(self.noise, NoiseFamily::Gaussian { .. })
            && !(MIN_LEN..=MAX_LEN).contains(&self.len)
        {
            return bad(format!(
                "template length {} outside [{MIN_LEN}, {MAX_LEN}]",
                self.len
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_density) {
            return bad(format!("mask density {} outside [0, 1]", self.mask_density));
        }
        Ok(())
    }
}

fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Builds a population deterministically from `seed`. User `i` draws
/// everything from its own stream, so users are independent and adding
/// users does not perturb earlier ones.
pub fn generate_population(config: &PopulationConfig, seed: u64) -> Result<Population> {
    config.validate()?;
    if let NoiseFamily::Gaussian {
        m_min,
        m_max,
        sigma_min,
        sigma_max,
        extra_probes,
    } = config.noise
    {
        let draw = |rng: &mut ChaCha8Rng| ScoreParams {
            m: uniform_in(rng, m_min, m_max),
            sigma: uniform_in(rng, sigma_min, sigma_max),
        };
        let users = (0..config.n)
            .map(|i| {
                let mut rng = lane_rng(seed, LANE_USERS, i as u64);
                UserModel {
                    id: format!("u{i}"),
                    reference: Template::Score(i as u32),
                    noise: NoiseModel::GaussianScore(draw(&mut rng)),
                }
            })
            .collect();
        let extra = (0..extra_probes)
            .map(|j| draw(&mut lane_rng(seed, LANE_EXTRA_PROBES, j as u64)))
            .collect();
        return Population::new(
            users,
            DistanceFn::AbsoluteScoreDifference,
            Space::Score {
                extra_probes: extra,
            },
        );
    }

    let len = config.len;
    let users = (0..config.n)
        .map(|i| {
            let mut rng = lane_rng(seed, LANE_USERS, i as u64);
            let bits = BitTemplate::from_fn(len, |_| rng.random_bool(0.5));
            let mask = if config.masked && config.mask_density < 1.0 {
                Some(BitTemplate::from_fn(len, |_| rng.random_bool(config.mask_density)))
            } else if config.masked {
                Some(BitTemplate::ones(len))
            } else {
                None
            };
            let wrap = |b: BitTemplate| match &mask {
                Some(m) => Template::Masked(MaskedTemplate::new(b, m.clone()).expect("same length")),
                None => Template::Bits(b),
            };
            let reference = wrap(bits.clone());
            let use_iid = match config.noise {
                NoiseFamily::Iid { .. } => true,
                NoiseFamily::Explicit { .. } => false,
                NoiseFamily::Mixed { .. } => rng.random_bool(0.5),
                NoiseFamily::Gaussian { .. } => unreachable!(),
            };
            let noise = match config.noise {
                NoiseFamily::Iid { p_min, p_max } | NoiseFamily::Mixed { p_min, p_max, .. }
                    if use_iid =>
                {
                    NoiseModel::IidBitFlip {
                        p: uniform_in(&mut rng, p_min, p_max),
                    }
                }
                NoiseFamily::Explicit { support } | NoiseFamily::Mixed { support, .. } => {
                    let mut seen = HashSet::from([bits.clone()]);
                    let mut templates = vec![bits];
                    while templates.len() < support {
                        let t = BitTemplate::from_fn(len, |_| rng.random_bool(0.5));
                        if seen.insert(t.clone()) {
                            templates.push(t);
                        }
                    }
                    let weights: Vec<f64> = (0..support)
                        .map(|_| 1.0 - rng.random::<f64>())
                        .collect();
                    let total: f64 = weights.iter().sum();
                    NoiseModel::ExplicitTable(
                        templates
                            .into_iter()
                            .zip(weights)
                            .map(|(t, w)| (wrap(t), w / total))
                            .collect(),
                    )
                }
                _ => unreachable!(),
            };
            UserModel {
                id: format!("u{i}"),
                reference,
                noise,
            }
        })
        .collect();
    Population::new(
        users,
        config.distance,
        Space::Bits {
            len,
            masked: config.masked,
        },
    )
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationFile {
    version: u32,
    space: SpaceFile,
    distance: DistanceFn,
    users: Vec<UserFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    masked: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<ScoreSpaceFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreSpaceFile {
    extra_probes: Vec<ScoreParams>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserFile {
    id: String,
    reference: String,
    noise: NoiseFile,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
enum NoiseFile {
    IidBitFlip { p: f64 },
    ExplicitTable { table: Vec<TableEntryFile> },
    GaussianScore { m: f64, sigma: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntryFile {
    template: String,
    p: f64,
}

impl Population {
    pub fn to_json(&self) -> String {
        let space = match &self.space {
            Space::Bits { len, masked } => SpaceFile {
                len: Some(*len),
                masked: Some(*masked),
                score: None,
            },
            Space::Score { extra_probes } => SpaceFile {
                len: None,
                masked: None,
                score: Some(ScoreSpaceFile {
                    extra_probes: extra_probes.clone(),
                }),
            },
        };
        let users = self
            .users
            .iter()
            .map(|u| UserFile {
                id: u.id.clone(),
                reference: u.reference.key(),
                noise: match &u.noise {
                    NoiseModel::IidBitFlip { p } => NoiseFile::IidBitFlip { p: *p },
                    NoiseModel::ExplicitTable(table) => NoiseFile::ExplicitTable {
                        table: table
                            .iter()
                            .map(|(t, p)| TableEntryFile {
                                template: t.key(),
                                p: *p,
                            })
                            .collect(),
                    },
                    NoiseModel::GaussianScore(s) => NoiseFile::GaussianScore {
                        m: s.m,
                        sigma: s.sigma,
                    },
                },
            })
            .collect();
        let file = PopulationFile {
            version: FILE_VERSION,
            space,
            distance: self.distance,
            users,
        };
        let mut out = serde_json::to_string_pretty(&file).expect("population serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Validation("population file lacks a numeric version".into()))?;
        if version != FILE_VERSION as u64 {
            return Err(Error::VersionMismatch {
                found: version as u32,
                expected: FILE_VERSION,
            });
        }
        let file: PopulationFile = serde_json::from_value(value)?;
        let space = match (file.space.len, file.space.masked, file.space.score) {
            (Some(len), masked, None) => Space::Bits {
                len,
                masked: masked.unwrap_or(false),
            },
            (None, None, Some(score)) => Space::Score {
                extra_probes: score.extra_probes,
            },
            _ => {
                return Err(Error::Validation(
                    "space must be either {L, masked} or {score}".into(),
                ))
            }
        };
        let shape = match &space {
            Space::Bits { len, masked: false } => TemplateShape::Bits(*len),
            Space::Bits { len, masked: true } => TemplateShape::Masked(*len),
            Space::Score { extra_probes } => {
                TemplateShape::Score((file.users.len() + extra_probes.len()) as u32)
            }
        };
        if let Space::Bits { len, .. } = space {
            if !(MIN_LEN..=MAX_LEN).contains(&len) {
                return Err(Error::Validation(format!(
                    "template length {len} outside [{MIN_LEN}, {MAX_LEN}]"
                )));
            }
        }
        let users = file
            .users
            .into_iter()
            .map(|u| {
                let noise = match u.noise {
                    NoiseFile::IidBitFlip { p } => NoiseModel::IidBitFlip { p },
                    NoiseFile::ExplicitTable { table } => NoiseModel::ExplicitTable(
                        table
                            .into_iter()
                            .map(|e| Ok((shape.parse_key(&e.template)?, e.p)))
                            .collect::<Result<_>>()?,
                    ),
                    NoiseFile::GaussianScore { m, sigma } => {
                        NoiseModel::GaussianScore(ScoreParams { m, sigma })
                    }
                };
                Ok(UserModel {
                    reference: shape.parse_key(&u.reference)?,
                    id: u.id,
                    noise,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Population::new(users, file.distance, space)
    }
}

pub fn save_population(pop: &Population, path: &Path) -> Result<()> {
    std::fs::write(path, pop.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_population(path: &Path) -> Result<Population> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Population::from_json(&text)
}
