//! Monte Carlo estimators.
//!
//! Trials run in fixed chunks and chunk `c` of a quantity always draws from
//! the same stream, so the integer success count (and the estimate) does
//! not depend on the number of worker threads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::exact::score_handle;
use super::{Attacker, RateResult};
use crate::error::{Error, Result};
use crate::matcher::MatcherPolicy;
use crate::population::{lane_rng, sample_probe, Population, LANE_TRIALS};
use crate::template::Template;

pub(crate) const CHUNK: u64 = 4096;
const CHUNK_BITS: u32 = 24;
const SUBJECT_BITS: u32 = 20;

const KIND_FRR: u64 = 1;
const KIND_FAR: u64 = 2;
const KIND_AR: u64 = 3;
const KIND_FRR_U: u64 = 4;
const KIND_FAR_U: u64 = 5;
const KIND_AR_U: u64 = 6;
const KIND_OUTSIDER: u64 = 7;

fn stream(kind: u64, subject: usize) -> u64 {
    kind << SUBJECT_BITS | subject as u64
}

/// Number of successful trials out of `trials`, chunk `c` drawing from
/// `lane_rng(seed, domain, stream << 24 | c)`.
pub(crate) fn count_successes<F>(seed: u64, domain: u64, stream: u64, trials: u64, trial: F) -> Result<u64>
where
    F: Fn(&mut ChaCha8Rng) -> Result<bool> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidConfig("number of trials must be positive".into()));
    }
    let chunks = trials.div_ceil(CHUNK);
    if chunks >= 1 << CHUNK_BITS {
        return Err(Error::InvalidConfig(format!("{trials} trials exceed the per-rate limit")));
    }
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = lane_rng(seed, domain, stream << CHUNK_BITS | c);
            let mut hits = 0u64;
            for _ in 0..CHUNK.min(trials - c * CHUNK) {
                hits += trial(&mut rng)? as u64;
            }
            Ok(hits)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

pub(crate) struct Sampler<'a> {
    pub pop: &'a Population,
    pub policy: &'a MatcherPolicy,
}

impl<'a> Sampler<'a> {
    pub fn new(pop: &'a Population, policy: &'a MatcherPolicy) -> Result<Self> {
        policy.check_compatible(pop)?;
        if pop.n() >= 1 << SUBJECT_BITS {
            return Err(Error::InvalidConfig("too many users for Monte Carlo streams".into()));
        }
        Ok(Sampler { pop, policy })
    }

    fn require_bits(&self, rate: &str) -> Result<()> {
        if self.pop.is_score() {
            return Err(Error::NotApplicable(format!(
                "{rate} is undefined in score-model worlds: users have no genuine-sample distribution"
            )));
        }
        Ok(())
    }

    pub fn accept(&self, s: &Template, t: &Template) -> Result<bool> {
        Ok(self
            .policy
            .probe_threshold(s)?
            .decide(self.pop.distance().compare(s, t))?
            .is_accept())
    }

    /// One comparison of score handle `h` against a random enrolled template.
    pub fn accept_score(&self, h: u32, rng: &mut ChaCha8Rng) -> Result<bool> {
        let p = self.pop.score_params(h)?;
        let th = self.policy.probe_threshold(&Template::Score(h))?;
        let d = Normal::new(p.m, p.sigma).expect("validated sigma").sample(rng);
        th.accepts_distance(d)
    }

    fn draw(&self, u: usize, rng: &mut ChaCha8Rng) -> Template {
        sample_probe(&self.pop.users()[u], rng)
    }

    fn other_than(&self, w: usize, rng: &mut ChaCha8Rng) -> usize {
        let v = rng.random_range(0..self.pop.n() - 1);
        if v >= w {
            v + 1
        } else {
            v
        }
    }

    fn genuine_reject(&self, u: usize, rng: &mut ChaCha8Rng) -> Result<bool> {
        let s = self.draw(u, rng);
        let t = self.draw(u, rng);
        Ok(!self.accept(&s, &t)?)
    }

    fn impostor_accept(&self, w: usize, rng: &mut ChaCha8Rng) -> Result<bool> {
        let v = self.other_than(w, rng);
        let s = self.draw(w, rng);
        let t = self.draw(v, rng);
        self.accept(&s, &t)
    }

    /// `s` against a uniformly chosen user's sample.
    pub fn probe_accept(&self, s: &Template, rng: &mut ChaCha8Rng) -> Result<bool> {
        if let Template::Score(h) = s {
            return self.accept_score(*h, rng);
        }
        let v = rng.random_range(0..self.pop.n());
        let t = self.draw(v, rng);
        self.accept(s, &t)
    }

    fn attacker_accept(&self, w: &Attacker, rng: &mut ChaCha8Rng) -> Result<bool> {
        if self.pop.is_score() {
            return self.accept_score(score_handle(w)?, rng);
        }
        let s = match w {
            Attacker::User(u) => self.draw(*u, rng),
            Attacker::PointMass(t) => t.clone(),
            Attacker::Model(m) => sample_probe(m, rng),
        };
        self.probe_accept(&s, rng)
    }
}

fn rate<F>(seed: u64, stream: u64, samples: u64, trial: F) -> Result<RateResult>
where
    F: Fn(&mut ChaCha8Rng) -> Result<bool> + Sync,
{
    let hits = count_successes(seed, LANE_TRIALS, stream, samples, trial)?;
    Ok(RateResult::sampled(hits, samples))
}

pub fn frr(pop: &Population, policy: &MatcherPolicy, samples: u64, seed: u64) -> Result<RateResult> {
    let s = Sampler::new(pop, policy)?;
    s.require_bits("FRR")?;
    rate(seed, stream(KIND_FRR, 0), samples, |rng| {
        let u = rng.random_range(0..pop.n());
        s.genuine_reject(u, rng)
    })
}

pub fn frr_u(u: usize, pop: &Population, policy: &MatcherPolicy, samples: u64, seed: u64) -> Result<RateResult> {
    let s = Sampler::new(pop, policy)?;
    s.require_bits("FRR")?;
    rate(seed, stream(KIND_FRR_U, u), samples, |rng| s.genuine_reject(u, rng))
}

pub fn far(pop: &Population, policy: &MatcherPolicy, samples: u64, seed: u64) -> Result<RateResult> {
    let s = Sampler::new(pop, policy)?;
    s.require_bits("FAR")?;
    rate(seed, stream(KIND_FAR, 0), samples, |rng| {
        let w = rng.random_range(0..pop.n());
        s.impostor_accept(w, rng)
    })
}

pub fn far_w(w: &Attacker, pop: &Population, policy: &MatcherPolicy, samples: u64, seed: u64) -> Result<RateResult> {
    let s = Sampler::new(pop, policy)?;
    s.require_bits("FAR")?;
    match w {
        Attacker::User(u) => rate(seed, stream(KIND_FAR_U, *u), samples, |rng| s.impostor_accept(*u, rng)),
        // every enrolled user is "other" for an outsider
        _ => rate(seed, stream(KIND_OUTSIDER, 0), samples, |rng| s.attacker_accept(w, rng)),
    }
}

pub fn ar_w(w: &Attacker, pop: &Population, policy: &MatcherPolicy, samples: u64, seed: u64) -> Result<RateResult> {
    let s = Sampler::new(pop, policy)?;
    let subject = match w {
        Attacker::User(u) => stream(KIND_AR_U, *u),
        _ => stream(KIND_OUTSIDER, 0),
    };
    rate(seed, subject, samples, |rng| s.attacker_accept(w, rng))
}

pub fn ar(pop: &Population, policy: &MatcherPolicy, samples: u64, seed: u64) -> Result<RateResult> {
    let s = Sampler::new(pop, policy)?;
    rate(seed, stream(KIND_AR, 0), samples, |rng| {
        let w = rng.random_range(0..pop.n());
        s.attacker_accept(&Attacker::User(w), rng)
    })
}
