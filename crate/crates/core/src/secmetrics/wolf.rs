//! Heuristic WAP search for spaces too large to enumerate.
//!
//! Restarted greedy hill climbing over single-position changes, driven by
//! Monte Carlo estimates of the point-mass acceptance rate. Each probe's
//! estimate comes from a stream derived from the probe itself, so results
//! are independent of evaluation order and thread count. The winning probe
//! is re-estimated on a fresh stream before it is reported, since the
//! maximum of noisy estimates is biased upwards.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::RwLock;

use rand::Rng;
use rayon::prelude::*;

use super::mc::{self, count_successes, Sampler};
use super::{RateResult, WapMethod, WolfCertificate};
use crate::error::{Error, Result};
use crate::matcher::MatcherPolicy;
use crate::population::{lane_rng, Population, LANE_REESTIMATE, LANE_SEARCH, LANE_SEARCH_EVAL};
use crate::template::{BitTemplate, MaskedTemplate, Template, TemplateShape};

pub const DEFAULT_RESTARTS: u32 = 16;

/// Score worlds with at most this many handles are sampled exhaustively.
const ALL_HANDLES_LIMIT: u32 = 4096;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Enumeration order without materializing indices (works for any length).
fn template_order(a: &Template, b: &Template) -> Ordering {
    match (a, b) {
        (Template::Bits(x), Template::Bits(y)) => x.to_string().cmp(&y.to_string()),
        (Template::Masked(x), Template::Masked(y)) => (x.mask().to_string(), x.bits().to_string())
            .cmp(&(y.mask().to_string(), y.bits().to_string())),
        (Template::Score(x), Template::Score(y)) => x.cmp(y),
        _ => Ordering::Equal,
    }
}

/// Larger count wins; equal counts go to the earlier template.
fn pick(a: (u64, Template), b: (u64, Template)) -> (u64, Template) {
    match b.0.cmp(&a.0) {
        Ordering::Greater => b,
        Ordering::Equal if template_order(&b.1, &a.1) == Ordering::Less => b,
        _ => a,
    }
}

struct Evaluator<'a> {
    sampler: Sampler<'a>,
    budget: u64,
    seed: u64,
    cache: RwLock<HashMap<Template, u64>>,
}

impl Evaluator<'_> {
    fn hits(&self, s: &Template) -> Result<u64> {
        if let Some(h) = self.cache.read().unwrap().get(s) {
            return Ok(*h);
        }
        let seed = self.seed ^ fnv1a(s.key().as_bytes());
        let hits = count_successes(seed, LANE_SEARCH_EVAL, 0, self.budget, |rng| {
            self.sampler.probe_accept(s, rng)
        })?;
        self.cache.write().unwrap().insert(s.clone(), hits);
        Ok(hits)
    }
}

fn random_template(shape: TemplateShape, rng: &mut impl Rng) -> Template {
    match shape {
        TemplateShape::Bits(len) => Template::Bits(BitTemplate::from_fn(len, |_| rng.random())),
        TemplateShape::Masked(len) => {
            let bits = BitTemplate::from_fn(len, |_| rng.random());
            let mask = BitTemplate::from_fn(len, |_| rng.random());
            Template::Masked(MaskedTemplate::new(bits, mask).expect("same length"))
        }
        TemplateShape::Score(count) => Template::Score(rng.random_range(0..count)),
    }
}

/// Single bit flips; masked templates also toggle availability, and only
/// flip bits that are available.
fn neighbours(t: &Template, shape: TemplateShape) -> Vec<Template> {
    match t {
        Template::Bits(b) => (0..b.len()).map(|i| Template::Bits(b.with_flipped(i))).collect(),
        Template::Masked(m) => {
            let mut out = Vec::with_capacity(2 * m.len());
            for i in 0..m.len() {
                if m.mask().get(i) {
                    out.push(Template::Masked(
                        MaskedTemplate::new(m.bits().with_flipped(i), m.mask().clone()).expect("same length"),
                    ));
                }
                out.push(Template::Masked(
                    MaskedTemplate::new(m.bits().clone(), m.mask().with_flipped(i)).expect("same length"),
                ));
            }
            out
        }
        Template::Score(h) => {
            let TemplateShape::Score(count) = shape else { unreachable!() };
            let mut out = Vec::new();
            if *h > 0 {
                out.push(Template::Score(h - 1));
            }
            if h + 1 < count {
                out.push(Template::Score(h + 1));
            }
            out
        }
    }
}

fn climb(eval: &Evaluator, shape: TemplateShape, start: Template, max_steps: usize) -> Result<(u64, Template)> {
    let mut current = (eval.hits(&start)?, start);
    for _ in 0..max_steps {
        let mut best: Option<(u64, Template)> = None;
        for t in neighbours(&current.1, shape) {
            let h = eval.hits(&t)?;
            if h > current.0 && best.as_ref().is_none_or(|b| h > b.0) {
                best = Some((h, t));
            }
        }
        match best {
            Some(b) => current = b,
            None => break,
        }
    }
    Ok(current)
}

/// Best point-mass attacker found with `budget` trials per probe and
/// `restarts` climbs. Even-numbered restarts start from enrolled
/// references while they last, the rest from uniform random templates.
/// The result is a lower bound on WAP, never a proof of optimality.
pub fn wolf_search_mc(
    pop: &Population,
    policy: &MatcherPolicy,
    budget: u64,
    restarts: u32,
    seed: u64,
) -> Result<WolfCertificate> {
    if budget == 0 {
        return Err(Error::InvalidConfig("search budget must be at least 1".into()));
    }
    let shape = pop.shape();
    let eval = Evaluator {
        sampler: Sampler::new(pop, policy)?,
        budget,
        seed,
        cache: RwLock::new(HashMap::new()),
    };
    let (best, method) = match shape {
        TemplateShape::Score(count) if count <= ALL_HANDLES_LIMIT => {
            let scored = (0..count)
                .into_par_iter()
                .map(|h| Ok((eval.hits(&Template::Score(h))?, Template::Score(h))))
                .collect::<Result<Vec<_>>>()?;
            let best = scored.into_iter().reduce(pick).expect("at least two handles");
            (best, WapMethod::SampledAllProbes)
        }
        _ => {
            let max_steps = match shape {
                TemplateShape::Bits(len) | TemplateShape::Masked(len) => 4 * len + 16,
                TemplateShape::Score(count) => count as usize,
            };
            let climbs = (0..restarts.max(1))
                .into_par_iter()
                .map(|r| {
                    let start = match pop.users().get(r as usize / 2) {
                        Some(u) if r % 2 == 0 => u.reference.clone(),
                        _ => random_template(shape, &mut lane_rng(seed, LANE_SEARCH, r as u64)),
                    };
                    climb(&eval, shape, start, max_steps)
                })
                .collect::<Result<Vec<_>>>()?;
            let best = climbs.into_iter().reduce(pick).expect("at least one restart");
            (best, WapMethod::HillClimb)
        }
    };
    let probe = best.1;
    let hits = count_successes(seed, LANE_REESTIMATE, 0, budget, |rng| {
        eval.sampler.probe_accept(&probe, rng)
    })?;
    let ar_w = RateResult::sampled(hits, budget);
    let baseline = mc::ar(pop, policy, budget, seed)?;
    Ok(WolfCertificate::new(probe, ar_w, baseline, method))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_neighbourhood_skips_unavailable_bits() {
        let m = MaskedTemplate::new(
            BitTemplate::parse_bits("101").unwrap(),
            BitTemplate::parse_bits("100").unwrap(),
        )
        .unwrap();
        let n = neighbours(&Template::Masked(m), TemplateShape::Masked(3));
        assert_eq!(n.len(), 4);
    }

    #[test]
    fn ties_go_to_the_lower_template() {
        let a = Template::Bits(BitTemplate::parse_bits("01").unwrap());
        let b = Template::Bits(BitTemplate::parse_bits("10").unwrap());
        assert_eq!(pick((5, b.clone()), (5, a.clone())).1, a);
        assert_eq!(pick((5, a.clone()), (6, b.clone())).1, b);
    }
}
