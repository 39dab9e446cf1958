//! Security rates over a population and a matcher policy: FRR, FAR, the
//! acceptance rate of an attacker sample, WAP, wolf search and
//! delta-security.
//!
//! Every rate is available in exact mode (full enumeration, or closed form
//! for score-model worlds) and in Monte Carlo mode. Attackers are either an
//! enrolled user's distribution, a point mass on one template, or an
//! arbitrary non-enrolled distribution.

mod exact;
mod mc;
pub mod report;
mod wolf;

use serde::{Deserialize, Serialize};

pub use exact::{BitsEngine, ExactEngine, ScoreEngine};
pub use report::{evaluate, EvalReport, SearchParams, UserRates, WapSummary};
pub use wolf::{wolf_search_mc, DEFAULT_RESTARTS};

use crate::error::{Error, Result};
use crate::matcher::MatcherPolicy;
use crate::population::{EvalMode, Population, UserModel};
use crate::template::Template;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub value: f64,
    pub mode: RateMode,
    pub stderr: Option<f64>,
    pub n_trials: Option<u64>,
}

impl RateResult {
    pub fn exact(value: f64) -> Self {
        RateResult {
            value,
            mode: RateMode::Exact,
            stderr: None,
            n_trials: None,
        }
    }

    /// Binomial estimate from `successes` out of `trials`.
    pub fn sampled(successes: u64, trials: u64) -> Self {
        let p = successes as f64 / trials as f64;
        RateResult {
            value: p,
            mode: RateMode::MonteCarlo,
            stderr: Some((p * (1.0 - p) / trials as f64).sqrt()),
            n_trials: Some(trials),
        }
    }
}

/// Distribution presented by the attacker.
#[derive(Clone, Debug, PartialEq)]
pub enum Attacker {
    /// Enrolled user, by index.
    User(usize),
    /// Always presents the same template.
    PointMass(Template),
    /// Non-enrolled distribution.
    Model(UserModel),
}

impl Attacker {
    pub fn is_enrolled(&self) -> bool {
        matches!(self, Attacker::User(_))
    }

    fn check(&self, pop: &Population) -> Result<()> {
        match self {
            Attacker::User(u) if *u >= pop.n() => Err(Error::InvalidConfig(format!(
                "user index {u} out of range ({} users)",
                pop.n()
            ))),
            Attacker::PointMass(t) => pop.shape().check(t),
            Attacker::Model(m) => pop.shape().check(&m.reference),
            _ => Ok(()),
        }
    }
}

/// How a WAP value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WapMethod {
    /// Every template of the space evaluated exactly.
    Exhaustive,
    /// Every score handle evaluated in closed form.
    Analytic,
    /// Every score handle evaluated by sampling.
    SampledAllProbes,
    /// Best probe found by restarted hill climbing; a lower bound.
    HillClimb,
}

/// Best attacker sample found, with its acceptance rate against the
/// population-average rate.
#[derive(Clone, Debug, PartialEq)]
pub struct WolfCertificate {
    pub probe: Template,
    pub ar_w: RateResult,
    pub ar_baseline: RateResult,
    /// The probe is a `p`-wolf for this `p`.
    pub p_level: f64,
    pub is_wolf: bool,
    pub method: WapMethod,
}

impl WolfCertificate {
    fn new(probe: Template, ar_w: RateResult, ar_baseline: RateResult, method: WapMethod) -> Self {
        WolfCertificate {
            probe,
            p_level: ar_w.value,
            is_wolf: ar_w.value > ar_baseline.value,
            ar_w,
            ar_baseline,
            method,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "probe": self.probe.key(),
            "ar_w": self.ar_w,
            "ar_baseline": self.ar_baseline,
            "p_level": self.p_level,
            "is_wolf": self.is_wolf,
            "method": self.method,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecurityVerdict {
    /// Exact mode: `WAP < delta`. Monte Carlo mode: no probe found whose
    /// estimate exceeds `delta` by more than three standard errors.
    pub secure: bool,
    pub evidence: String,
    pub certificate: WolfCertificate,
}

fn monte_carlo(mode: &EvalMode) -> Option<(u64, u64)> {
    match *mode {
        EvalMode::Exact => None,
        EvalMode::MonteCarlo { samples, seed } => Some((samples, seed)),
    }
}

/// Average false rejection rate over users.
pub fn frr(pop: &Population, policy: &MatcherPolicy, mode: &EvalMode) -> Result<RateResult> {
    match monte_carlo(mode) {
        None => Ok(RateResult::exact(ExactEngine::new(pop, policy)?.frr()?)),
        Some((samples, seed)) => mc::frr(pop, policy, samples, seed),
    }
}

/// False rejection rate of user `u` (both samples drawn from `X_u`).
pub fn frr_u(u: usize, pop: &Population, policy: &MatcherPolicy, mode: &EvalMode) -> Result<RateResult> {
    Attacker::User(u).check(pop)?;
    match monte_carlo(mode) {
        None => Ok(RateResult::exact(ExactEngine::new(pop, policy)?.frr_u(u)?)),
        Some((samples, seed)) => mc::frr_u(u, pop, policy, samples, seed),
    }
}

/// Average false acceptance rate over users.
pub fn far(pop: &Population, policy: &MatcherPolicy, mode: &EvalMode) -> Result<RateResult> {
    match monte_carlo(mode) {
        None => Ok(RateResult::exact(ExactEngine::new(pop, policy)?.far()?)),
        Some((samples, seed)) => mc::far(pop, policy, samples, seed),
    }
}

/// Acceptance rate of `w` against a uniformly chosen other user. For a
/// non-enrolled attacker every user is "other".
pub fn far_w(w: &Attacker, pop: &Population, policy: &MatcherPolicy, mode: &EvalMode) -> Result<RateResult> {
    w.check(pop)?;
    match monte_carlo(mode) {
        None => Ok(RateResult::exact(ExactEngine::new(pop, policy)?.far_w(w)?)),
        Some((samples, seed)) => mc::far_w(w, pop, policy, samples, seed),
    }
}

/// Acceptance rate of `w` against a uniformly chosen claimed identity.
pub fn ar_w(w: &Attacker, pop: &Population, policy: &MatcherPolicy, mode: &EvalMode) -> Result<RateResult> {
    w.check(pop)?;
    match monte_carlo(mode) {
        None => Ok(RateResult::exact(ExactEngine::new(pop, policy)?.ar_w(w)?)),
        Some((samples, seed)) => mc::ar_w(w, pop, policy, samples, seed),
    }
}

/// Mean of `AR_u` over enrolled users.
pub fn ar(pop: &Population, policy: &MatcherPolicy, mode: &EvalMode) -> Result<RateResult> {
    match monte_carlo(mode) {
        None => Ok(RateResult::exact(ExactEngine::new(pop, policy)?.ar()?)),
        Some((samples, seed)) => mc::ar(pop, policy, samples, seed),
    }
}

/// `|AR_w - ((1/n)(1 - FRR_w) + (1 - 1/n) FAR_w)|` for enrolled `w`, and
/// `|AR_w - FAR_w|` otherwise. The two sides come from separate summation
/// paths.
pub fn lemma1_check(w: &Attacker, pop: &Population, policy: &MatcherPolicy) -> Result<f64> {
    w.check(pop)?;
    match ExactEngine::new(pop, policy)? {
        ExactEngine::Bits(e) => e.lemma1_residual(w),
        ExactEngine::Score(_) => Err(Error::NotApplicable(
            "score-model worlds have no genuine-comparison distribution".into(),
        )),
    }
}

/// Exhaustive maximum of `AR_w` over all point-mass attackers. Ties go to
/// the lowest template index.
pub fn wap_exact(pop: &Population, policy: &MatcherPolicy) -> Result<(RateResult, WolfCertificate)> {
    let engine = ExactEngine::new(pop, policy)?;
    let (value, probe) = engine.wap()?;
    let baseline = RateResult::exact(engine.ar()?);
    let method = match engine {
        ExactEngine::Bits(_) => WapMethod::Exhaustive,
        ExactEngine::Score(_) => WapMethod::Analytic,
    };
    let wap = RateResult::exact(value);
    Ok((wap, WolfCertificate::new(probe, wap, baseline, method)))
}

/// Exact mode: `wap_exact < delta`. Monte Carlo mode: wolf search with
/// `samples` trials per probe, reported as "no wolf found above delta"
/// rather than as a proof.
pub fn is_delta_secure(
    pop: &Population,
    policy: &MatcherPolicy,
    delta: f64,
    mode: &EvalMode,
) -> Result<SecurityVerdict> {
    match monte_carlo(mode) {
        None => {
            let (wap, certificate) = wap_exact(pop, policy)?;
            let secure = wap.value < delta;
            let evidence = format!(
                "exhaustive: WAP = {} {} delta = {delta}",
                wap.value,
                if secure { "<" } else { ">=" }
            );
            Ok(SecurityVerdict {
                secure,
                evidence,
                certificate,
            })
        }
        Some((samples, seed)) => {
            let certificate = wolf_search_mc(pop, policy, samples, DEFAULT_RESTARTS, seed)?;
            let se = certificate.ar_w.stderr.unwrap_or(0.0);
            let secure = certificate.ar_w.value <= delta + 3.0 * se;
            let evidence = if secure {
                format!("no wolf found above delta = {delta} (best AR_w {} ± {se})", certificate.ar_w.value)
            } else {
                format!("wolf found above delta = {delta}: AR_w {} ± {se}", certificate.ar_w.value)
            };
            Ok(SecurityVerdict {
                secure,
                evidence,
                certificate,
            })
        }
    }
}
