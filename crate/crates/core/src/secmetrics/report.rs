//! Evaluation report: every rate for one population and policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::exact::ExactEngine;
use super::{mc, wap_exact, wolf_search_mc, Attacker, RateResult, WapMethod, DEFAULT_RESTARTS};
use crate::error::Result;
use crate::matcher::MatcherPolicy;
use crate::population::{EvalMode, Population};

pub const TOOL_NAME: &str = "wolfbench";

/// Wolf-search settings used in Monte Carlo mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Trials per probe estimate.
    pub budget: u64,
    pub restarts: u32,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            budget: 10_000,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WapSummary {
    pub value: f64,
    /// Key of the maximizing probe (hex, `bits/mask` hex, or `s<handle>`).
    pub probe_hex: String,
    pub method: WapMethod,
    pub stderr: Option<f64>,
    pub is_wolf: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRates {
    pub frr_u: Option<f64>,
    pub far_u: Option<f64>,
    pub ar_u: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateErrors {
    pub frr: Option<f64>,
    pub far: Option<f64>,
    pub ar: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub tool: String,
    pub version: String,
    /// Resolved run configuration, filled in by the caller.
    pub config: serde_json::Value,
    pub policy: String,
    pub mode: String,
    pub seed: Option<u64>,
    /// `null` where undefined (score-model worlds).
    pub frr: Option<f64>,
    pub far: Option<f64>,
    pub ar: f64,
    pub stderr: RateErrors,
    pub n_trials: Option<u64>,
    pub wap: WapSummary,
    pub lemma1_max_residual: Option<f64>,
    pub per_user: BTreeMap<String, UserRates>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut out = serde_json::to_string_pretty(self)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Rounding can leave a total mass a few ulps outside `[0, 1]`.
fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn skeleton(policy: &MatcherPolicy, mode: &EvalMode, wap: WapSummary) -> EvalReport {
    EvalReport {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::Value::Null,
        policy: policy.kind().to_string(),
        mode: mode.name().into(),
        seed: match mode {
            EvalMode::Exact => None,
            EvalMode::MonteCarlo { seed, .. } => Some(*seed),
        },
        frr: None,
        far: None,
        ar: 0.0,
        stderr: RateErrors::default(),
        n_trials: None,
        wap,
        lemma1_max_residual: None,
        per_user: BTreeMap::new(),
    }
}

/// Computes every rate of the report. Monte Carlo mode runs each rate with
/// `samples` trials and searches for wolves with `search`.
pub fn evaluate(
    pop: &Population,
    policy: &MatcherPolicy,
    mode: &EvalMode,
    search: SearchParams,
) -> Result<EvalReport> {
    let bits = !pop.is_score();
    match *mode {
        EvalMode::Exact => {
            let engine = ExactEngine::new(pop, policy)?;
            let (wap, cert) = wap_exact(pop, policy)?;
            let mut r = skeleton(
                policy,
                mode,
                WapSummary {
                    value: clamp01(wap.value),
                    probe_hex: cert.probe.key(),
                    method: cert.method,
                    stderr: None,
                    is_wolf: cert.is_wolf,
                },
            );
            if bits {
                r.frr = Some(clamp01(engine.frr()?));
                r.far = Some(clamp01(engine.far()?));
            }
            r.ar = clamp01(engine.ar()?);
            if let ExactEngine::Bits(e) = &engine {
                r.lemma1_max_residual = Some(e.lemma1_max_residual()?);
            }
            for (u, user) in pop.users().iter().enumerate() {
                let rates = UserRates {
                    frr_u: if bits { Some(clamp01(engine.frr_u(u)?)) } else { None },
                    far_u: if bits { Some(clamp01(engine.far_u(u)?)) } else { None },
                    ar_u: clamp01(engine.ar_u(u)?),
                };
                r.per_user.insert(user.id.clone(), rates);
            }
            Ok(r)
        }
        EvalMode::MonteCarlo { samples, seed } => {
            let cert = wolf_search_mc(pop, policy, search.budget, search.restarts, seed)?;
            let mut r = skeleton(
                policy,
                mode,
                WapSummary {
                    value: cert.ar_w.value,
                    probe_hex: cert.probe.key(),
                    method: cert.method,
                    stderr: cert.ar_w.stderr,
                    is_wolf: cert.is_wolf,
                },
            );
            r.n_trials = Some(samples);
            let value = |x: &RateResult| (Some(x.value), x.stderr);
            if bits {
                (r.frr, r.stderr.frr) = value(&mc::frr(pop, policy, samples, seed)?);
                (r.far, r.stderr.far) = value(&mc::far(pop, policy, samples, seed)?);
            }
            let ar = mc::ar(pop, policy, samples, seed)?;
            r.ar = ar.value;
            r.stderr.ar = ar.stderr;
            for (u, user) in pop.users().iter().enumerate() {
                let rates = UserRates {
                    frr_u: if bits { Some(mc::frr_u(u, pop, policy, samples, seed)?.value) } else { None },
                    far_u: if bits {
                        Some(mc::far_w(&Attacker::User(u), pop, policy, samples, seed)?.value)
                    } else {
                        None
                    },
                    ar_u: mc::ar_w(&Attacker::User(u), pop, policy, samples, seed)?.value,
                };
                r.per_user.insert(user.id.clone(), rates);
            }
            Ok(r)
        }
    }
}
