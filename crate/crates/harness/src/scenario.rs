//! Line-oriented scenario scripts.
//!
//! ```text
//! # comment
//! register <rp>
//! login <user> <rp> [scope=a,b] [expect=ok|fail] [repeat=N]
//! deregister <rp>
//! rotate-check
//! collusion <rp-a> <rp-b> <user>
//! integrity-attack [trials=N]
//! ```
//!
//! Scripts are validated before anything touches the network: every RP must
//! be registered before it is used, and a user must exist before logging in.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::attack;
use crate::bench::{self, BenchReport};
use crate::deploy::Deployment;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    RegisterRp(String),
    Login {
        user: String,
        rp: String,
        scope: Vec<String>,
        expect_ok: bool,
        repeat: usize,
    },
    DeregisterRp(String),
    RotateCheck,
    CollusionCheck {
        rp_a: String,
        rp_b: String,
        user: String,
    },
    IntegrityAttack {
        trials: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioScript {
    /// Steps with their 1-based source line.
    pub steps: Vec<(usize, Step)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {message}")]
    Order { line: usize, message: String },
}

#[derive(Debug, Error)]
#[error("step {index} (line {line}) failed: {cause}")]
pub struct StepFailure {
    pub index: usize,
    pub line: usize,
    pub cause: String,
}

fn syntax(line: usize, message: impl Into<String>) -> ScriptError {
    ScriptError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_options<'a>(
    line: usize,
    words: impl Iterator<Item = &'a str>,
    allowed: &[&str],
) -> Result<HashMap<&'a str, &'a str>, ScriptError> {
    let mut out = HashMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| syntax(line, format!("expected key=value, got {w:?}")))?;
        if !allowed.contains(&k) {
            return Err(syntax(line, format!("unknown option {k:?}")));
        }
        if out.insert(k, v).is_some() {
            return Err(syntax(line, format!("option {k:?} given twice")));
        }
    }
    Ok(out)
}

fn parse_count(line: usize, value: Option<&&str>, default: usize) -> Result<usize, ScriptError> {
    match value {
        None => Ok(default),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(syntax(line, format!("expected a positive count, got {v:?}"))),
        },
    }
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let command = words[0];
            let arg = |i: usize, name: &str| {
                words
                    .get(i)
                    .map(|w| w.to_string())
                    .ok_or_else(|| syntax(line, format!("{command}: missing {name}")))
            };
            let (step, used) = match command {
                "register" => (Step::RegisterRp(arg(1, "rp")?), 2),
                "deregister" => (Step::DeregisterRp(arg(1, "rp")?), 2),
                "login" => {
                    let user = arg(1, "user")?;
                    let rp = arg(2, "rp")?;
                    let opts = parse_options(line, words[3..].iter().copied(), &["scope", "expect", "repeat"])?;
                    let scope = opts
                        .get("scope")
                        .map(|s| s.split(',').filter(|c| !c.is_empty()).map(str::to_string).collect())
                        .unwrap_or_else(|| vec!["email".to_string()]);
                    let expect_ok = match opts.get("expect").copied() {
                        None | Some("ok") => true,
                        Some("fail") => false,
                        Some(other) => return Err(syntax(line, format!("expect must be ok or fail, got {other:?}"))),
                    };
                    let step = Step::Login {
                        user,
                        rp,
                        scope,
                        expect_ok,
                        repeat: parse_count(line, opts.get("repeat"), 1)?,
                    };
                    (step, words.len())
                }
                "rotate-check" => (Step::RotateCheck, 1),
                "collusion" => {
                    let step = Step::CollusionCheck {
                        rp_a: arg(1, "first rp")?,
                        rp_b: arg(2, "second rp")?,
                        user: arg(3, "user")?,
                    };
                    (step, 4)
                }
                "integrity-attack" => {
                    let opts = parse_options(line, words[1..].iter().copied(), &["trials"])?;
                    let trials = parse_count(line, opts.get("trials"), 20)?;
                    (Step::IntegrityAttack { trials }, words.len())
                }
                other => return Err(syntax(line, format!("unknown command {other:?}"))),
            };
            if let Some(extra) = words.get(used) {
                return Err(syntax(line, format!("unexpected {extra:?}")));
            }
            steps.push((line, step));
        }
        Ok(Self { steps })
    }

    /// Checks phase ordering against the set of known users.
    pub fn validate(&self, users: &HashSet<String>) -> Result<(), ScriptError> {
        let mut registered = HashSet::new();
        let mut deregistered = HashSet::new();
        let order = |line: usize, message: String| ScriptError::Order { line, message };
        for (line, step) in &self.steps {
            let line = *line;
            match step {
                Step::RegisterRp(rp) => {
                    if !registered.insert(rp.clone()) {
                        return Err(order(line, format!("{rp} is registered twice")));
                    }
                }
                Step::DeregisterRp(rp) => {
                    if !registered.contains(rp) {
                        return Err(order(line, format!("{rp} is deregistered before it registers")));
                    }
                    if !deregistered.insert(rp.clone()) {
                        return Err(order(line, format!("{rp} is deregistered twice")));
                    }
                }
                Step::Login { user, rp, .. } => {
                    if !registered.contains(rp) {
                        return Err(order(line, format!("login at {rp} before it registers")));
                    }
                    if !users.contains(user) {
                        return Err(order(line, format!("unknown user {user}")));
                    }
                }
                Step::CollusionCheck { rp_a, rp_b, user } => {
                    for rp in [rp_a, rp_b] {
                        if !registered.contains(rp) || deregistered.contains(rp) {
                            return Err(order(line, format!("collusion check needs {rp} registered")));
                        }
                    }
                    if rp_a == rp_b {
                        return Err(order(line, "collusion check needs two different RPs".into()));
                    }
                    if !users.contains(user) {
                        return Err(order(line, format!("unknown user {user}")));
                    }
                }
                Step::RotateCheck | Step::IntegrityAttack { .. } => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepResult {
    pub line: usize,
    pub step: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub steps: Vec<StepResult>,
    pub logins: usize,
    pub report: Option<BenchReport>,
}

#[derive(Default)]
struct Timings {
    proving: Vec<f64>,
    verification: Vec<f64>,
    oidc: Vec<f64>,
    user_auth: Vec<f64>,
    proof_bytes: usize,
    fragment_bytes: usize,
}

/// Runs a validated script against `dep`, stopping at the first step whose
/// outcome differs from what the script expects.
pub async fn run(dep: &Deployment, script: &ScenarioScript) -> Result<ScenarioResult, StepFailure> {
    let users: HashSet<String> = dep.config.users.iter().map(|u| u.username.clone()).collect();
    if let Err(e) = script.validate(&users) {
        let line = match &e {
            ScriptError::Syntax { line, .. } | ScriptError::Order { line, .. } => *line,
        };
        return Err(StepFailure {
            index: 0,
            line,
            cause: e.to_string(),
        });
    }
    let mut results = Vec::new();
    let mut timings = Timings::default();
    for (index, (line, step)) in script.steps.iter().enumerate() {
        let fail = |cause: String| StepFailure {
            index,
            line: *line,
            cause,
        };
        let detail = run_step(dep, step, &mut timings).await.map_err(|e| fail(format!("{e:#}")))?;
        results.push(StepResult {
            line: *line,
            step: format!("{step:?}"),
            detail,
        });
    }
    let logins = timings.user_auth.len();
    let report = (logins > 0).then(|| {
        let active = dep.idp.active_artifacts().expect("logins imply artifacts");
        BenchReport {
            repetitions: logins,
            constraints: active.artifacts.proving_key.cs.num_constraints(),
            proving_ms: if timings.proving.is_empty() { 0.0 } else { bench::mean(&timings.proving) },
            verification_ms: bench::mean(&timings.verification),
            oidc_ops_ms: bench::mean(&timings.oidc),
            user_auth_ms: bench::mean(&timings.user_auth),
            proof_bytes: timings.proof_bytes,
            fragment_bytes: timings.fragment_bytes,
            pk_bytes: expresso_core::encoding::Encode::to_bytes(&active.artifacts.proving_key).len(),
            vk_bytes: expresso_core::encoding::Encode::to_bytes(&active.artifacts.verification_key).len(),
            reference: bench::REFERENCE,
        }
    });
    Ok(ScenarioResult {
        steps: results,
        logins,
        report,
    })
}

async fn run_step(dep: &Deployment, step: &Step, timings: &mut Timings) -> anyhow::Result<String> {
    match step {
        Step::RegisterRp(rp) => {
            let handle = dep.add_rp(rp).await?;
            let t = Instant::now();
            handle.rp.generate_proof().await?;
            timings.proving.push(t.elapsed().as_secs_f64() * 1e3);
            Ok(format!("{rp} registered"))
        }
        Step::DeregisterRp(rp) => {
            dep.deregister(rp).await?;
            let version = dep.idp.active_artifacts().map_or(0, |a| a.version());
            Ok(format!("{rp} deregistered, IdP now on version {version}"))
        }
        Step::Login {
            user,
            rp,
            scope,
            expect_ok,
            repeat,
        } => {
            let scope: Vec<&str> = scope.iter().map(String::as_str).collect();
            let handle = dep.rp(rp)?;
            let mut subjects = HashSet::new();
            for attempt in 0..*repeat {
                let t = Instant::now();
                let mut outcome = dep.login(user, rp, &scope).await?;
                // A remaining RP learns of a rotation from the rejection.
                if let Err(e) = &outcome {
                    if *expect_ok && handle.rp.on_login_error(e.code().unwrap_or_default()).await.unwrap_or(false) {
                        outcome = dep.login(user, rp, &scope).await?;
                    }
                }
                let elapsed = t.elapsed().as_secs_f64() * 1e3;
                match (outcome, expect_ok) {
                    (Ok(cb), true) => {
                        timings.user_auth.push(elapsed);
                        let proof = handle.rp.generate_proof().await?;
                        timings.verification.push(bench::time_verification(dep, &proof)?);
                        timings.oidc.push(bench::time_oidc_ops(&proof));
                        timings.proof_bytes = expresso_core::encoding::Encode::to_bytes(&proof).len();
                        timings.fragment_bytes = handle.rp.initiate_login(&scope).await?.to_fragment().len();
                        subjects.insert(cb.subject);
                    }
                    (Err(_), false) => {}
                    (Ok(_), false) => anyhow::bail!("attempt {attempt}: login succeeded but the script expects failure"),
                    (Err(e), true) => anyhow::bail!("attempt {attempt}: {e}"),
                }
            }
            if *expect_ok && subjects.len() != 1 {
                anyhow::bail!("{user} got {} different subjects at {rp}", subjects.len());
            }
            Ok(if *expect_ok {
                format!("{user}@{rp} ok x{repeat}")
            } else {
                format!("{user}@{rp} rejected x{repeat}")
            })
        }
        Step::RotateCheck => {
            let active = dep.idp.active_artifacts().map_or(0, |a| a.version());
            anyhow::ensure!(!dep.idp.rotation_pending(), "a rotation is still pending");
            let mut checked = 0;
            for name in dep.rp_names() {
                let rp = &dep.rp(&name)?.rp;
                match rp.refresh_artifacts().await {
                    Ok(v) => {
                        anyhow::ensure!(v == active, "{name} is on version {v}, IdP on {active}");
                        checked += 1;
                    }
                    Err(expresso_rp::RpError::AccessDenied) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(format!("{checked} RPs on version {active}"))
        }
        Step::CollusionCheck { rp_a, rp_b, user } => {
            let r = attack::collusion(dep, rp_a, rp_b, std::slice::from_ref(user), 2).await?;
            anyhow::ensure!(r.holds(), "pseudonyms are linkable: {r:?}");
            Ok(format!("{user}: distinct subjects at {rp_a} and {rp_b}"))
        }
        Step::IntegrityAttack { trials } => {
            let r = attack::integrity(dep, dep.source.clone(), *trials).await?;
            anyhow::ensure!(r.holds(), "substitution went unnoticed: {r:?}");
            Ok(format!("{}/{} substitutions detected", r.detected, r.trials))
        }
    }
}
