//! Two-player contract signing over simulated ledger systems.
//!
//! Each round both players observe their own ledgers and either sign or
//! wait. Signing pays off only when a designated event has landed on the
//! judge's settled prefix and both signatures come close enough to its
//! first occurrence; a lone signer, or one signing with no event nearby, is
//! punished with a sentinel utility below every finite value. Equilibrium
//! checking enumerates all unilateral deviations within a finite strategy
//! class: sign-k-steps-after-first-seeing-the-event thresholds, fixed-time
//! signing, and never signing.
//!
//! Games run on a shared global clock (strategies may read the time), while
//! the underlying ledger semantics are unchanged.

use num_rational::BigRational;
use num_traits::Zero;
use serde::Deserialize;
use thiserror::Error;

use crate::model::{AgentId, InterpretedSystem, Ledger, Run, Time};

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("{role} {agent} must be present and honest for the whole run {run}")]
    AgentUnavailable { role: &'static str, agent: AgentId, run: String },
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),
}

/// A set of ledger prefixes, given as a predicate. The event "happens on"
/// an agent's ledger when some settled prefix of it belongs to the set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerEvent {
    /// Prefixes containing a transaction with this id.
    ContainsTx(String),
}

impl LedgerEvent {
    pub fn happens_on(&self, prefix: &Ledger) -> bool {
        match self {
            LedgerEvent::ContainsTx(id) => prefix.contains_id(id),
        }
    }

    /// Some settled prefix (depth `t`) of the ledger is in the event set.
    /// Monotone events only need the deepest prefix, but the general form
    /// checks them all.
    pub fn on_settled_prefix(&self, ledger: &Ledger, t: usize) -> bool {
        (0..=ledger.len().saturating_sub(t)).any(|n| self.happens_on(&ledger.prefix(n)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnLedgerDeadline {
    /// Both signed-contract records on the judge's ledger within this many
    /// steps of the event first settling.
    Time(usize),
    /// ... within this many further ledger entries.
    Entries(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameMode {
    /// Signing is an external action.
    External,
    /// Signing means a signed-contract record reaching the judge's ledger.
    OnLedger(OnLedgerDeadline),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameSpec {
    pub event: LedgerEvent,
    pub t: usize,
    pub delta: usize,
    /// Signing window around the event settling for the first time.
    pub delta_tilde: usize,
    pub u_high: i64,
    pub judge: AgentId,
    pub players: [AgentId; 2],
    pub mode: GameMode,
}

impl GameSpec {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.delta_tilde < 2 * self.delta {
            return Err(GameError::InvalidSpec(format!(
                "signing window {} must be at least twice the growth bound {}",
                self.delta_tilde, self.delta
            )));
        }
        if self.u_high <= 0 {
            return Err(GameError::InvalidSpec("the high utility must be positive".into()));
        }
        if self.players[0] == self.players[1] {
            return Err(GameError::InvalidSpec("players must be distinct".into()));
        }
        Ok(())
    }

    /// Payload marker a player writes on the ledger in on-ledger mode.
    pub fn signature_marker(player: &AgentId) -> String {
        format!("signed-contract({player})")
    }
}

/// Deterministic signing rule, a function of the player's own ledger view
/// and the clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    /// Sign `k` steps after the event first settles on the own ledger.
    Threshold(usize),
    /// Sign at this time regardless of observations.
    FixedTime(Time),
    Never,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Threshold(k) => write!(f, "threshold({k})"),
            Strategy::FixedTime(t) => write!(f, "fixed({t})"),
            Strategy::Never => f.write_str("never"),
        }
    }
}

/// `NegInf` sorts below every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Utility {
    NegInf,
    Finite(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub utilities: [Utility; 2],
    pub sign_times: [Option<Time>; 2],
    /// First time the event holds on a settled prefix of the judge's
    /// ledger.
    pub event_time: Option<Time>,
}

fn role_ok(run: &Run, agent: &AgentId) -> bool {
    (0..=run.horizon()).all(|m| run.honest(agent, m))
}

fn require_roles(run: &Run, spec: &GameSpec) -> Result<(), GameError> {
    for (role, agent) in [
        ("judge", &spec.judge),
        ("player", &spec.players[0]),
        ("player", &spec.players[1]),
    ] {
        if !role_ok(run, agent) {
            return Err(GameError::AgentUnavailable {
                role,
                agent: agent.clone(),
                run: run.id().to_string(),
            });
        }
    }
    Ok(())
}

/// First time the event holds on some settled prefix of the agent's ledger.
pub fn first_event_time(run: &Run, spec: &GameSpec, agent: &AgentId) -> Option<Time> {
    (0..=run.horizon())
        .find(|&m| run.ledger(agent, m).is_some_and(|l| spec.event.on_settled_prefix(l, spec.t)))
}

/// When the strategy signs on this run, if ever. Threshold signing past the
/// horizon never happens.
pub fn sign_time(run: &Run, spec: &GameSpec, player: &AgentId, strategy: &Strategy) -> Option<Time> {
    match strategy {
        Strategy::Never => None,
        Strategy::FixedTime(t) => (*t <= run.horizon()).then_some(*t),
        Strategy::Threshold(k) => {
            let seen = first_event_time(run, spec, player)?;
            let at = seen + k;
            (at <= run.horizon()).then_some(at)
        }
    }
}

/// Play one run under a strategy profile and apply the utility rules:
///
/// 1. nobody signs: both zero;
/// 2. exactly one signs: the signer takes the sentinel, the other zero;
/// 3. both sign within the window of the event's first settling: both high;
/// 4. otherwise each signer takes the sentinel if no settled occurrence of
///    the event lies within the window of its signing time, else zero.
pub fn play(run: &Run, spec: &GameSpec, strategies: [&Strategy; 2]) -> Result<Outcome, GameError> {
    spec.validate()?;
    require_roles(run, spec)?;
    let event_time = first_event_time(run, spec, &spec.judge);
    let sign_times =
        [0, 1].map(|p| sign_time(run, spec, &spec.players[p], strategies[p]));

    let event_near = |t: Time| {
        let lo = t.saturating_sub(spec.delta_tilde);
        let hi = (t + spec.delta_tilde).min(run.horizon());
        (lo..=hi).any(|m| {
            run.ledger(&spec.judge, m)
                .is_some_and(|l| spec.event.on_settled_prefix(l, spec.t))
        })
    };

    let utilities = match sign_times {
        [None, None] => [Utility::Finite(0), Utility::Finite(0)],
        [Some(_), None] => [Utility::NegInf, Utility::Finite(0)],
        [None, Some(_)] => [Utility::Finite(0), Utility::NegInf],
        [Some(t1), Some(t2)] => {
            let on_time = |t: Time| {
                event_time.is_some_and(|m_e| t.abs_diff(m_e) <= spec.delta_tilde)
            };
            if on_time(t1) && on_time(t2) {
                [Utility::Finite(spec.u_high), Utility::Finite(spec.u_high)]
            } else {
                [t1, t2].map(|t| if event_near(t) { Utility::Finite(0) } else { Utility::NegInf })
            }
        }
    };
    Ok(Outcome { utilities, sign_times, event_time })
}

/// On-ledger variant: success iff both players' signed-contract records
/// reach the judge's ledger within the deadline of the event settling; no
/// success pays both zero. Sign times report when the records were
/// submitted.
pub fn play_on_ledger(run: &Run, spec: &GameSpec) -> Result<Outcome, GameError> {
    spec.validate()?;
    require_roles(run, spec)?;
    let GameMode::OnLedger(deadline) = spec.mode else {
        return Err(GameError::InvalidSpec("on-ledger play needs an on-ledger mode".into()));
    };
    let event_time = first_event_time(run, spec, &spec.judge);
    let sign_times = [0, 1].map(|p| {
        let marker = GameSpec::signature_marker(&spec.players[p]);
        run.submissions()
            .into_iter()
            .find(|(agent, _, tx)| agent == &spec.players[p] && tx.payload() == marker)
            .map(|(_, m, _)| m)
    });

    let success = event_time.is_some_and(|m_e| match deadline {
        OnLedgerDeadline::Time(dt) => {
            let at = (m_e + dt).min(run.horizon());
            let ledger = run.ledger(&spec.judge, at).expect("judge present");
            spec.players.iter().all(|p| {
                let marker = GameSpec::signature_marker(p);
                ledger.entries().iter().any(|tx| tx.payload() == marker)
            })
        }
        OnLedgerDeadline::Entries(budget) => {
            let len_at_event = run.ledger(&spec.judge, m_e).expect("judge present").len();
            let final_ledger = run.ledger(&spec.judge, run.horizon()).expect("judge present");
            spec.players.iter().all(|p| {
                let marker = GameSpec::signature_marker(p);
                final_ledger
                    .entries()
                    .iter()
                    .position(|tx| tx.payload() == marker)
                    .is_some_and(|pos| pos < len_at_event + budget)
            })
        }
    });

    let pay = if success { Utility::Finite(spec.u_high) } else { Utility::Finite(0) };
    Ok(Outcome { utilities: [pay, pay], sign_times, event_time })
}

/// The finite strategy class swept for unilateral deviations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationClass {
    pub max_threshold: usize,
    /// Defaults to the horizon when absent.
    pub max_fixed_time: Option<Time>,
    pub include_never: bool,
}

impl Default for DeviationClass {
    fn default() -> Self {
        DeviationClass { max_threshold: 4, max_fixed_time: None, include_never: true }
    }
}

impl DeviationClass {
    pub fn strategies(&self, horizon: Time) -> Vec<Strategy> {
        let mut out: Vec<Strategy> =
            (0..=self.max_threshold).map(Strategy::Threshold).collect();
        out.extend((0..=self.max_fixed_time.unwrap_or(horizon)).map(Strategy::FixedTime));
        if self.include_never {
            out.push(Strategy::Never);
        }
        out
    }
}

impl std::fmt::Display for DeviationClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "thresholds 0..={}, fixed times 0..={}, never={}",
            self.max_threshold,
            self.max_fixed_time.map_or("horizon".to_string(), |t| t.to_string()),
            self.include_never
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumMode {
    /// A deviation counts if it is strictly better on any single run.
    WorstCase,
    /// A deviation counts if its expected utility under some cell's measure
    /// is strictly higher; an expectation with any sentinel outcome of
    /// positive weight is the sentinel.
    Expectation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExpectedUtility {
    NegInf,
    Finite(BigRational),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainSite {
    Run { id: String, profile: Utility, deviation: Utility },
    Cell { id: String, profile: ExpectedUtility, deviation: ExpectedUtility },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationGain {
    pub player: usize,
    pub deviation: Strategy,
    pub site: GainSite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub profile: [Strategy; 2],
    pub mode: EquilibriumMode,
    pub class: DeviationClass,
    pub is_equilibrium: bool,
    /// The strongest strictly-improving unilateral deviation found.
    pub best_gain: Option<DeviationGain>,
    /// Runs on which the profile itself exposes a player to the sentinel.
    pub exposures: Vec<(usize, String)>,
}

fn expected(
    cell: &crate::model::Cell,
    utilities: &[[Utility; 2]],
    player: usize,
) -> ExpectedUtility {
    let mut sum = BigRational::zero();
    for (run, weight) in cell.entries() {
        match utilities[run][player] {
            Utility::NegInf => {
                if !weight.is_zero() {
                    return ExpectedUtility::NegInf;
                }
            }
            Utility::Finite(v) => sum += weight * BigRational::from_integer(v.into()),
        }
    }
    ExpectedUtility::Finite(sum)
}

/// Sweep all unilateral deviations of both players within the class.
/// Confirms the profile iff no deviation is strictly profitable under the
/// chosen mode; any sentinel outcomes of the profile itself are reported as
/// exposures.
pub fn check_equilibrium(
    sys: &InterpretedSystem,
    spec: &GameSpec,
    profile: [Strategy; 2],
    class: &DeviationClass,
    mode: EquilibriumMode,
) -> Result<EquilibriumReport, GameError> {
    spec.validate()?;
    let horizon = sys.horizon();
    let runs = sys.runs();

    let profile_outcomes: Vec<[Utility; 2]> = runs
        .iter()
        .map(|run| play(run, spec, [&profile[0], &profile[1]]).map(|o| o.utilities))
        .collect::<Result<_, _>>()?;
    let mut exposures = Vec::new();
    for (r, utils) in profile_outcomes.iter().enumerate() {
        for (player, utility) in utils.iter().enumerate() {
            if *utility == Utility::NegInf {
                exposures.push((player, runs[r].id().to_string()));
            }
        }
    }

    let mut best_gain: Option<DeviationGain> = None;
    let better = |candidate: &DeviationGain, incumbent: &Option<DeviationGain>| match incumbent {
        None => true,
        Some(cur) => match (&candidate.site, &cur.site) {
            (GainSite::Run { deviation: a, profile: pa, .. }, GainSite::Run { deviation: b, profile: pb, .. }) => {
                (a, std::cmp::Reverse(pa)) > (b, std::cmp::Reverse(pb))
            }
            (GainSite::Cell { deviation: a, .. }, GainSite::Cell { deviation: b, .. }) => a > b,
            _ => false,
        },
    };

    for player in 0..2 {
        for deviation in class.strategies(horizon) {
            if deviation == profile[player] {
                continue;
            }
            let mut strategies = [&profile[0], &profile[1]];
            strategies[player] = &deviation;
            let dev_outcomes: Vec<[Utility; 2]> = runs
                .iter()
                .map(|run| play(run, spec, strategies).map(|o| o.utilities))
                .collect::<Result<_, _>>()?;
            match mode {
                EquilibriumMode::WorstCase => {
                    for (r, dev) in dev_outcomes.iter().enumerate() {
                        if dev[player] > profile_outcomes[r][player] {
                            let gain = DeviationGain {
                                player,
                                deviation,
                                site: GainSite::Run {
                                    id: runs[r].id().to_string(),
                                    profile: profile_outcomes[r][player],
                                    deviation: dev[player],
                                },
                            };
                            if better(&gain, &best_gain) {
                                best_gain = Some(gain);
                            }
                        }
                    }
                }
                EquilibriumMode::Expectation => {
                    for cell in sys.cells() {
                        let base = expected(cell, &profile_outcomes, player);
                        let dev = expected(cell, &dev_outcomes, player);
                        if dev > base {
                            let gain = DeviationGain {
                                player,
                                deviation,
                                site: GainSite::Cell {
                                    id: cell.id().to_string(),
                                    profile: base,
                                    deviation: dev,
                                },
                            };
                            if better(&gain, &best_gain) {
                                best_gain = Some(gain);
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(EquilibriumReport {
        profile,
        mode,
        class: class.clone(),
        is_equilibrium: best_gain.is_none(),
        best_gain,
        exposures,
    })
}

/// Raw serde mirror of the game spec file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    game: GameSection,
    #[serde(default)]
    deviations: Option<DeviationsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameSection {
    event_tx: String,
    t: usize,
    delta: usize,
    delta_tilde: usize,
    u_high: i64,
    judge: String,
    players: Vec<String>,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    deadline_time: Option<usize>,
    #[serde(default)]
    deadline_entries: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviationsSection {
    #[serde(default)]
    max_threshold: Option<usize>,
    #[serde(default)]
    max_fixed_time: Option<usize>,
    #[serde(default)]
    include_never: Option<bool>,
}

/// Load a game spec and deviation class from the TOML format documented in
/// the repository README.
pub fn load_game_spec(text: &str) -> Result<(GameSpec, DeviationClass), GameError> {
    let raw: GameFile =
        toml::from_str(text).map_err(|e| GameError::InvalidSpec(e.to_string()))?;
    let g = raw.game;
    if g.players.len() != 2 {
        return Err(GameError::InvalidSpec("exactly two players required".into()));
    }
    let mode = match g.mode.as_deref().unwrap_or("external") {
        "external" => GameMode::External,
        "on-ledger" => match (g.deadline_time, g.deadline_entries) {
            (Some(dt), None) => GameMode::OnLedger(OnLedgerDeadline::Time(dt)),
            (None, Some(n)) => GameMode::OnLedger(OnLedgerDeadline::Entries(n)),
            _ => {
                return Err(GameError::InvalidSpec(
                    "on-ledger mode needs exactly one of deadline_time / deadline_entries".into(),
                ))
            }
        },
        other => return Err(GameError::InvalidSpec(format!("unknown mode {other:?}"))),
    };
    let spec = GameSpec {
        event: LedgerEvent::ContainsTx(g.event_tx),
        t: g.t,
        delta: g.delta,
        delta_tilde: g.delta_tilde,
        u_high: g.u_high,
        judge: AgentId::new(g.judge),
        players: [AgentId::new(g.players[0].as_str()), AgentId::new(g.players[1].as_str())],
        mode,
    };
    spec.validate()?;
    let d = raw.deviations;
    let class = DeviationClass {
        max_threshold: d.as_ref().and_then(|d| d.max_threshold).unwrap_or(4),
        max_fixed_time: d.as_ref().and_then(|d| d.max_fixed_time),
        include_never: d.as_ref().and_then(|d| d.include_never).unwrap_or(true),
    };
    Ok((spec, class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;

    fn spec(t: usize, delta: usize, delta_tilde: usize) -> GameSpec {
        GameSpec {
            event: LedgerEvent::ContainsTx("contract".into()),
            t,
            delta,
            delta_tilde,
            u_high: 100,
            judge: AgentId::new("a3"),
            players: [AgentId::new("a1"), AgentId::new("a2")],
            mode: GameMode::External,
        }
    }

    /// Everyone sees the contract settle at time 2 (depth 1).
    fn good_run() -> Run {
        let chain = |n: usize| -> Vec<String> {
            std::iter::once("contract".to_string())
                .chain((0..n).map(|k| format!("b{k}")))
                .collect()
        };
        let agent = |name: &str| {
            let mut s = AgentScript::new(name);
            for (t, n) in [(1, 0), (2, 1), (3, 2)] {
                let ids = chain(n);
                let refs: Vec<&str> = ids.iter().map(|x| x.as_str()).collect();
                s = s.adopt(t, &refs);
            }
            s
        };
        script_run("good", 5, &[agent("a1"), agent("a2"), agent("a3")])
    }

    /// The second player is frozen at length 2 and, at depth 2, never sees
    /// the contract settle; consistency still holds.
    fn stale_run() -> Run {
        let chain = |n: usize| -> Vec<String> {
            std::iter::once("contract".to_string())
                .chain((0..n).map(|k| format!("b{k}")))
                .collect()
        };
        let grower = |name: &str| {
            let mut s = AgentScript::new(name);
            for (t, n) in [(1, 1), (2, 2), (3, 3)] {
                let ids = chain(n);
                let refs: Vec<&str> = ids.iter().map(|x| x.as_str()).collect();
                s = s.adopt(t, &refs);
            }
            s
        };
        let frozen = {
            let ids = chain(1);
            let refs: Vec<&str> = ids.iter().map(|x| x.as_str()).collect();
            AgentScript::new("a2").adopt(1, &refs)
        };
        script_run("stale", 5, &[grower("a1"), frozen, grower("a3")])
    }

    #[test]
    fn nobody_signs_both_zero() {
        let run = good_run();
        let out = play(&run, &spec(1, 0, 2), [&Strategy::Never, &Strategy::Never]).unwrap();
        assert_eq!(out.utilities, [Utility::Finite(0), Utility::Finite(0)]);
        assert_eq!(out.sign_times, [None, None]);
    }

    #[test]
    fn lone_signer_takes_the_sentinel() {
        let run = good_run();
        let out =
            play(&run, &spec(1, 0, 2), [&Strategy::FixedTime(0), &Strategy::Never]).unwrap();
        assert_eq!(out.utilities, [Utility::NegInf, Utility::Finite(0)]);
        let out =
            play(&run, &spec(1, 0, 2), [&Strategy::Never, &Strategy::FixedTime(2)]).unwrap();
        assert_eq!(out.utilities, [Utility::Finite(0), Utility::NegInf]);
    }

    #[test]
    fn signing_on_the_event_pays_high() {
        let run = good_run();
        let s = spec(1, 0, 2);
        let out = play(&run, &s, [&Strategy::Threshold(0), &Strategy::Threshold(0)]).unwrap();
        assert_eq!(out.event_time, Some(2));
        assert_eq!(out.sign_times, [Some(2), Some(2)]);
        assert_eq!(out.utilities, [Utility::Finite(100), Utility::Finite(100)]);
    }

    #[test]
    fn signing_without_the_event_nearby_is_punished() {
        // no contract anywhere on this run
        let run = script_run(
            "plain",
            4,
            &[
                AgentScript::new("a1").adopt(1, &["x"]),
                AgentScript::new("a2").adopt(1, &["x"]),
                AgentScript::new("a3").adopt(1, &["x"]),
            ],
        );
        let s = spec(0, 0, 1);
        let out =
            play(&run, &s, [&Strategy::FixedTime(0), &Strategy::FixedTime(3)]).unwrap();
        assert_eq!(out.event_time, None);
        assert_eq!(out.utilities, [Utility::NegInf, Utility::NegInf]);
    }

    #[test]
    fn late_second_signature_misses_the_window() {
        let run = good_run();
        let s = spec(1, 0, 2);
        // event settles at 2; signing at 5 is outside the window but the
        // event is still near, so it costs the high payoff, not the sentinel
        let out =
            play(&run, &s, [&Strategy::Threshold(0), &Strategy::FixedTime(5)]).unwrap();
        assert_eq!(out.utilities, [Utility::Finite(0), Utility::Finite(0)]);
    }

    #[test]
    fn utilities_are_exhaustive_and_exclusive() {
        let runs = [good_run(), stale_run()];
        let class = DeviationClass { max_threshold: 2, max_fixed_time: Some(5), include_never: true };
        let s = spec(1, 1, 2);
        for run in &runs {
            for s1 in class.strategies(run.horizon()) {
                for s2 in class.strategies(run.horizon()) {
                    let out = play(run, &s, [&s1, &s2]).unwrap();
                    for u in out.utilities {
                        assert!(matches!(u, Utility::NegInf | Utility::Finite(_)));
                        assert!(Utility::NegInf <= u);
                    }
                }
            }
        }
    }

    #[test]
    fn sentinel_orders_below_all_finite() {
        assert!(Utility::NegInf < Utility::Finite(i64::MIN));
        assert!(Utility::Finite(0) < Utility::Finite(100));
        assert!(ExpectedUtility::NegInf < ExpectedUtility::Finite(BigRational::zero()));
    }

    #[test]
    fn equilibrium_on_acceptable_system() {
        let sys = system_t(vec![good_run()], 1);
        let s = spec(1, 0, 2);
        let class = DeviationClass { max_threshold: 3, max_fixed_time: None, include_never: true };
        let report = check_equilibrium(
            &sys,
            &s,
            [Strategy::Threshold(0), Strategy::Threshold(0)],
            &class,
            EquilibriumMode::WorstCase,
        )
        .unwrap();
        assert!(report.is_equilibrium, "{:?}", report.best_gain);
        assert!(report.exposures.is_empty());
    }

    #[test]
    fn stale_system_exposes_the_seeing_player() {
        let sys = system_t(vec![stale_run()], 2);
        let s = spec(2, 1, 2);
        let class = DeviationClass::default();
        let report = check_equilibrium(
            &sys,
            &s,
            [Strategy::Threshold(0), Strategy::Threshold(0)],
            &class,
            EquilibriumMode::WorstCase,
        )
        .unwrap();
        // the first player sees the event, signs alone, and takes the
        // sentinel; backing off to never-signing escapes it
        assert!(report.exposures.contains(&(0, "stale".to_string())));
        assert!(!report.is_equilibrium);
        assert!(matches!(report.best_gain.unwrap().site, GainSite::Run { .. }));
        let run = &sys.runs()[0];
        let exposed =
            play(run, &s, [&Strategy::Threshold(0), &Strategy::Threshold(0)]).unwrap();
        assert_eq!(exposed.utilities[0], Utility::NegInf);
        let escaped = play(run, &s, [&Strategy::Never, &Strategy::Threshold(0)]).unwrap();
        assert!(escaped.utilities[0] > exposed.utilities[0]);
    }

    #[test]
    fn expectation_mode_uses_cell_measures() {
        let sys = system_t(vec![good_run(), stale_run()], 2);
        let s = spec(2, 0, 2);
        let class = DeviationClass { max_threshold: 1, max_fixed_time: Some(0), include_never: true };
        let report = check_equilibrium(
            &sys,
            &s,
            [Strategy::Threshold(0), Strategy::Threshold(0)],
            &class,
            EquilibriumMode::Expectation,
        )
        .unwrap();
        // the profile hits the sentinel on the stale run with weight 1/2,
        // so never-signing beats it in expectation
        assert!(!report.is_equilibrium);
        match report.best_gain.unwrap().site {
            GainSite::Cell { profile, deviation, .. } => {
                assert_eq!(profile, ExpectedUtility::NegInf);
                assert!(matches!(deviation, ExpectedUtility::Finite(_)));
            }
            _ => panic!("expectation mode reports per-cell gains"),
        }
    }

    #[test]
    fn timeline_bounds_on_acceptable_runs() {
        let run = good_run();
        let s = spec(1, 1, 2);
        assert!(crate::properties::check_acceptability(&run, s.t, s.delta).holds);
        let m_e = first_event_time(&run, &s, &s.judge).unwrap();
        let t1 = first_event_time(&run, &s, &s.players[0]).unwrap();
        let t2 = first_event_time(&run, &s, &s.players[1]).unwrap();
        assert!(t1.abs_diff(t2) <= s.delta);
        assert!(t1.max(t2) <= m_e + 2 * s.delta);
    }

    fn on_ledger_run(include_sigs: bool) -> Run {
        // contract settles for the judge at 2; signature records submitted
        // at 2 land in the block at 3
        let base = ["contract", "b0", "b1"];
        let sig1 = GameSpec::signature_marker(&"a1".into());
        let sig2 = GameSpec::signature_marker(&"a2".into());
        let mut chains: Vec<Vec<crate::model::Transaction>> = vec![
            base[..1].iter().map(|id| crate::model::Transaction::new(*id)).collect(),
            base[..2].iter().map(|id| crate::model::Transaction::new(*id)).collect(),
        ];
        let mut third: Vec<crate::model::Transaction> =
            base[..2].iter().map(|id| crate::model::Transaction::new(*id)).collect();
        if include_sigs {
            third.push(crate::model::Transaction::with_payload("sig1", sig1));
            third.push(crate::model::Transaction::with_payload("sig2", sig2));
        }
        third.push(crate::model::Transaction::new("b1"));
        chains.push(third);
        let agent = |name: &str| {
            let mut s = AgentScript::new(name);
            for (t, chain) in chains.iter().enumerate() {
                s = s.adopt_ledger(t + 1, crate::model::Ledger::new(chain.clone()));
            }
            if include_sigs && (name == "a1" || name == "a2") {
                s = s.submit(2, if name == "a1" { "sig1" } else { "sig2" });
            }
            s
        };
        script_run("onledger", 5, &[agent("a1"), agent("a2"), agent("a3")])
    }

    #[test]
    fn on_ledger_success_within_time() {
        let mut s = spec(1, 0, 2);
        s.mode = GameMode::OnLedger(OnLedgerDeadline::Time(2));
        let run = on_ledger_run(true);
        let out = play_on_ledger(&run, &s).unwrap();
        assert_eq!(out.event_time, Some(2));
        assert_eq!(out.utilities, [Utility::Finite(100), Utility::Finite(100)]);
    }

    #[test]
    fn on_ledger_no_submissions_no_success() {
        let mut s = spec(1, 0, 2);
        s.mode = GameMode::OnLedger(OnLedgerDeadline::Time(2));
        let run = on_ledger_run(false);
        let out = play_on_ledger(&run, &s).unwrap();
        assert_eq!(out.utilities, [Utility::Finite(0), Utility::Finite(0)]);
        assert_eq!(out.sign_times, [None, None]);
    }

    #[test]
    fn on_ledger_entry_budget_detects_crowding() {
        let mut s = spec(1, 0, 2);
        let run = on_ledger_run(true);
        // judge holds 2 entries when the event settles; the records sit at
        // positions 2 and 3
        s.mode = GameMode::OnLedger(OnLedgerDeadline::Entries(2));
        assert_eq!(
            play_on_ledger(&run, &s).unwrap().utilities,
            [Utility::Finite(100), Utility::Finite(100)]
        );
        s.mode = GameMode::OnLedger(OnLedgerDeadline::Entries(1));
        assert_eq!(
            play_on_ledger(&run, &s).unwrap().utilities,
            [Utility::Finite(0), Utility::Finite(0)]
        );
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(1, 2, 3);
        assert!(matches!(s.validate(), Err(GameError::InvalidSpec(_))));
        s.delta_tilde = 4;
        assert!(s.validate().is_ok());
        s.u_high = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn absent_or_dishonest_roles_rejected() {
        let run = script_run(
            "norole",
            3,
            &[AgentScript::new("a1"), AgentScript::new("a2"), AgentScript::new("a3").dishonest_from(1)],
        );
        let err = play(&run, &spec(0, 0, 0), [&Strategy::Never, &Strategy::Never]).unwrap_err();
        assert!(matches!(err, GameError::AgentUnavailable { role: "judge", .. }));
    }

    #[test]
    fn game_file_round_trip() {
        let text = r#"
[game]
event_tx = "contract"
t = 1
delta = 1
delta_tilde = 4
u_high = 50
judge = "a3"
players = ["a1", "a2"]

[deviations]
max_threshold = 6
"#;
        let (spec, class) = load_game_spec(text).unwrap();
        assert_eq!(spec.event, LedgerEvent::ContainsTx("contract".into()));
        assert_eq!(spec.mode, GameMode::External);
        assert_eq!(class.max_threshold, 6);
        assert!(class.include_never);

        let on_ledger = text.replace(
            "players = [\"a1\", \"a2\"]",
            "players = [\"a1\", \"a2\"]\nmode = \"on-ledger\"\ndeadline_time = 3",
        );
        let (spec, _) = load_game_spec(&on_ledger).unwrap();
        assert_eq!(spec.mode, GameMode::OnLedger(OnLedgerDeadline::Time(3)));
    }
}
