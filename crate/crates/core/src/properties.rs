//! Per-run checkers for ledger properties: consistency, weak growth,
//! acceptability, liveness, and the chain-growth upper bound.
//!
//! All quantifiers over "later times" are bounded by the run horizon with
//! stutter extension: the final state stands in for every later instant, so
//! a target time `m + d` past the horizon clamps to the horizon. Each
//! checker returns a witness pinpointing the violated clause; witnesses can
//! be re-evaluated against the run with [`recheck`].

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};

use crate::model::{is_prefix, is_t_prefix, AgentId, Ledger, Run, Time};

/// Which property was checked, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    TConsistency { t: usize },
    WeakGrowth { delta: usize },
    Acceptability { t: usize, delta: usize },
    Liveness { delta_live: usize },
    ChainGrowthUpper { g_max: BigRational },
}

impl std::fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PropertyKind::TConsistency { t } => write!(f, "t-consistency(t={t})"),
            PropertyKind::WeakGrowth { delta } => write!(f, "weak-growth(delta={delta})"),
            PropertyKind::Acceptability { t, delta } => {
                write!(f, "acceptability(t={t},delta={delta})")
            }
            PropertyKind::Liveness { delta_live } => write!(f, "liveness(delta={delta_live})"),
            PropertyKind::ChainGrowthUpper { g_max } => write!(f, "chain-growth-upper(g={g_max})"),
        }
    }
}

/// The clause instance a failed check points at. Field meaning per property:
///
/// - consistency / acceptability: honest `i` at `m` holds `ledger` as its
///   deepest settled prefix, honest `j` at `m_prime` does not extend it;
/// - weak growth: `ledger` is `i`'s ledger at `m`, and `j` at `m_prime` is
///   shorter;
/// - liveness: `i` (= `j`) submitted the single entry of `ledger` at `m` and
///   does not hold it by the deadline `m_prime`;
/// - chain growth: `i`'s (= `j`'s) ledger grew from `ledger` at `m` past the
///   allowed bound by `m_prime`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub i: AgentId,
    pub j: AgentId,
    pub m: Time,
    pub m_prime: Time,
    pub ledger: Ledger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub kind: PropertyKind,
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl PropertyReport {
    fn ok(kind: PropertyKind) -> Self {
        PropertyReport { kind, holds: true, witness: None }
    }

    fn fail(kind: PropertyKind, witness: Witness) -> Self {
        PropertyReport { kind, holds: false, witness: Some(witness) }
    }
}

fn honest_at(run: &Run, m: Time) -> impl Iterator<Item = &AgentId> {
    run.state(m).env().honest().iter()
}

/// Later-time targets `>= m + d`, clamped to the horizon.
fn later_times(run: &Run, m: Time, d: usize) -> std::ops::RangeInclusive<Time> {
    let h = run.horizon();
    (m + d).min(h)..=h
}

/// The deepest settled prefix any honest agent holds at time `m` must be a
/// plain prefix of every honest ledger at every time `m' >= m`. Checking
/// only the deepest prefix suffices: its prefixes are prefixes of anything
/// it is a prefix of.
pub fn check_t_consistency(run: &Run, t: usize) -> PropertyReport {
    let kind = PropertyKind::TConsistency { t };
    for m in 0..=run.horizon() {
        for i in honest_at(run, m) {
            let settled = run.ledger(i, m).expect("honest agents are present").max_t_prefix(t);
            if settled.is_empty() {
                continue;
            }
            for m_prime in m..=run.horizon() {
                for j in honest_at(run, m_prime) {
                    let later = run.ledger(j, m_prime).expect("honest agents are present");
                    if !is_prefix(&settled, later) {
                        return PropertyReport::fail(
                            kind,
                            Witness { i: i.clone(), j: j.clone(), m, m_prime, ledger: settled },
                        );
                    }
                }
            }
        }
    }
    PropertyReport::ok(kind)
}

/// Any honest ledger length at `m` lower-bounds every honest ledger length
/// from `m + delta` on.
pub fn check_weak_growth(run: &Run, delta: usize) -> PropertyReport {
    let kind = PropertyKind::WeakGrowth { delta };
    for m in 0..=run.horizon() {
        for i in honest_at(run, m) {
            let len_i = run.ledger(i, m).expect("honest agents are present").len();
            for m_prime in later_times(run, m, delta) {
                for j in honest_at(run, m_prime) {
                    let ledger_j = run.ledger(j, m_prime).expect("honest agents are present");
                    if ledger_j.len() < len_i {
                        return PropertyReport::fail(
                            kind,
                            Witness {
                                i: i.clone(),
                                j: j.clone(),
                                m,
                                m_prime,
                                ledger: run.ledger(i, m).unwrap().clone(),
                            },
                        );
                    }
                }
            }
        }
    }
    PropertyReport::ok(kind)
}

/// The deepest settled prefix any honest agent holds at `m` must again be a
/// settled prefix of every honest ledger `delta` later (and from then on).
pub fn check_acceptability(run: &Run, t: usize, delta: usize) -> PropertyReport {
    let kind = PropertyKind::Acceptability { t, delta };
    for m in 0..=run.horizon() {
        for i in honest_at(run, m) {
            let settled = run.ledger(i, m).expect("honest agents are present").max_t_prefix(t);
            if settled.is_empty() {
                continue;
            }
            for m_prime in later_times(run, m, delta) {
                for j in honest_at(run, m_prime) {
                    let later = run.ledger(j, m_prime).expect("honest agents are present");
                    if !is_t_prefix(&settled, later, t) {
                        return PropertyReport::fail(
                            kind,
                            Witness { i: i.clone(), j: j.clone(), m, m_prime, ledger: settled },
                        );
                    }
                }
            }
        }
    }
    PropertyReport::ok(kind)
}

/// Every transaction submitted by an agent that stays honest through the
/// deadline must appear in that agent's own ledger by `m + delta_live`
/// (clamped to the horizon).
pub fn check_liveness(run: &Run, delta_live: usize) -> PropertyReport {
    let kind = PropertyKind::Liveness { delta_live };
    for (agent, m, tx) in run.submissions() {
        let deadline = (m + delta_live).min(run.horizon());
        let honest_throughout = (m..=deadline).all(|u| run.honest(&agent, u));
        if !honest_throughout {
            continue;
        }
        let included =
            run.ledger(&agent, deadline).is_some_and(|l| l.entries().contains(&tx));
        if !included {
            return PropertyReport::fail(
                kind,
                Witness {
                    i: agent.clone(),
                    j: agent,
                    m,
                    m_prime: deadline,
                    ledger: Ledger::new(vec![tx]),
                },
            );
        }
    }
    PropertyReport::ok(kind)
}

/// Over any window `[m, m + w]` throughout which an agent is honest, its
/// ledger may grow by at most `ceil(g_max * w)` entries.
pub fn check_chain_growth_upper(run: &Run, g_max: &BigRational) -> PropertyReport {
    let kind = PropertyKind::ChainGrowthUpper { g_max: g_max.clone() };
    assert!(g_max.is_positive(), "growth bound must be positive");
    for m in 0..=run.horizon() {
        for i in honest_at(run, m) {
            let start_len = run.ledger(i, m).expect("honest agents are present").len();
            for end in m + 1..=run.horizon() {
                if !run.honest(i, end) {
                    break;
                }
                let w = end - m;
                let bound = (g_max * BigRational::from_integer(w.into()))
                    .ceil()
                    .to_integer()
                    .to_usize()
                    .unwrap_or(usize::MAX);
                let grown =
                    run.ledger(i, end).expect("honest agents are present").len() - start_len;
                if grown > bound {
                    return PropertyReport::fail(
                        kind,
                        Witness {
                            i: i.clone(),
                            j: i.clone(),
                            m,
                            m_prime: end,
                            ledger: run.ledger(i, m).unwrap().clone(),
                        },
                    );
                }
            }
        }
    }
    PropertyReport::ok(kind)
}

/// Re-evaluate the clause a witness points at; returns true iff the clause
/// is indeed violated there. Reports with `holds = true` recheck as true.
pub fn recheck(report: &PropertyReport, run: &Run) -> bool {
    let Some(w) = &report.witness else {
        return report.holds;
    };
    let violated = match &report.kind {
        PropertyKind::TConsistency { .. } => run
            .ledger(&w.j, w.m_prime)
            .is_some_and(|later| !is_prefix(&w.ledger, later)),
        PropertyKind::WeakGrowth { .. } => run
            .ledger(&w.j, w.m_prime)
            .is_some_and(|later| later.len() < w.ledger.len()),
        PropertyKind::Acceptability { t, .. } => run
            .ledger(&w.j, w.m_prime)
            .is_some_and(|later| !is_t_prefix(&w.ledger, later, *t)),
        PropertyKind::Liveness { .. } => run
            .ledger(&w.i, w.m_prime)
            .is_none_or(|l| !l.entries().contains(&w.ledger.entries()[0])),
        PropertyKind::ChainGrowthUpper { g_max } => {
            let bound = (g_max * BigRational::from_integer((w.m_prime - w.m).into()))
                .ceil()
                .to_integer()
                .to_usize()
                .unwrap_or(usize::MAX);
            let start = w.ledger.len();
            run.ledger(&w.i, w.m_prime).is_some_and(|l| l.len() - start > bound)
        }
    };
    violated && !report.holds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    /// Reference checker quantifying over every prefix, not just the deepest
    /// settled one.
    fn consistency_all_prefixes(run: &Run, t: usize) -> bool {
        for m in 0..=run.horizon() {
            for i in run.state(m).env().honest() {
                let ledger_i = run.ledger(i, m).unwrap();
                for n in 0..=ledger_i.len() {
                    let x = ledger_i.prefix(n);
                    if !is_t_prefix(&x, ledger_i, t) {
                        continue;
                    }
                    for m_prime in m..=run.horizon() {
                        for j in run.state(m_prime).env().honest() {
                            if !is_prefix(&x, run.ledger(j, m_prime).unwrap()) {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }

    fn acceptability_all_prefixes(run: &Run, t: usize, delta: usize) -> bool {
        for m in 0..=run.horizon() {
            for i in run.state(m).env().honest() {
                let ledger_i = run.ledger(i, m).unwrap();
                for n in 0..=ledger_i.len() {
                    let x = ledger_i.prefix(n);
                    if !is_t_prefix(&x, ledger_i, t) {
                        continue;
                    }
                    for m_prime in (m + delta).min(run.horizon())..=run.horizon() {
                        for j in run.state(m_prime).env().honest() {
                            if !is_t_prefix(&x, run.ledger(j, m_prime).unwrap(), t) {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }

    fn single_honest_monotone() -> Run {
        script_run(
            "r",
            4,
            &[AgentScript::new("a1")
                .adopt(1, &["a"])
                .adopt(2, &["a", "b"])
                .adopt(3, &["a", "b", "c"])],
        )
    }

    fn fork_run() -> Run {
        // a1 and a2 split after the common entry "a"
        script_run(
            "r",
            4,
            &[
                AgentScript::new("a1").adopt(1, &["a"]).adopt(2, &["a", "x"]),
                AgentScript::new("a2").adopt(1, &["a"]).adopt(2, &["a", "y"]),
            ],
        )
    }

    fn stale_run() -> Run {
        // a2 frozen at length 1 while a1 reaches length 5
        let mut a1 = AgentScript::new("a1").adopt(1, &["b1"]);
        for n in 2..=5 {
            let ids: Vec<String> = (1..=n).map(|k| format!("b{k}")).collect();
            let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
            a1 = a1.adopt(n, &refs);
        }
        script_run("r", 7, &[a1, AgentScript::new("a2").adopt(1, &["b1"])])
    }

    #[test]
    fn consistency_single_honest_agent() {
        let run = single_honest_monotone();
        assert!(check_t_consistency(&run, 0).holds);
    }

    #[test]
    fn consistency_fork_fails_with_witness() {
        let run = fork_run();
        let report = check_t_consistency(&run, 0);
        assert!(!report.holds);
        let w = report.witness.as_ref().unwrap();
        assert_eq!((w.m, w.m_prime), (2, 2));
        assert_ne!(w.i, w.j);
        assert_eq!(w.ledger.len(), 2);
        assert!(recheck(&report, &run));
    }

    #[test]
    fn consistency_trivial_for_deep_cut() {
        let run = fork_run();
        assert!(check_t_consistency(&run, 2).holds);
        assert!(check_t_consistency(&run, 10).holds);
    }

    #[test]
    fn growth_holds_when_lengths_match() {
        let run = single_honest_monotone();
        assert!(check_weak_growth(&run, 0).holds);
    }

    #[test]
    fn growth_stale_agent_fails() {
        let run = stale_run();
        let report = check_weak_growth(&run, 2);
        assert!(!report.holds);
        let w = report.witness.as_ref().unwrap();
        assert_eq!(w.i, "a1".into());
        assert_eq!(w.j, "a2".into());
        assert!(recheck(&report, &run));
    }

    #[test]
    fn growth_single_agent_monotone() {
        let run = single_honest_monotone();
        for delta in 0..4 {
            assert!(check_weak_growth(&run, delta).holds);
        }
    }

    #[test]
    fn acceptability_follows_from_both() {
        let run = single_honest_monotone();
        for t in 0..3 {
            for delta in 0..3 {
                assert!(check_t_consistency(&run, t).holds);
                assert!(check_weak_growth(&run, delta).holds);
                assert!(check_acceptability(&run, t, delta).holds);
            }
        }
    }

    #[test]
    fn acceptability_stale_consistent_but_not_acceptable() {
        // growth failure alone sinks acceptability
        let run = stale_run();
        assert!(check_t_consistency(&run, 4).holds);
        let report = check_acceptability(&run, 4, 1);
        assert!(!report.holds);
        assert!(recheck(&report, &run));
    }

    #[test]
    fn acceptability_empty_ledgers() {
        let run = script_run("r", 2, &[AgentScript::new("a1")]);
        assert!(check_acceptability(&run, 0, 0).holds);
    }

    #[test]
    fn settled_prefix_shortcut_matches_all_prefix_check() {
        for run in [single_honest_monotone(), fork_run(), stale_run()] {
            for t in 0..4 {
                assert_eq!(check_t_consistency(&run, t).holds, consistency_all_prefixes(&run, t));
                for delta in 0..3 {
                    assert_eq!(
                        check_acceptability(&run, t, delta).holds,
                        acceptability_all_prefixes(&run, t, delta),
                    );
                }
            }
        }
    }

    #[test]
    fn monotone_in_t_and_delta() {
        for run in [single_honest_monotone(), fork_run(), stale_run()] {
            for t in 0..5 {
                if check_t_consistency(&run, t).holds {
                    assert!(check_t_consistency(&run, t + 1).holds);
                }
                for delta in 0..4 {
                    if check_acceptability(&run, t, delta).holds {
                        assert!(check_acceptability(&run, t + 1, delta).holds);
                    }
                }
            }
            for delta in 0..5 {
                if check_weak_growth(&run, delta).holds {
                    assert!(check_weak_growth(&run, delta + 1).holds);
                }
            }
        }
    }

    #[test]
    fn liveness_immediate_inclusion() {
        let run = script_run(
            "r",
            4,
            &[AgentScript::new("a1").submit(1, "t1").adopt(2, &["t1"]).adopt(3, &["t1", "b"])],
        );
        assert!(check_liveness(&run, 2).holds);
    }

    #[test]
    fn liveness_dropped_submission_fails() {
        let run = script_run("r", 4, &[AgentScript::new("a1").submit(1, "t1")]);
        let report = check_liveness(&run, 2);
        assert!(!report.holds);
        let w = report.witness.as_ref().unwrap();
        assert_eq!((w.m, w.m_prime), (1, 3));
        assert!(recheck(&report, &run));
    }

    #[test]
    fn liveness_vacuous_without_submissions() {
        let run = single_honest_monotone();
        assert!(check_liveness(&run, 0).holds);
    }

    #[test]
    fn liveness_ignores_corrupted_submitters() {
        let run =
            script_run("r", 4, &[AgentScript::new("a1").submit(1, "t1").dishonest_from(2)]);
        assert!(check_liveness(&run, 2).holds);
    }

    #[test]
    fn chain_growth_one_block_per_step() {
        let run = single_honest_monotone();
        assert!(check_chain_growth_upper(&run, &ratio(1, 1)).holds);
    }

    #[test]
    fn chain_growth_burst_fails() {
        let run = script_run(
            "r",
            3,
            &[AgentScript::new("a1").adopt(1, &["b1", "b2", "b3", "b4", "b5"])],
        );
        let report = check_chain_growth_upper(&run, &ratio(1, 1));
        assert!(!report.holds);
        let w = report.witness.as_ref().unwrap();
        assert_eq!((w.m, w.m_prime), (0, 1));
        assert!(recheck(&report, &run));
    }

    #[test]
    fn chain_growth_frozen_ledger() {
        let run = script_run("r", 3, &[AgentScript::new("a1")]);
        assert!(check_chain_growth_upper(&run, &ratio(1, 100)).holds);
    }

    #[test]
    fn chain_growth_fractional_bound() {
        // one block every two steps is fine at g = 1/2, a burst is not
        let run = script_run(
            "r",
            5,
            &[AgentScript::new("a1").adopt(2, &["b1"]).adopt(4, &["b1", "b2"])],
        );
        assert!(check_chain_growth_upper(&run, &ratio(1, 2)).holds);
        let fast = script_run("r", 3, &[AgentScript::new("a1").adopt(1, &["b1", "b2"])]);
        assert!(!check_chain_growth_upper(&fast, &ratio(1, 2)).holds);
    }
}
