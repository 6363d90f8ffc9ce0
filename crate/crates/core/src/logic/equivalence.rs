//! The equivalence suites connecting run-level ledger properties to formula
//! validity.
//!
//! The deterministic suite checks four conditions that are provably
//! equivalent over any finite system here:
//!
//! (a) every run is acceptable for `(t, delta)`;
//! (b) for all agents `i`, `j` and every realized ledger constant `X`,
//!     `honest(i) & tprefix(X, L_i) -> X^delta G (honest(j) -> tprefix(X, L_j))`
//!     is valid;
//! (c) for every `X`, `Honest & tprefix(X, L) -> X^delta G E[H] tprefix(X, L)`
//!     is valid;
//! (d) for every `X`, `Honest & tprefix(X, L) -> C[H; X^delta G] tprefix(X, L)`
//!     is valid.
//!
//! Quantifying over all ledger constants is impossible, but unnecessary: an
//! instance can only bite at a point where its constant is a settled prefix
//! of the perspective agent's ledger, and the instance for the *deepest*
//! settled prefix realized there implies all shallower ones. So `X` ranges
//! over the deepest settled prefixes realized by honest agents anywhere in
//! the system.

use std::collections::BTreeSet;

use crate::model::InterpretedSystem;
use crate::properties::check_acceptability;

use super::ast::{Formula, YOp};
use super::eval::{EvalContext, EvalError};

/// One of the four equivalent conditions, with a short note on the failure
/// when it does not hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceSide {
    pub label: &'static str,
    pub holds: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub sides: Vec<EquivalenceSide>,
}

impl EquivalenceReport {
    pub fn agree(&self) -> bool {
        self.sides.windows(2).all(|w| w[0].holds == w[1].holds)
    }

    pub fn all_hold(&self) -> bool {
        self.sides.iter().all(|s| s.holds)
    }
}

/// Deepest settled prefixes (as id sequences) held by honest agents at any
/// point, for the system's prefix depth.
pub fn realized_settled_prefixes(sys: &InterpretedSystem, t: usize) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for run in sys.runs() {
        for m in 0..=run.horizon() {
            for agent in run.state(m).env().honest() {
                let settled = run.ledger(agent, m).expect("honest agents present").max_t_prefix(t);
                out.insert(settled.entries().iter().map(|tx| tx.id().to_string()).collect());
            }
        }
    }
    out
}

fn note_from(report: &super::eval::ValidityReport, formula: &Formula) -> Option<String> {
    report.counterexample.as_ref().map(|c| {
        let persp = c.perspective.as_ref().map(|a| format!(", perspective {a}")).unwrap_or_default();
        format!("{formula} fails at (run {}, time {}{persp})", c.run_id, c.time)
    })
}

/// The agent-pair characterization (condition (b)) for one constant.
pub fn pairwise_formula(x: &[String], i: &crate::model::AgentId, j: &crate::model::AgentId, delta: usize) -> Formula {
    Formula::implies(
        Formula::and(
            Formula::Honest(i.clone()),
            Formula::TPrefix(x.to_vec(), i.clone()),
        ),
        Formula::next(
            delta,
            Formula::always(Formula::implies(
                Formula::Honest(j.clone()),
                Formula::TPrefix(x.to_vec(), j.clone()),
            )),
        ),
    )
}

/// The agent-relative everyone characterization (condition (c)).
pub fn everyone_formula(x: &[String], delta: usize) -> Formula {
    Formula::implies(
        Formula::and(Formula::HonestSelf, Formula::TPrefixSelf(x.to_vec())),
        Formula::next(delta, Formula::always(Formula::everyone(Formula::TPrefixSelf(x.to_vec())))),
    )
}

/// The common-knowledge characterization (condition (d)).
pub fn common_formula(x: &[String], delta: usize) -> Formula {
    Formula::implies(
        Formula::and(Formula::HonestSelf, Formula::TPrefixSelf(x.to_vec())),
        Formula::common(YOp::NextAlways(delta), Formula::TPrefixSelf(x.to_vec())),
    )
}

/// Check the four-way equivalence for `(t, delta)`. `t` must match the
/// system interpretation's prefix depth, since the formula primitives read
/// that.
pub fn check_acceptability_equivalence(
    sys: &InterpretedSystem,
    t: usize,
    delta: usize,
) -> Result<EquivalenceReport, EvalError> {
    if t != sys.interpretation().t_param() {
        return Err(EvalError::BadParams(format!(
            "prefix depth {t} does not match the system interpretation ({})",
            sys.interpretation().t_param()
        )));
    }
    let mut sides = Vec::with_capacity(4);

    let mut acceptable = true;
    let mut note = None;
    for run in sys.runs() {
        let report = check_acceptability(run, t, delta);
        if !report.holds {
            acceptable = false;
            let w = report.witness.unwrap();
            note = Some(format!(
                "run {} fails at (i={}, j={}, m={}, m'={})",
                run.id(),
                w.i,
                w.j,
                w.m,
                w.m_prime
            ));
            break;
        }
    }
    sides.push(EquivalenceSide { label: "all-runs-acceptable", holds: acceptable, note });

    let constants = realized_settled_prefixes(sys, t);
    let agents = sys.agent_universe();
    let mut ctx = EvalContext::new(sys);

    let mut pairwise = EquivalenceSide { label: "pairwise-validity", holds: true, note: None };
    'pairwise: for x in &constants {
        for i in &agents {
            for j in &agents {
                let f = pairwise_formula(x, i, j, delta);
                let report = ctx.check_valid(&f)?;
                if !report.valid {
                    pairwise.holds = false;
                    pairwise.note = note_from(&report, &f);
                    break 'pairwise;
                }
            }
        }
    }
    sides.push(pairwise);

    let mut everyone = EquivalenceSide { label: "everyone-validity", holds: true, note: None };
    for x in &constants {
        let f = everyone_formula(x, delta);
        let report = ctx.check_valid(&f)?;
        if !report.valid {
            everyone.holds = false;
            everyone.note = note_from(&report, &f);
            break;
        }
    }
    sides.push(everyone);

    let mut common = EquivalenceSide { label: "common-knowledge-validity", holds: true, note: None };
    for x in &constants {
        let f = common_formula(x, delta);
        let report = ctx.check_valid(&f)?;
        if !report.valid {
            common.holds = false;
            common.note = note_from(&report, &f);
            break;
        }
    }
    sides.push(common);

    Ok(EquivalenceReport { sides })
}
