//! Formula language: primitives over ledgers and honesty, boolean
//! connectives, temporal operators, knowledge, indexical everyone/common
//! knowledge, and a prior-probability bound.
//!
//! Ledger constants in formulas are id sequences; evaluation compares a
//! constant against a ledger's id prefix. Generated scenarios keep
//! transaction ids unique within a run, so this agrees with full-record
//! prefix comparison there.

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;

use crate::model::{AgentId, IndexicalSet};

/// Indexing operator sequence for common knowledge: how the evaluation
/// point moves before each "everyone believes" layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum YOp {
    /// No movement.
    Id,
    /// Forward `k` steps (clamped to the horizon).
    Next(usize),
    /// Forward `k` steps and then every later instant.
    NextAlways(usize),
}

impl fmt::Display for YOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YOp::Id => f.write_str("none"),
            YOp::Next(k) => write!(f, "X^{k}"),
            YOp::NextAlways(k) => write!(f, "X^{k} G"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    /// `honest(i)`: agent `i` is currently honest.
    Honest(AgentId),
    /// `Honest`: the perspective agent is currently honest.
    HonestSelf,
    /// `tprefix([ids], L_i)`: the constant is a settled prefix of `i`'s ledger.
    TPrefix(Vec<String>, AgentId),
    /// `tprefix([ids], L)`: ... of the perspective agent's ledger.
    TPrefixSelf(Vec<String>),
    /// `acc`: the per-run acceptability flag.
    Acc,
    /// `prop(name)`: a configured event proposition.
    Prop(String),
    Not(Arc<Formula>),
    And(Arc<Formula>, Arc<Formula>),
    Or(Arc<Formula>, Arc<Formula>),
    Implies(Arc<Formula>, Arc<Formula>),
    /// `G f`: now and at every later instant.
    Always(Arc<Formula>),
    /// `X^k f`: `k` steps from now (clamped to the horizon).
    Next(usize, Arc<Formula>),
    /// `K_i f`: `i` knows `f`.
    Knows(AgentId, Arc<Formula>),
    /// `B[S]_i f`: `i` knows that if it is in `S` then `f`.
    Believes(AgentId, IndexicalSet, Arc<Formula>),
    /// `E[S] f` / `E[S; acc] f`: everyone currently in `S` believes `f`
    /// (restricting to flagged runs in the acc variant).
    Everyone(IndexicalSet, bool, Arc<Formula>),
    /// `C[S; Y] f` / `C[S; Y; acc] f`: the `Y`-interleaved infinite
    /// conjunction of `E[S]` layers.
    Common(IndexicalSet, YOp, bool, Arc<Formula>),
    /// `init>=a f`: under the current run's cell measure, the prior
    /// probability that `f` holds at all times is at least `a`.
    InitGeq(BigRational, Arc<Formula>),
}

impl Formula {
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Arc::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Arc::new(a), Arc::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Arc::new(a), Arc::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Arc::new(a), Arc::new(b))
    }

    pub fn always(f: Formula) -> Formula {
        Formula::Always(Arc::new(f))
    }

    pub fn next(k: usize, f: Formula) -> Formula {
        Formula::Next(k, Arc::new(f))
    }

    pub fn knows(i: impl Into<AgentId>, f: Formula) -> Formula {
        Formula::Knows(i.into(), Arc::new(f))
    }

    pub fn believes(i: impl Into<AgentId>, f: Formula) -> Formula {
        Formula::Believes(i.into(), IndexicalSet::Honest, Arc::new(f))
    }

    pub fn everyone(f: Formula) -> Formula {
        Formula::Everyone(IndexicalSet::Honest, false, Arc::new(f))
    }

    pub fn everyone_acc(f: Formula) -> Formula {
        Formula::Everyone(IndexicalSet::Honest, true, Arc::new(f))
    }

    pub fn common(y: YOp, f: Formula) -> Formula {
        Formula::Common(IndexicalSet::Honest, y, false, Arc::new(f))
    }

    pub fn common_acc(y: YOp, f: Formula) -> Formula {
        Formula::Common(IndexicalSet::Honest, y, true, Arc::new(f))
    }

    pub fn init_geq(alpha: BigRational, f: Formula) -> Formula {
        Formula::InitGeq(alpha, Arc::new(f))
    }

    pub fn honest(i: impl Into<AgentId>) -> Formula {
        Formula::Honest(i.into())
    }

    pub fn tprefix<S: AsRef<str>>(ids: &[S], i: impl Into<AgentId>) -> Formula {
        Formula::TPrefix(ids.iter().map(|s| s.as_ref().to_string()).collect(), i.into())
    }

    pub fn tprefix_self<S: AsRef<str>>(ids: &[S]) -> Formula {
        Formula::TPrefixSelf(ids.iter().map(|s| s.as_ref().to_string()).collect())
    }

    /// Does the truth value depend on the perspective agent supplied at
    /// evaluation? Knowledge operators rebind the perspective, so their
    /// arguments do not count; the common-knowledge argument is counted
    /// conservatively because its perspective convention is configurable.
    pub fn is_agent_relative(&self) -> bool {
        match self {
            Formula::HonestSelf | Formula::TPrefixSelf(_) => true,
            Formula::Honest(_) | Formula::TPrefix(..) | Formula::Acc | Formula::Prop(_) => false,
            Formula::Knows(..) | Formula::Believes(..) | Formula::Everyone(..) => false,
            Formula::Common(_, _, _, f) => f.is_agent_relative(),
            Formula::Not(f) | Formula::Always(f) | Formula::Next(_, f) | Formula::InitGeq(_, f) => {
                f.is_agent_relative()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.is_agent_relative() || b.is_agent_relative()
            }
        }
    }
}

// precedence levels for printing: implies 1, or 2, and 3, prefix 4, atom 5
fn prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 1,
        Formula::Or(..) => 2,
        Formula::And(..) => 3,
        Formula::Not(_)
        | Formula::Always(_)
        | Formula::Next(..)
        | Formula::Knows(..)
        | Formula::Believes(..)
        | Formula::Everyone(..)
        | Formula::Common(..)
        | Formula::InitGeq(..) => 4,
        _ => 5,
    }
}

fn write_at(f: &Formula, min: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(f);
    if p < min {
        out.write_str("(")?;
        write_at(f, 0, out)?;
        return out.write_str(")");
    }
    match f {
        Formula::Honest(i) => write!(out, "honest({i})"),
        Formula::HonestSelf => out.write_str("Honest"),
        Formula::TPrefix(ids, i) => write!(out, "tprefix([{}], L_{i})", ids.join(",")),
        Formula::TPrefixSelf(ids) => write!(out, "tprefix([{}], L)", ids.join(",")),
        Formula::Acc => out.write_str("acc"),
        Formula::Prop(name) => write!(out, "prop({name})"),
        Formula::Not(g) => {
            out.write_str("!")?;
            write_at(g, 4, out)
        }
        Formula::And(a, b) => {
            write_at(a, 3, out)?;
            out.write_str(" & ")?;
            write_at(b, 4, out)
        }
        Formula::Or(a, b) => {
            write_at(a, 2, out)?;
            out.write_str(" | ")?;
            write_at(b, 3, out)
        }
        Formula::Implies(a, b) => {
            write_at(a, 2, out)?;
            out.write_str(" -> ")?;
            write_at(b, 1, out)
        }
        Formula::Always(g) => {
            out.write_str("G ")?;
            write_at(g, 4, out)
        }
        Formula::Next(k, g) => {
            write!(out, "X^{k} ")?;
            write_at(g, 4, out)
        }
        Formula::Knows(i, g) => {
            write!(out, "K_{i} ")?;
            write_at(g, 4, out)
        }
        Formula::Believes(i, s, g) => {
            write!(out, "B[{s}]_{i} ")?;
            write_at(g, 4, out)
        }
        Formula::Everyone(s, false, g) => {
            write!(out, "E[{s}] ")?;
            write_at(g, 4, out)
        }
        Formula::Everyone(s, true, g) => {
            write!(out, "E[{s}; acc] ")?;
            write_at(g, 4, out)
        }
        Formula::Common(s, y, false, g) => {
            write!(out, "C[{s}; {y}] ")?;
            write_at(g, 4, out)
        }
        Formula::Common(s, y, true, g) => {
            write!(out, "C[{s}; {y}; acc] ")?;
            write_at(g, 4, out)
        }
        Formula::InitGeq(alpha, g) => {
            write!(out, "init>={alpha} ")?;
            write_at(g, 4, out)
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_at(self, 0, out)
    }
}
