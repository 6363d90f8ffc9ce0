//! The formula language end to end: syntax tree, parser and printer,
//! point-wise evaluation with knowledge and common-knowledge operators, an
//! independent bounded-iteration oracle, and the equivalence suites.

pub mod ast;
pub mod equivalence;
pub mod eval;
pub mod oracle;
pub mod parser;

pub use ast::{Formula, YOp};
pub use equivalence::{
    check_acceptability_equivalence, common_formula, everyone_formula, pairwise_formula,
    realized_settled_prefixes, EquivalenceReport, EquivalenceSide,
};
pub use eval::{
    CommonPerspective, Counterexample, Diagnostics, EvalContext, EvalError, ReachableSet,
    ValidityReport,
};
pub use oracle::common_by_iteration;
pub use parser::{parse_formula, ParseError};
