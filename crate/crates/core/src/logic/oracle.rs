//! Bounded-iteration reference for the common-knowledge operator.
//!
//! `C[S; Y] f` is the infinite conjunction of `(Y E[S])^n f` over `n >= 1`.
//! This module evaluates those explicit formula chains directly — never the
//! reachability closure — so it serves as an independent oracle for
//! [`super::eval`]'s fixpoint implementation.
//!
//! The conjunction is cut off soundly in two ways: the truth vectors of
//! successive layers eventually repeat (the tail then cycles through values
//! already seen), and a chain longer than the number of points always has a
//! shortcut, so `n` never needs to exceed the point count.

use std::collections::HashSet;
use std::sync::Arc;

use crate::model::{IndexicalSet, Point};

use super::ast::{Formula, YOp};
use super::eval::{EvalContext, EvalError};

fn wrap_layer(set: IndexicalSet, y: YOp, use_acc: bool, inner: Arc<Formula>) -> Arc<Formula> {
    let everyone = Arc::new(Formula::Everyone(set, use_acc, inner));
    match y {
        YOp::Id => everyone,
        YOp::Next(k) => Arc::new(Formula::Next(k, everyone)),
        YOp::NextAlways(k) => Arc::new(Formula::Next(k, Arc::new(Formula::Always(everyone)))),
    }
}

/// Truth of `C[S; Y (; acc)] f` at every point of the system, computed by
/// iterating the explicit conjunction. Layers beyond the first are
/// perspective-independent, so no perspective is needed.
pub fn common_by_iteration(
    ctx: &mut EvalContext<'_>,
    set: IndexicalSet,
    y: YOp,
    use_acc: bool,
    f: &Formula,
) -> Result<Vec<bool>, EvalError> {
    let points: Vec<Point> = ctx.system().points().collect();
    let mut conjunction = vec![true; points.len()];
    let mut layer: Arc<Formula> = Arc::new(f.clone());
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    for _ in 1..=points.len() {
        layer = wrap_layer(set, y, use_acc, layer);
        let mut truths = Vec::with_capacity(points.len());
        for (slot, &p) in conjunction.iter_mut().zip(&points) {
            let v = ctx.eval(&layer, p, None)?;
            *slot = *slot && v;
            truths.push(v);
        }
        if !seen.insert(truths) {
            break;
        }
    }
    Ok(conjunction)
}
