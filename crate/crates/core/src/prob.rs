//! Probabilistic layer: exact rational measures over cells, per-run
//! acceptability flags, epsilon-acceptability, and the probabilistic
//! equivalence suite.
//!
//! Probabilities are exact rationals throughout; the equivalences checked
//! here are boolean, and tolerance-based comparison would manufacture
//! mismatches.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::logic::{
    realized_settled_prefixes, EquivalenceReport, EquivalenceSide, EvalContext, EvalError,
    Formula, YOp,
};
use crate::model::InterpretedSystem;
use crate::properties::check_acceptability;

/// Parse an exact rational from `p`, `p/q`, or a decimal such as `0.25`.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| format!("bad numerator {num:?}"))?;
        let d: BigInt = den.trim().parse().map_err(|_| format!("bad denominator {den:?}"))?;
        if d.is_zero() {
            return Err("zero denominator".into());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let w: BigInt = if whole.is_empty() {
            BigInt::zero()
        } else {
            whole.parse().map_err(|_| format!("bad number {s:?}"))?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad number {s:?}"));
        }
        let f: BigInt = frac.parse().map_err(|_| format!("bad number {s:?}"))?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let sign = if s.starts_with('-') { -BigInt::one() } else { BigInt::one() };
        return Ok(BigRational::new(w * &scale + sign * f, scale));
    }
    let n: BigInt = s.parse().map_err(|_| format!("bad number {s:?}"))?;
    Ok(BigRational::from_integer(n))
}

/// Per-run acceptability under `(t, delta)`, in run order.
pub fn acceptability_flags(sys: &InterpretedSystem, t: usize, delta: usize) -> Vec<bool> {
    sys.runs().iter().map(|r| check_acceptability(r, t, delta).holds).collect()
}

/// Extend the system's interpretation with the canonical per-run `acc`
/// flag: a run is flagged iff it is acceptable under `(t, delta)`. The flag
/// is constant along each run by construction.
pub fn build_acceptable_interpretation(
    sys: &InterpretedSystem,
    t: usize,
    delta: usize,
) -> InterpretedSystem {
    sys.with_acc(acceptability_flags(sys, t, delta))
}

/// Mass of acceptable runs in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMass {
    pub cell: String,
    pub acceptable_mass: BigRational,
    pub acceptable_runs: usize,
    pub total_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsReport {
    pub holds: bool,
    pub eps: BigRational,
    pub cells: Vec<CellMass>,
}

/// In every cell, acceptable runs must carry probability at least `1 - eps`.
/// The quantifier is per cell: one bad cell sinks the whole system no matter
/// how light it is.
pub fn check_eps_acceptability(
    sys: &InterpretedSystem,
    t: usize,
    delta: usize,
    eps: &BigRational,
) -> EpsReport {
    let flags = acceptability_flags(sys, t, delta);
    let needed = BigRational::one() - eps;
    let mut cells = Vec::with_capacity(sys.cells().len());
    let mut holds = true;
    for cell in sys.cells() {
        let mut mass = BigRational::zero();
        let mut acceptable_runs = 0;
        for (run, weight) in cell.entries() {
            if flags[run] {
                mass += weight;
                acceptable_runs += 1;
            }
        }
        if mass < needed {
            holds = false;
        }
        cells.push(CellMass {
            cell: cell.id().to_string(),
            acceptable_mass: mass,
            acceptable_runs,
            total_runs: cell.members().len(),
        });
    }
    EpsReport { holds, eps: eps.clone(), cells }
}

/// Probabilistic counterpart of the deterministic equivalence suite. Four
/// conditions, checked with the canonical per-run flag (a run is flagged
/// iff acceptable), agree over any finite system:
///
/// (a) in every cell, acceptable runs carry mass at least `1 - eps`;
/// (b) `init>=1-eps acc` together with the flag-guarded agent-pair
///     characterization is valid for all agents and realized constants;
/// (c) likewise with the flag-guarded everyone layer;
/// (d) likewise with flag-guarded common knowledge.
///
/// (b)-(d) as stated quantify over *some* interpretation extending the
/// base one with a per-run flag. Checking the canonical flag decides that
/// existential: when (a) holds the canonical flag realizes (b)-(d), and
/// any flag realizing (b) forces (a) back, so a canonical failure together
/// with (a) false means no flag can work.
pub fn check_probabilistic_equivalence(
    sys: &InterpretedSystem,
    t: usize,
    delta: usize,
    eps: &BigRational,
) -> Result<EquivalenceReport, EvalError> {
    if t != sys.interpretation().t_param() {
        return Err(EvalError::BadParams(format!(
            "prefix depth {t} does not match the system interpretation ({})",
            sys.interpretation().t_param()
        )));
    }
    let mut sides = Vec::with_capacity(4);

    let eps_report = check_eps_acceptability(sys, t, delta, eps);
    let note = (!eps_report.holds).then(|| {
        let worst = eps_report
            .cells
            .iter()
            .min_by(|a, b| a.acceptable_mass.cmp(&b.acceptable_mass))
            .expect("at least one cell");
        format!(
            "cell {} has acceptable mass {} < 1-eps",
            worst.cell, worst.acceptable_mass
        )
    });
    sides.push(EquivalenceSide { label: "eps-acceptable", holds: eps_report.holds, note });

    let flagged = build_acceptable_interpretation(sys, t, delta);
    let constants = realized_settled_prefixes(&flagged, t);
    let agents = flagged.agent_universe();
    let mut ctx = EvalContext::new(&flagged);
    let threshold = BigRational::one() - eps;
    let init = Formula::init_geq(threshold, Formula::Acc);

    // the prior bound must hold on its own at every point (instances with
    // unrealized constants reduce to exactly that)
    let init_report = ctx.check_valid(&init)?;
    let init_note = |formula: &Formula, report: &crate::logic::ValidityReport| {
        report.counterexample.as_ref().map(|c| {
            format!("{formula} fails at (run {}, time {})", c.run_id, c.time)
        })
    };

    let mut pairwise =
        EquivalenceSide { label: "guarded-pairwise-validity", holds: true, note: None };
    if !init_report.valid {
        pairwise.holds = false;
        pairwise.note = init_note(&init, &init_report);
    } else {
        'outer: for x in &constants {
            for i in &agents {
                for j in &agents {
                    let f = Formula::and(
                        init.clone(),
                        guarded(
                            Formula::and(
                                Formula::Honest(i.clone()),
                                Formula::TPrefix(x.clone(), i.clone()),
                            ),
                            Formula::next(
                                delta,
                                Formula::always(Formula::implies(
                                    Formula::Honest(j.clone()),
                                    Formula::TPrefix(x.clone(), j.clone()),
                                )),
                            ),
                        ),
                    );
                    let report = ctx.check_valid(&f)?;
                    if !report.valid {
                        pairwise.holds = false;
                        pairwise.note = init_note(&f, &report);
                        break 'outer;
                    }
                }
            }
        }
    }
    sides.push(pairwise);

    let mut everyone =
        EquivalenceSide { label: "guarded-everyone-validity", holds: true, note: None };
    if !init_report.valid {
        everyone.holds = false;
        everyone.note = init_note(&init, &init_report);
    } else {
        for x in &constants {
            let f = Formula::and(
                init.clone(),
                guarded(
                    Formula::and(Formula::HonestSelf, Formula::TPrefixSelf(x.clone())),
                    Formula::next(
                        delta,
                        Formula::always(Formula::everyone_acc(Formula::TPrefixSelf(x.clone()))),
                    ),
                ),
            );
            let report = ctx.check_valid(&f)?;
            if !report.valid {
                everyone.holds = false;
                everyone.note = init_note(&f, &report);
                break;
            }
        }
    }
    sides.push(everyone);

    let mut common =
        EquivalenceSide { label: "guarded-common-validity", holds: true, note: None };
    if !init_report.valid {
        common.holds = false;
        common.note = init_note(&init, &init_report);
    } else {
        for x in &constants {
            let f = Formula::and(
                init.clone(),
                guarded(
                    Formula::and(Formula::HonestSelf, Formula::TPrefixSelf(x.clone())),
                    Formula::common_acc(YOp::NextAlways(delta), Formula::TPrefixSelf(x.clone())),
                ),
            );
            let report = ctx.check_valid(&f)?;
            if !report.valid {
                common.holds = false;
                common.note = init_note(&f, &report);
                break;
            }
        }
    }
    sides.push(common);

    Ok(EquivalenceReport { sides })
}

/// `antecedent & acc -> consequent`.
fn guarded(antecedent: Formula, consequent: Formula) -> Formula {
    Formula::implies(Formula::and(antecedent, Formula::Acc), consequent)
}
