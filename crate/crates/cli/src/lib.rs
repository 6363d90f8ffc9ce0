//! Command implementations behind the `kledge` binary.
//!
//! Every command returns rendered output plus a pass/fail verdict; the
//! binary maps those to the exit-code contract (0 the assertion holds, 1 it
//! does not, 2 usage or configuration error). Outputs are deterministic for
//! fixed inputs regardless of the `KLEDGE_WORKERS` parallelism setting.

pub mod report;

use std::path::Path;

use kledge_core::game::{
    check_equilibrium, first_event_time, load_game_spec, EquilibriumMode, GainSite, GameSpec,
    Strategy,
};
use kledge_core::logic::{
    check_acceptability_equivalence, parse_formula, EvalContext, EquivalenceReport,
};
use kledge_core::model::{AgentId, InterpretedSystem, Point, Run};
use kledge_core::prob::{check_eps_acceptability, check_probabilistic_equivalence, parse_rational};
use kledge_core::properties::{
    check_acceptability, check_chain_growth_upper, check_liveness, check_t_consistency,
    check_weak_growth, PropertyReport,
};
use kledge_core::sim::{generate_run, generate_system, run_seed, ScenarioConfig};
use kledge_core::trace::{scenario_digest, TraceFile};

use report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Debug)]
pub enum CmdError {
    Usage(String),
    Failed(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Usage(m) => write!(f, "usage: {m}"),
            CmdError::Failed(m) => f.write_str(m),
        }
    }
}

#[derive(Debug)]
pub struct CmdOutput {
    pub text: String,
    pub pass: bool,
}

fn fail(e: impl std::fmt::Display) -> CmdError {
    CmdError::Failed(e.to_string())
}

fn load_scenario(path: &Path, seed_offset: u64) -> Result<(ScenarioConfig, String), CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Failed(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::from_toml_str(&text).map_err(fail)?;
    cfg.seed_offset = seed_offset;
    let digest = scenario_digest(&text, seed_offset);
    Ok((cfg, digest))
}

fn render(report: Report, format: Format) -> CmdOutput {
    let pass = report.pass;
    let text = match format {
        Format::Text => report.render_text(),
        Format::Structured => report.render(),
    };
    CmdOutput { text, pass }
}

/// Generate the system for a scenario and write its trace. Rerunning with
/// identical inputs rewrites the identical bytes.
pub fn cmd_generate(scenario: &Path, seed_offset: u64, out: &Path) -> Result<CmdOutput, CmdError> {
    let (cfg, digest) = load_scenario(scenario, seed_offset)?;
    let sys = generate_system(&cfg).map_err(fail)?;
    let trace = TraceFile::from_system(&sys, &cfg.name, &digest).map_err(fail)?;
    trace.write(out).map_err(fail)?;
    Ok(CmdOutput {
        text: format!(
            "wrote {} ({} runs, horizon {}, digest {digest})\n",
            out.display(),
            sys.runs().len(),
            sys.horizon()
        ),
        pass: true,
    })
}

fn run_property(
    run: &Run,
    property: &str,
    t: Option<usize>,
    delta: Option<usize>,
    g_max: Option<&str>,
) -> Result<PropertyReport, CmdError> {
    let need = |o: Option<usize>, what: &str| {
        o.ok_or_else(|| CmdError::Usage(format!("property {property} needs --{what}")))
    };
    Ok(match property {
        "t-consistency" => check_t_consistency(run, need(t, "t")?),
        "weak-growth" => check_weak_growth(run, need(delta, "delta")?),
        "acceptability" => check_acceptability(run, need(t, "t")?, need(delta, "delta")?),
        "liveness" => check_liveness(run, need(delta, "delta")?),
        "chain-growth" => {
            let g = g_max.ok_or_else(|| {
                CmdError::Usage("property chain-growth needs --g-max".into())
            })?;
            check_chain_growth_upper(run, &parse_rational(g).map_err(CmdError::Usage)?)
        }
        other => {
            return Err(CmdError::Usage(format!(
                "unknown property {other:?}; expected t-consistency, weak-growth, \
                 acceptability, liveness, or chain-growth"
            )))
        }
    })
}

/// Check one property over the runs of a trace file (all runs, or one
/// selected by id).
#[allow(clippy::too_many_arguments)]
pub fn cmd_check_run(
    trace_path: &Path,
    property: &str,
    run_id: Option<&str>,
    t: Option<usize>,
    delta: Option<usize>,
    g_max: Option<&str>,
    format: Format,
) -> Result<CmdOutput, CmdError> {
    let trace = TraceFile::read(trace_path).map_err(fail)?;
    let sys = trace.to_system().map_err(fail)?;
    let runs: Vec<&std::sync::Arc<Run>> = match run_id {
        Some(id) => {
            let idx = sys
                .run_index(id)
                .ok_or_else(|| CmdError::Usage(format!("no run {id:?} in the trace")))?;
            vec![&sys.runs()[idx]]
        }
        None => sys.runs().iter().collect(),
    };
    let mut report = Report::new("check-run", &trace.scenario, &trace.digest)
        .param("property", property);
    for run in runs {
        let outcome = run_property(run, property, t, delta, g_max)?;
        let note = outcome.witness.as_ref().map(|w| {
            format!("witness i={} j={} m={} m'={}", w.i, w.j, w.m, w.m_prime)
        });
        report.check(run.id(), outcome.holds, note);
    }
    Ok(render(report, format))
}

/// Evaluate a formula at one point of the generated system.
#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    scenario: &Path,
    seed_offset: u64,
    formula: &str,
    run_id: &str,
    time: usize,
    agent: Option<&str>,
    format: Format,
) -> Result<CmdOutput, CmdError> {
    let (cfg, digest) = load_scenario(scenario, seed_offset)?;
    let sys = generate_system(&cfg).map_err(fail)?;
    let f = parse_formula(formula).map_err(fail)?;
    let run = sys
        .run_index(run_id)
        .ok_or_else(|| CmdError::Usage(format!("no run {run_id:?} in the system")))?;
    let agent = agent.map(AgentId::new);
    let mut ctx = EvalContext::new(&sys);
    let value = ctx.eval(&f, Point::new(run, time), agent.as_ref()).map_err(fail)?;
    let mut report = Report::new("eval", &cfg.name, &digest)
        .param("formula", f)
        .param("run", run_id)
        .param("time", time);
    if let Some(a) = &agent {
        report = report.param("agent", a);
    }
    let diag = ctx.diagnostics;
    let note = (diag.vacuous_knowledge + diag.vacuous_everyone > 0).then(|| {
        format!(
            "vacuous: {} knowledge, {} everyone evaluations over empty sets",
            diag.vacuous_knowledge, diag.vacuous_everyone
        )
    });
    report.check("value", value, note);
    Ok(render(report, format))
}

/// Check a formula's validity over every point of the generated system.
pub fn cmd_validate(
    scenario: &Path,
    seed_offset: u64,
    formula: &str,
    format: Format,
) -> Result<CmdOutput, CmdError> {
    let (cfg, digest) = load_scenario(scenario, seed_offset)?;
    let sys = generate_system(&cfg).map_err(fail)?;
    let f = parse_formula(formula).map_err(fail)?;
    let mut ctx = EvalContext::new(&sys);
    let outcome = ctx.check_valid(&f).map_err(fail)?;
    let mut report = Report::new("validate", &cfg.name, &digest).param("formula", f);
    let note = outcome.counterexample.as_ref().map(|c| {
        let persp = c.perspective.as_ref().map(|a| format!(", perspective {a}")).unwrap_or_default();
        format!("counterexample at (run {}, time {}{persp})", c.run_id, c.time)
    });
    report.check("valid", outcome.valid, note);
    Ok(render(report, format))
}

/// Per-cell acceptable mass against a tolerance, exact rationals.
pub fn cmd_check_prob(
    scenario: &Path,
    seed_offset: u64,
    t: usize,
    delta: usize,
    eps: &str,
    format: Format,
) -> Result<CmdOutput, CmdError> {
    let (mut cfg, digest) = load_scenario(scenario, seed_offset)?;
    cfg.t = t;
    let eps = parse_rational(eps).map_err(CmdError::Usage)?;
    let sys = generate_system(&cfg).map_err(fail)?;
    let outcome = check_eps_acceptability(&sys, t, delta, &eps);
    let mut report = Report::new("check-prob", &cfg.name, &digest)
        .param("t", t)
        .param("delta", delta)
        .param("eps", &eps);
    for cell in &outcome.cells {
        let threshold = num_rational::BigRational::from_integer(1.into()) - &eps;
        report.check(
            &format!("cell-{}", cell.cell),
            cell.acceptable_mass >= threshold,
            Some(format!(
                "acceptable mass {} ({} of {} runs)",
                cell.acceptable_mass, cell.acceptable_runs, cell.total_runs
            )),
        );
    }
    Ok(render(report, format))
}

fn equivalence_checks(report: &mut Report, eq: &EquivalenceReport) {
    for side in &eq.sides {
        report.check(side.label, side.holds, side.note.clone());
    }
    report.check("four-way-agreement", eq.agree(), None);
}

/// Timeline bounds for the sign-on-event profile on every acceptable run:
/// sign times within the growth bound of each other and within twice the
/// bound of the event settling for the judge.
fn timeline_check(sys: &InterpretedSystem, spec: &GameSpec) -> (bool, Option<String>) {
    for run in sys.runs() {
        if !check_acceptability(run, spec.t, spec.delta).holds {
            continue;
        }
        let Some(m_e) = first_event_time(run, spec, &spec.judge) else {
            continue;
        };
        let seen: Vec<Option<usize>> =
            spec.players.iter().map(|p| first_event_time(run, spec, p)).collect();
        let (Some(t1), Some(t2)) = (seen[0], seen[1]) else {
            return (
                false,
                Some(format!("run {}: a player never sees the settled event", run.id())),
            );
        };
        if t1.abs_diff(t2) > spec.delta || t1.max(t2) > m_e + 2 * spec.delta {
            return (
                false,
                Some(format!(
                    "run {}: sign times {t1},{t2} break the bounds around {m_e}",
                    run.id()
                )),
            );
        }
    }
    (true, None)
}

/// Equilibrium analysis of the sign-on-event profile.
pub fn cmd_game(
    scenario: &Path,
    seed_offset: u64,
    game_path: &Path,
    expectation: bool,
    format: Format,
) -> Result<CmdOutput, CmdError> {
    let (cfg, digest) = load_scenario(scenario, seed_offset)?;
    let game_text = std::fs::read_to_string(game_path)
        .map_err(|e| CmdError::Failed(format!("cannot read {}: {e}", game_path.display())))?;
    let (spec, class) = load_game_spec(&game_text).map_err(fail)?;
    let sys = generate_system(&cfg).map_err(fail)?;
    let mode =
        if expectation { EquilibriumMode::Expectation } else { EquilibriumMode::WorstCase };
    let profile = [Strategy::Threshold(0), Strategy::Threshold(0)];
    let outcome = check_equilibrium(&sys, &spec, profile, &class, mode).map_err(fail)?;

    let mut report = Report::new("game", &cfg.name, &digest)
        .param("profile", format!("{} / {}", profile[0], profile[1]))
        .param("class", &class)
        .param(
            "mode",
            if expectation { "expectation" } else { "worst-case" },
        );
    let (timeline_ok, timeline_note) = timeline_check(&sys, &spec);
    report.check("timeline-bounds", timeline_ok, timeline_note);
    let gain_note = outcome.best_gain.as_ref().map(|g| match &g.site {
        GainSite::Run { id, profile, deviation } => format!(
            "player {} gains on run {id} via {}: {profile:?} -> {deviation:?}",
            g.player + 1,
            g.deviation
        ),
        GainSite::Cell { id, profile, deviation } => format!(
            "player {} gains in cell {id} via {}: {profile:?} -> {deviation:?}",
            g.player + 1,
            g.deviation
        ),
    });
    report.check("profile-equilibrium", outcome.is_equilibrium, gain_note);
    if !outcome.exposures.is_empty() {
        let listing: Vec<String> = outcome
            .exposures
            .iter()
            .map(|(p, run)| format!("player {} on run {run}", p + 1))
            .collect();
        report.check("no-sentinel-exposure", false, Some(listing.join("; ")));
    } else {
        report.check("no-sentinel-exposure", true, None);
    }
    Ok(render(report, format))
}

/// Consistency and growth imply acceptability, over many generated runs and
/// a parameter grid.
fn suite_prop1(
    cfg: &ScenarioConfig,
    digest: &str,
    min_runs: usize,
    format: Format,
) -> Result<CmdOutput, CmdError> {
    let t_grid = [0usize, 1, 2, 5];
    let delta_grid = [0usize, 1, 3];
    let mut runs_checked = 0usize;
    let mut violations = 0usize;
    let mut note = None;
    let mut offset = 0u64;
    while runs_checked < min_runs {
        let mut shifted = cfg.clone();
        shifted.seed_offset = cfg.seed_offset + offset;
        for (c, adv) in shifted.adversaries.iter().enumerate() {
            for r in 0..shifted.runs_per_cell {
                let run =
                    generate_run(&shifted, adv, run_seed(&shifted, c, r)).map_err(fail)?;
                runs_checked += 1;
                for t in t_grid {
                    for delta in delta_grid {
                        let consistent = check_t_consistency(&run, t).holds;
                        let growing = check_weak_growth(&run, delta).holds;
                        let acceptable = check_acceptability(&run, t, delta).holds;
                        if consistent && growing && !acceptable {
                            violations += 1;
                            note.get_or_insert_with(|| {
                                format!("run {} at t={t} delta={delta}", run.id())
                            });
                        }
                    }
                }
            }
        }
        offset += 1;
    }
    let mut report = Report::new("prop1", &cfg.name, digest)
        .param("runs", runs_checked)
        .param("t-grid", "0,1,2,5")
        .param("delta-grid", "0,1,3");
    report.check("consistency-and-growth-imply-acceptability", violations == 0, note);
    Ok(render(report, format))
}

/// One of the mechanized suites over the generated system.
#[allow(clippy::too_many_arguments)]
pub fn cmd_suite(
    scenario: &Path,
    seed_offset: u64,
    suite: &str,
    t: Option<usize>,
    delta: Option<usize>,
    eps: Option<&str>,
    game_path: Option<&Path>,
    min_runs: usize,
    format: Format,
) -> Result<CmdOutput, CmdError> {
    let (mut cfg, digest) = load_scenario(scenario, seed_offset)?;
    if let Some(t) = t {
        cfg.t = t;
    }
    if let Some(delta) = delta {
        cfg.delta = delta;
    }
    match suite {
        "prop1" => suite_prop1(&cfg, &digest, min_runs, format),
        "thm4" => {
            let sys = generate_system(&cfg).map_err(fail)?;
            let eq = check_acceptability_equivalence(&sys, cfg.t, cfg.delta).map_err(fail)?;
            let mut report = Report::new("thm4", &cfg.name, &digest)
                .param("t", cfg.t)
                .param("delta", cfg.delta);
            equivalence_checks(&mut report, &eq);
            // the suite asserts the four-way agreement, not acceptability
            let pass = eq.agree();
            let mut out = render(report, format);
            out.pass = pass;
            Ok(out)
        }
        "thm5" => {
            let eps = eps.ok_or_else(|| CmdError::Usage("thm5 needs --eps".into()))?;
            let eps = parse_rational(eps).map_err(CmdError::Usage)?;
            let sys = generate_system(&cfg).map_err(fail)?;
            let eq =
                check_probabilistic_equivalence(&sys, cfg.t, cfg.delta, &eps).map_err(fail)?;
            let mut report = Report::new("thm5", &cfg.name, &digest)
                .param("t", cfg.t)
                .param("delta", cfg.delta)
                .param("eps", &eps);
            equivalence_checks(&mut report, &eq);
            let pass = eq.agree();
            let mut out = render(report, format);
            out.pass = pass;
            Ok(out)
        }
        "game" => {
            let game_path =
                game_path.ok_or_else(|| CmdError::Usage("the game suite needs --game".into()))?;
            cmd_game(scenario, seed_offset, game_path, false, format)
        }
        other => Err(CmdError::Usage(format!(
            "unknown suite {other:?}; expected prop1, thm4, thm5, or game"
        ))),
    }
}
