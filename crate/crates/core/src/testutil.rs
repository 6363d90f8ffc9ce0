//! Hand-built runs, systems, scenario matrices, and formula pools for
//! tests. Not part of the public contract.

use std::collections::BTreeMap;

use crate::logic::Formula;
use crate::model::*;
use crate::sim::{
    AdversaryProtocol, BlockSchedule, ChurnEvent, CorruptionEvent, DelayPolicy, ProtocolVariant,
    ScenarioConfig, SubmissionEvent,
};

/// Build a one-state environment + agent map from `(agent, ledger ids, honest)` rows.
/// Histories are synthesized as a bootstrap followed by one `Received` per
/// successive prefix, so states at later times extend earlier ones as long as
/// ledgers only grow by appends.
pub fn state_with(agents: &[(&AgentId, &[&str], bool)], time: Time) -> GlobalState {
    let agent_set = agents.iter().map(|(a, _, _)| (*a).clone()).collect();
    let honest = agents.iter().filter(|(_, _, h)| *h).map(|(a, _, _)| (*a).clone()).collect();
    let env = EnvState::new(time, agent_set, honest, vec![]).unwrap();
    let mut map = BTreeMap::new();
    for (agent, ids, _) in agents {
        let mut local = LocalState::new((*agent).clone(), "g");
        local.record(Event::Bootstrap { chain: Ledger::empty() });
        let full = Ledger::from_ids(ids);
        for n in 1..=full.len() {
            local.record(Event::Received { chain: full.prefix(n) });
        }
        map.insert((*agent).clone(), local);
    }
    GlobalState::new(env, map).unwrap()
}

/// Scripted behavior of one agent across a run.
#[derive(Debug, Clone)]
pub struct AgentScript {
    pub name: AgentId,
    pub join: Time,
    pub leave: Option<Time>,
    pub dishonest_from: Option<Time>,
    pub adoptions: Vec<(Time, Ledger)>,
    pub submissions: Vec<(Time, Transaction)>,
    pub coin_tosses: Vec<(Time, u64)>,
}

impl AgentScript {
    pub fn new(name: &str) -> Self {
        AgentScript {
            name: AgentId::new(name),
            join: 0,
            leave: None,
            dishonest_from: None,
            adoptions: Vec::new(),
            submissions: Vec::new(),
            coin_tosses: Vec::new(),
        }
    }

    pub fn join_at(mut self, t: Time) -> Self {
        self.join = t;
        self
    }

    /// Absent from time `t` on.
    pub fn leave_at(mut self, t: Time) -> Self {
        self.leave = Some(t);
        self
    }

    pub fn dishonest_from(mut self, t: Time) -> Self {
        self.dishonest_from = Some(t);
        self
    }

    pub fn adopt(mut self, t: Time, ids: &[&str]) -> Self {
        self.adoptions.push((t, Ledger::from_ids(ids)));
        self
    }

    pub fn adopt_ledger(mut self, t: Time, ledger: Ledger) -> Self {
        self.adoptions.push((t, ledger));
        self
    }

    pub fn submit(mut self, t: Time, id: &str) -> Self {
        self.submissions.push((t, Transaction::new(id)));
        self
    }

    pub fn toss(mut self, t: Time, value: u64) -> Self {
        self.coin_tosses.push((t, value));
        self
    }

    fn present(&self, m: Time) -> bool {
        m >= self.join && self.leave.is_none_or(|l| m < l)
    }

    fn honest(&self, m: Time) -> bool {
        self.present(m) && self.dishonest_from.is_none_or(|d| m < d)
    }
}

/// Assemble a run from agent scripts. The stutter flag is set automatically
/// when the final state repeats the previous one in ledger-relevant content.
pub fn script_run(id: &str, horizon: Time, scripts: &[AgentScript]) -> Run {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut locals: BTreeMap<AgentId, LocalState> = BTreeMap::new();
    for m in 0..=horizon {
        let mut map = BTreeMap::new();
        for script in scripts {
            if !script.present(m) {
                continue;
            }
            let local = locals.entry(script.name.clone()).or_insert_with(|| {
                let mut l = LocalState::new(script.name.clone(), "g");
                l.record(Event::Bootstrap { chain: Ledger::empty() });
                l
            });
            for (t, chain) in &script.adoptions {
                if *t == m {
                    local.record(Event::Received { chain: chain.clone() });
                }
            }
            for (t, tx) in &script.submissions {
                if *t == m {
                    local.record(Event::Submitted { tx: tx.clone() });
                }
            }
            for (t, value) in &script.coin_tosses {
                if *t == m {
                    local.record(Event::CoinToss { value: *value });
                }
            }
            map.insert(script.name.clone(), local.clone());
        }
        let agents = map.keys().cloned().collect();
        let honest = scripts
            .iter()
            .filter(|s| s.honest(m))
            .map(|s| s.name.clone())
            .collect();
        let env = EnvState::new(m, agents, honest, vec![]).unwrap();
        states.push(GlobalState::new(env, map).unwrap());
    }
    let stutter = horizon >= 1 && {
        let probe = Run::new(id, states.clone(), false).unwrap();
        let a = probe.state(horizon - 1);
        let b = probe.state(horizon);
        a.env().agents() == b.env().agents()
            && a.env().honest() == b.env().honest()
            && a.locals().all(|(n, s)| b.local(n).map(|o| o.ledger() == s.ledger()) == Some(true))
    };
    Run::new(id, states, stutter).unwrap()
}

/// Wrap runs into a system with the given prefix-depth parameter and a
/// single uniform cell.
pub fn system_t(runs: Vec<Run>, t_param: usize) -> InterpretedSystem {
    InterpretedSystem::new(runs, Interpretation::new(t_param), None).unwrap()
}

/// One agent `a1`, chain growing one entry per step through `horizon - 1`,
/// with a coin toss recorded every step so every local state is unique.
pub fn single_run_growing(horizon: Time) -> InterpretedSystem {
    let mut script = AgentScript::new("a1");
    let mut ids: Vec<String> = Vec::new();
    for t in 1..horizon {
        ids.push(format!("x{t}"));
        let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        script = script.adopt(t, &refs).toss(t, t as u64);
    }
    script = script.toss(horizon, horizon as u64);
    system_t(vec![script_run("r0", horizon, &[script])], 0)
}

/// Two runs over agents `a1`, `a2`. Agent `a1` observes a chain that is
/// identical in both runs through time `diverge - 1` and differs from
/// `diverge` on; growth stops one step before the horizon. Agent `a2` never
/// observes anything, and is honest in run 0 but dishonest in run 1, so `a2`
/// cannot tell the runs (or times) apart and does not know whether it is
/// honest.
pub fn two_run_diverge_at(diverge: Time, horizon: Time) -> InterpretedSystem {
    assert!(diverge >= 1 && diverge < horizon);
    let make_a1 = |fork: &str| {
        let mut script = AgentScript::new("a1");
        let mut ids: Vec<String> = Vec::new();
        for t in 1..horizon {
            ids.push(if t < diverge { format!("x{t}") } else { format!("{fork}{t}") });
            let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
            script = script.adopt(t, &refs);
        }
        script
    };
    let r0 = script_run("r0", horizon, &[make_a1("x"), AgentScript::new("a2")]);
    let r1 = script_run("r1", horizon, &[make_a1("y"), AgentScript::new("a2").dishonest_from(0)]);
    system_t(vec![r0, r1], 0)
}

fn adversary(id: &str, delay: DelayPolicy) -> AdversaryProtocol {
    AdversaryProtocol {
        id: id.into(),
        delay,
        churn: vec![],
        corruptions: vec![],
        drop_submissions: false,
        weights: None,
    }
}

fn base_scenario(name: &str, agents: usize, horizon: Time, t: usize, delta: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        initial_agents: agents,
        horizon,
        t,
        delta,
        delta_live: 3,
        max_message_delay: 0,
        runs_per_cell: 2,
        root_seed: 1,
        seed_offset: 0,
        variant: ProtocolVariant::HonestLongestChain,
        blocks: BlockSchedule::Interval { first: 1, every: 1, count: 3 },
        churn: vec![],
        corruptions: vec![],
        submissions: vec![],
        adversaries: vec![adversary("sync", DelayPolicy::Fixed(0))],
        event_props: vec![],
    }
}

/// A stale-broadcast scenario whose runs stay consistent at the scenario's
/// prefix depth while growth (and hence acceptability) fails: the frozen
/// agent keeps the first block and the chain grows exactly `t` entries
/// beyond it.
pub fn separation_scenario() -> ScenarioConfig {
    let mut cfg = base_scenario("separation", 3, 8, 2, 1);
    cfg.blocks = BlockSchedule::Interval { first: 1, every: 1, count: 3 };
    cfg.variant =
        ProtocolVariant::StaleBroadcast { agent: AgentId::new("a2"), freeze_time: 2 };
    cfg
}

/// Scenario grid for the equivalence matrix: all three variants, churn,
/// corruption, seeded delays, 2-4 agents, horizons up to 12, at most 6 runs
/// per system. Vary `root_seed` or `seed_offset` for more systems per
/// shape.
pub fn matrix_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();

    out.push(base_scenario("honest-2-sync", 2, 6, 0, 0));

    let mut cfg = base_scenario("honest-3-laggy", 3, 9, 1, 1);
    cfg.max_message_delay = 1;
    cfg.blocks = BlockSchedule::Interval { first: 1, every: 2, count: 3 };
    cfg.adversaries = vec![
        adversary("sync", DelayPolicy::Fixed(0)),
        adversary("laggy", DelayPolicy::Seeded { max: 1 }),
    ];
    out.push(cfg);

    let mut cfg = base_scenario("honest-4-slow", 4, 10, 1, 2);
    cfg.max_message_delay = 2;
    cfg.blocks = BlockSchedule::Interval { first: 1, every: 2, count: 3 };
    cfg.adversaries = vec![adversary("slow", DelayPolicy::Seeded { max: 2 })];
    out.push(cfg);

    let mut cfg = base_scenario("honest-churn", 3, 9, 0, 0);
    cfg.churn = vec![
        ChurnEvent { time: 2, join: vec![AgentId::new("z1")], leave: vec![] },
        ChurnEvent { time: 4, join: vec![], leave: vec![AgentId::new("a3")] },
    ];
    out.push(cfg);

    let mut cfg = base_scenario("honest-corrupt", 3, 8, 1, 1);
    cfg.max_message_delay = 1;
    cfg.adversaries = vec![adversary("laggy", DelayPolicy::Seeded { max: 1 })];
    cfg.corruptions = vec![CorruptionEvent { agent: AgentId::new("a2"), time: 3 }];
    out.push(cfg);

    // too-tight parameters: laggy delivery breaks depth-0 consistency
    let mut cfg = base_scenario("honest-tight", 3, 9, 0, 0);
    cfg.max_message_delay = 1;
    cfg.adversaries = vec![adversary("laggy", DelayPolicy::Fixed(1))];
    out.push(cfg);

    out.push(separation_scenario());

    // frozen agent with an empty ledger: consistency fails as well
    let mut cfg = base_scenario("stale-empty", 2, 8, 1, 1);
    cfg.variant = ProtocolVariant::StaleBroadcast { agent: AgentId::new("a2"), freeze_time: 0 };
    out.push(cfg);

    let mut cfg = base_scenario("fork-2", 2, 8, 0, 1);
    cfg.blocks = BlockSchedule::Interval { first: 1, every: 1, count: 4 };
    cfg.variant = ProtocolVariant::ForkProne { fork_at_block: 1, group_b: vec![AgentId::new("a2")] };
    out.push(cfg);

    let mut cfg = base_scenario("fork-3", 3, 10, 1, 1);
    cfg.blocks = BlockSchedule::Interval { first: 1, every: 1, count: 6 };
    cfg.variant = ProtocolVariant::ForkProne { fork_at_block: 2, group_b: vec![AgentId::new("a3")] };
    out.push(cfg);

    let mut cfg = base_scenario("honest-subs", 3, 9, 1, 1);
    cfg.max_message_delay = 1;
    cfg.adversaries = vec![adversary("laggy", DelayPolicy::Seeded { max: 1 })];
    cfg.submissions = vec![SubmissionEvent {
        time: 2,
        agent: AgentId::new("a1"),
        tx: Transaction::new("pay1"),
    }];
    out.push(cfg);

    let mut cfg = base_scenario("honest-burst", 2, 9, 2, 0);
    cfg.blocks = BlockSchedule::Explicit { times: vec![1, 1, 2, 5] };
    out.push(cfg);

    let mut cfg = base_scenario("honest-tall", 4, 12, 1, 1);
    cfg.max_message_delay = 1;
    cfg.runs_per_cell = 3;
    cfg.blocks = BlockSchedule::Interval { first: 1, every: 2, count: 4 };
    cfg.adversaries = vec![
        adversary("sync", DelayPolicy::Fixed(0)),
        adversary("laggy", DelayPolicy::Seeded { max: 1 }),
    ];
    out.push(cfg);

    out
}

/// A deterministic pool of formulas over the given agents and transaction
/// ids, exercising every operator.
pub fn formula_pool(agents: &[AgentId], tx_ids: &[&str]) -> Vec<Formula> {
    use crate::logic::YOp;
    let a = agents.first().cloned().unwrap_or_else(|| AgentId::new("a1"));
    let b = agents.get(1).cloned().unwrap_or_else(|| a.clone());
    let x0: Vec<&str> = tx_ids.get(..1).map(|s| s.to_vec()).unwrap_or_default();
    let x01: Vec<&str> = tx_ids.get(..2).map(|s| s.to_vec()).unwrap_or_else(|| x0.clone());
    let mut pool = vec![
        Formula::HonestSelf,
        Formula::honest(a.clone()),
        Formula::honest(b.clone()),
        Formula::not(Formula::honest(b.clone())),
        Formula::tprefix_self(&x0),
        Formula::tprefix_self(&x01),
        Formula::tprefix(&x0, a.clone()),
        Formula::tprefix_self::<&str>(&[]),
        Formula::and(Formula::HonestSelf, Formula::tprefix_self(&x0)),
        Formula::or(Formula::honest(a.clone()), Formula::honest(b.clone())),
        Formula::implies(Formula::honest(b.clone()), Formula::tprefix(&x0, b.clone())),
        Formula::always(Formula::honest(a.clone())),
        Formula::next(1, Formula::tprefix(&x0, a.clone())),
        Formula::next(2, Formula::always(Formula::tprefix_self(&x0))),
        Formula::knows(a.clone(), Formula::honest(b.clone())),
        Formula::knows(a.clone(), Formula::tprefix_self(&x0)),
        Formula::believes(b.clone(), Formula::HonestSelf),
        Formula::believes(a.clone(), Formula::tprefix_self(&x0)),
        Formula::everyone(Formula::tprefix_self(&x0)),
        Formula::everyone(Formula::HonestSelf),
        Formula::knows(b.clone(), Formula::knows(a.clone(), Formula::honest(a.clone()))),
        Formula::implies(
            Formula::knows(a.clone(), Formula::honest(b.clone())),
            Formula::believes(a.clone(), Formula::honest(b.clone())),
        ),
        Formula::common(YOp::Next(1), Formula::honest(a.clone())),
        Formula::and(
            Formula::everyone(Formula::tprefix_self(&x0)),
            Formula::not(Formula::honest(b.clone())),
        ),
    ];
    pool.dedup();
    pool
}
