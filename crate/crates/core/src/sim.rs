//! Deterministic generation of interpreted systems from declarative
//! scenarios.
//!
//! The protocol being simulated is an abstract settled-prefix broadcast: a
//! scheduled sequence of block creations extends a single global chain (two
//! chains after a scripted fork), creators broadcast the new chain, and
//! honest agents adopt the longest chain they have seen. The adversary
//! controls message delay within a bound, corruption, and churn. Two
//! deliberately faulty variants produce property-violating runs: one
//! partitions an agent so its ledger stops growing, the other serves
//! conflicting chains to disjoint agent groups.
//!
//! Reproducibility contract: a `(scenario, adversary, seed)` triple fully
//! determines the run, byte for byte. Randomness comes from a splitmix
//! generator owned by this module, never from platform or library state.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    AgentId, Cell, EnvState, Event, EventProp, GlobalState, InFlight, Interpretation,
    InterpretedSystem, Ledger, LocalState, ModelError, Run, Time, Transaction,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon {horizon} too short: {reason}")]
    HorizonTooShort { horizon: Time, reason: String },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Splitmix64. Small, stable across platforms and releases, and good enough
/// for scheduling decisions.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish draw in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        self.next_u64() % n
    }
}

/// Chain several values into one seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc = 0u64;
    for &p in parts {
        acc = SplitMix64::new(acc ^ p).next_u64();
    }
    acc
}

fn mix_str(acc: u64, s: &str) -> u64 {
    let mut h = acc ^ 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// How long the adversary holds each broadcast message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelayPolicy {
    Fixed(usize),
    /// Independent per-message draw in `0..=max`.
    Seeded { max: usize },
}

impl DelayPolicy {
    fn max(&self) -> usize {
        match self {
            DelayPolicy::Fixed(d) => *d,
            DelayPolicy::Seeded { max } => *max,
        }
    }

    fn draw(&self, rng: &mut SplitMix64) -> usize {
        match self {
            DelayPolicy::Fixed(d) => *d,
            DelayPolicy::Seeded { max } => rng.below(*max as u64 + 1) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChurnEvent {
    pub time: Time,
    pub join: Vec<AgentId>,
    pub leave: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionEvent {
    pub agent: AgentId,
    pub time: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionEvent {
    pub time: Time,
    pub agent: AgentId,
    pub tx: Transaction,
}

/// One adversary behavior; each one becomes a cell of the generated system.
/// The adversary schedules honest agents' messages but never alters their
/// actions; its extra churn and corruption are merged with the scenario's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryProtocol {
    pub id: String,
    pub delay: DelayPolicy,
    pub churn: Vec<ChurnEvent>,
    pub corruptions: Vec<CorruptionEvent>,
    pub drop_submissions: bool,
    /// Per-run weights inside this adversary's cell, as exact rationals;
    /// uniform when absent.
    pub weights: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockSchedule {
    Interval { first: Time, every: usize, count: usize },
    /// Explicit creation times; repeats produce bursts.
    Explicit { times: Vec<Time> },
}

impl BlockSchedule {
    pub fn times(&self) -> Vec<Time> {
        match self {
            BlockSchedule::Interval { first, every, count } => {
                (0..*count).map(|k| first + k * every).collect()
            }
            BlockSchedule::Explicit { times } => {
                let mut t = times.clone();
                t.sort_unstable();
                t
            }
        }
    }
}

/// Which protocol the agents run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolVariant {
    /// Everyone adopts the longest chain; consistency and growth hold for
    /// parameters matching the delay bound and block spacing.
    HonestLongestChain,
    /// From `freeze_time` on, deliveries to `agent` are withheld, so its
    /// ledger stops growing while it stays honest. With total growth capped
    /// by the scenario, consistency survives while growth fails.
    StaleBroadcast { agent: AgentId, freeze_time: Time },
    /// Blocks from index `fork_at_block` on extend two diverging chains;
    /// agents in `group_b` see one side, everyone else the other.
    ForkProne { fork_at_block: usize, group_b: Vec<AgentId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPropConfig {
    pub name: String,
    pub agent: AgentId,
    pub tx_id: String,
}

/// Everything a generation needs: protocol parameters, schedules, the
/// adversary list, and seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub initial_agents: usize,
    pub horizon: Time,
    pub t: usize,
    pub delta: usize,
    pub delta_live: usize,
    pub max_message_delay: usize,
    pub runs_per_cell: usize,
    pub root_seed: u64,
    pub seed_offset: u64,
    pub variant: ProtocolVariant,
    pub blocks: BlockSchedule,
    pub churn: Vec<ChurnEvent>,
    pub corruptions: Vec<CorruptionEvent>,
    pub submissions: Vec<SubmissionEvent>,
    pub adversaries: Vec<AdversaryProtocol>,
    pub event_props: Vec<EventPropConfig>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

impl ScenarioConfig {
    pub fn initial_agent_names(&self) -> Vec<AgentId> {
        (1..=self.initial_agents).map(|k| AgentId::new(format!("a{k}"))).collect()
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig, SimError> {
        let raw: raw::ScenarioFile = toml::from_str(text)?;
        let cfg = raw.into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.initial_agents == 0 {
            return bad("need at least one initial agent".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.adversaries.is_empty() {
            return bad("need at least one adversary".into());
        }
        if self.runs_per_cell == 0 {
            return bad("runs_per_cell must be at least 1".into());
        }
        let mut ids = BTreeSet::new();
        for adv in &self.adversaries {
            if !ids.insert(&adv.id) {
                return bad(format!("duplicate adversary id {}", adv.id));
            }
            if adv.delay.max() > self.max_message_delay {
                return bad(format!(
                    "adversary {} exceeds max_message_delay {}",
                    adv.id, self.max_message_delay
                ));
            }
            if let Some(w) = &adv.weights {
                if w.len() != self.runs_per_cell {
                    return bad(format!(
                        "adversary {}: {} weights for {} runs",
                        adv.id,
                        w.len(),
                        self.runs_per_cell
                    ));
                }
            }
        }
        for sub in &self.submissions {
            let id = sub.tx.id();
            if !valid_token(id) {
                return bad(format!("transaction id {id:?} is not a plain token"));
            }
            // block fillers own the b<digits> namespace
            if id.strip_prefix('b').is_some_and(|r| !r.is_empty() && r.bytes().all(|c| c.is_ascii_digit())) {
                return bad(format!("transaction id {id:?} collides with block filler ids"));
            }
        }
        for churn in self.churn.iter().chain(self.adversaries.iter().flat_map(|a| &a.churn)) {
            for agent in churn.join.iter().chain(&churn.leave) {
                if !valid_token(agent.as_str()) {
                    return bad(format!("agent name {agent:?} is not a plain token"));
                }
            }
        }
        Ok(())
    }
}

/// Raw serde mirror of the scenario file. Field names here are the file
/// format; the schema is documented in the repository README.
mod raw {
    use super::*;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ScenarioFile {
        pub scenario: Scenario,
        pub blocks: Blocks,
        #[serde(default)]
        pub stale: Option<Stale>,
        #[serde(default)]
        pub fork: Option<Fork>,
        #[serde(default)]
        pub churn: Vec<Churn>,
        #[serde(default)]
        pub corruptions: Vec<Corruption>,
        #[serde(default)]
        pub submissions: Vec<Submission>,
        #[serde(default)]
        pub adversaries: Vec<Adversary>,
        #[serde(default)]
        pub event_props: Vec<EventPropRaw>,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Scenario {
        pub name: String,
        pub initial_agents: usize,
        pub horizon: Time,
        pub t: usize,
        pub delta: usize,
        #[serde(default)]
        pub delta_live: usize,
        pub max_message_delay: usize,
        #[serde(default = "one")]
        pub runs_per_cell: usize,
        pub root_seed: u64,
        pub variant: String,
    }

    fn one() -> usize {
        1
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Blocks {
        #[serde(default)]
        pub first: Option<Time>,
        #[serde(default)]
        pub every: Option<usize>,
        #[serde(default)]
        pub count: Option<usize>,
        #[serde(default)]
        pub times: Option<Vec<Time>>,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Stale {
        pub agent: String,
        pub freeze_time: Time,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Fork {
        pub at_block: usize,
        pub group_b: Vec<String>,
    }

    #[derive(Debug, Clone, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Churn {
        pub time: Time,
        #[serde(default)]
        pub join: Vec<String>,
        #[serde(default)]
        pub leave: Vec<String>,
    }

    #[derive(Debug, Clone, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Corruption {
        pub agent: String,
        pub time: Time,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Submission {
        pub time: Time,
        pub agent: String,
        pub tx: String,
        #[serde(default)]
        pub payload: String,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Adversary {
        pub id: String,
        pub delay: Delay,
        #[serde(default)]
        pub churn: Vec<Churn>,
        #[serde(default)]
        pub corruptions: Vec<Corruption>,
        #[serde(default)]
        pub drop_submissions: bool,
        #[serde(default)]
        pub weights: Option<Vec<String>>,
    }

    #[derive(Debug, Deserialize)]
    #[serde(untagged)]
    pub enum Delay {
        Fixed(usize),
        Seeded { seeded_max: usize },
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct EventPropRaw {
        pub name: String,
        pub agent: String,
        pub tx: String,
    }

    impl From<Churn> for ChurnEvent {
        fn from(c: Churn) -> Self {
            ChurnEvent {
                time: c.time,
                join: c.join.iter().map(|s| AgentId::new(s.as_str())).collect(),
                leave: c.leave.iter().map(|s| AgentId::new(s.as_str())).collect(),
            }
        }
    }

    impl From<Corruption> for CorruptionEvent {
        fn from(c: Corruption) -> Self {
            CorruptionEvent { agent: AgentId::new(c.agent), time: c.time }
        }
    }

    impl ScenarioFile {
        pub fn into_config(self) -> Result<ScenarioConfig, SimError> {
            let variant = match self.scenario.variant.as_str() {
                "honest-longest-chain" => ProtocolVariant::HonestLongestChain,
                "stale-broadcast" => {
                    let stale = self.stale.ok_or_else(|| {
                        SimError::InvalidConfig("stale-broadcast needs a [stale] section".into())
                    })?;
                    ProtocolVariant::StaleBroadcast {
                        agent: AgentId::new(stale.agent),
                        freeze_time: stale.freeze_time,
                    }
                }
                "fork-prone" => {
                    let fork = self.fork.ok_or_else(|| {
                        SimError::InvalidConfig("fork-prone needs a [fork] section".into())
                    })?;
                    ProtocolVariant::ForkProne {
                        fork_at_block: fork.at_block,
                        group_b: fork.group_b.iter().map(|s| AgentId::new(s.as_str())).collect(),
                    }
                }
                other => {
                    return Err(SimError::InvalidConfig(format!("unknown variant {other:?}")))
                }
            };
            let blocks =
                match (&self.blocks.times, self.blocks.first, self.blocks.every, self.blocks.count) {
                    (Some(times), None, None, None) => {
                        BlockSchedule::Explicit { times: times.clone() }
                    }
                    (None, Some(first), Some(every), Some(count)) => {
                        BlockSchedule::Interval { first, every, count }
                    }
                    _ => {
                        return Err(SimError::InvalidConfig(
                            "blocks: give either times or first/every/count".into(),
                        ))
                    }
                };
            let adversaries = if self.adversaries.is_empty() {
                vec![AdversaryProtocol {
                    id: "default".into(),
                    delay: DelayPolicy::Fixed(0),
                    churn: vec![],
                    corruptions: vec![],
                    drop_submissions: false,
                    weights: None,
                }]
            } else {
                self.adversaries
                    .into_iter()
                    .map(|a| AdversaryProtocol {
                        id: a.id,
                        delay: match a.delay {
                            Delay::Fixed(d) => DelayPolicy::Fixed(d),
                            Delay::Seeded { seeded_max } => DelayPolicy::Seeded { max: seeded_max },
                        },
                        churn: a.churn.into_iter().map(Into::into).collect(),
                        corruptions: a.corruptions.into_iter().map(Into::into).collect(),
                        drop_submissions: a.drop_submissions,
                        weights: a.weights,
                    })
                    .collect()
            };
            Ok(ScenarioConfig {
                name: self.scenario.name,
                initial_agents: self.scenario.initial_agents,
                horizon: self.scenario.horizon,
                t: self.scenario.t,
                delta: self.scenario.delta,
                delta_live: self.scenario.delta_live,
                max_message_delay: self.scenario.max_message_delay,
                runs_per_cell: self.scenario.runs_per_cell,
                root_seed: self.scenario.root_seed,
                seed_offset: 0,
                variant,
                blocks,
                churn: self.churn.into_iter().map(Into::into).collect(),
                corruptions: self.corruptions.into_iter().map(Into::into).collect(),
                submissions: self
                    .submissions
                    .into_iter()
                    .map(|s| SubmissionEvent {
                        time: s.time,
                        agent: AgentId::new(s.agent),
                        tx: Transaction::with_payload(s.tx, s.payload),
                    })
                    .collect(),
                adversaries,
                event_props: self
                    .event_props
                    .into_iter()
                    .map(|p| EventPropConfig {
                        name: p.name,
                        agent: AgentId::new(p.agent),
                        tx_id: p.tx,
                    })
                    .collect(),
            })
        }
    }
}

struct Pending {
    to: AgentId,
    deliver_at: Time,
    chain: Ledger,
    seq: usize,
}

/// In-memory state of one simulation.
struct Sim<'c> {
    cfg: &'c ScenarioConfig,
    adv: &'c AdversaryProtocol,
    delay_rng: SplitMix64,
    creator_rng: SplitMix64,
    trunk: Ledger,
    branch_b: Option<Ledger>,
    locals: BTreeMap<AgentId, LocalState>,
    present: BTreeSet<AgentId>,
    honest: BTreeSet<AgentId>,
    ever_present: BTreeSet<AgentId>,
    dishonest_ever: BTreeSet<AgentId>,
    queue: Vec<Pending>,
    pending_subs: Vec<Transaction>,
    seq: usize,
    block_seq: usize,
}

impl Sim<'_> {
    fn frozen(&self, agent: &AgentId, at: Time) -> bool {
        if self.dishonest_ever.contains(agent) {
            return true;
        }
        match &self.cfg.variant {
            ProtocolVariant::StaleBroadcast { agent: stale, freeze_time } => {
                agent == stale && at >= *freeze_time
            }
            _ => false,
        }
    }

    fn in_group_b(&self, agent: &AgentId) -> bool {
        match &self.cfg.variant {
            ProtocolVariant::ForkProne { group_b, .. } => group_b.contains(agent),
            _ => false,
        }
    }

    /// The chain an agent would be bootstrapped from right now.
    fn bootstrap_chain(&self, agent: &AgentId) -> Ledger {
        match &self.branch_b {
            Some(b) if self.in_group_b(agent) => b.clone(),
            _ => self.trunk.clone(),
        }
    }

    fn join(&mut self, agent: &AgentId) -> Result<(), SimError> {
        if self.ever_present.contains(agent) {
            return Err(SimError::InvalidSchedule(format!(
                "agent {agent} joins twice; rejoining agents need a fresh name"
            )));
        }
        self.ever_present.insert(agent.clone());
        self.present.insert(agent.clone());
        self.honest.insert(agent.clone());
        let mut local = LocalState::new(agent.clone(), "g");
        // joiners get an atomic snapshot of the settled chain, so a fresh
        // honest agent never drags honest ledger lengths down
        local.record(Event::Bootstrap { chain: self.bootstrap_chain(agent) });
        self.locals.insert(agent.clone(), local);
        Ok(())
    }

    fn leave(&mut self, agent: &AgentId) -> Result<(), SimError> {
        if !self.present.contains(agent) {
            return Err(SimError::InvalidSchedule(format!(
                "agent {agent} leaves but is not present"
            )));
        }
        self.present.remove(agent);
        self.honest.remove(agent);
        self.locals.remove(agent);
        Ok(())
    }

    fn corrupt(&mut self, agent: &AgentId) -> Result<(), SimError> {
        if !self.present.contains(agent) {
            return Err(SimError::InvalidSchedule(format!(
                "agent {agent} corrupted but is not present"
            )));
        }
        self.honest.remove(agent);
        self.dishonest_ever.insert(agent.clone());
        Ok(())
    }

    fn broadcast(&mut self, from: &AgentId, chain: &Ledger, now: Time, to_group_b: Option<bool>) {
        let recipients: Vec<AgentId> = self
            .present
            .iter()
            .filter(|a| *a != from)
            .filter(|a| to_group_b.is_none_or(|b| self.in_group_b(a) == b))
            .cloned()
            .collect();
        for to in recipients {
            let delay = self.adv.delay.draw(&mut self.delay_rng);
            let deliver_at = now + delay;
            // withheld deliveries never enter the queue, so a partitioned
            // agent does not keep the run from quiescing
            if self.frozen(&to, deliver_at) {
                continue;
            }
            self.queue.push(Pending { to, deliver_at, chain: chain.clone(), seq: self.seq });
            self.seq += 1;
        }
    }

    fn create_block(&mut self, now: Time) {
        let on_branch_b = match &self.cfg.variant {
            ProtocolVariant::ForkProne { fork_at_block, .. }
                if self.block_seq >= *fork_at_block =>
            {
                if self.branch_b.is_none() {
                    self.branch_b = Some(self.trunk.clone());
                }
                (self.block_seq - fork_at_block) % 2 == 1
            }
            _ => false,
        };
        let eligible: Vec<AgentId> = self
            .honest
            .iter()
            .filter(|a| !self.frozen(a, now))
            .filter(|a| self.branch_b.is_none() || self.in_group_b(a) == on_branch_b)
            .cloned()
            .collect();
        self.block_seq += 1;
        let Some(creator) = (!eligible.is_empty())
            .then(|| eligible[self.creator_rng.below(eligible.len() as u64) as usize].clone())
        else {
            return;
        };
        let mut chain = if on_branch_b {
            self.branch_b.clone().expect("branch exists once forked")
        } else {
            self.trunk.clone()
        };
        for tx in self.pending_subs.drain(..) {
            chain.push(tx);
        }
        chain.push(Transaction::new(format!("b{}", self.block_seq - 1)));
        if on_branch_b {
            self.branch_b = Some(chain.clone());
        } else {
            self.trunk = chain.clone();
        }
        let local = self.locals.get_mut(&creator).expect("creator is present");
        local.record(Event::Sent { chain: chain.clone() });
        let scope = self.branch_b.is_some().then_some(on_branch_b);
        self.broadcast(&creator, &chain, now, scope);
    }

    fn deliver_due(&mut self, now: Time) {
        let mut due: Vec<Pending> = Vec::new();
        let mut rest: Vec<Pending> = Vec::new();
        for msg in self.queue.drain(..) {
            if msg.deliver_at <= now {
                due.push(msg);
            } else {
                rest.push(msg);
            }
        }
        due.sort_by_key(|m| m.seq);
        self.queue = rest;
        for msg in due {
            if !self.present.contains(&msg.to) || self.frozen(&msg.to, now) {
                continue;
            }
            let local = self.locals.get_mut(&msg.to).expect("recipient present");
            local.record(Event::Received { chain: msg.chain });
        }
    }
}

/// Run one simulation. Deterministic in `(config, adversary, seed)`.
pub fn generate_run(
    config: &ScenarioConfig,
    adversary: &AdversaryProtocol,
    seed: u64,
) -> Result<Run, SimError> {
    config.validate()?;
    let horizon = config.horizon;
    let mut churn: Vec<ChurnEvent> =
        config.churn.iter().chain(&adversary.churn).cloned().collect();
    churn.sort_by_key(|c| c.time);
    let mut corruptions: Vec<CorruptionEvent> =
        config.corruptions.iter().chain(&adversary.corruptions).cloned().collect();
    corruptions.sort_by_key(|c| c.time);
    let block_times = config.blocks.times();

    for t in churn.iter().map(|c| c.time).chain(corruptions.iter().map(|c| c.time)) {
        if t > horizon {
            return Err(SimError::InvalidSchedule(format!(
                "event at time {t} past horizon {horizon}"
            )));
        }
    }
    for t in block_times.iter().chain(config.submissions.iter().map(|s| &s.time)) {
        if *t > horizon {
            return Err(SimError::InvalidSchedule(format!(
                "event at time {t} past horizon {horizon}"
            )));
        }
    }

    let mut sim = Sim {
        cfg: config,
        adv: adversary,
        delay_rng: SplitMix64::new(mix_seed(&[
            seed,
            mix_str(1, "delay"),
            mix_str(2, &adversary.id),
        ])),
        creator_rng: SplitMix64::new(mix_seed(&[seed, mix_str(3, "creator")])),
        trunk: Ledger::empty(),
        branch_b: None,
        locals: BTreeMap::new(),
        present: BTreeSet::new(),
        honest: BTreeSet::new(),
        ever_present: BTreeSet::new(),
        dishonest_ever: BTreeSet::new(),
        queue: Vec::new(),
        pending_subs: Vec::new(),
        seq: 0,
        block_seq: 0,
    };

    let mut states: Vec<GlobalState> = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        if t == 0 {
            for agent in config.initial_agent_names() {
                sim.join(&agent)?;
            }
        }
        for churn_ev in churn.iter().filter(|c| c.time == t).cloned().collect::<Vec<_>>() {
            for agent in &churn_ev.leave {
                sim.leave(agent)?;
            }
            for agent in &churn_ev.join {
                sim.join(agent)?;
            }
        }
        for corruption in corruptions.iter().filter(|c| c.time == t) {
            sim.corrupt(&corruption.agent)?;
        }
        for sub in config.submissions.iter().filter(|s| s.time == t) {
            if !sim.present.contains(&sub.agent) {
                return Err(SimError::InvalidSchedule(format!(
                    "submission at {t} from absent agent {}",
                    sub.agent
                )));
            }
            let local = sim.locals.get_mut(&sub.agent).expect("submitter present");
            local.record(Event::Submitted { tx: sub.tx.clone() });
            if !adversary.drop_submissions {
                sim.pending_subs.push(sub.tx.clone());
            }
        }
        for _ in block_times.iter().filter(|&&bt| bt == t) {
            sim.create_block(t);
        }
        sim.deliver_due(t);

        let in_flight: Vec<InFlight> = sim
            .queue
            .iter()
            .map(|m| InFlight {
                to: m.to.clone(),
                deliver_at: m.deliver_at,
                chain: m.chain.clone(),
            })
            .collect();
        let env = EnvState::new(t, sim.present.clone(), sim.honest.clone(), in_flight)?;
        let agents: BTreeMap<AgentId, LocalState> =
            sim.present.iter().map(|a| (a.clone(), sim.locals[a].clone())).collect();
        states.push(GlobalState::new(env, agents)?);
    }

    if !sim.queue.is_empty() {
        return Err(SimError::HorizonTooShort {
            horizon,
            reason: format!("{} messages still in flight", sim.queue.len()),
        });
    }
    let run_id = format!("{}-r{seed:x}", adversary.id);
    match Run::new(run_id, states, true) {
        Ok(run) => Ok(run),
        Err(ModelError::StutterMismatch { .. }) => Err(SimError::HorizonTooShort {
            horizon,
            reason: "final state still changing; extend the horizon past quiescence".into(),
        }),
        Err(e) => Err(e.into()),
    }
}

fn parse_weight(s: &str) -> Result<num_rational::BigRational, SimError> {
    crate::prob::parse_rational(s)
        .map_err(|e| SimError::InvalidConfig(format!("bad weight {s:?}: {e}")))
}

/// Seed for cell `cell_idx`, run `run_idx`.
pub fn run_seed(config: &ScenarioConfig, cell_idx: usize, run_idx: usize) -> u64 {
    mix_seed(&[
        config.root_seed.wrapping_add(config.seed_offset),
        cell_idx as u64 + 1,
        run_idx as u64 + 1,
    ])
}

/// Number of generation workers: the `KLEDGE_WORKERS` environment variable,
/// else 1. Results are placed by index, so the count never affects output.
pub fn worker_count() -> usize {
    std::env::var("KLEDGE_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Generate the full system: one cell per adversary, `runs_per_cell` runs
/// each, measures from the configured weights (uniform by default).
pub fn generate_system(config: &ScenarioConfig) -> Result<InterpretedSystem, SimError> {
    config.validate()?;
    let jobs: Vec<(usize, u64)> = (0..config.adversaries.len())
        .flat_map(|c| (0..config.runs_per_cell).map(move |r| (c, run_seed(config, c, r))))
        .collect();

    let workers = worker_count().min(jobs.len().max(1));
    let mut results: Vec<Option<Result<Run, SimError>>> = jobs.iter().map(|_| None).collect();
    if workers <= 1 {
        for (slot, &(c, seed)) in results.iter_mut().zip(&jobs) {
            *slot = Some(generate_run(config, &config.adversaries[c], seed));
        }
    } else {
        let outputs = std::thread::scope(|scope| {
            let jobs = &jobs;
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        jobs.iter()
                            .enumerate()
                            .filter(|(i, _)| i % workers == w)
                            .map(|(i, &(c, seed))| {
                                (i, generate_run(config, &config.adversaries[c], seed))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker panicked"))
                .collect::<Vec<_>>()
        });
        for (i, res) in outputs {
            results[i] = Some(res);
        }
    }

    let mut runs = Vec::with_capacity(jobs.len());
    for res in results {
        runs.push(res.expect("all jobs filled")?);
    }

    let mut cells = Vec::with_capacity(config.adversaries.len());
    for (c, adv) in config.adversaries.iter().enumerate() {
        let members: Vec<usize> =
            (0..config.runs_per_cell).map(|r| c * config.runs_per_cell + r).collect();
        let cell = match &adv.weights {
            Some(ws) => {
                let weights = ws.iter().map(|w| parse_weight(w)).collect::<Result<Vec<_>, _>>()?;
                Cell::new(adv.id.clone(), members, weights)
                    .map_err(|e| SimError::InvalidConfig(e.to_string()))?
            }
            None => Cell::uniform(adv.id.clone(), members)
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?,
        };
        cells.push(cell);
    }

    let mut interp = Interpretation::new(config.t);
    for p in &config.event_props {
        interp = interp.with_event_prop(
            p.name.clone(),
            EventProp::LedgerContains { agent: p.agent.clone(), tx_id: p.tx_id.clone() },
        );
    }
    Ok(InterpretedSystem::new(runs, interp, Some(cells))?)
}
