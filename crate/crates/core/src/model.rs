//! Core ontology: ledgers, local and global states, runs, indexical sets,
//! indistinguishability, and interpreted systems.
//!
//! Everything here is immutable after construction and safe to share across
//! threads. Time is discrete; a run covers `0..=horizon` and carries a
//! `stutter` flag asserting that its final state is quiescent, so that
//! "forever after" quantifiers can treat the final state as repeating.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

/// Discrete protocol time.
pub type Time = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("run has no states")]
    EmptyRun,
    #[error("agent {agent} at time {time}: history is not an extension of the previous state")]
    PerfectRecallViolation { agent: AgentId, time: Time },
    #[error("agent {agent} re-enters the system; rejoining agents must take a fresh name")]
    NonContiguousPresence { agent: AgentId },
    #[error("honest set at time {time} contains {agent}, which is not present")]
    HonestNotPresent { agent: AgentId, time: Time },
    #[error("agent map disagrees with environment agent set at time {time}")]
    AgentSetMismatch { time: Time },
    #[error("run {run} marked quiescent but states {prev} and {last} differ in ledger content")]
    StutterMismatch { run: String, prev: Time, last: Time },
    #[error("system requires a shared horizon: run {run} has horizon {got}, expected {expected}")]
    HorizonMismatch { run: String, got: Time, expected: Time },
    #[error("run {0} admitted without quiescent final state")]
    NotQuiescent(String),
    #[error("duplicate run id {0}")]
    DuplicateRunId(String),
    #[error("cells do not partition the runs: {0}")]
    BadPartition(String),
    #[error("cell {cell}: weights must be positive and sum to 1")]
    BadWeights { cell: String },
    #[error("derived ledger disagrees with history for agent {agent} at time {time}")]
    LedgerMismatch { agent: AgentId, time: Time },
}

/// Name of an agent. Agents that leave and later rejoin must use a fresh
/// name, so within one run a name is present over a single contiguous
/// interval of time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        assert!(!name.is_empty(), "agent name must be nonempty");
        AgentId(name)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId::new(s)
    }
}

impl From<String> for AgentId {
    fn from(s: String) -> Self {
        AgentId::new(s)
    }
}

/// A ledger entry. Equality is by the full record (id and payload).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transaction {
    id: String,
    payload: String,
}

impl Transaction {
    pub fn new(id: impl Into<String>) -> Self {
        Self::with_payload(id, "")
    }

    pub fn with_payload(id: impl Into<String>, payload: impl Into<String>) -> Self {
        let id = id.into();
        assert!(!id.is_empty(), "transaction id must be nonempty");
        Transaction { id, payload: payload.into() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn payload(&self) -> &str {
        &self.payload
    }
}

/// An ordered sequence of transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ledger(Vec<Transaction>);

impl Ledger {
    pub fn new(entries: Vec<Transaction>) -> Self {
        Ledger(entries)
    }

    pub fn empty() -> Self {
        Ledger(Vec::new())
    }

    /// Ledger of bare (payload-free) transactions, mostly for tests and
    /// formula constants.
    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Self {
        Ledger(ids.iter().map(|s| Transaction::new(s.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[Transaction] {
        &self.0
    }

    pub fn push(&mut self, tx: Transaction) {
        self.0.push(tx);
    }

    /// The prefix containing the first `n` entries. `n` must not exceed the
    /// length.
    pub fn prefix(&self, n: usize) -> Ledger {
        Ledger(self.0[..n].to_vec())
    }

    /// The longest prefix that omits at least the last `t` entries; empty
    /// when the ledger has at most `t` entries.
    pub fn max_t_prefix(&self, t: usize) -> Ledger {
        self.prefix(self.len().saturating_sub(t))
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.0.iter().any(|tx| tx.id == id)
    }
}

/// True iff `x` equals the first `|x|` entries of `l`.
pub fn is_prefix(x: &Ledger, l: &Ledger) -> bool {
    x.len() <= l.len() && l.0[..x.len()] == x.0[..]
}

/// True iff `x` is a prefix of `l` omitting at least the last `t` entries.
/// When `|l| <= t` only the empty ledger qualifies.
pub fn is_t_prefix(x: &Ledger, l: &Ledger, t: usize) -> bool {
    x.len() <= l.len().saturating_sub(t) && is_prefix(x, l)
}

/// One entry of an agent's history. Histories deliberately carry no wall
/// clock: an agent that observes nothing cannot tell time steps apart.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Event {
    /// Chain snapshot handed to an agent when it joins.
    Bootstrap { chain: Ledger },
    /// Broadcast chain received from the network.
    Received { chain: Ledger },
    /// Broadcast chain sent by this agent (block creators).
    Sent { chain: Ledger },
    /// The agent asked for a transaction to be included.
    Submitted { tx: Transaction },
    /// Outcome of a local coin toss.
    CoinToss { value: u64 },
}

impl Event {
    fn chain(&self) -> Option<&Ledger> {
        match self {
            Event::Bootstrap { chain } | Event::Received { chain } | Event::Sent { chain } => {
                Some(chain)
            }
            _ => None,
        }
    }
}

/// An agent's view: initial token plus the full event history. The ledger is
/// derived from the history (longest chain observed, earliest on ties) and
/// cached.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalState {
    agent: AgentId,
    initial: String,
    history: Vec<Event>,
    ledger: Ledger,
}

impl LocalState {
    pub fn new(agent: AgentId, initial: impl Into<String>) -> Self {
        LocalState { agent, initial: initial.into(), history: Vec::new(), ledger: Ledger::empty() }
    }

    pub fn agent(&self) -> &AgentId {
        &self.agent
    }

    pub fn initial(&self) -> &str {
        &self.initial
    }

    pub fn history(&self) -> &[Event] {
        &self.history
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Append an event, updating the derived ledger.
    pub fn record(&mut self, event: Event) {
        if let Some(chain) = event.chain() {
            if chain.len() > self.ledger.len() {
                self.ledger = chain.clone();
            }
        }
        self.history.push(event);
    }

    /// Recompute the ledger from scratch; must agree with the cached value.
    pub fn derive_ledger(history: &[Event]) -> Ledger {
        let mut ledger = Ledger::empty();
        for ev in history {
            if let Some(chain) = ev.chain() {
                if chain.len() > ledger.len() {
                    ledger = chain.clone();
                }
            }
        }
        ledger
    }

    /// Full local-state equality: initial token and byte-exact history.
    pub fn same_state(&self, other: &LocalState) -> bool {
        self.initial == other.initial && self.history == other.history
    }

    fn extends(&self, earlier: &LocalState) -> bool {
        self.initial == earlier.initial
            && self.history.len() >= earlier.history.len()
            && self.history[..earlier.history.len()] == earlier.history[..]
    }
}

/// A message still in transit, addressed to one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub to: AgentId,
    pub deliver_at: Time,
    pub chain: Ledger,
}

/// Environment record: who is in the system, who is honest, and what is in
/// transit. The honest set is recorded by the environment per time step;
/// checkers never infer it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    pub time: Time,
    agents: BTreeSet<AgentId>,
    honest: BTreeSet<AgentId>,
    in_flight: Vec<InFlight>,
}

impl EnvState {
    pub fn new(
        time: Time,
        agents: BTreeSet<AgentId>,
        honest: BTreeSet<AgentId>,
        in_flight: Vec<InFlight>,
    ) -> Result<Self, ModelError> {
        if let Some(agent) = honest.difference(&agents).next() {
            return Err(ModelError::HonestNotPresent { agent: agent.clone(), time });
        }
        Ok(EnvState { time, agents, honest, in_flight })
    }

    pub fn agents(&self) -> &BTreeSet<AgentId> {
        &self.agents
    }

    pub fn honest(&self) -> &BTreeSet<AgentId> {
        &self.honest
    }

    pub fn in_flight(&self) -> &[InFlight] {
        &self.in_flight
    }

    /// Compact deterministic summary of the in-transit queue, used by the
    /// trace format.
    pub fn queue_digest(&self) -> String {
        if self.in_flight.is_empty() {
            return "-".to_string();
        }
        let mut parts: Vec<String> = self
            .in_flight
            .iter()
            .map(|m| format!("{}@{}#{}", m.to, m.deliver_at, m.chain.len()))
            .collect();
        parts.sort();
        format!("n={} {}", self.in_flight.len(), parts.join(","))
    }
}

/// The state of the whole system at one instant: the environment record plus
/// the local state of every present agent. The environment is kept apart
/// from the agent map, so its tag can never collide with an agent name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalState {
    env: EnvState,
    agents: BTreeMap<AgentId, LocalState>,
}

impl GlobalState {
    pub fn new(env: EnvState, agents: BTreeMap<AgentId, LocalState>) -> Result<Self, ModelError> {
        let keys: BTreeSet<AgentId> = agents.keys().cloned().collect();
        if &keys != env.agents() {
            return Err(ModelError::AgentSetMismatch { time: env.time });
        }
        Ok(GlobalState { env, agents })
    }

    pub fn env(&self) -> &EnvState {
        &self.env
    }

    pub fn local(&self, agent: &AgentId) -> Option<&LocalState> {
        self.agents.get(agent)
    }

    pub fn locals(&self) -> impl Iterator<Item = (&AgentId, &LocalState)> {
        self.agents.iter()
    }

    /// Equality of everything the ledger properties can see: agent and
    /// honest sets, per-agent ledgers, and an empty message queue.
    fn ledger_quiescent_match(&self, other: &GlobalState) -> bool {
        self.env.agents == other.env.agents
            && self.env.honest == other.env.honest
            && self.env.in_flight.is_empty()
            && other.env.in_flight.is_empty()
            && self
                .agents
                .iter()
                .all(|(a, s)| other.agents.get(a).map(|o| o.ledger == s.ledger) == Some(true))
    }
}

/// A finite execution: global states indexed by time `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    id: String,
    states: Vec<GlobalState>,
    stutter: bool,
}

impl Run {
    /// Validates per-agent perfect recall, contiguous presence (rejoining
    /// agents must take fresh names), ledger derivation, and, when `stutter`
    /// is set, that the final state repeats the previous one in all
    /// ledger-relevant content.
    pub fn new(id: impl Into<String>, states: Vec<GlobalState>, stutter: bool) -> Result<Self, ModelError> {
        let id = id.into();
        if states.is_empty() {
            return Err(ModelError::EmptyRun);
        }
        let mut seen_gone: BTreeSet<AgentId> = BTreeSet::new();
        for (m, state) in states.iter().enumerate() {
            for (agent, local) in state.locals() {
                if seen_gone.contains(agent) {
                    return Err(ModelError::NonContiguousPresence { agent: agent.clone() });
                }
                if LocalState::derive_ledger(&local.history) != local.ledger {
                    return Err(ModelError::LedgerMismatch { agent: agent.clone(), time: m });
                }
                if m > 0 {
                    if let Some(prev) = states[m - 1].local(agent) {
                        if !local.extends(prev) {
                            return Err(ModelError::PerfectRecallViolation {
                                agent: agent.clone(),
                                time: m,
                            });
                        }
                    }
                }
            }
            if m > 0 {
                for (agent, _) in states[m - 1].locals() {
                    if state.local(agent).is_none() {
                        seen_gone.insert(agent.clone());
                    }
                }
            }
        }
        if stutter && states.len() >= 2 {
            let last = states.len() - 1;
            if !states[last - 1].ledger_quiescent_match(&states[last]) {
                return Err(ModelError::StutterMismatch { run: id, prev: last - 1, last });
            }
        }
        Ok(Run { id, states, stutter })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn horizon(&self) -> Time {
        self.states.len() - 1
    }

    pub fn state(&self, m: Time) -> &GlobalState {
        &self.states[m]
    }

    pub fn states(&self) -> &[GlobalState] {
        &self.states
    }

    pub fn stutter(&self) -> bool {
        self.stutter
    }

    pub fn present(&self, agent: &AgentId, m: Time) -> bool {
        self.states[m].env().agents().contains(agent)
    }

    pub fn honest(&self, agent: &AgentId, m: Time) -> bool {
        self.states[m].env().honest().contains(agent)
    }

    pub fn local(&self, agent: &AgentId, m: Time) -> Option<&LocalState> {
        self.states[m].local(agent)
    }

    pub fn ledger(&self, agent: &AgentId, m: Time) -> Option<&Ledger> {
        self.local(agent, m).map(|l| l.ledger())
    }

    /// Every agent name that is ever present in this run.
    pub fn agent_names(&self) -> BTreeSet<AgentId> {
        let mut names = BTreeSet::new();
        for state in &self.states {
            names.extend(state.env().agents().iter().cloned());
        }
        names
    }

    /// All `Submitted` events with the time step at which they were recorded.
    pub fn submissions(&self) -> Vec<(AgentId, Time, Transaction)> {
        let mut out = Vec::new();
        for m in 0..self.states.len() {
            for (agent, local) in self.states[m].locals() {
                let prev_len =
                    if m == 0 { 0 } else { self.local(agent, m - 1).map_or(0, |p| p.history.len()) };
                for ev in &local.history[prev_len..] {
                    if let Event::Submitted { tx } = ev {
                        out.push((agent.clone(), m, tx.clone()));
                    }
                }
            }
        }
        out
    }
}

/// A point of a system: run index and time. The evaluation perspective, for
/// agent-relative formulas, travels separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point {
    pub run: usize,
    pub time: Time,
}

impl Point {
    pub fn new(run: usize, time: Time) -> Self {
        Point { run, time }
    }
}

/// A run- and time-dependent set of agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexicalSet {
    /// Everyone currently in the system.
    All,
    /// The currently honest agents, as recorded by the environment.
    Honest,
}

impl IndexicalSet {
    pub fn members<'r>(&self, run: &'r Run, m: Time) -> &'r BTreeSet<AgentId> {
        match self {
            IndexicalSet::All => run.state(m).env().agents(),
            IndexicalSet::Honest => run.state(m).env().honest(),
        }
    }

    pub fn contains(&self, run: &Run, m: Time, agent: &AgentId) -> bool {
        self.members(run, m).contains(agent)
    }
}

impl fmt::Display for IndexicalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexicalSet::All => f.write_str("A"),
            IndexicalSet::Honest => f.write_str("H"),
        }
    }
}

/// A configured primitive proposition evaluated from run data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventProp {
    /// True at a state iff `agent` is present and its ledger contains a
    /// transaction with this id.
    LedgerContains { agent: AgentId, tx_id: String },
}

/// Assigns truth values to primitive propositions at global states. The
/// prefix-depth parameter fixes the meaning of the ledger-prefix primitives;
/// `acc` is an optional per-run flag, constant along each run by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    t_param: usize,
    event_props: BTreeMap<String, EventProp>,
    acc: Option<Vec<bool>>,
}

impl Interpretation {
    pub fn new(t_param: usize) -> Self {
        Interpretation { t_param, event_props: BTreeMap::new(), acc: None }
    }

    pub fn with_event_prop(mut self, name: impl Into<String>, prop: EventProp) -> Self {
        self.event_props.insert(name.into(), prop);
        self
    }

    pub fn t_param(&self) -> usize {
        self.t_param
    }

    pub fn event_prop(&self, name: &str) -> Option<&EventProp> {
        self.event_props.get(name)
    }

    pub fn acc(&self, run: usize) -> Option<bool> {
        self.acc.as_ref().map(|v| v[run])
    }

    pub fn has_acc(&self) -> bool {
        self.acc.is_some()
    }
}

/// One block of the run partition, carrying a probability measure over its
/// member runs as exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    id: String,
    members: Vec<usize>,
    weights: Vec<BigRational>,
}

impl Cell {
    pub fn new(id: impl Into<String>, members: Vec<usize>, weights: Vec<BigRational>) -> Result<Self, ModelError> {
        let id = id.into();
        let sum: BigRational = weights.iter().cloned().sum();
        if weights.len() != members.len()
            || !sum.is_one()
            || weights.iter().any(|w| w < &BigRational::zero())
        {
            return Err(ModelError::BadWeights { cell: id });
        }
        Ok(Cell { id, members, weights })
    }

    pub fn uniform(id: impl Into<String>, members: Vec<usize>) -> Result<Self, ModelError> {
        let n = members.len();
        let w = BigRational::new(1.into(), (n as i64).into());
        Cell::new(id, members, vec![w; n])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn weight_of(&self, run: usize) -> Option<&BigRational> {
        self.members.iter().position(|&r| r == run).map(|i| &self.weights[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &BigRational)> {
        self.members.iter().copied().zip(self.weights.iter())
    }
}

/// A finite set of runs under one interpretation, partitioned into cells
/// with per-cell measures. All runs share the same horizon and must be
/// quiescent at it.
#[derive(Debug, Clone)]
pub struct InterpretedSystem {
    runs: Vec<Arc<Run>>,
    horizon: Time,
    interp: Interpretation,
    cells: Vec<Cell>,
}

impl InterpretedSystem {
    /// `cells = None` puts every run into a single uniform cell.
    pub fn new(
        runs: Vec<Run>,
        interp: Interpretation,
        cells: Option<Vec<Cell>>,
    ) -> Result<Self, ModelError> {
        if runs.is_empty() {
            return Err(ModelError::EmptyRun);
        }
        let horizon = runs[0].horizon();
        let mut ids = BTreeSet::new();
        for run in &runs {
            if run.horizon() != horizon {
                return Err(ModelError::HorizonMismatch {
                    run: run.id().to_string(),
                    got: run.horizon(),
                    expected: horizon,
                });
            }
            if !run.stutter() {
                return Err(ModelError::NotQuiescent(run.id().to_string()));
            }
            if !ids.insert(run.id().to_string()) {
                return Err(ModelError::DuplicateRunId(run.id().to_string()));
            }
        }
        let cells = match cells {
            Some(cells) => {
                let mut covered = vec![false; runs.len()];
                for cell in &cells {
                    for &m in cell.members() {
                        if m >= runs.len() || covered[m] {
                            return Err(ModelError::BadPartition(format!(
                                "run index {m} missing or covered twice"
                            )));
                        }
                        covered[m] = true;
                    }
                }
                if covered.iter().any(|c| !c) {
                    return Err(ModelError::BadPartition("some run belongs to no cell".into()));
                }
                cells
            }
            None => vec![Cell::uniform("all", (0..runs.len()).collect())?],
        };
        Ok(InterpretedSystem {
            runs: runs.into_iter().map(Arc::new).collect(),
            horizon,
            interp,
            cells,
        })
    }

    pub fn runs(&self) -> &[Arc<Run>] {
        &self.runs
    }

    pub fn run(&self, idx: usize) -> &Run {
        &self.runs[idx]
    }

    pub fn run_index(&self, id: &str) -> Option<usize> {
        self.runs.iter().position(|r| r.id() == id)
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn interpretation(&self) -> &Interpretation {
        &self.interp
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_of(&self, run: usize) -> &Cell {
        self.cells
            .iter()
            .find(|c| c.members().contains(&run))
            .expect("cells partition the runs")
    }

    /// Same runs and cells under an interpretation extended with a per-run
    /// `acc` assignment.
    pub fn with_acc(&self, acc: Vec<bool>) -> InterpretedSystem {
        assert_eq!(acc.len(), self.runs.len());
        let mut interp = self.interp.clone();
        interp.acc = Some(acc);
        InterpretedSystem { runs: self.runs.clone(), horizon: self.horizon, interp, cells: self.cells.clone() }
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.runs.len())
            .flat_map(move |run| (0..=self.horizon).map(move |time| Point { run, time }))
    }

    pub fn point_count(&self) -> usize {
        self.runs.len() * (self.horizon + 1)
    }

    /// Every agent name appearing anywhere in the system.
    pub fn agent_universe(&self) -> BTreeSet<AgentId> {
        let mut names = BTreeSet::new();
        for run in &self.runs {
            names.extend(run.agent_names());
        }
        names
    }

    pub fn event_prop_holds(&self, prop: &EventProp, point: Point) -> bool {
        match prop {
            EventProp::LedgerContains { agent, tx_id } => self
                .run(point.run)
                .ledger(agent, point.time)
                .is_some_and(|l| l.contains_id(tx_id)),
        }
    }
}

/// True iff `agent` is present at both points with the same local state
/// (initial token and full history). Both points must lie within the
/// system.
pub fn indistinguishable(sys: &InterpretedSystem, p: Point, q: Point, agent: &AgentId) -> bool {
    match (sys.run(p.run).local(agent, p.time), sys.run(q.run).local(agent, q.time)) {
        (Some(a), Some(b)) => a.same_state(b),
        _ => false,
    }
}

/// All points of the system the agent cannot distinguish from `p`, by
/// exhaustive scan. Empty when the agent is not present at `p`.
pub fn knowledge_set(sys: &InterpretedSystem, p: Point, agent: &AgentId) -> Vec<Point> {
    if !sys.run(p.run).present(agent, p.time) {
        return Vec::new();
    }
    sys.points().filter(|&q| indistinguishable(sys, p, q, agent)).collect()
}
