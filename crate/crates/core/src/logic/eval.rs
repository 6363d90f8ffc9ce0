//! Point-wise formula evaluation over an interpreted system.
//!
//! Evaluation is agent-relative: a perspective agent may accompany the
//! point, and knowledge operators rebind it — `K_j f` evaluates `f` from
//! `j`'s perspective at every point `j` cannot distinguish from the current
//! one. "Forever" quantifiers run to the horizon, whose quiescent final
//! state stands in for all later instants; time shifts clamp there.
//!
//! Common knowledge is computed as a reachability fixpoint: a point is in
//! scope if a chain of indexing shifts and member indistinguishability steps
//! leads to it, and the formula is then checked there from the perspective
//! of the member witnessing the last step. An independent bounded-iteration
//! oracle for the same operator lives in [`super::oracle`].

use std::collections::{HashMap, HashSet, VecDeque};
use std::rc::Rc;

use thiserror::Error;

use crate::model::{
    AgentId, IndexicalSet, InterpretedSystem, LocalState, Point, Time,
};

use super::ast::{Formula, YOp};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("agent-relative formula evaluated without a perspective agent")]
    PerspectiveRequired,
    #[error("formula uses acc but the interpretation does not define it")]
    MissingAcc,
    #[error("unknown proposition {0:?}")]
    UnknownProp(String),
    #[error("point (run {run}, time {time}) is outside the system")]
    BadPoint { run: usize, time: Time },
    #[error("{0}")]
    BadParams(String),
}

/// Which perspective the common-knowledge argument is evaluated under at
/// reached points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommonPerspective {
    /// The member witnessing the final reachability step. This matches the
    /// layer-by-layer expansion through "everyone believes".
    #[default]
    LastWitness,
    /// Keep the outer perspective unchanged; a documented variant, not used
    /// by the equivalence suites.
    Unchanged,
}

/// Counters for vacuously true knowledge evaluations. With caching enabled
/// the counts are occurrence lower bounds, not exact tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// `K_j`/`B_j` evaluated where `j` is absent (empty knowledge set).
    pub vacuous_knowledge: usize,
    /// `E[S]` evaluated where the set has no members.
    pub vacuous_everyone: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub run_id: String,
    pub time: Time,
    pub perspective: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub valid: bool,
    pub counterexample: Option<Counterexample>,
}

/// Result of a reachability computation: the points in scope, and per point
/// the members that witness a final step into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachableSet {
    pub points: Vec<Point>,
    pub pairs: Vec<(Point, AgentId)>,
}

const UNKNOWN_AGENT: u16 = u16::MAX;

/// Structural formula nodes with children as interned ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    Honest(AgentId),
    HonestSelf,
    TPrefix(Vec<String>, AgentId),
    TPrefixSelf(Vec<String>),
    Acc,
    Prop(String),
    Not(u32),
    And(u32, u32),
    Or(u32, u32),
    Implies(u32, u32),
    Always(u32),
    Next(usize, u32),
    Knows(AgentId, u32),
    Believes(AgentId, IndexicalSet, u32),
    Everyone(IndexicalSet, bool, u32),
    Common(IndexicalSet, YOp, bool, u32),
    InitGeq(num_rational::BigRational, u32),
}

#[derive(Default)]
struct Interner {
    by_key: HashMap<Node, u32>,
    nodes: Vec<Node>,
    agent_relative: Vec<bool>,
}

impl Interner {
    fn add(&mut self, node: Node, agent_relative: bool) -> u32 {
        if let Some(&id) = self.by_key.get(&node) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(node.clone());
        self.agent_relative.push(agent_relative);
        self.by_key.insert(node, id);
        id
    }

    fn intern(&mut self, f: &Formula) -> u32 {
        match f {
            Formula::Honest(i) => self.add(Node::Honest(i.clone()), false),
            Formula::HonestSelf => self.add(Node::HonestSelf, true),
            Formula::TPrefix(ids, i) => self.add(Node::TPrefix(ids.clone(), i.clone()), false),
            Formula::TPrefixSelf(ids) => self.add(Node::TPrefixSelf(ids.clone()), true),
            Formula::Acc => self.add(Node::Acc, false),
            Formula::Prop(name) => self.add(Node::Prop(name.clone()), false),
            Formula::Not(g) => {
                let g = self.intern(g);
                self.add(Node::Not(g), self.agent_relative[g as usize])
            }
            Formula::And(a, b) => {
                let (a, b) = (self.intern(a), self.intern(b));
                let rel = self.agent_relative[a as usize] || self.agent_relative[b as usize];
                self.add(Node::And(a, b), rel)
            }
            Formula::Or(a, b) => {
                let (a, b) = (self.intern(a), self.intern(b));
                let rel = self.agent_relative[a as usize] || self.agent_relative[b as usize];
                self.add(Node::Or(a, b), rel)
            }
            Formula::Implies(a, b) => {
                let (a, b) = (self.intern(a), self.intern(b));
                let rel = self.agent_relative[a as usize] || self.agent_relative[b as usize];
                self.add(Node::Implies(a, b), rel)
            }
            Formula::Always(g) => {
                let g = self.intern(g);
                self.add(Node::Always(g), self.agent_relative[g as usize])
            }
            Formula::Next(k, g) => {
                let g = self.intern(g);
                self.add(Node::Next(*k, g), self.agent_relative[g as usize])
            }
            Formula::Knows(i, g) => {
                let g = self.intern(g);
                self.add(Node::Knows(i.clone(), g), false)
            }
            Formula::Believes(i, s, g) => {
                let g = self.intern(g);
                self.add(Node::Believes(i.clone(), *s, g), false)
            }
            Formula::Everyone(s, acc, g) => {
                let g = self.intern(g);
                self.add(Node::Everyone(*s, *acc, g), false)
            }
            Formula::Common(s, y, acc, g) => {
                let g = self.intern(g);
                // conservative: the perspective convention may pass the
                // outer perspective through
                self.add(Node::Common(*s, *y, *acc, g), self.agent_relative[g as usize])
            }
            Formula::InitGeq(alpha, g) => {
                let g = self.intern(g);
                self.add(Node::InitGeq(alpha.clone(), g), self.agent_relative[g as usize])
            }
        }
    }
}

/// Per-system lookup tables: the agent universe and, per agent, the
/// partition of points into indistinguishability classes.
struct SystemIndex {
    universe: Vec<AgentId>,
    by_name: HashMap<AgentId, u16>,
    width: usize,
    /// `class_of[agent][linear point]`: class id + 1, or 0 when absent.
    class_of: Vec<Vec<u32>>,
    classes: Vec<Vec<Vec<Point>>>,
}

impl SystemIndex {
    fn build(sys: &InterpretedSystem) -> Self {
        let universe: Vec<AgentId> = sys.agent_universe().into_iter().collect();
        assert!(universe.len() < UNKNOWN_AGENT as usize);
        let by_name: HashMap<AgentId, u16> =
            universe.iter().enumerate().map(|(k, a)| (a.clone(), k as u16)).collect();
        let width = sys.horizon() + 1;
        let n_points = sys.point_count();
        let mut class_of = vec![vec![0u32; n_points]; universe.len()];
        let mut classes = vec![Vec::new(); universe.len()];
        for (a_idx, agent) in universe.iter().enumerate() {
            let mut seen: HashMap<&LocalState, u32> = HashMap::new();
            for point in sys.points() {
                let Some(local) = sys.run(point.run).local(agent, point.time) else {
                    continue;
                };
                let next_id = classes[a_idx].len() as u32;
                let class = *seen.entry(local).or_insert_with(|| {
                    classes[a_idx].push(Vec::new());
                    next_id
                });
                classes[a_idx][class as usize].push(point);
                class_of[a_idx][point.run * width + point.time] = class + 1;
            }
        }
        SystemIndex { universe, by_name, width, class_of, classes }
    }

    fn agent_code(&self, agent: &AgentId) -> u16 {
        self.by_name.get(agent).copied().unwrap_or(UNKNOWN_AGENT)
    }

    fn knowledge_class(&self, agent_code: u16, point: Point) -> &[Point] {
        if agent_code == UNKNOWN_AGENT {
            return &[];
        }
        let a = agent_code as usize;
        match self.class_of[a][point.run * self.width + point.time] {
            0 => &[],
            c => &self.classes[a][(c - 1) as usize],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ReachKey {
    set: IndexicalSet,
    y: YOp,
    use_acc: bool,
    origin: Point,
}

struct Reached {
    pairs: Vec<(Point, u16)>,
    points: Vec<Point>,
}

/// Evaluation state over one system: interner, memo tables, reachability
/// cache, and diagnostics. Cheap to create; create one per thread when
/// fanning out.
pub struct EvalContext<'a> {
    sys: &'a InterpretedSystem,
    index: SystemIndex,
    interner: Interner,
    memo: HashMap<(u32, u32, u32, u16), bool>,
    reach: HashMap<ReachKey, Rc<Reached>>,
    caching: bool,
    convention: CommonPerspective,
    pub diagnostics: Diagnostics,
}

impl<'a> EvalContext<'a> {
    pub fn new(sys: &'a InterpretedSystem) -> Self {
        EvalContext {
            sys,
            index: SystemIndex::build(sys),
            interner: Interner::default(),
            memo: HashMap::new(),
            reach: HashMap::new(),
            caching: true,
            convention: CommonPerspective::default(),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn system(&self) -> &InterpretedSystem {
        self.sys
    }

    /// Disable memoization and reachability caching (for transparency
    /// checks).
    pub fn without_caching(mut self) -> Self {
        self.caching = false;
        self
    }

    pub fn with_convention(mut self, convention: CommonPerspective) -> Self {
        self.convention = convention;
        self
    }

    fn check_point(&self, p: Point) -> Result<(), EvalError> {
        if p.run >= self.sys.runs().len() || p.time > self.sys.horizon() {
            return Err(EvalError::BadPoint { run: p.run, time: p.time });
        }
        Ok(())
    }

    /// Evaluate a formula at a point, optionally from an agent's
    /// perspective.
    pub fn eval(
        &mut self,
        f: &Formula,
        point: Point,
        perspective: Option<&AgentId>,
    ) -> Result<bool, EvalError> {
        self.check_point(point)?;
        let id = self.interner.intern(f);
        let persp = perspective.map(|a| self.index.agent_code(a));
        self.eval_node(id, point, persp)
    }

    fn persp_code(persp: Option<u16>) -> u16 {
        match persp {
            None => UNKNOWN_AGENT - 1,
            Some(code) => code,
        }
    }

    fn eval_node(&mut self, id: u32, p: Point, persp: Option<u16>) -> Result<bool, EvalError> {
        // perspective-independent nodes share one memo slot
        let persp_key = if self.interner.agent_relative[id as usize] {
            Self::persp_code(persp)
        } else {
            Self::persp_code(None)
        };
        let key = (id, p.run as u32, p.time as u32, persp_key);
        if self.caching {
            if let Some(&v) = self.memo.get(&key) {
                return Ok(v);
            }
        }
        let node = self.interner.nodes[id as usize].clone();
        let value = match node {
            Node::Honest(ref i) => self.sys.run(p.run).honest(i, p.time),
            Node::HonestSelf => {
                let agent = self.perspective_agent(persp)?;
                agent.is_some_and(|a| self.sys.run(p.run).honest(a, p.time))
            }
            Node::TPrefix(ref ids, ref i) => self.id_prefix_settled(ids, i, p),
            Node::TPrefixSelf(ref ids) => {
                let agent = self.perspective_agent(persp)?;
                agent.is_some_and(|a| self.id_prefix_settled(ids, &a.clone(), p))
            }
            Node::Acc => self.sys.interpretation().acc(p.run).ok_or(EvalError::MissingAcc)?,
            Node::Prop(ref name) => {
                let prop = self
                    .sys
                    .interpretation()
                    .event_prop(name)
                    .ok_or_else(|| EvalError::UnknownProp(name.clone()))?
                    .clone();
                self.sys.event_prop_holds(&prop, p)
            }
            Node::Not(g) => !self.eval_node(g, p, persp)?,
            Node::And(a, b) => self.eval_node(a, p, persp)? && self.eval_node(b, p, persp)?,
            Node::Or(a, b) => self.eval_node(a, p, persp)? || self.eval_node(b, p, persp)?,
            Node::Implies(a, b) => !self.eval_node(a, p, persp)? || self.eval_node(b, p, persp)?,
            Node::Always(g) => {
                let mut all = true;
                for m in p.time..=self.sys.horizon() {
                    if !self.eval_node(g, Point::new(p.run, m), persp)? {
                        all = false;
                        break;
                    }
                }
                all
            }
            Node::Next(k, g) => {
                let m = (p.time + k).min(self.sys.horizon());
                self.eval_node(g, Point::new(p.run, m), persp)?
            }
            Node::Knows(ref j, g) => {
                let code = self.index.agent_code(j);
                let class: Vec<Point> = self.index.knowledge_class(code, p).to_vec();
                if class.is_empty() {
                    self.diagnostics.vacuous_knowledge += 1;
                    true
                } else {
                    let mut all = true;
                    for q in class {
                        if !self.eval_node(g, q, Some(code))? {
                            all = false;
                            break;
                        }
                    }
                    all
                }
            }
            Node::Believes(ref j, set, g) => {
                let code = self.index.agent_code(j);
                let j = j.clone();
                let class: Vec<Point> = self.index.knowledge_class(code, p).to_vec();
                if class.is_empty() {
                    self.diagnostics.vacuous_knowledge += 1;
                    true
                } else {
                    let mut all = true;
                    for q in class {
                        if set.contains(self.sys.run(q.run), q.time, &j)
                            && !self.eval_node(g, q, Some(code))?
                        {
                            all = false;
                            break;
                        }
                    }
                    all
                }
            }
            Node::Everyone(set, use_acc, g) => self.eval_everyone(set, use_acc, g, p)?,
            Node::Common(set, y, use_acc, g) => {
                if use_acc && !self.sys.interpretation().has_acc() {
                    return Err(EvalError::MissingAcc);
                }
                let reached = self.reached(ReachKey { set, y, use_acc, origin: p });
                let mut all = true;
                for (q, witness) in reached.pairs.iter() {
                    let inner_persp = match self.convention {
                        CommonPerspective::LastWitness => Some(*witness),
                        CommonPerspective::Unchanged => persp,
                    };
                    if !self.eval_node(g, *q, inner_persp)? {
                        all = false;
                        break;
                    }
                }
                all
            }
            Node::InitGeq(ref alpha, g) => {
                let always_g = self.interner.add(
                    Node::Always(g),
                    self.interner.agent_relative[g as usize],
                );
                let alpha = alpha.clone();
                let cell = self.sys.cell_of(p.run).clone();
                let mut mass = num_rational::BigRational::from_integer(0.into());
                for (r, w) in cell.entries() {
                    if self.eval_node(always_g, Point::new(r, 0), persp)? {
                        mass += w;
                    }
                }
                mass >= alpha
            }
        };
        if self.caching {
            self.memo.insert(key, value);
        }
        Ok(value)
    }

    /// Resolve the perspective: error when evaluation has none, `None` when
    /// it names an agent outside the universe (absent everywhere).
    fn perspective_agent(&self, persp: Option<u16>) -> Result<Option<&AgentId>, EvalError> {
        match persp {
            None => Err(EvalError::PerspectiveRequired),
            Some(UNKNOWN_AGENT) => Ok(None),
            Some(code) => Ok(Some(&self.index.universe[code as usize])),
        }
    }

    /// The formula constant is an id-wise settled prefix of the agent's
    /// ledger; false when the agent is absent.
    fn id_prefix_settled(&self, ids: &[String], agent: &AgentId, p: Point) -> bool {
        let t = self.sys.interpretation().t_param();
        let Some(ledger) = self.sys.run(p.run).ledger(agent, p.time) else {
            return false;
        };
        ids.len() <= ledger.len().saturating_sub(t)
            && ids
                .iter()
                .zip(ledger.entries())
                .all(|(id, tx)| id == tx.id())
    }

    fn eval_everyone(
        &mut self,
        set: IndexicalSet,
        use_acc: bool,
        g: u32,
        p: Point,
    ) -> Result<bool, EvalError> {
        if use_acc && !self.sys.interpretation().has_acc() {
            return Err(EvalError::MissingAcc);
        }
        let members: Vec<AgentId> =
            set.members(self.sys.run(p.run), p.time).iter().cloned().collect();
        if members.is_empty() {
            self.diagnostics.vacuous_everyone += 1;
            return Ok(true);
        }
        for i in members {
            let code = self.index.agent_code(&i);
            let class: Vec<Point> = self.index.knowledge_class(code, p).to_vec();
            for q in class {
                if !set.contains(self.sys.run(q.run), q.time, &i) {
                    continue;
                }
                if use_acc && self.sys.interpretation().acc(q.run) != Some(true) {
                    continue;
                }
                if !self.eval_node(g, q, Some(code))? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn y_targets(&self, y: YOp, p: Point) -> Vec<Point> {
        let h = self.sys.horizon();
        match y {
            YOp::Id => vec![p],
            YOp::Next(k) => vec![Point::new(p.run, (p.time + k).min(h))],
            YOp::NextAlways(k) => {
                ((p.time + k).min(h)..=h).map(|m| Point::new(p.run, m)).collect()
            }
        }
    }

    fn reached(&mut self, key: ReachKey) -> Rc<Reached> {
        if self.caching {
            if let Some(r) = self.reach.get(&key) {
                return Rc::clone(r);
            }
        }
        let result = Rc::new(self.compute_reached(&key));
        if self.caching {
            self.reach.insert(key, Rc::clone(&result));
        }
        result
    }

    /// Worklist closure of the one-step relation: shift the point by `Y`,
    /// pick a member of the set there, and cross to any point that member
    /// cannot distinguish while still in the set (and, in the acc variant,
    /// on a flagged run).
    fn compute_reached(&self, key: &ReachKey) -> Reached {
        let mut pairs: HashSet<(Point, u16)> = HashSet::new();
        let mut points: HashSet<Point> = HashSet::new();
        let mut queue: VecDeque<Point> = VecDeque::new();
        let mut expanded: HashSet<Point> = HashSet::new();
        expanded.insert(key.origin);
        self.expand(key, key.origin, &mut pairs, &mut points, &mut queue);
        while let Some(p) = queue.pop_front() {
            if expanded.insert(p) {
                self.expand(key, p, &mut pairs, &mut points, &mut queue);
            }
        }
        let mut pairs: Vec<(Point, u16)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        let mut points: Vec<Point> = points.into_iter().collect();
        points.sort_unstable();
        Reached { pairs, points }
    }

    fn expand(
        &self,
        key: &ReachKey,
        from: Point,
        pairs: &mut HashSet<(Point, u16)>,
        points: &mut HashSet<Point>,
        queue: &mut VecDeque<Point>,
    ) {
        for shifted in self.y_targets(key.y, from) {
            let members: Vec<AgentId> = key
                .set
                .members(self.sys.run(shifted.run), shifted.time)
                .iter()
                .cloned()
                .collect();
            for member in members {
                let code = self.index.agent_code(&member);
                for &q in self.index.knowledge_class(code, shifted) {
                    if !key.set.contains(self.sys.run(q.run), q.time, &member) {
                        continue;
                    }
                    if key.use_acc && self.sys.interpretation().acc(q.run) != Some(true) {
                        continue;
                    }
                    pairs.insert((q, code));
                    if points.insert(q) {
                        queue.push_back(q);
                    }
                }
            }
        }
    }

    /// Points the agent cannot distinguish from `p` (indexed variant of the
    /// exhaustive scan).
    pub fn knowledge_points(&self, agent: &AgentId, p: Point) -> Vec<Point> {
        self.index.knowledge_class(self.index.agent_code(agent), p).to_vec()
    }

    /// Public reachability query.
    pub fn reachable_set(
        &mut self,
        point: Point,
        set: IndexicalSet,
        y: YOp,
        use_acc: bool,
    ) -> Result<ReachableSet, EvalError> {
        self.check_point(point)?;
        if use_acc && !self.sys.interpretation().has_acc() {
            return Err(EvalError::MissingAcc);
        }
        let reached = self.reached(ReachKey { set, y, use_acc, origin: point });
        Ok(ReachableSet {
            points: reached.points.clone(),
            pairs: reached
                .pairs
                .iter()
                .map(|(p, code)| (*p, self.index.universe[*code as usize].clone()))
                .collect(),
        })
    }

    /// Evaluate the common-knowledge operator directly.
    pub fn eval_common(
        &mut self,
        set: IndexicalSet,
        y: YOp,
        use_acc: bool,
        f: &Formula,
        point: Point,
    ) -> Result<bool, EvalError> {
        let common = Formula::Common(set, y, use_acc, std::sync::Arc::new(f.clone()));
        self.eval(&common, point, None)
    }

    /// Exhaustive validity over all points; for agent-relative formulas the
    /// perspective ranges over the agents present at each point.
    pub fn check_valid(&mut self, f: &Formula) -> Result<ValidityReport, EvalError> {
        let agent_relative = f.is_agent_relative();
        let id = self.interner.intern(f);
        for p in self.sys.points() {
            if agent_relative {
                let present: Vec<AgentId> =
                    self.sys.run(p.run).state(p.time).env().agents().iter().cloned().collect();
                for agent in present {
                    let code = self.index.agent_code(&agent);
                    if !self.eval_node(id, p, Some(code))? {
                        return Ok(ValidityReport {
                            valid: false,
                            counterexample: Some(Counterexample {
                                run_id: self.sys.run(p.run).id().to_string(),
                                time: p.time,
                                perspective: Some(agent),
                            }),
                        });
                    }
                }
            } else if !self.eval_node(id, p, None)? {
                return Ok(ValidityReport {
                    valid: false,
                    counterexample: Some(Counterexample {
                        run_id: self.sys.run(p.run).id().to_string(),
                        time: p.time,
                        perspective: None,
                    }),
                });
            }
        }
        Ok(ValidityReport { valid: true, counterexample: None })
    }
}
