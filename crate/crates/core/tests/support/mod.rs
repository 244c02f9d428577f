//! Test support shared by the core integration tests and the acceptance
//! suite: a brute-force labeling oracle, random network scenarios and random
//! DAG curricula.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use jtms_learn::curriculum::{
    Assessment, Asset, AssetKind, Curriculum, Milestone, Mode, CURRICULUM_SCHEMA,
};
use jtms_learn::jtms::{JtmsError, Label, LabelDelta, Network, NodeId, NodeKind};
use proptest::prelude::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JustSpec {
    pub consequent: usize,
    pub in_list: BTreeSet<usize>,
    pub out_list: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Enable(usize),
    Retract(usize),
    Justify(JustSpec),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kinds: Vec<NodeKind>,
    pub ops: Vec<Op>,
}

/// Why the oracle expects a justification to be refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refusal {
    IllegalConsequent,
    SelfReference,
    Overlap,
    NonMonotonicCycle,
}

/// Plain-data mirror of a network, evaluated by exhaustive search.
#[derive(Debug, Clone, Default)]
pub struct Model {
    pub kinds: Vec<NodeKind>,
    pub enabled: Vec<bool>,
    pub justs: Vec<JustSpec>,
}

impl Model {
    pub fn new(kinds: &[NodeKind]) -> Self {
        Model {
            kinds: kinds.to_vec(),
            enabled: vec![false; kinds.len()],
            justs: Vec::new(),
        }
    }

    pub fn refusal(&self, j: &JustSpec) -> Option<Refusal> {
        if !matches!(
            self.kinds[j.consequent],
            NodeKind::Derived | NodeKind::Contradiction
        ) {
            return Some(Refusal::IllegalConsequent);
        }
        if j.in_list.contains(&j.consequent) || j.out_list.contains(&j.consequent) {
            return Some(Refusal::SelfReference);
        }
        if j.in_list.intersection(&j.out_list).next().is_some() {
            return Some(Refusal::Overlap);
        }
        let mut all = self.justs.clone();
        all.push(j.clone());
        if out_edge_on_cycle(self.kinds.len(), &all) {
            return Some(Refusal::NonMonotonicCycle);
        }
        None
    }

    /// Least fixpoint of the reduct of the network by `guess`: out-lists are
    /// read from `guess`, in-lists from the set being built.
    fn reduct_closure(&self, guess: &[bool]) -> Vec<bool> {
        let mut label: Vec<bool> = self
            .kinds
            .iter()
            .zip(&self.enabled)
            .map(|(k, &e)| match k {
                NodeKind::Premise => true,
                NodeKind::Assumption => e,
                _ => false,
            })
            .collect();
        loop {
            let mut changed = false;
            for j in &self.justs {
                if !label[j.consequent]
                    && j.in_list.iter().all(|&n| label[n])
                    && j.out_list.iter().all(|&n| !guess[n])
                {
                    label[j.consequent] = true;
                    changed = true;
                }
            }
            if !changed {
                return label;
            }
        }
    }

    /// Every labeling that reproduces itself as the least fixpoint of its
    /// own reduct. Exhaustive over the justified nodes.
    pub fn stable_labelings(&self) -> Vec<Vec<bool>> {
        let free: Vec<usize> = (0..self.kinds.len())
            .filter(|&i| matches!(self.kinds[i], NodeKind::Derived | NodeKind::Contradiction))
            .collect();
        let base: Vec<bool> = self
            .kinds
            .iter()
            .zip(&self.enabled)
            .map(|(k, &e)| match k {
                NodeKind::Premise => true,
                NodeKind::Assumption => e,
                _ => false,
            })
            .collect();
        let mut out = Vec::new();
        for mask in 0u32..(1u32 << free.len()) {
            let mut guess = base.clone();
            for (bit, &i) in free.iter().enumerate() {
                guess[i] = mask & (1 << bit) != 0;
            }
            if self.reduct_closure(&guess) == guess {
                out.push(guess);
            }
        }
        out
    }

    /// The unique stable labeling; panics if there is not exactly one.
    pub fn labels(&self) -> Vec<bool> {
        let mut all = self.stable_labelings();
        assert_eq!(
            all.len(),
            1,
            "oracle: expected a unique stable labeling, found {}",
            all.len()
        );
        all.pop().unwrap()
    }
}

/// True when some out-list edge a -> c has c reaching a again.
fn out_edge_on_cycle(n: usize, justs: &[JustSpec]) -> bool {
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for j in justs {
        for &a in j.in_list.iter().chain(&j.out_list) {
            succ[a].insert(j.consequent);
        }
    }
    let reaches = |from: usize, to: usize| {
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend(succ[v].iter().copied());
            }
        }
        false
    };
    justs
        .iter()
        .any(|j| j.out_list.iter().any(|&a| reaches(j.consequent, a)))
}

pub fn labels_as_bools(net: &Network) -> Vec<bool> {
    net.labels().into_iter().map(|l| l == Label::In).collect()
}

fn refusal_of(err: &JtmsError) -> Option<Refusal> {
    match err {
        JtmsError::IllegalConsequent(_) => Some(Refusal::IllegalConsequent),
        JtmsError::SelfReference(_) => Some(Refusal::SelfReference),
        JtmsError::OverlappingLists(_) => Some(Refusal::Overlap),
        JtmsError::NonMonotonicCycle(_) => Some(Refusal::NonMonotonicCycle),
        _ => None,
    }
}

/// Walks recorded supports from every IN justified node through in-lists.
/// Fails on a revisited node or a leaf that is not a premise or enabled
/// assumption. Returns how many IN justified nodes were walked.
pub fn walk_supports(net: &Network) -> Result<usize, String> {
    fn visit(
        net: &Network,
        n: NodeId,
        on_path: &mut BTreeSet<NodeId>,
        done: &mut BTreeSet<NodeId>,
    ) -> Result<(), String> {
        if done.contains(&n) {
            return Ok(());
        }
        if !on_path.insert(n) {
            return Err(format!("circular support through {n}"));
        }
        let node = net.node(n).map_err(|e| e.to_string())?;
        match node.kind {
            NodeKind::Premise => {}
            NodeKind::Assumption if node.enabled => {}
            NodeKind::Assumption => return Err(format!("support reaches disabled assumption {n}")),
            NodeKind::Derived | NodeKind::Contradiction => {
                let j = node
                    .support
                    .ok_or_else(|| format!("{n} is IN without support"))?;
                let j = net
                    .justification(j)
                    .ok_or_else(|| format!("{n} has a dangling support"))?;
                for &a in &j.in_list {
                    visit(net, a, on_path, done)?;
                }
            }
        }
        on_path.remove(&n);
        done.insert(n);
        Ok(())
    }
    let mut done = BTreeSet::new();
    let mut walked = 0;
    for node in net.nodes() {
        if node.kind.is_justified() && node.label == Label::In {
            visit(net, node.id, &mut BTreeSet::new(), &mut done)?;
            walked += 1;
        }
    }
    Ok(walked)
}

/// Structural checks that do not need the oracle.
pub fn check_structure(net: &Network) -> Result<(), String> {
    walk_supports(net).map_err(|e| format!("support walk: {e}"))?;
    net.check_well_founded()
        .map_err(|e| format!("well-foundedness: {e}"))?;
    net.check_dependents_index()
        .map_err(|e| format!("dependents index: {e}"))?;
    for node in net.nodes() {
        match node.kind {
            NodeKind::Premise if node.label != Label::In => {
                return Err(format!("premise {} is OUT", node.id))
            }
            NodeKind::Assumption if node.label.is_in() != node.enabled => {
                return Err(format!(
                    "assumption {} label disagrees with enabled",
                    node.id
                ))
            }
            NodeKind::Derived | NodeKind::Contradiction => match (node.label, node.support) {
                (Label::In, Some(j)) if net.is_valid(j) => {}
                (Label::Out, None) => {}
                other => return Err(format!("node {} has label/support {other:?}", node.id)),
            },
            _ => {}
        }
    }
    let expected: Vec<NodeId> = net
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Contradiction && n.label == Label::In)
        .map(|n| n.id)
        .collect();
    if net.contradictions() != expected {
        return Err("contradictions() disagrees with labels".into());
    }
    Ok(())
}

fn check_delta(before: &[Label], delta: &LabelDelta, net: &Network) -> Result<(), String> {
    let mut replayed = before.to_vec();
    for c in delta.iter() {
        if replayed[c.node.0 as usize] != c.from || c.from == c.to {
            return Err(format!(
                "delta entry {c:?} does not match the pre-call labels"
            ));
        }
        replayed[c.node.0 as usize] = c.to;
    }
    if replayed != net.labels() {
        return Err("applying the delta does not reproduce the post-call labels".into());
    }
    let mut seen = BTreeSet::new();
    if !delta.iter().all(|c| seen.insert(c.node)) {
        return Err("delta lists a node twice".into());
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RunStats {
    pub checks: usize,
    /// IN justified nodes whose support chain was walked, summed over steps.
    pub supports_walked: usize,
    pub accepted: usize,
    pub refused: usize,
    pub in_derived: usize,
}

/// Replays a scenario against both the network and the model, checking
/// labels, deltas and structure after every step.
pub fn run_scenario(s: &Scenario) -> Result<(Network, Model, RunStats), String> {
    let mut net = Network::new();
    for &k in &s.kinds {
        net.add_node(k);
    }
    let mut model = Model::new(&s.kinds);
    let mut stats = RunStats::default();
    for (step, op) in s.ops.iter().enumerate() {
        let before = net.labels();
        let delta = match op {
            Op::Enable(i) | Op::Retract(i) => {
                let id = NodeId(*i as u32);
                let enable = matches!(op, Op::Enable(_));
                let result = if enable {
                    net.enable_assumption(id)
                } else {
                    net.retract_assumption(id)
                };
                if s.kinds[*i] != NodeKind::Assumption {
                    match result {
                        Err(JtmsError::NotAnAssumption(_)) => continue,
                        other => {
                            return Err(format!(
                                "step {step}: expected NotAnAssumption, got {other:?}"
                            ))
                        }
                    }
                }
                let was = model.enabled[*i];
                model.enabled[*i] = enable;
                let delta = result.map_err(|e| format!("step {step}: {e}"))?;
                if was == enable && !delta.is_empty() {
                    return Err(format!("step {step}: repeated toggle produced a delta"));
                }
                delta
            }
            Op::Justify(j) => {
                let expected = model.refusal(j);
                let result = net.add_justification_with_delta(
                    NodeId(j.consequent as u32),
                    j.in_list.iter().map(|&n| NodeId(n as u32)),
                    j.out_list.iter().map(|&n| NodeId(n as u32)),
                );
                match (expected, result) {
                    (None, Ok((_, delta))) => {
                        model.justs.push(j.clone());
                        stats.accepted += 1;
                        delta
                    }
                    (Some(r), Err(e)) if refusal_of(&e) == Some(r) => {
                        stats.refused += 1;
                        if net.labels() != before {
                            return Err(format!(
                                "step {step}: refused justification changed labels"
                            ));
                        }
                        continue;
                    }
                    (exp, got) => {
                        return Err(format!(
                            "step {step}: oracle expected {exp:?}, network returned {got:?}"
                        ))
                    }
                }
            }
        };
        check_delta(&before, &delta, &net).map_err(|e| format!("step {step}: {e}"))?;
        check_structure(&net).map_err(|e| format!("step {step}: {e}"))?;
        stats.supports_walked += walk_supports(&net).map_err(|e| format!("step {step}: {e}"))?;
        let want = model.labels();
        let got = labels_as_bools(&net);
        if want != got {
            return Err(format!(
                "step {step}: labels {got:?}, oracle {want:?}\n{}",
                net.debug_dump()
            ));
        }
        stats.checks += 1;
    }
    stats.in_derived = net
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Derived && n.label == Label::In)
        .count();
    Ok((net, model, stats))
}

fn kind_strategy() -> impl Strategy<Value = NodeKind> {
    prop_oneof![
        1 => Just(NodeKind::Premise),
        3 => Just(NodeKind::Assumption),
        4 => Just(NodeKind::Derived),
        1 => Just(NodeKind::Contradiction),
    ]
}

/// Indices of nodes of the wanted kinds, or every index when there are none.
fn indices_where(kinds: &[NodeKind], want: impl Fn(NodeKind) -> bool) -> Vec<usize> {
    let hits: Vec<usize> = (0..kinds.len()).filter(|&i| want(kinds[i])).collect();
    if hits.is_empty() {
        (0..kinds.len()).collect()
    } else {
        hits
    }
}

/// Mostly well-formed requests, with a share of illegal ones so the error
/// paths are exercised too.
fn just_strategy(kinds: &[NodeKind]) -> impl Strategy<Value = JustSpec> {
    let n = kinds.len();
    let justified = indices_where(kinds, NodeKind::is_justified);
    let consequent = prop_oneof![
        9 => prop::sample::select(justified),
        1 => 0..n,
    ];
    (
        consequent,
        prop::collection::btree_set(0..n, 0..=3),
        prop::collection::btree_set(0..n, 0..=2),
        prop::bool::weighted(0.6),
    )
        .prop_map(|(consequent, in_list, out_list, monotone)| JustSpec {
            consequent,
            in_list,
            out_list: if monotone { BTreeSet::new() } else { out_list },
        })
}

fn toggle_strategy(kinds: &[NodeKind]) -> impl Strategy<Value = Op> {
    let n = kinds.len();
    let assumptions = indices_where(kinds, |k| k == NodeKind::Assumption);
    let target = prop_oneof![
        9 => prop::sample::select(assumptions),
        1 => 0..n,
    ];
    (target, prop::bool::weighted(0.6))
        .prop_map(|(i, on)| if on { Op::Enable(i) } else { Op::Retract(i) })
}

/// Networks of at most 12 nodes, 20 justification requests and 15
/// enable/retract steps, interleaved at random.
pub fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    prop::collection::vec(kind_strategy(), 1..=12).prop_flat_map(|kinds| {
        let justs = prop::collection::vec(just_strategy(&kinds).prop_map(Op::Justify), 0..=20);
        let toggles = prop::collection::vec(toggle_strategy(&kinds), 0..=15);
        (Just(kinds), justs, toggles).prop_flat_map(|(kinds, justs, toggles)| {
            let ops: Vec<Op> = justs.into_iter().chain(toggles).collect();
            (Just(kinds), Just(ops).prop_shuffle()).prop_map(|(kinds, ops)| Scenario { kinds, ops })
        })
    })
}

const NAMES: [&str; 10] = [
    "golf", "delta", "india", "alpha", "juliet", "echo", "bravo", "hotel", "charlie", "foxtrot",
];

/// Milestone id for position `i` in a generated DAG. Ids deliberately do not
/// sort in generation order.
pub fn milestone_name(i: usize) -> String {
    NAMES[i].to_owned()
}

/// A valid curriculum over `n` milestones; `edges` are (prerequisite,
/// dependent) pairs with prerequisite < dependent.
pub fn dag_curriculum(n: usize, edges: &BTreeSet<(usize, usize)>) -> Curriculum {
    let milestones = (0..n)
        .map(|i| {
            let id = milestone_name(i);
            Milestone {
                title: id.to_uppercase(),
                prerequisites: edges
                    .iter()
                    .filter(|&&(_, d)| d == i)
                    .map(|&(p, _)| milestone_name(p))
                    .collect(),
                assets: vec![
                    asset(&id, "notes", AssetKind::Core),
                    asset(&id, "drills", AssetKind::Support),
                    asset(&id, "project", AssetKind::Challenge),
                ],
                assessments: vec![Assessment {
                    id: format!("{id}-quiz"),
                    title: format!("{id} quiz"),
                    max_score: 100.0,
                    pass_threshold_pct: 50.0,
                }],
                id,
            }
        })
        .collect();
    Curriculum {
        schema: CURRICULUM_SCHEMA.to_owned(),
        id: format!("dag-{n}"),
        title: "Generated".into(),
        mode_default: Mode::Locked,
        milestones,
    }
}

fn asset(m: &str, what: &str, kind: AssetKind) -> Asset {
    Asset {
        id: format!("{m}-{what}"),
        kind,
        difficulty: 2,
        uri: format!("https://example.org/{m}/{what}"),
        title: format!("{m} {what}"),
    }
}

/// Every forward edge set over `n` nodes.
pub fn all_dags(n: usize) -> impl Iterator<Item = BTreeSet<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|d| (0..d).map(move |p| (p, d))).collect();
    (0u32..(1u32 << pairs.len())).map(move |mask| {
        pairs
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &e)| e)
            .collect()
    })
}

pub fn dag_strategy(max: usize) -> impl Strategy<Value = (usize, BTreeSet<(usize, usize)>)> {
    (1..=max).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|d| (0..d).map(move |p| (p, d))).collect();
        let len = pairs.len();
        (
            Just(n),
            prop::collection::vec(prop::bool::weighted(0.35), len),
        )
            .prop_map(move |(n, keep)| {
                let edges = pairs
                    .iter()
                    .zip(keep)
                    .filter(|(_, k)| *k)
                    .map(|(&e, _)| e)
                    .collect();
                (n, edges)
            })
    })
}

/// Prerequisite sets keyed by milestone name.
pub fn prerequisites(c: &Curriculum) -> BTreeMap<String, Vec<String>> {
    c.milestones
        .iter()
        .map(|m| (m.id.clone(), m.prerequisites.clone()))
        .collect()
}
