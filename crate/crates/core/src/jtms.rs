//! Justification-based truth maintenance.
//!
//! A [`Network`] holds belief nodes and the justifications that support them.
//! Every node carries an IN/OUT label, and the labeling is always the grounded
//! fixpoint: a derived node is IN only when some justification is valid and
//! that justification's in-list is itself grounded in premises and enabled
//! assumptions. Circular support never makes a node IN.
//!
//! Changes are propagated incrementally. When an assumption flips or a
//! justification is added, only the affected cone (the transitive consequents
//! of the changed node) is relabeled. The cone is split into strongly connected
//! components and solved in topological order. Out-list edges are never allowed
//! inside a cycle, so every component is solved by a plain monotone closure.
//!
//! Iteration order is ascending id everywhere, which makes deltas, supports and
//! dumps reproducible.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JustificationId(pub u32);

impl JustificationId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for JustificationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Premise,
    Assumption,
    Derived,
    Contradiction,
}

impl NodeKind {
    /// Whether the node's label is computed from justifications.
    pub fn is_justified(self) -> bool {
        matches!(self, NodeKind::Derived | NodeKind::Contradiction)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Premise => "premise",
            NodeKind::Assumption => "assumption",
            NodeKind::Derived => "derived",
            NodeKind::Contradiction => "contradiction",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "OUT")]
    Out,
}

impl Label {
    pub fn is_in(self) -> bool {
        self == Label::In
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::In => "IN",
            Label::Out => "OUT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: Label,
    /// Current well-founded support. Only set on IN derived/contradiction nodes.
    pub support: Option<JustificationId>,
    /// Only meaningful for assumptions.
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Justification {
    pub id: JustificationId,
    pub consequent: NodeId,
    pub in_list: BTreeSet<NodeId>,
    pub out_list: BTreeSet<NodeId>,
}

impl Justification {
    fn antecedents(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.in_list.iter().chain(self.out_list.iter()).copied()
    }
}

/// One label flip produced by a mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelChange {
    pub node: NodeId,
    pub from: Label,
    pub to: Label,
}

/// Label flips produced by a mutation, ascending by node id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelDelta(Vec<LabelChange>);

impl LabelDelta {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn changes(&self) -> &[LabelChange] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabelChange> {
        self.0.iter()
    }

    /// Applies the delta to a label snapshot indexed by node id.
    pub fn apply_to(&self, labels: &mut [Label]) {
        for change in &self.0 {
            labels[change.node.index()] = change.to;
        }
    }
}

/// Well-founded support tree for an IN node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Explanation {
    Premise {
        node: NodeId,
    },
    Assumption {
        node: NodeId,
    },
    Justified {
        node: NodeId,
        justification: JustificationId,
        antecedents: Vec<Explanation>,
        /// Out-list members; they hold because they are OUT.
        absent: Vec<NodeId>,
    },
}

impl Explanation {
    pub fn node(&self) -> NodeId {
        match self {
            Explanation::Premise { node }
            | Explanation::Assumption { node }
            | Explanation::Justified { node, .. } => *node,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Explanation::Premise { .. } | Explanation::Assumption { .. } => 1,
            Explanation::Justified {
                antecedents,
                absent,
                ..
            } => {
                let below = antecedents.iter().map(Explanation::depth).max();
                let below = match (below, absent.is_empty()) {
                    (Some(d), _) => d,
                    (None, false) => 1,
                    (None, true) => 0,
                };
                1 + below
            }
        }
    }

    /// Premises and enabled assumptions the tree bottoms out in, ascending.
    pub fn grounds(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        self.collect_grounds(&mut out);
        out
    }

    fn collect_grounds(&self, out: &mut BTreeSet<NodeId>) {
        match self {
            Explanation::Premise { node } | Explanation::Assumption { node } => {
                out.insert(*node);
            }
            Explanation::Justified { antecedents, .. } => {
                for a in antecedents {
                    a.collect_grounds(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JtmsError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} cannot be the consequent of a justification")]
    IllegalConsequent(NodeId),
    #[error("node {0} appears in both the in-list and the out-list")]
    OverlappingLists(NodeId),
    #[error("node {0} cannot appear in its own justification")]
    SelfReference(NodeId),
    #[error("justification for {0} would put an out-list edge on a dependency cycle")]
    NonMonotonicCycle(NodeId),
    #[error("node {0} is not an assumption")]
    NotAnAssumption(NodeId),
    #[error("node {0} is OUT and has no support to explain")]
    NodeIsOut(NodeId),
}

/// A violated structural property, reported by the self-checks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("node {0} is IN without well-founded support")]
    UnfoundedSupport(NodeId),
    #[error("node {0} has a label inconsistent with its kind")]
    KindLabelMismatch(NodeId),
    #[error("dependents index does not match the justifications")]
    DependentsIndex,
}

/// A justification-based truth maintenance network.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    nodes: Vec<BeliefNode>,
    justifications: Vec<Justification>,
    /// node -> justifications mentioning it in an in-list or out-list.
    dependents: Vec<BTreeSet<JustificationId>>,
    /// node -> justifications concluding it, ascending.
    by_consequent: Vec<Vec<JustificationId>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct NetworkRepr {
    nodes: Vec<BeliefNode>,
    justifications: Vec<Justification>,
}

impl From<NetworkRepr> for Network {
    fn from(repr: NetworkRepr) -> Self {
        let mut network = Network {
            nodes: repr.nodes,
            justifications: repr.justifications,
            dependents: Vec::new(),
            by_consequent: Vec::new(),
        };
        network.rebuild_indexes();
        network
    }
}

impl From<Network> for NetworkRepr {
    fn from(network: Network) -> Self {
        NetworkRepr {
            nodes: network.nodes,
            justifications: network.justifications,
        }
    }
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn justification_count(&self) -> usize {
        self.justifications.len()
    }

    pub fn nodes(&self) -> &[BeliefNode] {
        &self.nodes
    }

    pub fn justifications(&self) -> &[Justification] {
        &self.justifications
    }

    pub fn node(&self, id: NodeId) -> Result<&BeliefNode, JtmsError> {
        self.nodes.get(id.index()).ok_or(JtmsError::UnknownNode(id))
    }

    pub fn justification(&self, id: JustificationId) -> Option<&Justification> {
        self.justifications.get(id.index())
    }

    /// Justifications concluding `id`, ascending.
    pub fn justifications_for(&self, id: NodeId) -> Result<&[JustificationId], JtmsError> {
        self.node(id)?;
        Ok(&self.by_consequent[id.index()])
    }

    /// Justifications that mention `id` in an in-list or out-list.
    pub fn dependents_of(&self, id: NodeId) -> Result<&BTreeSet<JustificationId>, JtmsError> {
        self.node(id)?;
        Ok(&self.dependents[id.index()])
    }

    pub fn label_of(&self, id: NodeId) -> Result<Label, JtmsError> {
        Ok(self.node(id)?.label)
    }

    pub fn is_in(&self, id: NodeId) -> Result<bool, JtmsError> {
        Ok(self.label_of(id)?.is_in())
    }

    /// Current labels indexed by node id.
    pub fn labels(&self) -> Vec<Label> {
        self.nodes.iter().map(|n| n.label).collect()
    }

    pub fn add_node(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let (label, enabled) = match kind {
            NodeKind::Premise => (Label::In, false),
            _ => (Label::Out, false),
        };
        self.nodes.push(BeliefNode {
            id,
            kind,
            label,
            support: None,
            enabled,
        });
        self.dependents.push(BTreeSet::new());
        self.by_consequent.push(Vec::new());
        id
    }

    /// Adds a justification and relabels its consequent's cone.
    pub fn add_justification(
        &mut self,
        consequent: NodeId,
        in_list: impl IntoIterator<Item = NodeId>,
        out_list: impl IntoIterator<Item = NodeId>,
    ) -> Result<JustificationId, JtmsError> {
        self.add_justification_with_delta(consequent, in_list, out_list)
            .map(|(id, _)| id)
    }

    /// Like [`Network::add_justification`], also returning the label changes.
    pub fn add_justification_with_delta(
        &mut self,
        consequent: NodeId,
        in_list: impl IntoIterator<Item = NodeId>,
        out_list: impl IntoIterator<Item = NodeId>,
    ) -> Result<(JustificationId, LabelDelta), JtmsError> {
        let in_list: BTreeSet<NodeId> = in_list.into_iter().collect();
        let out_list: BTreeSet<NodeId> = out_list.into_iter().collect();

        if !self.node(consequent)?.kind.is_justified() {
            return Err(JtmsError::IllegalConsequent(consequent));
        }
        for &n in in_list.iter().chain(out_list.iter()) {
            self.node(n)?;
            if n == consequent {
                return Err(JtmsError::SelfReference(n));
            }
        }
        if let Some(&n) = in_list.intersection(&out_list).next() {
            return Err(JtmsError::OverlappingLists(n));
        }
        if self.closes_nonmonotonic_cycle(consequent, &in_list, &out_list) {
            return Err(JtmsError::NonMonotonicCycle(consequent));
        }

        let id = JustificationId(self.justifications.len() as u32);
        for &n in in_list.iter().chain(out_list.iter()) {
            self.dependents[n.index()].insert(id);
        }
        self.by_consequent[consequent.index()].push(id);
        self.justifications.push(Justification {
            id,
            consequent,
            in_list,
            out_list,
        });

        let delta = self.relabel_cone(&[consequent], Vec::new());
        Ok((id, delta))
    }

    pub fn enable_assumption(&mut self, id: NodeId) -> Result<LabelDelta, JtmsError> {
        self.set_assumption(id, true)
    }

    pub fn retract_assumption(&mut self, id: NodeId) -> Result<LabelDelta, JtmsError> {
        self.set_assumption(id, false)
    }

    fn set_assumption(&mut self, id: NodeId, enabled: bool) -> Result<LabelDelta, JtmsError> {
        let node = self.node(id)?;
        if node.kind != NodeKind::Assumption {
            return Err(JtmsError::NotAnAssumption(id));
        }
        if node.enabled == enabled {
            return Ok(LabelDelta::default());
        }
        let from = node.label;
        let to = if enabled { Label::In } else { Label::Out };
        let node = &mut self.nodes[id.index()];
        node.enabled = enabled;
        node.label = to;
        let seed = LabelChange { node: id, from, to };
        Ok(self.relabel_cone(&[id], vec![seed]))
    }

    /// Recomputes every justified node from scratch.
    pub fn relabel_all(&mut self) -> LabelDelta {
        let roots: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.kind.is_justified())
            .map(|n| n.id)
            .collect();
        self.relabel_cone(&roots, Vec::new())
    }

    pub fn explain(&self, id: NodeId) -> Result<Explanation, JtmsError> {
        let node = self.node(id)?;
        if !node.label.is_in() {
            return Err(JtmsError::NodeIsOut(id));
        }
        Ok(match node.kind {
            NodeKind::Premise => Explanation::Premise { node: id },
            NodeKind::Assumption => Explanation::Assumption { node: id },
            NodeKind::Derived | NodeKind::Contradiction => {
                let j = node
                    .support
                    .expect("IN justified node always records its support");
                let just = &self.justifications[j.index()];
                let antecedents = just
                    .in_list
                    .iter()
                    .map(|&a| self.explain(a))
                    .collect::<Result<Vec<_>, _>>()?;
                Explanation::Justified {
                    node: id,
                    justification: j,
                    antecedents,
                    absent: just.out_list.iter().copied().collect(),
                }
            }
        })
    }

    /// Contradiction nodes that are currently IN, ascending.
    pub fn contradictions(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Contradiction && n.label.is_in())
            .map(|n| n.id)
            .collect()
    }

    /// One line per node: `id kind label support`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let support = n
                .support
                .map(|j| j.to_string())
                .unwrap_or_else(|| "-".to_owned());
            let _ = writeln!(out, "{} {} {} {}", n.id, n.kind, n.label, support);
        }
        out
    }

    pub fn is_valid(&self, id: JustificationId) -> bool {
        let j = &self.justifications[id.index()];
        j.in_list
            .iter()
            .all(|n| self.nodes[n.index()].label.is_in())
            && j.out_list
                .iter()
                .all(|n| !self.nodes[n.index()].label.is_in())
    }

    /// Checks kind/label invariants and that every IN justified node has a
    /// non-circular chain of valid supports.
    pub fn check_well_founded(&self) -> Result<(), IntegrityError> {
        for n in &self.nodes {
            let ok = match n.kind {
                NodeKind::Premise => n.label.is_in(),
                NodeKind::Assumption => n.label.is_in() == n.enabled,
                _ => n.label.is_in() == n.support.is_some(),
            };
            if !ok {
                return Err(IntegrityError::KindLabelMismatch(n.id));
            }
        }
        // 0 = unvisited, 1 = on the current path, 2 = grounded
        let mut state = vec![0u8; self.nodes.len()];
        for n in &self.nodes {
            if n.kind.is_justified() && n.label.is_in() {
                self.ground(n.id, &mut state)?;
            }
        }
        Ok(())
    }

    fn ground(&self, root: NodeId, state: &mut [u8]) -> Result<(), IntegrityError> {
        // Iterative DFS along supporting justifications.
        let mut stack: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
        let enter = |id: NodeId, state: &mut [u8]| -> Result<Option<Vec<NodeId>>, IntegrityError> {
            let node = &self.nodes[id.index()];
            match state[id.index()] {
                2 => return Ok(None),
                1 => return Err(IntegrityError::UnfoundedSupport(id)),
                _ => {}
            }
            if !node.label.is_in() {
                return Err(IntegrityError::UnfoundedSupport(id));
            }
            if !node.kind.is_justified() {
                state[id.index()] = 2;
                return Ok(None);
            }
            let j = node.support.ok_or(IntegrityError::UnfoundedSupport(id))?;
            let just = &self.justifications[j.index()];
            if just.consequent != id || !self.is_valid(j) {
                return Err(IntegrityError::UnfoundedSupport(id));
            }
            state[id.index()] = 1;
            Ok(Some(just.in_list.iter().rev().copied().collect()))
        };
        if let Some(children) = enter(root, state)? {
            stack.push((root, children));
        }
        while let Some((id, children)) = stack.last_mut() {
            match children.pop() {
                Some(child) => {
                    if let Some(grand) = enter(child, state)? {
                        stack.push((child, grand));
                    }
                }
                None => {
                    state[id.index()] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    /// Rebuilds the reverse indexes from scratch and compares.
    pub fn check_dependents_index(&self) -> Result<(), IntegrityError> {
        let mut rebuilt = self.clone();
        rebuilt.rebuild_indexes();
        if rebuilt.dependents == self.dependents && rebuilt.by_consequent == self.by_consequent {
            Ok(())
        } else {
            Err(IntegrityError::DependentsIndex)
        }
    }

    fn rebuild_indexes(&mut self) {
        self.dependents = vec![BTreeSet::new(); self.nodes.len()];
        self.by_consequent = vec![Vec::new(); self.nodes.len()];
        for j in &self.justifications {
            for n in j.antecedents() {
                self.dependents[n.index()].insert(j.id);
            }
            self.by_consequent[j.consequent.index()].push(j.id);
        }
    }

    fn consequents_of(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.dependents[id.index()]
            .iter()
            .map(|j| self.justifications[j.index()].consequent)
    }

    /// Whether adding the proposed justification would leave some out-list
    /// edge on a cycle of the union dependency graph.
    ///
    /// Before the addition no out-list edge lies on a cycle, so any new cycle
    /// passes through the consequent and lies inside its component.
    fn closes_nonmonotonic_cycle(
        &self,
        consequent: NodeId,
        in_list: &BTreeSet<NodeId>,
        out_list: &BTreeSet<NodeId>,
    ) -> bool {
        let forward = self.reach(consequent, |n| self.consequents_of(n).collect());
        let mut backward: BTreeSet<NodeId> = BTreeSet::from([consequent]);
        let mut queue: VecDeque<NodeId> = in_list.iter().chain(out_list.iter()).copied().collect();
        while let Some(n) = queue.pop_front() {
            if backward.insert(n) {
                for &j in &self.by_consequent[n.index()] {
                    queue.extend(self.justifications[j.index()].antecedents());
                }
            }
        }
        let component: BTreeSet<NodeId> = forward.intersection(&backward).copied().collect();
        if out_list.iter().any(|n| component.contains(n)) {
            return true;
        }
        component.iter().any(|&c| {
            self.by_consequent[c.index()].iter().any(|&j| {
                self.justifications[j.index()]
                    .out_list
                    .iter()
                    .any(|n| component.contains(n))
            })
        })
    }

    fn reach(&self, start: NodeId, next: impl Fn(NodeId) -> Vec<NodeId>) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for m in next(n) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Relabels the cone of `roots`.
    ///
    /// `seeds` are label changes already applied to the roots themselves
    /// (assumption flips); they are merged into the returned delta.
    fn relabel_cone(&mut self, roots: &[NodeId], seeds: Vec<LabelChange>) -> LabelDelta {
        let mut cone: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = VecDeque::new();
        for &r in roots {
            if self.nodes[r.index()].kind.is_justified() {
                if cone.insert(r) {
                    queue.push_back(r);
                }
            } else {
                queue.push_back(r);
            }
        }
        while let Some(n) = queue.pop_front() {
            let next: Vec<NodeId> = self.consequents_of(n).collect();
            for c in next {
                if cone.insert(c) {
                    queue.push_back(c);
                }
            }
        }

        let before: Vec<(NodeId, Label)> = cone
            .iter()
            .map(|&n| (n, self.nodes[n.index()].label))
            .collect();
        for &n in &cone {
            let node = &mut self.nodes[n.index()];
            node.label = Label::Out;
            node.support = None;
        }

        for component in self.components_in_order(&cone) {
            self.close_component(&component);
        }

        let mut changes = seeds;
        for (n, from) in before {
            let to = self.nodes[n.index()].label;
            if from != to {
                changes.push(LabelChange { node: n, from, to });
            }
        }
        changes.sort_by_key(|c| c.node);
        LabelDelta(changes)
    }

    /// Monotone closure of one component, in Kleene rounds. Each node's
    /// support is the lowest-id justification valid in the round it turns IN,
    /// so supports always point at strictly earlier rounds.
    fn close_component(&mut self, component: &[NodeId]) {
        loop {
            let entering: Vec<(NodeId, JustificationId)> = component
                .iter()
                .filter(|n| !self.nodes[n.index()].label.is_in())
                .filter_map(|&n| {
                    self.by_consequent[n.index()]
                        .iter()
                        .copied()
                        .find(|&j| self.is_valid(j))
                        .map(|j| (n, j))
                })
                .collect();
            if entering.is_empty() {
                break;
            }
            for (n, j) in entering {
                let node = &mut self.nodes[n.index()];
                node.label = Label::In;
                node.support = Some(j);
            }
        }
    }

    /// Strongly connected components of the cone's induced dependency graph,
    /// upstream components first. Iterative Tarjan.
    fn components_in_order(&self, cone: &BTreeSet<NodeId>) -> Vec<Vec<NodeId>> {
        const UNSEEN: usize = usize::MAX;
        let members: Vec<NodeId> = cone.iter().copied().collect();
        let mut slot = vec![UNSEEN; self.nodes.len()];
        for (i, n) in members.iter().enumerate() {
            slot[n.index()] = i;
        }
        let successors: Vec<Vec<usize>> = members
            .iter()
            .map(|&n| {
                let mut next: Vec<usize> = self
                    .consequents_of(n)
                    .map(|c| slot[c.index()])
                    .filter(|&s| s != UNSEEN)
                    .collect();
                next.sort_unstable();
                next.dedup();
                next
            })
            .collect();

        let count = members.len();
        let mut index = vec![UNSEEN; count];
        let mut low = vec![0usize; count];
        let mut on_stack = vec![false; count];
        let mut stack: Vec<usize> = Vec::new();
        let mut next_index = 0usize;
        let mut components: Vec<Vec<NodeId>> = Vec::new();

        for root in 0..count {
            if index[root] != UNSEEN {
                continue;
            }
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;

            while let Some(&mut (v, ref mut edge)) = call.last_mut() {
                if let Some(&w) = successors[v].get(*edge) {
                    *edge += 1;
                    if index[w] == UNSEEN {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut component = Vec::new();
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            component.push(members[w]);
                            if w == v {
                                break;
                            }
                        }
                        component.sort_unstable();
                        components.push(component);
                    }
                }
            }
        }
        // Tarjan emits sinks first.
        components.reverse();
        components
    }
}
