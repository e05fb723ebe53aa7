//! Binary regression trees.
//!
//! A [`Tree`] is an arena of nodes laid out in pre-order with the root at
//! index 0. Every structural edit returns a fresh tree (the input is never
//! mutated) and re-lays the arena out in pre-order, so node ids are a pure
//! function of the tree's shape. The `*_mapped` variants also return the
//! old-to-new id correspondence.
//!
//! Trees have a canonical text form used for hashing and chain dumps:
//!
//! ```text
//! tree := "T" | "I(v=" var ",c=" cut "," tree "," tree ")"
//! ```
//!
//! Terminal values are not part of the canonical form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::data::Dataset;

/// Dense index of a node inside one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Split on `var` at grid point `cut`: an observation goes left iff
/// `x[var] <= grid[var][cut]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SplitRule {
    pub var: usize,
    pub cut: usize,
}

impl SplitRule {
    pub fn new(var: usize, cut: usize) -> Self {
        SplitRule { var, cut }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        rule: SplitRule,
        left: NodeId,
        right: NodeId,
    },
    Terminal {
        mu: Option<f64>,
    },
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Node::Terminal { .. })
    }
}

/// Direction of a tree rotation.
///
/// A right rotation at `p` lifts its left child; a left rotation lifts its
/// right child. Rules travel with their nodes. The right rotation at a
/// position is undone by the left rotation at the same position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotateDir {
    Left,
    Right,
}

impl RotateDir {
    pub fn index(self) -> usize {
        match self {
            RotateDir::Left => 0,
            RotateDir::Right => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(RotateDir::Left),
            1 => Some(RotateDir::Right),
            _ => None,
        }
    }

    pub fn inverse(self) -> Self {
        match self {
            RotateDir::Left => RotateDir::Right,
            RotateDir::Right => RotateDir::Left,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("node {0} is not terminal")]
    NotTerminal(NodeId),
    #[error("node {0} is not internal")]
    NotInternal(NodeId),
    #[error("node {0} does not have two terminal children")]
    NotCollapsible(NodeId),
    #[error("cannot rotate {dir:?} at node {node}")]
    InvalidRotation { node: NodeId, dir: RotateDir },
    #[error("tree mixes terminals with and without values")]
    MixedTerminals,
    #[error("malformed tree string at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// Old-to-new node id correspondence produced by a structural edit.
/// Entries are `None` for nodes that no longer exist.
pub type NodeMap = Vec<Option<NodeId>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Default for Tree {
    fn default() -> Self {
        Tree::root_only()
    }
}

impl Tree {
    /// Single terminal node without a value.
    pub fn root_only() -> Self {
        Tree {
            nodes: vec![Node::Terminal { mu: None }],
        }
    }

    /// Build a tree from an arbitrary arena rooted at `root`.
    ///
    /// Nodes unreachable from `root` are dropped. Fails if an id is out of
    /// range, a node is reached twice, or values are mixed.
    pub fn from_nodes(nodes: Vec<Node>, root: NodeId) -> Result<Self, TreeError> {
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            match seen.get_mut(id.0) {
                None => return Err(TreeError::NoSuchNode(id)),
                Some(true) => {
                    return Err(TreeError::Parse {
                        pos: 0,
                        msg: format!("node {id} has more than one parent"),
                    })
                }
                Some(s) => *s = true,
            }
            if let Node::Internal { left, right, .. } = nodes[id.0] {
                stack.push(right);
                stack.push(left);
            }
        }
        let (tree, _) = rebuild(&nodes, root);
        tree.check_values()?;
        Ok(tree)
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TreeError> {
        self.nodes.get(id.0).ok_or(TreeError::NoSuchNode(id))
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        self.nodes.get(id.0).is_some_and(Node::is_terminal)
    }

    pub fn children(&self, id: NodeId) -> Option<(NodeId, NodeId)> {
        match self.nodes.get(id.0)? {
            Node::Internal { left, right, .. } => Some((*left, *right)),
            Node::Terminal { .. } => None,
        }
    }

    pub fn rule(&self, id: NodeId) -> Option<SplitRule> {
        match self.nodes.get(id.0)? {
            Node::Internal { rule, .. } => Some(*rule),
            Node::Terminal { .. } => None,
        }
    }

    pub fn mu(&self, id: NodeId) -> Option<f64> {
        match self.nodes.get(id.0)? {
            Node::Terminal { mu } => *mu,
            Node::Internal { .. } => None,
        }
    }

    /// Terminal nodes in ascending id order.
    pub fn terminal_nodes(&self) -> Vec<NodeId> {
        self.ids().filter(|&id| self.is_terminal(id)).collect()
    }

    /// Internal nodes in ascending id order.
    pub fn internal_nodes(&self) -> Vec<NodeId> {
        self.ids().filter(|&id| !self.is_terminal(id)).collect()
    }

    pub fn n_terminal(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_terminal()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.len() - self.n_terminal()
    }

    fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Depth of every node; the root has depth 0.
    pub fn depths(&self) -> Vec<usize> {
        // Pre-order layout: parents precede children.
        let mut depth = vec![0; self.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Internal { left, right, .. } = node {
                depth[left.0] = depth[i] + 1;
                depth[right.0] = depth[i] + 1;
            }
        }
        depth
    }

    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut parent = vec![None; self.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Internal { left, right, .. } = node {
                parent[left.0] = Some(NodeId(i));
                parent[right.0] = Some(NodeId(i));
            }
        }
        parent
    }

    /// Depth of the deepest node.
    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Internal nodes whose two children are both terminal ("nog" nodes),
    /// the only places a death can happen.
    pub fn death_candidates(&self) -> Vec<NodeId> {
        self.ids()
            .filter(|&id| match self.children(id) {
                Some((l, r)) => self.is_terminal(l) && self.is_terminal(r),
                None => false,
            })
            .collect()
    }

    /// Whether terminals carry values: `Some(true)` if all do, `Some(false)`
    /// if none do.
    pub fn has_values(&self) -> Option<bool> {
        let mut with = 0;
        let mut without = 0;
        for node in &self.nodes {
            if let Node::Terminal { mu } = node {
                if mu.is_some() {
                    with += 1;
                } else {
                    without += 1;
                }
            }
        }
        match (with, without) {
            (_, 0) => Some(true),
            (0, _) => Some(false),
            _ => None,
        }
    }

    fn check_values(&self) -> Result<(), TreeError> {
        self.has_values()
            .map(|_| ())
            .ok_or(TreeError::MixedTerminals)
    }

    /// Set the value of a terminal node.
    pub fn set_mu(&mut self, id: NodeId, value: Option<f64>) -> Result<(), TreeError> {
        match self.nodes.get_mut(id.0) {
            Some(Node::Terminal { mu }) => {
                *mu = value;
                Ok(())
            }
            Some(Node::Internal { .. }) => Err(TreeError::NotTerminal(id)),
            None => Err(TreeError::NoSuchNode(id)),
        }
    }

    /// Copy of the tree with every terminal value removed.
    pub fn without_values(&self) -> Tree {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Terminal { .. } => Node::Terminal { mu: None },
                other => other.clone(),
            })
            .collect();
        Tree { nodes }
    }

    /// Equality of topology and split rules, ignoring terminal values.
    pub fn topology_eq(&self, other: &Tree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| match (a, b) {
                    (Node::Terminal { .. }, Node::Terminal { .. }) => true,
                    (
                        Node::Internal {
                            rule: ra,
                            left: la,
                            right: xa,
                        },
                        Node::Internal {
                            rule: rb,
                            left: lb,
                            right: xb,
                        },
                    ) => ra == rb && la == lb && xa == xb,
                    _ => false,
                })
    }

    /// Number of internal nodes splitting on each of `d` variables.
    pub fn split_counts(&self, d: usize) -> Vec<usize> {
        let mut counts = vec![0; d];
        for node in &self.nodes {
            if let Node::Internal { rule, .. } = node {
                if rule.var < d {
                    counts[rule.var] += 1;
                }
            }
        }
        counts
    }

    /// Follow split rules from the root; `goes_left` decides each split.
    pub fn route(&self, mut goes_left: impl FnMut(SplitRule) -> bool) -> NodeId {
        let mut id = self.root();
        while let Node::Internal { rule, left, right } = &self.nodes[id.0] {
            id = if goes_left(*rule) { *left } else { *right };
        }
        id
    }

    /// Terminal cell of every observation in `data`.
    pub fn partition(&self, data: &Dataset) -> Partition {
        let leaf_of = (0..data.n())
            .map(|i| self.route(|rule| data.goes_left(rule, i)))
            .collect();
        Partition { leaf_of }
    }

    /// Observations reaching each node (internal nodes included), by node id.
    pub fn node_members(&self, data: &Dataset) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.len()];
        for i in 0..data.n() {
            let mut id = self.root();
            loop {
                members[id.0].push(i);
                match &self.nodes[id.0] {
                    Node::Internal { rule, left, right } => {
                        id = if data.goes_left(*rule, i) {
                            *left
                        } else {
                            *right
                        };
                    }
                    Node::Terminal { .. } => break,
                }
            }
        }
        members
    }

    pub fn apply_birth(&self, leaf: NodeId, rule: SplitRule) -> Result<Tree, TreeError> {
        self.apply_birth_mapped(leaf, rule).map(|(t, _)| t)
    }

    /// Turn `leaf` into an internal node splitting on `rule` with two fresh
    /// terminal children. Children inherit the leaf's value (if any) so the
    /// value mode of the tree is preserved; callers overwrite them.
    pub fn apply_birth_mapped(
        &self,
        leaf: NodeId,
        rule: SplitRule,
    ) -> Result<(Tree, NodeMap), TreeError> {
        let mu = match self.node(leaf)? {
            Node::Terminal { mu } => *mu,
            Node::Internal { .. } => return Err(TreeError::NotTerminal(leaf)),
        };
        let mut nodes = self.nodes.clone();
        let left = NodeId(nodes.len());
        let right = NodeId(nodes.len() + 1);
        nodes.push(Node::Terminal { mu });
        nodes.push(Node::Terminal { mu });
        nodes[leaf.0] = Node::Internal { rule, left, right };
        let (tree, mut map) = rebuild(&nodes, self.root());
        map.truncate(self.len());
        Ok((tree, map))
    }

    pub fn apply_death(&self, node: NodeId) -> Result<Tree, TreeError> {
        self.apply_death_mapped(node).map(|(t, _)| t)
    }

    /// Collapse a nog node into a terminal. The new terminal takes the left
    /// child's value (if any); callers overwrite it.
    pub fn apply_death_mapped(&self, node: NodeId) -> Result<(Tree, NodeMap), TreeError> {
        let (l, r) = match self.node(node)? {
            Node::Internal { left, right, .. } => (*left, *right),
            Node::Terminal { .. } => return Err(TreeError::NotCollapsible(node)),
        };
        if !(self.is_terminal(l) && self.is_terminal(r)) {
            return Err(TreeError::NotCollapsible(node));
        }
        let mu = self.mu(l);
        let mut nodes = self.nodes.clone();
        nodes[node.0] = Node::Terminal { mu };
        Ok(rebuild(&nodes, self.root()))
    }

    /// All legal rotations, ordered by node id then direction (left first).
    pub fn rotate_candidates(&self) -> Vec<(NodeId, RotateDir)> {
        let mut out = Vec::new();
        for id in self.ids() {
            if let Some((l, r)) = self.children(id) {
                if !self.is_terminal(r) {
                    out.push((id, RotateDir::Left));
                }
                if !self.is_terminal(l) {
                    out.push((id, RotateDir::Right));
                }
            }
        }
        out
    }

    pub fn apply_rotate(&self, node: NodeId, dir: RotateDir) -> Result<Tree, TreeError> {
        self.apply_rotate_mapped(node, dir).map(|(t, _)| t)
    }

    /// Rotate at `node`. For a right rotation with `node = P(L(A, B), C)` the
    /// result is `L(A, P(B, C))`; the left rotation is the mirror image.
    /// The lifted node keeps the position of `node`, so the inverse rotation
    /// is available at the same id of the result.
    pub fn apply_rotate_mapped(
        &self,
        node: NodeId,
        dir: RotateDir,
    ) -> Result<(Tree, NodeMap), TreeError> {
        let invalid = TreeError::InvalidRotation { node, dir };
        let (p_rule, p_left, p_right) = match self.node(node)? {
            Node::Internal { rule, left, right } => (*rule, *left, *right),
            Node::Terminal { .. } => return Err(invalid),
        };
        let mut nodes = self.nodes.clone();
        // The lifted child's slot becomes the new subtree root; `node`'s slot
        // is reused for the demoted parent.
        match dir {
            RotateDir::Right => {
                let Node::Internal {
                    rule: c_rule,
                    left: a,
                    right: b,
                } = nodes[p_left.0].clone()
                else {
                    return Err(invalid);
                };
                nodes[p_left.0] = Node::Internal {
                    rule: p_rule,
                    left: b,
                    right: p_right,
                };
                nodes[node.0] = Node::Internal {
                    rule: c_rule,
                    left: a,
                    right: p_left,
                };
            }
            RotateDir::Left => {
                let Node::Internal {
                    rule: c_rule,
                    left: b,
                    right: c,
                } = nodes[p_right.0].clone()
                else {
                    return Err(invalid);
                };
                nodes[p_right.0] = Node::Internal {
                    rule: p_rule,
                    left: p_left,
                    right: b,
                };
                nodes[node.0] = Node::Internal {
                    rule: c_rule,
                    left: p_right,
                    right: c,
                };
            }
        }
        Ok(rebuild(&nodes, self.root()))
    }

    /// Replace the rule of an internal node.
    pub fn with_rule(&self, node: NodeId, rule: SplitRule) -> Result<Tree, TreeError> {
        let mut nodes = self.nodes.clone();
        match nodes.get_mut(node.0) {
            Some(Node::Internal { rule: r, .. }) => *r = rule,
            Some(Node::Terminal { .. }) => return Err(TreeError::NotInternal(node)),
            None => return Err(TreeError::NoSuchNode(node)),
        }
        Ok(Tree { nodes })
    }

    /// Swap the two subtrees of an internal node.
    pub fn mirror(&self, node: NodeId) -> Result<Tree, TreeError> {
        let mut nodes = self.nodes.clone();
        match nodes.get_mut(node.0) {
            Some(Node::Internal { left, right, .. }) => std::mem::swap(left, right),
            Some(Node::Terminal { .. }) => return Err(TreeError::NotInternal(node)),
            None => return Err(TreeError::NoSuchNode(node)),
        }
        Ok(rebuild(&nodes, self.root()).0)
    }

    /// Canonical text form (values omitted).
    pub fn canonical(&self) -> String {
        let mut s = String::with_capacity(self.len() * 12);
        self.write_canonical(self.root(), &mut s);
        s
    }

    fn write_canonical(&self, id: NodeId, out: &mut String) {
        use std::fmt::Write;
        match &self.nodes[id.0] {
            Node::Terminal { .. } => out.push('T'),
            Node::Internal { rule, left, right } => {
                let _ = write!(out, "I(v={},c={},", rule.var, rule.cut);
                self.write_canonical(*left, out);
                out.push(',');
                self.write_canonical(*right, out);
                out.push(')');
            }
        }
    }
}

/// Lay out the subtree at `root` in pre-order.
fn rebuild(src: &[Node], root: NodeId) -> (Tree, NodeMap) {
    fn visit(src: &[Node], id: NodeId, out: &mut Vec<Node>, map: &mut NodeMap) -> NodeId {
        let new = NodeId(out.len());
        map[id.0] = Some(new);
        match &src[id.0] {
            Node::Terminal { mu } => out.push(Node::Terminal { mu: *mu }),
            Node::Internal { rule, left, right } => {
                out.push(Node::Terminal { mu: None });
                let l = visit(src, *left, out, map);
                let r = visit(src, *right, out, map);
                out[new.0] = Node::Internal {
                    rule: *rule,
                    left: l,
                    right: r,
                };
            }
        }
        new
    }
    let mut out = Vec::with_capacity(src.len());
    let mut map = vec![None; src.len()];
    visit(src, root, &mut out, &mut map);
    (Tree { nodes: out }, map)
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for Tree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parser = Parser {
            src: s.as_bytes(),
            pos: 0,
            nodes: Vec::new(),
        };
        let root = parser.tree()?;
        if parser.pos != s.len() {
            return Err(parser.error("trailing input"));
        }
        Ok(rebuild(&parser.nodes, root).0)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> TreeError {
        TreeError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), TreeError> {
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.error(&format!("expected `{token}`")))
        }
    }

    fn number(&mut self) -> Result<usize, TreeError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.error("expected an integer"))
    }

    fn tree(&mut self) -> Result<NodeId, TreeError> {
        match self.src.get(self.pos) {
            Some(b'T') => {
                self.pos += 1;
                self.nodes.push(Node::Terminal { mu: None });
                Ok(NodeId(self.nodes.len() - 1))
            }
            Some(b'I') => {
                self.expect("I(v=")?;
                let var = self.number()?;
                self.expect(",c=")?;
                let cut = self.number()?;
                self.expect(",")?;
                let id = NodeId(self.nodes.len());
                self.nodes.push(Node::Terminal { mu: None });
                let left = self.tree()?;
                self.expect(",")?;
                let right = self.tree()?;
                self.expect(")")?;
                self.nodes[id.0] = Node::Internal {
                    rule: SplitRule { var, cut },
                    left,
                    right,
                };
                Ok(id)
            }
            _ => Err(self.error("expected `T` or `I(`")),
        }
    }
}

impl Serialize for Tree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Terminal cell reached by each observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub leaf_of: Vec<NodeId>,
}

impl Partition {
    /// Observation indices per terminal node, ascending.
    pub fn cells(&self) -> std::collections::BTreeMap<NodeId, Vec<usize>> {
        let mut cells = std::collections::BTreeMap::<NodeId, Vec<usize>>::new();
        for (i, leaf) in self.leaf_of.iter().enumerate() {
            cells.entry(*leaf).or_default().push(i);
        }
        cells
    }

    /// Cell sizes, as observations per terminal node (only non-empty cells).
    pub fn counts(&self) -> std::collections::BTreeMap<NodeId, usize> {
        self.cells()
            .into_iter()
            .map(|(k, v)| (k, v.len()))
            .collect()
    }
}
