//! Huffman scanning: a binary decision tree over the selectable cells.
//!
//! At every internal node the cells of the designated "1" child are
//! flashed; the decoder's in/out decision moves the cursor down one
//! level. A wrong decision can only be undone by reaching a leaf, failing
//! its confirmation and restarting from the root.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{FlashGroup, GroupLabel};
use crate::error::{Error, Result};
use crate::symbol::{SymbolId, SymbolSet, NUM_SYMBOLS};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeKind {
    Leaf(SymbolId),
    /// `one` is the child that gets flashed.
    Internal {
        one: NodeId,
        zero: NodeId,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HuffmanNode {
    pub prob: f64,
    pub members: SymbolSet,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HuffmanTree {
    nodes: Vec<HuffmanNode>,
    root: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapKey {
    prob: f64,
    seq: usize,
}

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prob
            .total_cmp(&other.prob)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Optimal prefix-code tree over every symbol with positive probability.
///
/// `prior[i]` is the weight of `SymbolId(i)`; weights need not sum to one.
/// With a single positive weight the tree is a lone leaf.
pub fn build_huffman(prior: &[f64]) -> Result<HuffmanTree> {
    if prior.len() > NUM_SYMBOLS {
        return Err(Error::DimensionMismatch {
            expected: NUM_SYMBOLS,
            got: prior.len(),
        });
    }
    if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidArgument(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = prior.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "no symbol has positive probability".into(),
        ));
    }

    let mut nodes = Vec::new();
    let mut heap = BinaryHeap::new();
    for (i, &p) in prior.iter().enumerate() {
        if p > 0.0 {
            let sym = SymbolId::new(i).expect("length checked");
            heap.push(Reverse((
                HeapKey {
                    prob: p / total,
                    seq: nodes.len(),
                },
                nodes.len(),
            )));
            nodes.push(HuffmanNode {
                prob: p / total,
                members: std::iter::once(sym).collect(),
                kind: NodeKind::Leaf(sym),
            });
        }
    }
    while heap.len() > 1 {
        let Reverse((_, a)) = heap.pop().expect("len > 1");
        let Reverse((_, b)) = heap.pop().expect("len > 1");
        let (one, zero) = if flashed_first(&nodes[a], &nodes[b]) {
            (a, b)
        } else {
            (b, a)
        };
        let id = nodes.len();
        nodes.push(HuffmanNode {
            prob: nodes[a].prob + nodes[b].prob,
            members: nodes[a].members.union(nodes[b].members),
            kind: NodeKind::Internal { one, zero },
        });
        heap.push(Reverse((
            HeapKey {
                prob: nodes[id].prob,
                seq: id,
            },
            id,
        )));
    }
    let Reverse((_, root)) = heap.pop().expect("at least one leaf");
    Ok(HuffmanTree { nodes, root })
}

/// The "1" branch is the likelier child; ties go to the smaller subtree,
/// then to the subtree holding the lowest symbol id.
fn flashed_first(a: &HuffmanNode, b: &HuffmanNode) -> bool {
    let min_a = a.members.iter().next();
    let min_b = b.members.iter().next();
    a.prob
        .total_cmp(&b.prob)
        .reverse()
        .then(a.members.len().cmp(&b.members.len()))
        .then(min_a.cmp(&min_b))
        == Ordering::Less
}

impl HuffmanTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &HuffmanNode {
        &self.nodes[id]
    }

    pub fn leaves(&self) -> SymbolSet {
        self.nodes[self.root].members
    }

    /// Depth of every leaf, in symbol order.
    pub fn code_lengths(&self) -> Vec<(SymbolId, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            match self.nodes[id].kind {
                NodeKind::Leaf(s) => out.push((s, depth)),
                NodeKind::Internal { one, zero } => {
                    stack.push((one, depth + 1));
                    stack.push((zero, depth + 1));
                }
            }
        }
        out.sort();
        out
    }

    pub fn depth_of(&self, s: SymbolId) -> Option<usize> {
        self.code_lengths()
            .into_iter()
            .find(|(t, _)| *t == s)
            .map(|(_, d)| d)
    }

    /// Expected code length in bits under the (normalized) leaf weights.
    pub fn expected_length(&self) -> f64 {
        self.code_lengths()
            .into_iter()
            .map(|(s, d)| self.leaf_prob(s) * d as f64)
            .sum()
    }

    /// Shannon entropy of the leaf weights, in bits.
    pub fn entropy(&self) -> f64 {
        self.code_lengths()
            .into_iter()
            .map(|(s, _)| self.leaf_prob(s))
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.log2())
            .sum()
    }

    fn leaf_prob(&self, s: SymbolId) -> f64 {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Leaf(s))
            .map_or(0.0, |n| n.prob)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HuffmanStep {
    Flash(FlashGroup),
    /// Cursor sits on a leaf: no flash, this symbol is the candidate.
    Leaf(SymbolId),
}

/// What to flash at `cursor`: the members of its "1" child.
pub fn huffman_next_flash(tree: &HuffmanTree, cursor: NodeId) -> HuffmanStep {
    match tree.node(cursor).kind {
        NodeKind::Leaf(s) => HuffmanStep::Leaf(s),
        NodeKind::Internal { one, .. } => {
            let child = tree.node(one);
            HuffmanStep::Flash(FlashGroup {
                members: child.members,
                weight: child.prob,
                label: GroupLabel::Subtree,
            })
        }
    }
}

/// Position of a descent through the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HuffmanCursor {
    node: NodeId,
    decisions: usize,
}

impl HuffmanCursor {
    pub fn new(tree: &HuffmanTree) -> Self {
        HuffmanCursor {
            node: tree.root(),
            decisions: 0,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    /// Decisions taken since the last restart.
    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn step(&self, tree: &HuffmanTree) -> HuffmanStep {
        huffman_next_flash(tree, self.node)
    }

    /// Follows the "1" branch when `inside` is true. No-op on a leaf.
    pub fn advance(&mut self, tree: &HuffmanTree, inside: bool) {
        if let NodeKind::Internal { one, zero } = tree.node(self.node).kind {
            self.node = if inside { one } else { zero };
            self.decisions += 1;
        }
    }

    pub fn restart(&mut self, tree: &HuffmanTree) {
        self.node = tree.root();
        self.decisions = 0;
    }
}
