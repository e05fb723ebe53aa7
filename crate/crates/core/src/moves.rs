//! Structural tree moves shared by the samplers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tree::{NodeId, NodeMap, RotateDir, SplitRule, Tree, TreeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Birth { leaf: NodeId, rule: SplitRule },
    Death { node: NodeId },
    Rotate { node: NodeId, dir: RotateDir },
}

/// Kind of transition a chain record reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Birth,
    Death,
    Rotate,
    Stay,
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::Rotate => "rotate",
            MoveKind::Stay => "stay",
        };
        f.write_str(s)
    }
}

impl Move {
    pub fn kind(&self) -> MoveKind {
        match self {
            Move::Birth { .. } => MoveKind::Birth,
            Move::Death { .. } => MoveKind::Death,
            Move::Rotate { .. } => MoveKind::Rotate,
        }
    }

    pub fn apply(&self, tree: &Tree) -> Result<Tree, TreeError> {
        self.apply_mapped(tree).map(|(t, _)| t)
    }

    pub fn apply_mapped(&self, tree: &Tree) -> Result<(Tree, NodeMap), TreeError> {
        match *self {
            Move::Birth { leaf, rule } => tree.apply_birth_mapped(leaf, rule),
            Move::Death { node } => tree.apply_death_mapped(node),
            Move::Rotate { node, dir } => tree.apply_rotate_mapped(node, dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_serialize_lowercase() {
        assert_eq!(
            serde_json::to_string(&MoveKind::Rotate).unwrap(),
            "\"rotate\""
        );
        assert_eq!(MoveKind::Stay.to_string(), "stay");
    }

    #[test]
    fn apply_dispatches() {
        let tree = Tree::root_only();
        let grown = Move::Birth {
            leaf: NodeId(0),
            rule: SplitRule::new(0, 1),
        }
        .apply(&tree)
        .unwrap();
        assert_eq!(grown.canonical(), "I(v=0,c=1,T,T)");
        assert_eq!(Move::Death { node: NodeId(0) }.apply(&grown).unwrap(), tree);
        assert!(Move::Rotate {
            node: NodeId(0),
            dir: RotateDir::Left
        }
        .apply(&grown)
        .is_err());
    }
}
