use crate::autograd::{Graph, Var};
use crate::error::Result;

/// What a row of a block input represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Sos,
    Context,
    Prompt,
    ClassToken,
    Eos,
    Cls,
    Patch,
}

/// One transformer block's input: token matrix plus the role of every row.
#[derive(Debug, Clone)]
pub struct AssembledSequence {
    pub tokens: Var,
    pub roles: Vec<Role>,
}

impl AssembledSequence {
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn positions(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|r| **r == role).count()
    }
}

/// Rebuilds the input of block `layer` (1-based) from the previous block's output.
pub trait SequenceHook {
    fn rebuild(&self, g: &mut Graph, layer: usize, seq: AssembledSequence) -> Result<AssembledSequence>;
}
