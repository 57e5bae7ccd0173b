//! Built-in protocols and the name registry used by the command line.

use std::sync::Arc;

use crate::tape_machine::{MachineError, MacroRoutine, Program, StateId, Sym, BLANK, SEP};
use crate::tapecalc::CounterRegion;

pub mod constant;
pub mod gcdeq;
pub mod ids;
pub mod mult;
pub mod pow2;
pub mod registry;
pub mod reinit;
pub mod tm;
pub mod tmsim;

pub use constant::constant_protocol;
pub use gcdeq::gcd_equality_protocol;
pub use ids::id_assign_known_n;
pub use mult::mult_protocol;
pub use pow2::pow2_protocol;
pub use registry::{builtin, RegistryError};
pub use reinit::{reinit_protocol, DEFAULT_INNER_STEPS};
pub use tm::{NTMSpec, TMSpec};
pub use tmsim::{dtm_sim_protocol, ntm_sim_protocol};

/// `count` consecutive counters of equal width after `base` reserved cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Words {
    pub base: usize,
    pub width: usize,
}

impl Words {
    /// Splits a body of `len` cells according to `(words, reserve)`.
    pub fn fit(len: usize, (words, reserve): (usize, usize)) -> Result<Self, MachineError> {
        let width = len.saturating_sub(reserve) / words.max(1);
        if width == 0 {
            return Err(MachineError::Malformed(format!(
                "{len} cells leave no room for {words} counters"
            )));
        }
        Ok(Self {
            base: reserve,
            width,
        })
    }

    pub fn at(&self, i: usize) -> CounterRegion {
        CounterRegion::new(self.base + i * self.width, self.width)
    }

    /// First cell after `count` words.
    pub fn end(&self, count: usize) -> usize {
        self.base + count * self.width
    }
}

pub(crate) fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Tape alphabet `extra` plus binary digits, blank and separator.
pub(crate) fn alphabet(extra: &str) -> Vec<Sym> {
    let mut v: Vec<Sym> = extra.chars().collect();
    for c in ['0', '1', BLANK, SEP] {
        if !v.contains(&c) {
            v.push(c);
        }
    }
    v
}

pub(crate) fn names(states: &[&str]) -> Vec<String> {
    states.iter().map(|s| s.to_string()).collect()
}

/// Both orders of an encounter between different roles.
pub(crate) fn symmetric(
    a: StateId,
    b: StateId,
    a_to: StateId,
    b_to: StateId,
) -> [((StateId, StateId), (StateId, StateId)); 2] {
    [((a, b), (a_to, b_to)), ((b, a), (b_to, a_to))]
}

pub(crate) fn macro_program(r: impl MacroRoutine + 'static) -> Program {
    Program::Macro(Arc::new(r))
}
