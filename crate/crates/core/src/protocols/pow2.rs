//! Stable computation of "the number of `1` inputs is a power of two".
//!
//! The agent in state `one` holds a 1-counter and the smallest power of two
//! not below it. The power is only doubled when a merge pushes the counter
//! past it, so it never exceeds twice the population.
//!
//! Working body: input cell, 1-counter, power. Message body: output bit,
//! 1-counter.

use std::cmp::Ordering;

use crate::tape_machine::{
    write_str, InputSet, MachineError, MacroMachine, MacroRoutine, ProtocolSpec, StateId,
    TapeLayout, BLANK,
};
use crate::tapecalc::{self, read_counter, write_counter};

use super::{alphabet, bit, macro_program, names, symmetric, Words};

pub const Q0: StateId = 0;
pub const ZERO: StateId = 1;
pub const ONE: StateId = 2;
pub const ONEBAR: StateId = 3;
const ONE_MERGE: StateId = 4;
const ONE_YIELD: StateId = 5;
const ZERO_COPY: StateId = 6;
const ONEBAR_COPY: StateId = 7;

const STATES: [&str; 8] = [
    "q0",
    "0",
    "1",
    "1bar",
    "1_merge",
    "1_yield",
    "0_copy",
    "1bar_copy",
];

const SHAPE: (usize, usize) = (4, 1);

struct Pow2;

impl Pow2 {
    fn evaluate(m: &mut MacroMachine<'_>, w: &Words) -> Result<(), MachineError> {
        let (count, power) = (w.at(0), w.at(1));
        while tapecalc::compare(m.working, &power, &count)? == Ordering::Less {
            m.tick()?;
            tapecalc::double(m.working, &power)?;
        }
        let equal = tapecalc::compare(m.working, &power, &count)? == Ordering::Equal;
        m.set_output(bit(equal))
    }
}

impl MacroRoutine for Pow2 {
    fn name(&self) -> String {
        "pow2".into()
    }

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.tick()?;
        let w = Words::fit(m.working.len(), SHAPE)?;
        match m.state {
            Q0 => match m.working[0] {
                '0' => {
                    m.set_output("0")?;
                    m.state = ZERO;
                }
                '1' => {
                    write_counter(m.working, &w.at(0), 1)?;
                    write_counter(m.working, &w.at(1), 1)?;
                    Self::evaluate(m, &w)?;
                    m.state = ONE;
                }
                other => return Err(MachineError::InputNotInX(other.to_string())),
            },
            ONE_MERGE => {
                let theirs = read_counter(m.message, &w.at(0))?;
                tapecalc::add(m.working, &w.at(0), theirs)?;
                Self::evaluate(m, &w)?;
                m.state = ONE;
            }
            ONE_YIELD => m.state = ONEBAR,
            ZERO_COPY | ONEBAR_COPY => {
                let b = m.message[0].to_string();
                m.set_output(&b)?;
                m.state = if m.state == ZERO_COPY { ZERO } else { ONEBAR };
            }
            _ => {}
        }
        self.emit_message(m)
    }

    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.message.fill(BLANK);
        if m.state != ONE {
            return Ok(());
        }
        let w = Words::fit(m.working.len(), SHAPE)?;
        let out = m.output_string();
        write_str(&mut m.message[..1], &out)?;
        let count = read_counter(m.working, &w.at(0))?;
        write_counter(m.message, &w.at(0), count)?;
        Ok(())
    }

    fn word_shape(&self) -> (usize, usize) {
        SHAPE
    }
}

pub fn pow2_protocol() -> ProtocolSpec {
    let mut gamma = vec![((ONE, ONE), (ONE_MERGE, ONE_YIELD))];
    gamma.extend(symmetric(ZERO, ONE, ZERO_COPY, ONE));
    gamma.extend(symmetric(ONEBAR, ONE, ONEBAR_COPY, ONE));
    ProtocolSpec::new(
        "pow2",
        "01".chars().collect(),
        InputSet::SingleSymbol,
        alphabet("01"),
        names(&STATES),
        Q0,
        gamma,
        macro_program(Pow2),
        TapeLayout::default(),
    )
    .expect("pow2 protocol is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{initial_config, InputAssignment, PopulationConfig};
    use crate::tape_machine::DEFAULT_INTERNAL_BUDGET;

    fn settled(inputs: &[&str]) -> PopulationConfig {
        let p = pow2_protocol();
        let mut c = initial_config(
            &p,
            &InputAssignment::new(inputs.iter().copied()),
            &TapeLayout::default(),
        )
        .unwrap();
        for u in 0..c.n() {
            c.settle_agent(&p, u, DEFAULT_INTERNAL_BUDGET).unwrap();
        }
        c
    }

    fn meet(c: &mut PopulationConfig, u: usize, v: usize) {
        let p = pow2_protocol();
        assert!(c.apply_encounter(&p, u, v).unwrap());
        c.settle_agent(&p, u, DEFAULT_INTERNAL_BUDGET).unwrap();
        c.settle_agent(&p, v, DEFAULT_INTERNAL_BUDGET).unwrap();
    }

    #[test]
    fn chain_of_merges_tracks_powers() {
        let mut c = settled(&["1", "1", "1", "1", "1", "0"]);
        assert_eq!(c.outputs(), vec!["1", "1", "1", "1", "1", "0"]);
        let mut expected = Vec::new();
        for v in 1..5 {
            meet(&mut c, 0, v);
            expected.push(c.agents[0].output());
        }
        // Counts 2, 3, 4, 5.
        assert_eq!(expected, vec!["1", "0", "1", "0"]);
        assert_eq!(c.agents.iter().filter(|a| a.state == ONE).count(), 1);
        meet(&mut c, 5, 0);
        assert_eq!(c.agents[5].output(), "0");
        assert_eq!(c.agents[5].state, ZERO);
    }

    #[test]
    fn zeros_only() {
        let mut c = settled(&["0", "0"]);
        meet(&mut c, 0, 1);
        assert_eq!(c.outputs(), vec!["0", "0"]);
    }
}
