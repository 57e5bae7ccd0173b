//! Unique ids `0..n` when every agent is given `n`.
//!
//! Every input is the binary form of `n`, most significant bit first. An
//! initiator that meets an equal id increments its own; the agent that
//! reaches `n - 1` enters `qf`, which then spreads to everyone. The output is
//! "1" once an agent is in `qf`.
//!
//! Working body: `n` and the id as two counters. Message body: the id.

use crate::tape_machine::{
    AgentConfig, InputSet, MachineError, MacroMachine, MacroRoutine, Probe, ProtocolSpec,
    SegmentsRef, StateId, TapeLayout, BLANK,
};
use crate::tapecalc::{read_counter, write_counter};

use super::{alphabet, bit, macro_program, names, Words};

pub const Q0: StateId = 0;
pub const Q1: StateId = 1;
pub const Q2: StateId = 2;
pub const QF: StateId = 3;

const SHAPE: (usize, usize) = (2, 0);

fn is_binary_positive(s: &str) -> bool {
    s.starts_with('1') && s.chars().all(|c| c == '0' || c == '1')
}

struct Ids;

impl Ids {
    fn read(view: &SegmentsRef<'_>) -> Option<(u64, u64)> {
        let w = Words::fit(view.working.len(), SHAPE).ok()?;
        Some((
            read_counter(view.working, &w.at(0)).ok()?,
            read_counter(view.working, &w.at(1)).ok()?,
        ))
    }
}

impl MacroRoutine for Ids {
    fn name(&self) -> String {
        "ids".into()
    }

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.tick()?;
        let w = Words::fit(m.working.len(), SHAPE)?;
        match m.state {
            Q0 => {
                let input: String = m.working.iter().take_while(|&&c| c != BLANK).collect();
                let n = u64::from_str_radix(&input, 2)
                    .map_err(|_| MachineError::InputNotInX(input.clone()))?;
                m.working.fill(BLANK);
                write_counter(m.working, &w.at(0), n)?;
                write_counter(m.working, &w.at(1), 0)?;
                m.state = if n <= 1 { QF } else { Q0 };
            }
            Q1 => {
                let n = read_counter(m.working, &w.at(0))?;
                let mut id = read_counter(m.working, &w.at(1))?;
                if read_counter(m.message, &w.at(0))? == id {
                    id += 1;
                    write_counter(m.working, &w.at(1), id)?;
                }
                m.state = if id + 1 >= n { QF } else { Q0 };
            }
            Q2 => m.state = Q0,
            _ => {}
        }
        m.set_output(bit(m.state == QF))?;
        self.emit_message(m)
    }

    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        let w = Words::fit(m.working.len(), SHAPE)?;
        m.message.fill(BLANK);
        let id = read_counter(m.working, &w.at(1))?;
        write_counter(m.message, &w.at(0), id)?;
        Ok(())
    }

    fn probe(&self, view: SegmentsRef<'_>) -> Probe {
        let Some((n, id)) = Self::read(&view) else {
            return Probe::default();
        };
        Probe {
            id: Some(id),
            population: Some(n),
            halted: Some(view.state == QF),
            ..Probe::default()
        }
    }

    fn word_shape(&self) -> (usize, usize) {
        SHAPE
    }
}

pub fn id_assign_known_n() -> ProtocolSpec {
    ProtocolSpec::new(
        "ids",
        vec!['0', '1'],
        InputSet::Custom {
            name: "binary population size",
            accepts: is_binary_positive,
        },
        alphabet("01"),
        names(&["q0", "q1", "q2", "qf"]),
        Q0,
        [
            ((Q0, Q0), (Q1, Q2)),
            ((QF, Q0), (QF, QF)),
            ((Q0, QF), (QF, QF)),
        ],
        macro_program(Ids),
        TapeLayout::default(),
    )
    .expect("ids protocol is well formed")
}

/// The input every agent receives for a population of `n`.
pub fn size_input(n: usize) -> String {
    format!("{n:b}")
}

/// Id held by a ready agent.
pub fn agent_id(protocol: &ProtocolSpec, agent: &AgentConfig) -> Option<u64> {
    if agent.working {
        return None;
    }
    protocol.probe(agent).id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{initial_config, InputAssignment, PopulationConfig};
    use crate::tape_machine::DEFAULT_INTERNAL_BUDGET;

    fn settled(n: usize) -> (ProtocolSpec, PopulationConfig) {
        let p = id_assign_known_n();
        let a = InputAssignment::new(vec![size_input(n); n]);
        let mut c = initial_config(&p, &a, &TapeLayout::default()).unwrap();
        for u in 0..n {
            c.settle_agent(&p, u, DEFAULT_INTERNAL_BUDGET).unwrap();
        }
        (p, c)
    }

    fn meet(p: &ProtocolSpec, c: &mut PopulationConfig, u: usize, v: usize) {
        assert!(c.apply_encounter(p, u, v).unwrap());
        c.settle_agent(p, u, DEFAULT_INTERNAL_BUDGET).unwrap();
        c.settle_agent(p, v, DEFAULT_INTERNAL_BUDGET).unwrap();
    }

    fn ids(p: &ProtocolSpec, c: &PopulationConfig) -> Vec<u64> {
        c.agents.iter().map(|a| agent_id(p, a).unwrap()).collect()
    }

    #[test]
    fn single_agent_is_done_at_once() {
        let (_, c) = settled(1);
        assert_eq!(c.agents[0].state, QF);
        assert_eq!(c.outputs(), vec!["1"]);
    }

    #[test]
    fn three_agents_by_hand() {
        let (p, mut c) = settled(3);
        assert_eq!(ids(&p, &c), vec![0, 0, 0]);
        meet(&p, &mut c, 0, 1);
        assert_eq!(ids(&p, &c), vec![1, 0, 0]);
        meet(&p, &mut c, 2, 1);
        assert_eq!(ids(&p, &c), vec![1, 0, 1]);
        meet(&p, &mut c, 0, 2);
        assert_eq!(ids(&p, &c), vec![2, 0, 1]);
        assert_eq!(c.agents[0].state, QF);
        meet(&p, &mut c, 1, 0);
        assert_eq!(c.agents[1].state, QF);
        assert_eq!(c.outputs(), vec!["1", "1", "0"]);
    }

    #[test]
    fn inputs_must_be_binary() {
        let p = id_assign_known_n();
        assert!(
            initial_config(&p, &InputAssignment::new(["012"]), &TapeLayout::default()).is_err()
        );
        assert!(
            initial_config(&p, &InputAssignment::new(["011"]), &TapeLayout::default()).is_err()
        );
    }
}
