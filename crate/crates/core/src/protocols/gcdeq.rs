//! Equality of two products under the multiplicative input convention.
//!
//! Inputs are a mark followed by a positive decimal value, such as `a6` or
//! `b12`. `N_a` is the product of the `a`-marked values and `N_b` likewise.
//! An `{a, b}` meeting divides both values by their gcd and raises both flags
//! iff both values are then 1; an `{a, a}` or `{b, b}` meeting lowers both
//! flags if either is low. The output is the flag.
//!
//! Working and message bodies: mark cell, flag cell, value in binary.

use crate::tape_machine::{
    AgentConfig, InputSet, MachineError, MacroMachine, MacroRoutine, ProtocolSpec, Segment,
    StateId, Sym, TapeLayout, BLANK,
};
use crate::tapecalc::{self, read_counter, write_counter, CounterRegion};

use super::{alphabet, bit, macro_program, names};

pub const Q0: StateId = 0;
pub const READY: StateId = 1;

const HIGH: Sym = '1';
const LOW: Sym = '0';

fn is_marked_value(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some('a' | 'b')) && s.len() > 1 && cs.all(|c| c.is_ascii_digit())
}

fn value_region(len: usize) -> Result<CounterRegion, MachineError> {
    if len < 3 {
        return Err(MachineError::Malformed(
            "gcdeq needs at least 3 cells".into(),
        ));
    }
    Ok(CounterRegion::new(2, len - 2))
}

struct GcdEq;

impl MacroRoutine for GcdEq {
    fn name(&self) -> String {
        "gcdeq".into()
    }

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.tick()?;
        let r = value_region(m.working.len())?;
        if m.state == Q0 {
            let input: String = m.working.iter().take_while(|&&c| c != BLANK).collect();
            let mark = input
                .chars()
                .next()
                .ok_or_else(|| MachineError::InputNotInX(input.clone()))?;
            let value: u64 = input[1..]
                .parse()
                .map_err(|_| MachineError::InputNotInX(input.clone()))?;
            if value == 0 {
                return Err(MachineError::ZeroValue);
            }
            m.working.fill(BLANK);
            m.working[0] = mark;
            m.working[1] = LOW;
            write_counter(m.working, &r, value)?;
            m.state = READY;
        } else {
            let (mine, theirs) = (m.working[0], m.message[0]);
            if mine != theirs {
                let own = read_counter(m.working, &r)?;
                let other = read_counter(m.message, &r)?;
                let g = tapecalc::gcd(own, other)?;
                write_counter(m.working, &r, own / g)?;
                m.working[1] = if own / g == 1 && other / g == 1 {
                    HIGH
                } else {
                    LOW
                };
            } else if m.message[1] == LOW {
                m.working[1] = LOW;
            }
        }
        m.set_output(bit(m.working[1] == HIGH))?;
        self.emit_message(m)
    }

    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.message.copy_from_slice(m.working);
        Ok(())
    }

    fn word_shape(&self) -> (usize, usize) {
        (1, 2)
    }
}

pub fn gcd_equality_protocol() -> ProtocolSpec {
    ProtocolSpec::new(
        "gcdeq",
        "ab0123456789".chars().collect(),
        InputSet::Custom {
            name: "mark and positive decimal",
            accepts: is_marked_value,
        },
        alphabet("ab0123456789"),
        names(&["q0", "ready"]),
        Q0,
        [],
        macro_program(GcdEq),
        TapeLayout::default(),
    )
    .expect("gcdeq protocol is well formed")
}

/// Mark, current value and flag of a ready agent.
pub fn mark_value_flag(agent: &AgentConfig) -> Option<(Sym, u64, bool)> {
    if agent.state != READY {
        return None;
    }
    let w = agent.segment(Segment::Working);
    let v = read_counter(w, &value_region(w.len()).ok()?).ok()?;
    Some((w[0], v, w[1] == HIGH))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{initial_config, InputAssignment, PopulationConfig, PopulationError};
    use crate::tape_machine::DEFAULT_INTERNAL_BUDGET;

    fn settled(inputs: &[&str]) -> Result<PopulationConfig, PopulationError> {
        let p = gcd_equality_protocol();
        let mut c = initial_config(
            &p,
            &InputAssignment::new(inputs.iter().copied()),
            &TapeLayout::default(),
        )?;
        for u in 0..c.n() {
            c.settle_agent(&p, u, DEFAULT_INTERNAL_BUDGET)?;
        }
        Ok(c)
    }

    fn meet(c: &mut PopulationConfig, u: usize, v: usize) {
        let p = gcd_equality_protocol();
        assert!(c.apply_encounter(&p, u, v).unwrap());
        c.settle_agent(&p, u, DEFAULT_INTERNAL_BUDGET).unwrap();
        c.settle_agent(&p, v, DEFAULT_INTERNAL_BUDGET).unwrap();
    }

    fn values(c: &PopulationConfig) -> Vec<(Sym, u64, bool)> {
        c.agents
            .iter()
            .map(|a| mark_value_flag(a).unwrap())
            .collect()
    }

    #[test]
    fn six_against_two_times_three() {
        let mut c = settled(&["a6", "b2", "b3"]).unwrap();
        meet(&mut c, 0, 1);
        assert_eq!(
            values(&c),
            vec![('a', 3, false), ('b', 1, false), ('b', 3, false)]
        );
        meet(&mut c, 2, 0);
        assert_eq!(
            values(&c),
            vec![('a', 1, true), ('b', 1, false), ('b', 1, true)]
        );
        meet(&mut c, 0, 1);
        assert_eq!(c.outputs(), vec!["1", "1", "1"]);
    }

    #[test]
    fn coprime_leftovers_stay_low() {
        let mut c = settled(&["a4", "b6"]).unwrap();
        meet(&mut c, 0, 1);
        assert_eq!(values(&c), vec![('a', 2, false), ('b', 3, false)]);
        meet(&mut c, 1, 0);
        assert_eq!(values(&c), vec![('a', 2, false), ('b', 3, false)]);
    }

    #[test]
    fn ones_agree_at_once() {
        let mut c = settled(&["a1", "b1"]).unwrap();
        assert_eq!(c.outputs(), vec!["0", "0"]);
        meet(&mut c, 0, 1);
        assert_eq!(c.outputs(), vec!["1", "1"]);
    }

    #[test]
    fn same_mark_spreads_low() {
        let mut c = settled(&["a1", "b1", "a1"]).unwrap();
        meet(&mut c, 0, 1);
        meet(&mut c, 2, 0);
        assert!(!values(&c)[0].2);
    }

    #[test]
    fn inputs_are_checked() {
        assert!(matches!(
            settled(&["a0", "b1"]),
            Err(PopulationError::Machine {
                agent: 0,
                source: MachineError::ZeroValue
            })
        ));
        assert!(matches!(
            settled(&["c1"]),
            Err(PopulationError::Machine {
                source: MachineError::InputNotInX(_),
                ..
            })
        ));
        assert!(matches!(
            settled(&["a"]),
            Err(PopulationError::Machine {
                source: MachineError::InputNotInX(_),
                ..
            })
        ));
    }
}
