//! Stable computation of `N_c = N_a * N_b` over inputs `a`, `b`, `c`.
//!
//! Each `c` agent starts a triple of counters and a private product. Counter
//! holders absorb `a`s, `b`s and each other until one survives; every other
//! agent copies the survivor's output bit. When no `c` exists, an `a`/`b`
//! meeting is the only way to learn that the product is nonzero, so unabsorbed
//! `a` and `b` agents start at "1" and drop to "0" on such a meeting.
//!
//! Working body: input cell, then the `a`, `b`, `c` counters and the product.
//! Message body: output bit, then the three counters.

use std::cmp::Ordering;

use crate::tape_machine::{
    write_str, InputSet, MachineError, MacroMachine, MacroRoutine, ProtocolSpec, StateId,
    TapeLayout, BLANK,
};
use crate::tapecalc::{self, read_counter, write_counter, TapeCalcError};

use super::{alphabet, bit, macro_program, names, symmetric, Words};

pub const Q0: StateId = 0;
pub const A: StateId = 1;
pub const B: StateId = 2;
pub const C: StateId = 3;
pub const ABAR: StateId = 4;
pub const BBAR: StateId = 5;
pub const CBAR: StateId = 6;
const C_A: StateId = 7;
const C_B: StateId = 8;
const C_MERGE: StateId = 9;
const C_YIELD: StateId = 10;
const A_SLEEP: StateId = 11;
const B_SLEEP: StateId = 12;
const ABAR_COPY: StateId = 13;
const BBAR_COPY: StateId = 14;
const CBAR_COPY: StateId = 15;
const A_MET_B: StateId = 16;
const B_MET_A: StateId = 17;

const STATES: [&str; 18] = [
    "q0",
    "a",
    "b",
    "c",
    "abar",
    "bbar",
    "cbar",
    "c_a",
    "c_b",
    "c_merge",
    "c_yield",
    "a_sleep",
    "b_sleep",
    "abar_copy",
    "bbar_copy",
    "cbar_copy",
    "a_met_b",
    "b_met_a",
];

const SHAPE: (usize, usize) = (4, 1);

struct Mult;

impl Mult {
    fn words(len: usize) -> Result<Words, MachineError> {
        Words::fit(len, SHAPE)
    }

    /// Recomputes the output bit from the counters.
    fn evaluate(m: &mut MacroMachine<'_>, w: &Words) -> Result<(), MachineError> {
        let equal = match tapecalc::multiply(m.working, &w.at(0), &w.at(1), &w.at(3)) {
            Ok(()) => tapecalc::compare(m.working, &w.at(3), &w.at(2))? == Ordering::Equal,
            // A product too wide for its word exceeds every representable c.
            Err(TapeCalcError::CounterOverflow) => {
                m.working[w.at(3).offset..w.end(4)].fill(BLANK);
                false
            }
            Err(e) => return Err(e.into()),
        };
        m.set_output(bit(equal))
    }

    fn received_bit(m: &MacroMachine<'_>) -> String {
        m.message[0].to_string()
    }
}

impl MacroRoutine for Mult {
    fn name(&self) -> String {
        "mult".into()
    }

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.tick()?;
        let w = Self::words(m.working.len())?;
        match m.state {
            Q0 => match m.working[0] {
                'a' => {
                    m.state = A;
                    m.set_output("1")?;
                }
                'b' => {
                    m.state = B;
                    m.set_output("1")?;
                }
                'c' => {
                    write_counter(m.working, &w.at(0), 0)?;
                    write_counter(m.working, &w.at(1), 0)?;
                    write_counter(m.working, &w.at(2), 1)?;
                    Self::evaluate(m, &w)?;
                    m.state = C;
                }
                other => return Err(MachineError::InputNotInX(other.to_string())),
            },
            C_A | C_B => {
                let i = usize::from(m.state == C_B);
                tapecalc::add(m.working, &w.at(i), 1)?;
                Self::evaluate(m, &w)?;
                m.state = C;
            }
            C_MERGE => {
                for i in 0..3 {
                    let theirs = read_counter(m.message, &w.at(i))?;
                    tapecalc::add(m.working, &w.at(i), theirs)?;
                }
                Self::evaluate(m, &w)?;
                m.state = C;
            }
            C_YIELD | A_SLEEP | B_SLEEP | ABAR_COPY | BBAR_COPY | CBAR_COPY => {
                let b = Self::received_bit(m);
                m.set_output(&b)?;
                m.state = match m.state {
                    A_SLEEP | ABAR_COPY => ABAR,
                    B_SLEEP | BBAR_COPY => BBAR,
                    _ => CBAR,
                };
            }
            A_MET_B => {
                m.set_output("0")?;
                m.state = A;
            }
            B_MET_A => {
                m.set_output("0")?;
                m.state = B;
            }
            _ => {}
        }
        self.emit_message(m)
    }

    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.message.fill(BLANK);
        if m.state != C {
            return Ok(());
        }
        let w = Self::words(m.working.len())?;
        let out = m.output_string();
        write_str(&mut m.message[..1], &out)?;
        for i in 0..3 {
            let v = read_counter(m.working, &w.at(i))?;
            write_counter(m.message, &w.at(i), v)?;
        }
        Ok(())
    }

    fn word_shape(&self) -> (usize, usize) {
        SHAPE
    }
}

pub fn mult_protocol() -> ProtocolSpec {
    let mut gamma = Vec::new();
    gamma.extend(symmetric(A, C, A_SLEEP, C_A));
    gamma.extend(symmetric(B, C, B_SLEEP, C_B));
    gamma.extend(symmetric(ABAR, C, ABAR_COPY, C));
    gamma.extend(symmetric(BBAR, C, BBAR_COPY, C));
    gamma.extend(symmetric(CBAR, C, CBAR_COPY, C));
    gamma.extend(symmetric(A, B, A_MET_B, B_MET_A));
    gamma.push(((C, C), (C_MERGE, C_YIELD)));
    ProtocolSpec::new(
        "mult",
        "abc".chars().collect(),
        InputSet::SingleSymbol,
        alphabet("abc"),
        names(&STATES),
        Q0,
        gamma,
        macro_program(Mult),
        TapeLayout::default(),
    )
    .expect("mult protocol is well formed")
}
