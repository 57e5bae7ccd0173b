//! Distributed simulation of a Turing machine by a population with ids
//! `0..n` and known `n`.
//!
//! The machine tape is cut into blocks of `2w` cells, block `i` living on the
//! agent with id `i`. The input (single symbols joined by `,`) is laid out
//! from block 0 onwards; each agent fills the input cells of its block as it
//! meets their owners. Control starts at agent 0 and moves to a neighbour
//! when the head leaves the block, during a direct encounter of the two
//! agents. A verdict spreads by epidemic.
//!
//! In the nondeterministic variant a choice among `k > 1` candidates waits
//! for the next encounter and takes candidate `partner id mod k`. A reject
//! sweeps right to the last agent and back to agent 0, restoring every block
//! from its backup, then restarts the machine.
//!
//! Working body: reserved cells (input, control, handoff direction, mode,
//! verdict), then words: block (two words), backup (two words), machine
//! state, head offset, own id. Message body: validity mark, input,
//! handoff direction, mode, verdict, then words: id, machine state.

use crate::tape_machine::{
    InputSet, MachineError, MacroMachine, MacroRoutine, Move, Probe, ProtocolSpec, SegmentsRef,
    StateId, Sym, TapeLayout, BLANK,
};
use crate::tapecalc::{read_counter, write_counter};

use super::tm::{NTMSpec, TMSpec, TmRule};
use super::{alphabet, macro_program, names, Words};

pub const Q0: StateId = 0;
pub const RUN: StateId = 1;

const SHAPE: (usize, usize) = (7, 5);

const IN: usize = 0;
const CTRL: usize = 1;
const DIR: usize = 2;
const MODE: usize = 3;
const VERDICT: usize = 4;
/// Message cell 0 marks a message written by a running agent.
const VALID: usize = 0;
const MSG_IN: usize = 1;

const VALID_MARK: Sym = 'M';
const ACTIVE: Sym = 'C';
const PENDING: Sym = 'P';
const NONE: Sym = '-';
const RIGHT: Sym = '>';
const LEFT: Sym = '<';
const SIMULATE: Sym = 'S';
const CHOOSING: Sym = 'c';
const SWEEP_RIGHT: Sym = 'r';
const SWEEP_LEFT: Sym = 'l';
const UNKNOWN: Sym = '?';
const ACCEPTED: Sym = 'A';
const REJECTED: Sym = 'R';

const MARKS: &str = "MCP-<>ScrlAR?";

struct Layout {
    words: Words,
}

impl Layout {
    fn new(len: usize) -> Result<Self, MachineError> {
        Ok(Self {
            words: Words::fit(len, SHAPE)?,
        })
    }

    fn block_len(&self) -> usize {
        2 * self.words.width
    }

    fn block(&self) -> std::ops::Range<usize> {
        self.words.at(0).offset..self.words.at(1).end()
    }

    fn backup(&self) -> std::ops::Range<usize> {
        self.words.at(2).offset..self.words.at(3).end()
    }
}

struct TmSim {
    machine: NTMSpec,
    deterministic: bool,
}

/// Everything a run reads and writes besides the tape cells.
struct Agent {
    id: u64,
    population: u64,
    state: u64,
    head: usize,
}

impl TmSim {
    fn init(&self, m: &mut MacroMachine<'_>, l: &Layout) -> Result<(), MachineError> {
        let env = m.env()?;
        let input = m.working[0];
        m.working.fill(BLANK);
        m.working[IN] = input;
        let b = l.block_len() as u64;
        let backup = l.backup();
        for j in 0..l.block_len() {
            let g = env.id * b + j as u64;
            m.working[backup.start + j] = if g + 1 >= 2 * env.population {
                BLANK
            } else if g % 2 == 1 {
                ','
            } else if g / 2 == env.id {
                input
            } else {
                UNKNOWN
            };
        }
        m.working.copy_within(backup, l.block().start);
        write_counter(m.working, &l.words.at(6), env.id)?;
        write_counter(m.working, &l.words.at(4), self.machine.header.start as u64)?;
        write_counter(m.working, &l.words.at(5), 0)?;
        m.working[CTRL] = if env.id == 0 { ACTIVE } else { NONE };
        m.working[DIR] = NONE;
        m.working[MODE] = SIMULATE;
        m.working[VERDICT] = UNKNOWN;
        Ok(())
    }

    fn adopt(&self, verdict: Sym) -> bool {
        verdict == ACCEPTED || (self.deterministic && verdict == REJECTED)
    }

    fn receive(
        &self,
        m: &mut MacroMachine<'_>,
        l: &Layout,
        a: &mut Agent,
    ) -> Result<(), MachineError> {
        if m.message[VALID] != VALID_MARK {
            return Ok(());
        }
        let partner = read_counter(m.message, &l.words.at(0))?;
        let b = l.block_len() as u64;
        let backup = l.backup();
        for j in 0..l.block_len() {
            let g = a.id * b + j as u64;
            if m.working[backup.start + j] == UNKNOWN && g.is_multiple_of(2) && g / 2 == partner {
                m.working[backup.start + j] = m.message[MSG_IN];
                m.working[l.block().start + j] = m.message[MSG_IN];
            }
        }
        if m.working[VERDICT] == UNKNOWN && self.adopt(m.message[VERDICT]) {
            m.working[VERDICT] = m.message[VERDICT];
        }
        let target = |from: u64, dir: Sym| match dir {
            RIGHT => Some(from + 1),
            LEFT => from.checked_sub(1),
            _ => None,
        };
        if target(partner, m.message[DIR]) == Some(a.id) {
            m.working[CTRL] = ACTIVE;
            m.working[MODE] = m.message[MODE];
            a.state = read_counter(m.message, &l.words.at(1))?;
            a.head = if m.message[DIR] == RIGHT {
                0
            } else {
                l.block_len() - 1
            };
        } else if m.working[CTRL] == PENDING && target(a.id, m.working[DIR]) == Some(partner) {
            m.working[CTRL] = NONE;
            m.working[DIR] = NONE;
        }
        if m.working[CTRL] == ACTIVE && m.working[MODE] == CHOOSING {
            let rules = self.candidates(a.state, m.working[l.block().start + a.head])?;
            let r = rules[(partner % rules.len() as u64) as usize];
            m.working[MODE] = SIMULATE;
            self.apply(m, l, a, r)?;
        }
        Ok(())
    }

    fn candidates(&self, state: u64, sym: Sym) -> Result<&[TmRule], MachineError> {
        let rules = self
            .machine
            .relation
            .get(&(state as usize, sym))
            .map_or(&[][..], |v| v.as_slice());
        if rules.len() > self.machine.k_max {
            return Err(MachineError::TooManyChoices {
                found: rules.len(),
                limit: self.machine.k_max,
            });
        }
        Ok(rules)
    }

    fn hand_off(m: &mut MacroMachine<'_>, dir: Sym) {
        m.working[CTRL] = PENDING;
        m.working[DIR] = dir;
    }

    fn apply(
        &self,
        m: &mut MacroMachine<'_>,
        l: &Layout,
        a: &mut Agent,
        r: TmRule,
    ) -> Result<(), MachineError> {
        m.working[l.block().start + a.head] = r.write;
        a.state = r.next as u64;
        match r.moves {
            Move::Left if a.head == 0 => {
                if a.id > 0 {
                    Self::hand_off(m, LEFT);
                }
            }
            Move::Left => a.head -= 1,
            Move::Right if a.head + 1 == l.block_len() => {
                if a.id + 1 >= a.population {
                    return Err(MachineError::TapeExhausted);
                }
                Self::hand_off(m, RIGHT);
            }
            Move::Right => a.head += 1,
        }
        Ok(())
    }

    fn halted(&self, m: &mut MacroMachine<'_>, accepted: bool) {
        if accepted {
            m.working[VERDICT] = ACCEPTED;
        } else if self.deterministic {
            m.working[VERDICT] = REJECTED;
        } else {
            m.working[MODE] = SWEEP_RIGHT;
        }
    }

    fn simulate(
        &self,
        m: &mut MacroMachine<'_>,
        l: &Layout,
        a: &mut Agent,
    ) -> Result<(), MachineError> {
        let h = &self.machine.header;
        while m.working[CTRL] == ACTIVE && m.working[VERDICT] == UNKNOWN && m.remaining() > 0 {
            m.tick()?;
            match m.working[MODE] {
                SWEEP_RIGHT | SWEEP_LEFT => {
                    m.working.copy_within(l.backup(), l.block().start);
                    if m.working[MODE] == SWEEP_RIGHT {
                        if a.id + 1 >= a.population {
                            m.working[MODE] = SWEEP_LEFT;
                        } else {
                            Self::hand_off(m, RIGHT);
                        }
                    } else if a.id == 0 {
                        m.working[MODE] = SIMULATE;
                        a.state = h.start as u64;
                        a.head = 0;
                    } else {
                        Self::hand_off(m, LEFT);
                    }
                }
                SIMULATE => {
                    if m.working[l.backup()].contains(&UNKNOWN) {
                        break;
                    }
                    if a.state as usize == h.accept || a.state as usize == h.reject {
                        self.halted(m, a.state as usize == h.accept);
                        continue;
                    }
                    let rules = self.candidates(a.state, m.working[l.block().start + a.head])?;
                    match rules {
                        [] => self.halted(m, false),
                        [r] => {
                            let r = *r;
                            self.apply(m, l, a, r)?;
                        }
                        _ => m.working[MODE] = CHOOSING,
                    }
                }
                _ => break,
            }
        }
        Ok(())
    }
}

impl MacroRoutine for TmSim {
    fn name(&self) -> String {
        let kind = if self.deterministic { "dtm" } else { "ntm" };
        format!("{kind}:{}", self.machine.header.name)
    }

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.tick()?;
        let l = Layout::new(m.working.len())?;
        if m.state == Q0 {
            self.init(m, &l)?;
            m.state = RUN;
        }
        let env = m.env()?;
        let mut a = Agent {
            id: read_counter(m.working, &l.words.at(6))?,
            population: env.population,
            state: read_counter(m.working, &l.words.at(4))?,
            head: read_counter(m.working, &l.words.at(5))? as usize,
        };
        self.receive(m, &l, &mut a)?;
        self.simulate(m, &l, &mut a)?;
        write_counter(m.working, &l.words.at(4), a.state)?;
        write_counter(m.working, &l.words.at(5), a.head as u64)?;
        m.set_output(if m.working[VERDICT] == ACCEPTED {
            "1"
        } else {
            "0"
        })?;
        self.emit_message(m)
    }

    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.message.fill(BLANK);
        if m.state != RUN {
            return Ok(());
        }
        let l = Layout::new(m.working.len())?;
        m.message[VALID] = VALID_MARK;
        m.message[MSG_IN] = m.working[IN];
        m.message[DIR] = if m.working[CTRL] == PENDING {
            m.working[DIR]
        } else {
            NONE
        };
        m.message[MODE] = m.working[MODE];
        m.message[VERDICT] = m.working[VERDICT];
        write_counter(
            m.message,
            &l.words.at(0),
            read_counter(m.working, &l.words.at(6))?,
        )?;
        write_counter(
            m.message,
            &l.words.at(1),
            read_counter(m.working, &l.words.at(4))?,
        )?;
        Ok(())
    }

    fn probe(&self, view: SegmentsRef<'_>) -> Probe {
        let halted = (view.state == RUN).then(|| view.working[VERDICT] != UNKNOWN);
        Probe {
            halted,
            ..Probe::default()
        }
    }

    fn requires_ids(&self) -> bool {
        true
    }

    fn word_shape(&self) -> (usize, usize) {
        SHAPE
    }
}

fn build(machine: NTMSpec, deterministic: bool) -> Result<ProtocolSpec, MachineError> {
    let state_bits =
        (usize::BITS - (machine.header.states.len() - 1).leading_zeros()).max(1) as usize;
    let h = &machine.header;
    let mut tape: String = h.tape_alphabet.iter().collect();
    tape.push_str(MARKS);
    let routine = TmSim {
        machine: machine.clone(),
        deterministic,
    };
    let name = routine.name();
    ProtocolSpec::new(
        name,
        h.input_alphabet.clone(),
        InputSet::SingleSymbol,
        alphabet(&tape),
        names(&["q0", "run"]),
        Q0,
        [],
        macro_program(routine),
        TapeLayout::new(SHAPE.0, SHAPE.1 + SHAPE.0 * (1 + state_bits)),
    )
}

/// Simulates a deterministic machine; needs ids, so run it wrapped.
pub fn dtm_sim_protocol(tm: &TMSpec) -> Result<ProtocolSpec, MachineError> {
    build(tm.as_relation(), true)
}

/// Simulates a nondeterministic machine whose branches all halt.
pub fn ntm_sim_protocol(ntm: &NTMSpec) -> Result<ProtocolSpec, MachineError> {
    build(ntm.clone(), false)
}

#[cfg(test)]
mod tests {
    use super::super::tm::{one_accepting_branch_ntm, parity_tm};
    use super::*;
    use crate::tape_machine::IdEnv;

    /// Agents with fixed ids, driven by hand.
    struct Bench {
        routine: TmSim,
        working: Vec<Vec<Sym>>,
        output: Vec<Vec<Sym>>,
        message: Vec<Vec<Sym>>,
        state: Vec<StateId>,
    }

    impl Bench {
        fn new(routine: TmSim, inputs: &[Sym], len: usize) -> Self {
            let n = inputs.len();
            let mut b = Bench {
                routine,
                working: inputs
                    .iter()
                    .map(|&c| {
                        let mut w = vec![BLANK; len];
                        w[0] = c;
                        w
                    })
                    .collect(),
                output: vec![vec![BLANK; len]; n],
                message: vec![vec![BLANK; len]; n],
                state: vec![Q0; n],
            };
            for u in 0..n {
                b.run(u, 1000).unwrap();
            }
            b
        }

        fn run(&mut self, u: usize, budget: u64) -> Result<(), MachineError> {
            let n = self.state.len() as u64;
            let mut m = MacroMachine::new(
                self.state[u],
                &mut self.working[u],
                &mut self.output[u],
                &mut self.message[u],
                Some(IdEnv {
                    id: u as u64,
                    population: n,
                }),
                budget,
                true,
            );
            self.routine.run(&mut m)?;
            self.state[u] = m.state;
            Ok(())
        }

        fn meet(&mut self, u: usize, v: usize, budget: u64) {
            self.message.swap(u, v);
            self.run(u, budget).unwrap();
            self.run(v, budget).unwrap();
        }

        fn outputs(&self) -> Vec<String> {
            self.output
                .iter()
                .map(|o| o.iter().filter(|&&c| c != BLANK).collect())
                .collect()
        }
    }

    #[test]
    fn parity_on_three_agents() {
        let routine = TmSim {
            machine: parity_tm().as_relation(),
            deterministic: true,
        };
        let mut b = Bench::new(routine, &['1', '0', '1'], 19);
        for round in 0..6 {
            for u in 0..3 {
                for v in 0..3 {
                    if u != v {
                        b.meet(u, v, 3 + round);
                    }
                }
            }
        }
        assert_eq!(b.outputs(), vec!["1", "1", "1"]);
    }

    #[test]
    fn choice_follows_partner_id() {
        let routine = TmSim {
            machine: one_accepting_branch_ntm(),
            deterministic: false,
        };
        let mut b = Bench::new(routine, &['0', '1'], 19);
        // Agent 0 loads agent 1's input, scans to the blank and waits.
        b.meet(0, 1, 100);
        assert_eq!(b.working[0][MODE], CHOOSING);
        // Partner id 1 picks candidate 1, the accepting one.
        b.meet(1, 0, 100);
        assert_eq!(b.working[0][VERDICT], ACCEPTED);
        b.meet(0, 1, 100);
        assert_eq!(b.outputs(), vec!["1", "1"]);
    }

    #[test]
    fn reject_restarts() {
        let routine = TmSim {
            machine: one_accepting_branch_ntm(),
            deterministic: false,
        };
        let mut b = Bench::new(routine, &['0', '1'], 19);
        b.meet(0, 1, 100);
        // Choosing via a partner with id 1 would accept; drive the rejecting
        // candidate by hand-editing the received id to 0.
        b.message.swap(0, 1);
        let l = Layout::new(19).unwrap();
        write_counter(&mut b.message[0], &l.words.at(0), 0).unwrap();
        b.run(0, 100).unwrap();
        assert_eq!(b.working[0][VERDICT], UNKNOWN);
        // The sweep went right to agent 1 and waits for the encounter.
        assert_eq!(b.working[0][CTRL], PENDING);
        assert_eq!(b.outputs(), vec!["0", "0"]);
    }

    #[test]
    fn budget_yields_instead_of_failing() {
        let routine = TmSim {
            machine: parity_tm().as_relation(),
            deterministic: true,
        };
        let mut b = Bench::new(routine, &['1', '1', '1', '1'], 30);
        for _ in 0..50 {
            for u in 0..4 {
                for v in 0..4 {
                    if u != v {
                        b.meet(u, v, 2);
                    }
                }
            }
        }
        assert_eq!(b.outputs(), vec!["1"; 4]);
    }
}
