//! Id assignment without knowing `n`, restarting a wrapped protocol whenever
//! the ids change.
//!
//! The wrapper keeps `id`, `ps` (believed population size), `search_for` and a
//! read-only copy of the input in front of the wrapped protocol's working
//! block, and puts `id`, `ps` and `search_for` in front of its message. After
//! every encounter it decides whether the wrapped protocol restarts, runs on
//! the received message for at most `c` steps, or sits the encounter out.
//!
//! Composite states record the wrapped state before and after the wrapped
//! external transition, so the wrapper can keep whichever applies.
//!
//! Working body: `id`, `ps`, `search_for`, input copy (one word each), action
//! marker, fault marker, wrapped working block. Message body: `id`, `ps`,
//! `search_for`, wrapped message block.

use std::sync::Arc;

use crate::tape_machine::{
    trimmed, write_str, IdEnv, InputSet, MachineError, MacroMachine, MacroRoutine, Probe, Program,
    ProtocolSpec, SegmentsRef, StateId, Sym, TapeLayout, WrapperAction, BLANK,
};
use crate::tapecalc::{read_counter, write_counter, CounterRegion};

use super::Words;

/// Step budget of one run of the wrapped protocol.
pub const DEFAULT_INNER_STEPS: u64 = 64;

const NOT_SEARCHING: Sym = 'N';
const WAITING: Sym = 'W';
const FAULT: Sym = 'E';
const MARKERS: [(Sym, WrapperAction); 4] = [
    ('I', WrapperAction::Idle),
    ('R', WrapperAction::Reset),
    ('F', WrapperAction::FreshRun),
    ('X', WrapperAction::InnerRun),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Start,
    Ready(StateId),
    Initiator(StateId, StateId),
    Responder(StateId, StateId),
}

struct Codec {
    q: usize,
}

impl Codec {
    fn encode(&self, p: Phase) -> StateId {
        let q = self.q;
        (match p {
            Phase::Start => 0,
            Phase::Ready(s) => 1 + s as usize,
            Phase::Initiator(b, a) => 1 + q + b as usize * q + a as usize,
            Phase::Responder(b, a) => 1 + q + q * q + b as usize * q + a as usize,
        }) as StateId
    }

    fn decode(&self, s: StateId) -> Phase {
        let (q, s) = (self.q, s as usize);
        if s == 0 {
            Phase::Start
        } else if s <= q {
            Phase::Ready((s - 1) as StateId)
        } else if s <= q + q * q {
            let k = s - 1 - q;
            Phase::Initiator((k / q) as StateId, (k % q) as StateId)
        } else {
            let k = s - 1 - q - q * q;
            Phase::Responder((k / q) as StateId, (k % q) as StateId)
        }
    }

    fn count(&self) -> usize {
        1 + self.q + 2 * self.q * self.q
    }
}

/// Cell positions for a working body of a given length.
#[derive(Clone, Copy, Debug)]
struct Frame {
    words: Words,
    inner_len: usize,
}

impl Frame {
    fn new(len: usize, (k, reserve): (usize, usize)) -> Result<Self, MachineError> {
        let words = Words {
            base: 0,
            ..Words::fit(len, (k, reserve))?
        };
        let inner_len = len - words.end(4) - 2;
        Ok(Self { words, inner_len })
    }

    fn id(&self) -> CounterRegion {
        self.words.at(0)
    }

    fn ps(&self) -> CounterRegion {
        self.words.at(1)
    }

    fn search(&self) -> CounterRegion {
        self.words.at(2)
    }

    fn input(&self) -> CounterRegion {
        self.words.at(3)
    }

    fn marker(&self) -> usize {
        self.words.end(4)
    }

    fn fault(&self) -> usize {
        self.words.end(4) + 1
    }

    fn inner_start(&self) -> usize {
        self.words.end(4) + 2
    }

    /// Start of the wrapped message block.
    fn inner_message(&self) -> usize {
        self.words.end(3)
    }
}

fn read_search(cells: &[Sym], r: &CounterRegion) -> Result<i64, MachineError> {
    Ok(match cells[r.offset] {
        NOT_SEARCHING => -1,
        WAITING => -2,
        _ => read_counter(cells, r)? as i64,
    })
}

fn write_search(cells: &mut [Sym], r: &CounterRegion, v: i64) -> Result<(), MachineError> {
    match v {
        -1 | -2 => {
            cells[r.offset..r.end()].fill(BLANK);
            cells[r.offset] = if v == -1 { NOT_SEARCHING } else { WAITING };
        }
        v => write_counter(cells, r, v as u64)?,
    }
    Ok(())
}

/// What happens to the wrapped protocol after an encounter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    Idle,
    Reset,
    /// Reset, then restart from the initial state.
    Fresh,
    Run,
}

/// The wrapper's decision for one participant. Returns the new
/// `(id, ps, search_for)` and the action.
#[allow(clippy::too_many_arguments)]
fn decide(
    initiator: bool,
    id: i64,
    ps: i64,
    sf: i64,
    rid: i64,
    rps: i64,
    rsf: i64,
) -> ((i64, i64, i64), Action) {
    let both_free = sf == -1 && rsf == -1;
    if rid == id {
        return if initiator {
            ((id + 1, id + 2, 0), Action::Reset)
        } else {
            ((id, id + 2, -2), Action::Reset)
        };
    }
    let predecessor = rid == id - 1 || (id == 0 && rid >= ps - 1);
    let successor = rid == id + 1 || (rid == 0 && id == ps - 1);
    let from_successor = |sf: i64| {
        if sf == rid {
            ((id, ps, -1), Action::Fresh)
        } else if both_free {
            ((id, ps, sf), Action::Run)
        } else {
            ((id, ps, sf), Action::Idle)
        }
    };
    if predecessor {
        if rsf == id {
            if sf == -2 && rps == ps {
                return ((id, ps, -1), Action::Fresh);
            }
            if rps > ps {
                return ((id, rps, id + 1), Action::Reset);
            }
            return ((id, ps, sf), Action::Reset);
        }
        if both_free {
            return ((id, ps, sf), Action::Run);
        }
        // With two agents on the ring the partner is also the successor.
        if successor {
            return from_successor(sf);
        }
        return ((id, ps, sf), Action::Idle);
    }
    if successor {
        return from_successor(sf);
    }
    if both_free && ps == rps {
        ((id, ps, sf), Action::Run)
    } else {
        ((id, ps, sf), Action::Idle)
    }
}

struct Reinit {
    inner: Arc<dyn MacroRoutine>,
    inner_initial: StateId,
    codec: Codec,
    budget: u64,
}

impl Reinit {
    fn shape(&self) -> (usize, usize) {
        let (k, r) = self.inner.word_shape();
        (k + 4, r + 2)
    }

    fn inner_machine<'a>(
        &self,
        m: &'a mut MacroMachine<'_>,
        f: &Frame,
        state: StateId,
        env: Option<IdEnv>,
    ) -> MacroMachine<'a> {
        let (_, iw) = m.working.split_at_mut(f.inner_start());
        let im = &mut m.message[f.inner_message()..f.inner_message() + f.inner_len];
        MacroMachine::new(state, iw, m.output, im, env, self.budget, true)
    }

    /// Working block := input copy, output and message blocks cleared.
    fn restore(&self, m: &mut MacroMachine<'_>, f: &Frame) -> Result<(), MachineError> {
        let input = trimmed(&m.working[f.input().offset..f.input().end()]);
        let start = f.inner_start();
        write_str(&mut m.working[start..], &input)?;
        m.output.fill(BLANK);
        m.message[f.inner_message()..f.inner_message() + f.inner_len].fill(BLANK);
        m.working[f.fault()] = BLANK;
        Ok(())
    }

    /// Runs the wrapped protocol; failures other than overrunning its budget
    /// freeze it until the next restart.
    fn run_inner(
        &self,
        m: &mut MacroMachine<'_>,
        f: &Frame,
        state: StateId,
        env: IdEnv,
    ) -> Result<StateId, MachineError> {
        let mut im = self.inner_machine(m, f, state, Some(env));
        match self.inner.run(&mut im) {
            Ok(()) => Ok(im.state),
            Err(e @ MachineError::InnerBudgetViolation { .. }) => Err(e),
            Err(_) => {
                m.working[f.fault()] = FAULT;
                Ok(state)
            }
        }
    }

    fn emit_inner(
        &self,
        m: &mut MacroMachine<'_>,
        f: &Frame,
        state: StateId,
    ) -> Result<(), MachineError> {
        let mut im = self.inner_machine(m, f, state, None);
        self.inner.emit_message(&mut im)
    }

    fn set_marker(m: &mut MacroMachine<'_>, f: &Frame, action: WrapperAction) {
        m.working[f.marker()] = MARKERS.iter().find(|(_, a)| *a == action).unwrap().0;
    }

    fn emit_wrapper(m: &mut MacroMachine<'_>, f: &Frame) -> Result<(), MachineError> {
        for r in [f.id(), f.ps(), f.search()] {
            m.message[r.offset..r.end()].copy_from_slice(&m.working[r.offset..r.end()]);
        }
        Ok(())
    }

    fn initialize(&self, m: &mut MacroMachine<'_>, f: &Frame) -> Result<StateId, MachineError> {
        let input = trimmed(m.working);
        if input.chars().count() > f.input().width {
            return Err(MachineError::InputTooLong {
                len: input.chars().count(),
                cells: f.input().width,
            });
        }
        m.working.fill(BLANK);
        write_counter(m.working, &f.id(), 0)?;
        write_counter(m.working, &f.ps(), 0)?;
        write_search(m.working, &f.search(), -1)?;
        write_str(&mut m.working[f.input().offset..f.input().end()], &input)?;
        Self::set_marker(m, f, WrapperAction::FreshRun);
        self.restore(m, f)?;
        self.run_inner(
            m,
            f,
            self.inner_initial,
            IdEnv {
                id: 0,
                population: 0,
            },
        )
    }

    fn interact(
        &self,
        m: &mut MacroMachine<'_>,
        f: &Frame,
        initiator: bool,
        before: StateId,
        after: StateId,
    ) -> Result<StateId, MachineError> {
        let id = read_counter(m.working, &f.id())? as i64;
        let ps = read_counter(m.working, &f.ps())? as i64;
        let sf = read_search(m.working, &f.search())?;
        let rid = read_counter(m.message, &f.id())? as i64;
        let rps = read_counter(m.message, &f.ps())? as i64;
        let rsf = read_search(m.message, &f.search())?;
        let ((id, ps, sf), mut action) = decide(initiator, id, ps, sf, rid, rps, rsf);
        write_counter(m.working, &f.id(), id as u64)?;
        write_counter(m.working, &f.ps(), ps as u64)?;
        write_search(m.working, &f.search(), sf)?;
        if action == Action::Run && m.working[f.fault()] == FAULT {
            action = Action::Idle;
        }
        let env = IdEnv {
            id: id as u64,
            population: ps as u64,
        };
        let next = match action {
            Action::Idle => {
                Self::set_marker(m, f, WrapperAction::Idle);
                self.emit_inner(m, f, before)?;
                before
            }
            Action::Reset => {
                Self::set_marker(m, f, WrapperAction::Reset);
                self.restore(m, f)?;
                self.emit_inner(m, f, self.inner_initial)?;
                self.inner_initial
            }
            Action::Fresh => {
                Self::set_marker(m, f, WrapperAction::FreshRun);
                self.restore(m, f)?;
                self.run_inner(m, f, self.inner_initial, env)?
            }
            Action::Run => {
                Self::set_marker(m, f, WrapperAction::InnerRun);
                self.run_inner(m, f, after, env)?
            }
        };
        Ok(next)
    }
}

impl MacroRoutine for Reinit {
    fn name(&self) -> String {
        format!("reinit:{}", self.inner.name())
    }

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.tick()?;
        let f = Frame::new(m.working.len(), self.shape())?;
        let inner_state = match self.codec.decode(m.state) {
            Phase::Start => self.initialize(m, &f)?,
            Phase::Ready(q) => {
                self.emit_inner(m, &f, q)?;
                q
            }
            Phase::Initiator(b, a) => self.interact(m, &f, true, b, a)?,
            Phase::Responder(b, a) => self.interact(m, &f, false, b, a)?,
        };
        m.state = self.codec.encode(Phase::Ready(inner_state));
        Self::emit_wrapper(m, &f)
    }

    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        let f = Frame::new(m.working.len(), self.shape())?;
        if let Phase::Ready(q) = self.codec.decode(m.state) {
            self.emit_inner(m, &f, q)?;
        }
        Self::emit_wrapper(m, &f)
    }

    fn probe(&self, view: SegmentsRef<'_>) -> Probe {
        let Ok(f) = Frame::new(view.working.len(), self.shape()) else {
            return Probe::default();
        };
        let Phase::Ready(q) = self.codec.decode(view.state) else {
            return Probe::default();
        };
        let inner = self.inner.probe(SegmentsRef {
            state: q,
            working: &view.working[f.inner_start()..],
            output: view.output,
            message: &view.message[f.inner_message()..f.inner_message() + f.inner_len],
        });
        Probe {
            id: read_counter(view.working, &f.id()).ok(),
            population: read_counter(view.working, &f.ps()).ok(),
            search_for: read_search(view.working, &f.search()).ok(),
            action: MARKERS
                .iter()
                .find(|(c, _)| *c == view.working[f.marker()])
                .map(|(_, a)| *a),
            halted: inner.halted,
            fault: Some(view.working[f.fault()] == FAULT),
        }
    }

    fn word_shape(&self) -> (usize, usize) {
        self.shape()
    }
}

/// Wraps a macro protocol. The wrapped protocol receives ids and the
/// believed population size through [`IdEnv`].
pub fn reinit_protocol(inner: &ProtocolSpec, c: u64) -> Result<ProtocolSpec, MachineError> {
    let Program::Macro(routine) = &inner.program else {
        return Err(MachineError::Malformed(format!(
            "{} is not a macro protocol",
            inner.name
        )));
    };
    if c == 0 {
        return Err(MachineError::Malformed(
            "inner step budget must be positive".into(),
        ));
    }
    let codec = Codec {
        q: inner.states.len(),
    };
    if codec.count() > StateId::MAX as usize {
        return Err(MachineError::Malformed(format!(
            "{} has too many states to wrap",
            inner.name
        )));
    }
    let mut states = vec!["start".to_string()];
    states.extend(inner.states.iter().map(|s| format!("r:{s}")));
    for tag in ["i", "s"] {
        for b in &inner.states {
            for a in &inner.states {
                states.push(format!("{tag}:{b}>{a}"));
            }
        }
    }
    let mut gamma = Vec::with_capacity(codec.q * codec.q);
    for p in 0..codec.q as StateId {
        for q in 0..codec.q as StateId {
            let (p2, q2) = inner.gamma(p, q);
            gamma.push((
                (codec.encode(Phase::Ready(p)), codec.encode(Phase::Ready(q))),
                (
                    codec.encode(Phase::Initiator(p, p2)),
                    codec.encode(Phase::Responder(q, q2)),
                ),
            ));
        }
    }
    let mut tape = inner.tape_alphabet.clone();
    for c in ['0', '1', NOT_SEARCHING, WAITING, FAULT]
        .into_iter()
        .chain(MARKERS.iter().map(|m| m.0))
    {
        if !tape.contains(&c) {
            tape.push(c);
        }
    }
    let (k, r) = routine.word_shape();
    let spare = inner
        .layout_hint
        .cap_const
        .saturating_sub(r)
        .div_ceil(k)
        .max(1);
    let (k, r) = (k + 4, r + 2);
    let inputs = match &inner.inputs {
        InputSet::Custom { name, accepts } => InputSet::Custom {
            name,
            accepts: *accepts,
        },
        other => other.clone(),
    };
    ProtocolSpec::new(
        format!("reinit:{}", inner.name),
        inner.input_alphabet.clone(),
        inputs,
        tape,
        states,
        codec.encode(Phase::Start),
        gamma,
        Program::Macro(Arc::new(Reinit {
            inner: routine.clone(),
            inner_initial: inner.initial,
            codec,
            budget: c,
        })),
        TapeLayout::new(k, r + k * spare + 1),
    )
}

/// Whether a probe shows the ids and sizes settled for a population of `n`.
pub fn settled(probes: &[Probe], n: usize) -> bool {
    let mut ids: Vec<u64> = probes.iter().filter_map(|p| p.id).collect();
    ids.sort_unstable();
    ids == (0..n as u64).collect::<Vec<_>>()
        && probes
            .iter()
            .all(|p| p.population == Some(n as u64) && p.search_for == Some(-1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_ids_split() {
        assert_eq!(decide(true, 0, 0, -1, 0, 0, -1), ((1, 2, 0), Action::Reset));
        assert_eq!(
            decide(false, 0, 0, -1, 0, 0, -1),
            ((0, 2, -2), Action::Reset)
        );
        assert_eq!(decide(true, 3, 4, -1, 3, 4, -1), ((4, 5, 0), Action::Reset));
    }

    #[test]
    fn ring_propagation_steps() {
        // n = 4 after the last increment: 3 searches for 0, 2 waits.
        // 3 meets 0: 3 finds what it searched for, 0 learns ps and searches
        // for 1.
        assert_eq!(decide(true, 3, 4, 0, 0, 3, -1), ((3, 4, -1), Action::Fresh));
        assert_eq!(decide(false, 0, 3, -1, 3, 4, 0), ((0, 4, 1), Action::Reset));
        // 0 meets 1.
        assert_eq!(decide(true, 0, 4, 1, 1, 2, -1), ((0, 4, -1), Action::Fresh));
        assert_eq!(decide(false, 1, 2, -1, 0, 4, 1), ((1, 4, 2), Action::Reset));
        // 1 meets the waiting 2.
        assert_eq!(decide(true, 1, 4, 2, 2, 4, -2), ((1, 4, -1), Action::Fresh));
        assert_eq!(
            decide(false, 2, 4, -2, 1, 4, 2),
            ((2, 4, -1), Action::Fresh)
        );
        // Afterwards everyone runs the wrapped protocol.
        assert_eq!(decide(true, 2, 4, -1, 0, 4, -1), ((2, 4, -1), Action::Run));
        assert_eq!(decide(true, 3, 4, -1, 2, 4, -1), ((3, 4, -1), Action::Run));
        assert_eq!(decide(true, 0, 4, -1, 3, 4, -1), ((0, 4, -1), Action::Run));
    }

    #[test]
    fn two_agents_close_the_ring() {
        // 1 searches for 0, 0 waits; they are each other's neighbours on
        // both sides.
        assert_eq!(decide(true, 1, 2, 0, 0, 2, -2), ((1, 2, -1), Action::Fresh));
        assert_eq!(
            decide(false, 0, 2, -2, 1, 2, 0),
            ((0, 2, -1), Action::Fresh)
        );
    }

    #[test]
    fn mismatched_sizes_block_runs() {
        assert_eq!(decide(true, 0, 4, -1, 2, 3, -1), ((0, 4, -1), Action::Idle));
        assert_eq!(decide(true, 0, 4, -1, 2, 4, -2), ((0, 4, -1), Action::Idle));
    }

    #[test]
    fn sentinels_round_trip() {
        let r = CounterRegion::new(1, 3);
        let mut cells = vec![BLANK; 5];
        for v in [-2, -1, 0, 5, 7] {
            write_search(&mut cells, &r, v).unwrap();
            assert_eq!(read_search(&cells, &r).unwrap(), v);
        }
    }

    #[test]
    fn state_codec_is_a_bijection() {
        let c = Codec { q: 5 };
        for s in 0..c.count() as StateId {
            assert_eq!(c.encode(c.decode(s)), s);
        }
    }
}
