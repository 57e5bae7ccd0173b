//! A single agent: a control state, a bounded tape split into working, output
//! and message segments, a head, and the working flag.
//!
//! Protocols come in two flavours. A micro protocol lists its internal
//! transition function cell by cell and is executed one head move at a time.
//! A macro protocol replaces the internal phase by a registered routine that
//! transforms the agent's three segments in one invocation. Both are confined
//! to the agent's tape; a routine that runs out of room reports an error
//! instead of growing the tape.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::tapecalc::TapeCalcError;

/// Tape symbol.
pub type Sym = char;
/// Blank cell.
pub const BLANK: Sym = '_';
/// Segment separator. The last cell of each segment always holds it.
pub const SEP: Sym = '#';

/// Index into [`ProtocolSpec::states`].
pub type StateId = u16;

/// Default micro-step budget for one internal phase.
pub const DEFAULT_INTERNAL_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("input of length {len} does not fit a working segment of {cells} cells")]
    InputTooLong { len: usize, cells: usize },
    #[error("input {0:?} is not an admissible input string")]
    InputNotInX(String),
    #[error("attempt to overwrite the separator at cell {cell} with {symbol:?}")]
    SeparatorViolation { cell: usize, symbol: Sym },
    #[error("head moved off the tape from cell {head}")]
    HeadOutOfBounds { head: usize },
    #[error("no internal transition for state {state} on symbol {symbol:?}")]
    UndefinedTransition { state: String, symbol: Sym },
    #[error("internal phase did not finish within {budget} steps")]
    NonTerminatingInternal { budget: u64 },
    #[error("working flag cleared with the head at cell {head} instead of {expected}")]
    ReadyPositionViolation { head: usize, expected: usize },
    #[error("agent is not working")]
    NotWorking,
    #[error("wrapped protocol did not yield within {budget} steps")]
    InnerBudgetViolation { budget: u64 },
    #[error("input values must be positive")]
    ZeroValue,
    #[error("simulated machine needs more tape than the population provides")]
    TapeExhausted,
    #[error("{found} nondeterministic candidates exceed the protocol limit of {limit}")]
    TooManyChoices { found: usize, limit: usize },
    #[error("protocol {0} reads ids and population size; wrap it with reinit")]
    RequiresIdContext(String),
    #[error("malformed agent memory: {0}")]
    Malformed(String),
    #[error(transparent)]
    Counter(#[from] TapeCalcError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Left,
    Right,
}

/// One entry of the internal transition function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub next: StateId,
    pub write: Sym,
    pub moves: Move,
    /// New value of the working flag.
    pub working: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Working,
    Output,
    Message,
}

/// Per-segment cell count `cap_factor * ceil(log2 n) + cap_const`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TapeLayout {
    pub cap_factor: usize,
    pub cap_const: usize,
}

impl Default for TapeLayout {
    fn default() -> Self {
        Self {
            cap_factor: 4,
            cap_const: 8,
        }
    }
}

impl TapeLayout {
    pub fn new(cap_factor: usize, cap_const: usize) -> Self {
        Self {
            cap_factor,
            cap_const,
        }
    }

    pub fn segment_cells(&self, n: usize) -> usize {
        self.cap_factor * ceil_log2(n) + self.cap_const
    }
}

/// `ceil(log2 n)`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// The set X of admissible input strings.
#[derive(Clone)]
pub enum InputSet {
    /// Every string over the input alphabet.
    Any,
    /// Exactly one input symbol.
    SingleSymbol,
    /// An explicit finite list.
    Strings(Vec<String>),
    /// A named membership test.
    Custom {
        name: &'static str,
        accepts: fn(&str) -> bool,
    },
}

impl fmt::Debug for InputSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSet::Any => write!(f, "Any"),
            InputSet::SingleSymbol => write!(f, "SingleSymbol"),
            InputSet::Strings(s) => f.debug_tuple("Strings").field(s).finish(),
            InputSet::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl InputSet {
    pub fn contains(&self, alphabet: &[Sym], s: &str) -> bool {
        let over_alphabet = s.chars().all(|c| alphabet.contains(&c));
        match self {
            InputSet::Any => over_alphabet,
            InputSet::SingleSymbol => over_alphabet && s.chars().count() == 1,
            InputSet::Strings(list) => list.iter().any(|x| x == s),
            InputSet::Custom { accepts, .. } => over_alphabet && accepts(s),
        }
    }
}

/// Ids and population size made available to protocols that run on top of
/// the reinitiation wrapper.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdEnv {
    pub id: u64,
    pub population: u64,
}

/// Instrumentation read from an agent's memory by the protocol that owns it.
/// Used only by traces and tests; never visible to other agents.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Probe {
    pub id: Option<u64>,
    pub population: Option<u64>,
    pub search_for: Option<i64>,
    pub action: Option<WrapperAction>,
    pub halted: Option<bool>,
    /// The wrapped protocol failed and is frozen until its next restart.
    pub fault: Option<bool>,
}

/// What the reinitiation wrapper did to the wrapped protocol during the most
/// recent interaction of an agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WrapperAction {
    Idle,
    /// Working block restored from the input backup, output cleared.
    Reset,
    /// Wrapped protocol restarted from its initial state, received data ignored.
    FreshRun,
    /// Wrapped protocol ran on the received message.
    InnerRun,
}

/// Read-only view over an agent's segment bodies (separators excluded).
#[derive(Clone, Copy, Debug)]
pub struct SegmentsRef<'a> {
    pub state: StateId,
    pub working: &'a [Sym],
    pub output: &'a [Sym],
    pub message: &'a [Sym],
}

/// Mutable view handed to a macro routine.
pub struct MacroMachine<'a> {
    pub state: StateId,
    pub working: &'a mut [Sym],
    pub output: &'a mut [Sym],
    pub message: &'a mut [Sym],
    pub env: Option<IdEnv>,
    budget: u64,
    used: u64,
    nested: bool,
}

impl<'a> MacroMachine<'a> {
    pub fn new(
        state: StateId,
        working: &'a mut [Sym],
        output: &'a mut [Sym],
        message: &'a mut [Sym],
        env: Option<IdEnv>,
        budget: u64,
        nested: bool,
    ) -> Self {
        Self {
            state,
            working,
            output,
            message,
            env,
            budget,
            used: 0,
            nested,
        }
    }

    /// Accounts for one step of work.
    pub fn tick(&mut self) -> Result<(), MachineError> {
        if self.used >= self.budget {
            return Err(if self.nested {
                MachineError::InnerBudgetViolation {
                    budget: self.budget,
                }
            } else {
                MachineError::NonTerminatingInternal {
                    budget: self.budget,
                }
            });
        }
        self.used += 1;
        Ok(())
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.used
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn env(&self) -> Result<IdEnv, MachineError> {
        self.env
            .ok_or_else(|| MachineError::RequiresIdContext("ipaloma".into()))
    }

    pub fn view(&self) -> SegmentsRef<'_> {
        SegmentsRef {
            state: self.state,
            working: self.working,
            output: self.output,
            message: self.message,
        }
    }

    /// Writes `s` at the start of the output segment and blanks the rest.
    pub fn set_output(&mut self, s: &str) -> Result<(), MachineError> {
        write_str(self.output, s)
    }

    pub fn output_string(&self) -> String {
        trimmed(self.output)
    }
}

/// Writes `s` into `cells`, padding with blanks.
pub fn write_str(cells: &mut [Sym], s: &str) -> Result<(), MachineError> {
    let n = s.chars().count();
    if n > cells.len() {
        return Err(MachineError::Counter(TapeCalcError::CounterOverflow));
    }
    cells.fill(BLANK);
    for (cell, c) in cells.iter_mut().zip(s.chars()) {
        *cell = c;
    }
    Ok(())
}

/// Contents up to the trailing blanks.
pub fn trimmed(cells: &[Sym]) -> String {
    let end = cells.iter().rposition(|&c| c != BLANK).map_or(0, |p| p + 1);
    cells[..end].iter().collect()
}

/// A named deterministic tape transformation executed as a whole internal
/// phase. The routine reads `state` to learn why it was invoked, rewrites any
/// of the three segment bodies and leaves its resting state in `state`.
pub trait MacroRoutine: Send + Sync {
    fn name(&self) -> String;

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError>;

    /// Rewrites the agent's own message from its working memory.
    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError>;

    fn probe(&self, _view: SegmentsRef<'_>) -> Probe {
        Probe::default()
    }

    /// Whether the routine needs ids and population size from a wrapper.
    fn requires_ids(&self) -> bool {
        false
    }

    /// Word count and single-cell reserve used to size counters: a routine
    /// with working body `len` uses words of `(len - reserve) / words` cells.
    fn word_shape(&self) -> (usize, usize) {
        (4, 1)
    }
}

#[derive(Clone)]
pub enum Program {
    Micro(BTreeMap<(StateId, Sym), Transition>),
    Macro(Arc<dyn MacroRoutine>),
}

impl fmt::Debug for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Program::Micro(d) => write!(f, "Micro({} transitions)", d.len()),
            Program::Macro(r) => write!(f, "Macro({})", r.name()),
        }
    }
}

/// A protocol: alphabets, input strings, states, internal and external
/// transition functions and the initial state.
#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    pub name: String,
    pub input_alphabet: Vec<Sym>,
    pub inputs: InputSet,
    pub tape_alphabet: Vec<Sym>,
    pub states: Vec<String>,
    pub initial: StateId,
    /// Dense `|Q| x |Q|` table, row = initiator.
    gamma: Vec<(StateId, StateId)>,
    pub program: Program,
    /// Layout used when a run does not specify one.
    pub layout_hint: TapeLayout,
}

impl ProtocolSpec {
    /// Builds a protocol. `gamma` lists the non-identity entries of the
    /// external transition function; every other pair maps to itself.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        input_alphabet: Vec<Sym>,
        inputs: InputSet,
        tape_alphabet: Vec<Sym>,
        states: Vec<String>,
        initial: StateId,
        gamma: impl IntoIterator<Item = ((StateId, StateId), (StateId, StateId))>,
        program: Program,
        layout_hint: TapeLayout,
    ) -> Result<Self, MachineError> {
        let name = name.into();
        let bad = |m: String| Err(MachineError::Malformed(format!("{name}: {m}")));
        let q = states.len();
        if q == 0 || q > StateId::MAX as usize {
            return bad(format!("{q} states"));
        }
        if initial as usize >= q {
            return bad("initial state out of range".into());
        }
        if input_alphabet.contains(&SEP) || input_alphabet.contains(&BLANK) {
            return bad("input alphabet contains # or blank".into());
        }
        if !tape_alphabet.contains(&SEP) || !tape_alphabet.contains(&BLANK) {
            return bad("tape alphabet lacks # or blank".into());
        }
        if let Some(c) = input_alphabet.iter().find(|c| !tape_alphabet.contains(c)) {
            return bad(format!("input symbol {c:?} missing from tape alphabet"));
        }
        let mut table: Vec<(StateId, StateId)> = (0..q * q)
            .map(|i| ((i / q) as StateId, (i % q) as StateId))
            .collect();
        for ((a, b), out) in gamma {
            if a as usize >= q || b as usize >= q || out.0 as usize >= q || out.1 as usize >= q {
                return bad("gamma refers to an unknown state".into());
            }
            table[a as usize * q + b as usize] = out;
        }
        if let Program::Micro(delta) = &program {
            for (&(s, sym), t) in delta {
                if s as usize >= q || t.next as usize >= q {
                    return bad("delta refers to an unknown state".into());
                }
                if !tape_alphabet.contains(&sym) || !tape_alphabet.contains(&t.write) {
                    return bad(format!(
                        "delta uses a symbol outside the tape alphabet near {sym:?}"
                    ));
                }
            }
        }
        Ok(Self {
            name,
            input_alphabet,
            inputs,
            tape_alphabet,
            states,
            initial,
            gamma: table,
            program,
            layout_hint,
        })
    }

    pub fn gamma(&self, initiator: StateId, responder: StateId) -> (StateId, StateId) {
        self.gamma[initiator as usize * self.states.len() + responder as usize]
    }

    /// Non-identity entries of the external transition function.
    pub fn gamma_entries(
        &self,
    ) -> impl Iterator<Item = ((StateId, StateId), (StateId, StateId))> + '_ {
        let q = self.states.len();
        self.gamma.iter().enumerate().filter_map(move |(i, &out)| {
            let key = ((i / q) as StateId, (i % q) as StateId);
            (key != out).then_some((key, out))
        })
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s as usize]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states
            .iter()
            .position(|s| s == name)
            .map(|i| i as StateId)
    }

    pub fn requires_ids(&self) -> bool {
        matches!(&self.program, Program::Macro(r) if r.requires_ids())
    }

    pub fn probe(&self, agent: &AgentConfig) -> Probe {
        match &self.program {
            Program::Macro(r) => r.probe(agent.segments()),
            Program::Micro(_) => Probe::default(),
        }
    }
}

/// Snapshot of one agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentConfig {
    pub state: StateId,
    pub tape: Box<[Sym]>,
    pub head: usize,
    pub working: bool,
}

impl AgentConfig {
    pub fn segment_cells(&self) -> usize {
        self.tape.len() / 3
    }

    /// Cell the head must rest on while the agent is ready.
    pub fn ready_position(&self) -> usize {
        2 * self.segment_cells() - 1
    }

    pub fn is_separator_cell(&self, cell: usize) -> bool {
        (cell + 1).is_multiple_of(self.segment_cells())
    }

    pub fn segment(&self, seg: Segment) -> &[Sym] {
        let s = self.segment_cells();
        let base = match seg {
            Segment::Working => 0,
            Segment::Output => s,
            Segment::Message => 2 * s,
        };
        &self.tape[base..base + s - 1]
    }

    pub fn segment_mut(&mut self, seg: Segment) -> &mut [Sym] {
        let s = self.segment_cells();
        let base = match seg {
            Segment::Working => 0,
            Segment::Output => s,
            Segment::Message => 2 * s,
        };
        &mut self.tape[base..base + s - 1]
    }

    pub fn segments(&self) -> SegmentsRef<'_> {
        SegmentsRef {
            state: self.state,
            working: self.segment(Segment::Working),
            output: self.segment(Segment::Output),
            message: self.segment(Segment::Message),
        }
    }

    /// The three segment bodies as disjoint mutable slices.
    pub fn segments_mut(&mut self) -> (&mut [Sym], &mut [Sym], &mut [Sym]) {
        let s = self.segment_cells();
        let (w, rest) = self.tape.split_at_mut(s);
        let (o, m) = rest.split_at_mut(s);
        (&mut w[..s - 1], &mut o[..s - 1], &mut m[..s - 1])
    }

    /// Output tape contents without trailing blanks.
    pub fn output(&self) -> String {
        trimmed(self.segment(Segment::Output))
    }

    /// The `(q, l, r, f)` form: `l` ends with the scanned cell.
    pub fn quadruple(&self, protocol: &ProtocolSpec) -> (String, String, String, bool) {
        (
            protocol.state_name(self.state).to_string(),
            self.tape[..=self.head].iter().collect(),
            self.tape[self.head + 1..].iter().collect(),
            self.working,
        )
    }

    pub fn separators_intact(&self) -> bool {
        let s = self.segment_cells();
        (1..=3).all(|k| self.tape[k * s - 1] == SEP)
    }

    /// One application of the internal transition function, in place.
    pub fn step(&mut self, protocol: &ProtocolSpec, budget: u64) -> Result<(), MachineError> {
        if !self.working {
            return Err(MachineError::NotWorking);
        }
        match &protocol.program {
            Program::Micro(delta) => {
                let scanned = self.tape[self.head];
                let t = delta.get(&(self.state, scanned)).ok_or_else(|| {
                    MachineError::UndefinedTransition {
                        state: protocol.state_name(self.state).to_string(),
                        symbol: scanned,
                    }
                })?;
                if self.is_separator_cell(self.head) && t.write != SEP {
                    return Err(MachineError::SeparatorViolation {
                        cell: self.head,
                        symbol: t.write,
                    });
                }
                let head = match t.moves {
                    Move::Left => self.head.checked_sub(1),
                    Move::Right => Some(self.head + 1).filter(|&h| h < self.tape.len()),
                }
                .ok_or(MachineError::HeadOutOfBounds { head: self.head })?;
                self.tape[self.head] = t.write;
                self.state = t.next;
                self.head = head;
                self.working = t.working;
                if !self.working && self.head != self.ready_position() {
                    return Err(MachineError::ReadyPositionViolation {
                        head: self.head,
                        expected: self.ready_position(),
                    });
                }
                Ok(())
            }
            Program::Macro(routine) => {
                let state = self.state;
                let (w, o, m) = self.segments_mut();
                let mut mm = MacroMachine::new(state, w, o, m, None, budget, false);
                if routine.requires_ids() {
                    return Err(MachineError::RequiresIdContext(protocol.name.clone()));
                }
                routine.run(&mut mm)?;
                let next = mm.state;
                self.state = next;
                self.head = self.ready_position();
                self.working = false;
                Ok(())
            }
        }
    }

    /// Runs internal steps until the agent is ready; returns the step count.
    pub fn run_to_ready(
        &mut self,
        protocol: &ProtocolSpec,
        budget: u64,
    ) -> Result<u64, MachineError> {
        if !self.working {
            return Err(MachineError::NotWorking);
        }
        let mut steps = 0;
        while self.working {
            if steps >= budget {
                return Err(MachineError::NonTerminatingInternal { budget });
            }
            self.step(protocol, budget)?;
            steps += 1;
        }
        Ok(steps)
    }
}

/// Fresh agent holding `input` on its working segment.
pub fn init_agent(
    protocol: &ProtocolSpec,
    input: &str,
    layout: &TapeLayout,
    n: usize,
) -> Result<AgentConfig, MachineError> {
    init_agent_cells(protocol, input, layout.segment_cells(n))
}

pub fn init_agent_cells(
    protocol: &ProtocolSpec,
    input: &str,
    segment_cells: usize,
) -> Result<AgentConfig, MachineError> {
    if !protocol.inputs.contains(&protocol.input_alphabet, input) {
        return Err(MachineError::InputNotInX(input.to_string()));
    }
    let len = input.chars().count();
    if segment_cells < 1 || len >= segment_cells {
        return Err(MachineError::InputTooLong {
            len,
            cells: segment_cells,
        });
    }
    let mut tape = vec![BLANK; 3 * segment_cells];
    for k in 1..=3 {
        tape[k * segment_cells - 1] = SEP;
    }
    for (cell, c) in tape.iter_mut().zip(input.chars()) {
        *cell = c;
    }
    Ok(AgentConfig {
        state: protocol.initial,
        tape: tape.into_boxed_slice(),
        head: 0,
        working: true,
    })
}

/// Pure form of [`AgentConfig::step`].
pub fn internal_step(
    protocol: &ProtocolSpec,
    a: &AgentConfig,
) -> Result<AgentConfig, MachineError> {
    let mut next = a.clone();
    next.step(protocol, DEFAULT_INTERNAL_BUDGET)?;
    Ok(next)
}

/// Pure form of [`AgentConfig::run_to_ready`].
pub fn run_until_ready(
    protocol: &ProtocolSpec,
    a: &AgentConfig,
    budget: u64,
) -> Result<AgentConfig, MachineError> {
    let mut next = a.clone();
    next.run_to_ready(protocol, budget)?;
    Ok(next)
}
