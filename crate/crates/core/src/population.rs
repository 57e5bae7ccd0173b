//! Population configurations, encounters and agent transitions.
//!
//! Agent indices are simulator bookkeeping. Protocol code only ever sees its
//! own tape and state, so anonymity is preserved.

use std::fmt::Write as _;

use thiserror::Error;

use crate::tape_machine::{
    init_agent, AgentConfig, MachineError, ProtocolSpec, Segment, TapeLayout,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PopulationError {
    #[error("an agent cannot meet itself")]
    SameAgent,
    #[error("agent {0} is not working")]
    AgentNotWorking(usize),
    #[error("agent index {index} out of range for n = {n}")]
    NoSuchAgent { index: usize, n: usize },
    #[error("agent {agent}: {source}")]
    Machine { agent: usize, source: MachineError },
    #[error("malformed snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}

/// One input string per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InputAssignment {
    pub inputs: Vec<String>,
}

impl InputAssignment {
    pub fn new<S: Into<String>>(inputs: impl IntoIterator<Item = S>) -> Self {
        Self {
            inputs: inputs.into_iter().map(Into::into).collect(),
        }
    }

    /// Expands `symbol:count` pairs in the given order.
    pub fn from_counts<S: AsRef<str>>(counts: &[(S, usize)]) -> Self {
        let mut inputs = Vec::new();
        for (s, k) in counts {
            inputs.extend(std::iter::repeat_n(s.as_ref().to_string(), *k));
        }
        Self { inputs }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn count(&self, s: &str) -> usize {
        self.inputs.iter().filter(|x| *x == s).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PopulationConfig {
    pub agents: Vec<AgentConfig>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncounterOutcome {
    pub config: PopulationConfig,
    pub effective: bool,
}

impl PopulationConfig {
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn outputs(&self) -> Vec<String> {
        self.agents.iter().map(AgentConfig::output).collect()
    }

    fn check(&self, index: usize) -> Result<(), PopulationError> {
        if index < self.n() {
            Ok(())
        } else {
            Err(PopulationError::NoSuchAgent { index, n: self.n() })
        }
    }

    /// Applies the encounter `(u, v)` in place; returns whether it was
    /// effective.
    pub fn apply_encounter(
        &mut self,
        protocol: &ProtocolSpec,
        u: usize,
        v: usize,
    ) -> Result<bool, PopulationError> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Err(PopulationError::SameAgent);
        }
        if self.agents[u].working || self.agents[v].working {
            return Ok(false);
        }
        let (qu, qv) = protocol.gamma(self.agents[u].state, self.agents[v].state);
        let (a, b) = pair_mut(&mut self.agents, u, v);
        a.segment_mut(Segment::Message)
            .swap_with_slice(b.segment_mut(Segment::Message));
        a.state = qu;
        b.state = qv;
        a.working = true;
        b.working = true;
        Ok(true)
    }

    /// One internal step of agent `u`, in place.
    pub fn apply_agent_transition(
        &mut self,
        protocol: &ProtocolSpec,
        u: usize,
        budget: u64,
    ) -> Result<(), PopulationError> {
        self.check(u)?;
        if !self.agents[u].working {
            return Err(PopulationError::AgentNotWorking(u));
        }
        self.agents[u]
            .step(protocol, budget)
            .map_err(|source| PopulationError::Machine { agent: u, source })
    }

    /// Runs agent `u` until it is ready; returns the step count.
    pub fn settle_agent(
        &mut self,
        protocol: &ProtocolSpec,
        u: usize,
        budget: u64,
    ) -> Result<u64, PopulationError> {
        self.check(u)?;
        if !self.agents[u].working {
            return Ok(0);
        }
        self.agents[u]
            .run_to_ready(protocol, budget)
            .map_err(|source| PopulationError::Machine { agent: u, source })
    }

    /// Line-oriented snapshot: one agent per line with tab-separated index,
    /// state name, working, output and message segments (separators
    /// included), head and flag.
    pub fn to_snapshot(&self, protocol: &ProtocolSpec) -> String {
        let mut out = String::new();
        for (i, a) in self.agents.iter().enumerate() {
            let s = a.segment_cells();
            let seg = |k: usize| a.tape[k * s..(k + 1) * s].iter().collect::<String>();
            writeln!(
                out,
                "{i}\t{}\t{}\t{}\t{}\t{}\t{}",
                protocol.state_name(a.state),
                seg(0),
                seg(1),
                seg(2),
                a.head,
                u8::from(a.working)
            )
            .unwrap();
        }
        out
    }

    pub fn from_snapshot(protocol: &ProtocolSpec, text: &str) -> Result<Self, PopulationError> {
        let mut agents = Vec::new();
        for (line_no, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let bad = |reason: &str| PopulationError::Snapshot {
                line: line_no + 1,
                reason: reason.into(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            if fields[0].parse::<usize>().ok() != Some(agents.len()) {
                return Err(bad("index out of order"));
            }
            let state = protocol
                .state_id(fields[1])
                .ok_or_else(|| bad("unknown state"))?;
            let tape: Vec<char> = fields[2..5].iter().flat_map(|s| s.chars()).collect();
            let head = fields[5].parse().map_err(|_| bad("head"))?;
            let working = match fields[6] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("flag")),
            };
            let agent = AgentConfig {
                state,
                tape: tape.into_boxed_slice(),
                head,
                working,
            };
            if !agent.tape.len().is_multiple_of(3)
                || agent.tape.is_empty()
                || !agent.separators_intact()
                || head >= agent.tape.len()
            {
                return Err(bad("tape shape"));
            }
            agents.push(agent);
        }
        Ok(Self { agents })
    }
}

fn pair_mut<T>(xs: &mut [T], u: usize, v: usize) -> (&mut T, &mut T) {
    if u < v {
        let (l, r) = xs.split_at_mut(v);
        (&mut l[u], &mut r[0])
    } else {
        let (l, r) = xs.split_at_mut(u);
        (&mut r[0], &mut l[v])
    }
}

pub fn initial_config(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    layout: &TapeLayout,
) -> Result<PopulationConfig, PopulationError> {
    let n = assignment.len();
    let agents = assignment
        .inputs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            init_agent(protocol, s, layout, n)
                .map_err(|source| PopulationError::Machine { agent: i, source })
        })
        .collect::<Result<_, _>>()?;
    Ok(PopulationConfig { agents })
}

pub fn encounter(
    protocol: &ProtocolSpec,
    c: &PopulationConfig,
    u: usize,
    v: usize,
) -> Result<EncounterOutcome, PopulationError> {
    let mut config = c.clone();
    let effective = config.apply_encounter(protocol, u, v)?;
    Ok(EncounterOutcome { config, effective })
}

pub fn agent_transition(
    protocol: &ProtocolSpec,
    c: &PopulationConfig,
    u: usize,
) -> Result<PopulationConfig, PopulationError> {
    let mut next = c.clone();
    next.apply_agent_transition(protocol, u, crate::tape_machine::DEFAULT_INTERNAL_BUDGET)?;
    Ok(next)
}

pub fn outputs(c: &PopulationConfig) -> Vec<String> {
    c.outputs()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::tape_machine::{write_str, InputSet, Move, Program, Transition, BLANK, SEP};

    /// q0/q0 meets become q1/q2; q1 and q2 park immediately from the cell
    /// left of the pre-message separator.
    fn roles() -> ProtocolSpec {
        let mut delta = BTreeMap::new();
        for q in 0..3 {
            for c in [BLANK, 'a', 'b', 'c', 'm', '1', '2'] {
                delta.insert(
                    (q, c),
                    Transition {
                        next: q,
                        write: c,
                        moves: Move::Right,
                        working: false,
                    },
                );
            }
        }
        ProtocolSpec::new(
            "roles",
            "abc".chars().collect(),
            InputSet::SingleSymbol,
            "abcm12_#".chars().collect(),
            vec!["q0".into(), "q1".into(), "q2".into()],
            0,
            [((0, 0), (1, 2))],
            Program::Micro(delta),
            TapeLayout::default(),
        )
        .unwrap()
    }

    fn ready(p: &ProtocolSpec, msgs: &[&str]) -> PopulationConfig {
        let a = InputAssignment::new(msgs.iter().map(|_| "a"));
        let mut c = initial_config(p, &a, &TapeLayout::new(0, 4)).unwrap();
        for (agent, m) in c.agents.iter_mut().zip(msgs) {
            write_str(agent.segment_mut(Segment::Message), m).unwrap();
            agent.working = false;
            agent.head = agent.ready_position();
        }
        c
    }

    #[test]
    fn initial_configs() {
        let p = roles();
        let c = initial_config(
            &p,
            &InputAssignment::new(["a", "b", "c"]),
            &TapeLayout::default(),
        )
        .unwrap();
        assert_eq!(c.n(), 3);
        assert!(c.agents.iter().all(|a| a.state == 0 && a.working));
        let one = initial_config(&p, &InputAssignment::new(["a"]), &TapeLayout::default()).unwrap();
        assert_eq!(one.n(), 1);
        assert!(matches!(
            initial_config(
                &p,
                &InputAssignment::new(["a", "d"]),
                &TapeLayout::default()
            ),
            Err(PopulationError::Machine {
                agent: 1,
                source: MachineError::InputNotInX(_)
            })
        ));
    }

    #[test]
    fn effective_encounter_swaps_messages() {
        let p = roles();
        let c = ready(&p, &["m1", "m2", "m"]);
        let out = encounter(&p, &c, 0, 1).unwrap();
        assert!(out.effective);
        let a = &out.config.agents;
        assert_eq!((a[0].state, a[1].state), (1, 2));
        assert_eq!(
            crate::tape_machine::trimmed(a[0].segment(Segment::Message)),
            "m2"
        );
        assert_eq!(
            crate::tape_machine::trimmed(a[1].segment(Segment::Message)),
            "m1"
        );
        assert!(a[0].working && a[1].working);
        assert_eq!(a[2], c.agents[2]);
        assert!(a.iter().all(|x| x.separators_intact()));
    }

    #[test]
    fn busy_participant_is_a_noop() {
        let p = roles();
        let mut c = ready(&p, &["m1", "m2"]);
        c.agents[0].working = true;
        let out = encounter(&p, &c, 0, 1).unwrap();
        assert!(!out.effective);
        assert_eq!(out.config, c);
        assert_eq!(encounter(&p, &c, 1, 1), Err(PopulationError::SameAgent));
    }

    #[test]
    fn agent_transitions_touch_one_agent() {
        let p = roles();
        let c = initial_config(
            &p,
            &InputAssignment::new(["a", "b"]),
            &TapeLayout::new(0, 2),
        )
        .unwrap();
        // Segment of 2 cells: head at 0 moves right to cell 1 (working separator)
        // and clears the flag away from the ready position.
        assert!(matches!(
            agent_transition(&p, &c, 0),
            Err(PopulationError::Machine {
                agent: 0,
                source: MachineError::ReadyPositionViolation { .. }
            })
        ));
        let mut parked = c.clone();
        parked.agents[0].head = parked.agents[0].ready_position() - 1;
        let next = agent_transition(&p, &parked, 0).unwrap();
        assert!(!next.agents[0].working);
        assert_eq!(next.agents[1], parked.agents[1]);
        assert_eq!(
            agent_transition(&p, &next, 0),
            Err(PopulationError::AgentNotWorking(0))
        );
    }

    #[test]
    fn outputs_trim_blanks() {
        let p = roles();
        let mut c = ready(&p, &["", "", ""]);
        write_str(c.agents[0].segment_mut(Segment::Output), "1").unwrap();
        write_str(c.agents[2].segment_mut(Segment::Output), "10").unwrap();
        assert_eq!(outputs(&c), vec!["1", "", "10"]);
    }

    #[test]
    fn snapshot_round_trip() {
        let p = roles();
        let c = ready(&p, &["m1", "m2"]);
        let text = c.to_snapshot(&p);
        assert_eq!(
            text.lines().next().unwrap(),
            "0\tq0\ta__#\t___#\tm1_#\t7\t0"
        );
        assert_eq!(PopulationConfig::from_snapshot(&p, &text).unwrap(), c);
        assert!(PopulationConfig::from_snapshot(&p, "0\tq0\ta__#").is_err());
        let _ = SEP;
    }
}
