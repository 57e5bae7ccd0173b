//! Single-tape Turing machines handed to the distributed simulators, with
//! direct runners used as reference deciders.
//!
//! The machine's input is the agents' input strings joined by `,`. The tape
//! is infinite to the right only; a left move on cell 0 stays put.

use std::collections::BTreeMap;

use crate::tape_machine::{MachineError, Move, Sym, BLANK, SEP};

/// Index into a machine's state list.
pub type TmState = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TmRule {
    pub next: TmState,
    pub write: Sym,
    pub moves: Move,
}

/// Alphabets, states and halting states shared by both machine kinds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TmHeader {
    pub name: String,
    pub input_alphabet: Vec<Sym>,
    pub tape_alphabet: Vec<Sym>,
    pub states: Vec<String>,
    pub start: TmState,
    pub accept: TmState,
    pub reject: TmState,
}

impl TmHeader {
    fn check(&self) -> Result<(), MachineError> {
        let bad = |m: String| Err(MachineError::Malformed(format!("{}: {m}", self.name)));
        let q = self.states.len();
        if [self.start, self.accept, self.reject]
            .iter()
            .any(|&s| s >= q)
        {
            return bad("start, accept or reject state out of range".into());
        }
        if self.accept == self.reject {
            return bad("accept and reject coincide".into());
        }
        if !self.tape_alphabet.contains(&BLANK) || !self.tape_alphabet.contains(&',') {
            return bad("tape alphabet needs blank and ','".into());
        }
        if let Some(c) = self
            .input_alphabet
            .iter()
            .find(|c| !self.tape_alphabet.contains(c) || **c == ',' || **c == BLANK)
        {
            return bad(format!("bad input symbol {c:?}"));
        }
        if let Some(c) = self.tape_alphabet.iter().find(|c| RESERVED.contains(c)) {
            return bad(format!("tape symbol {c:?} is reserved"));
        }
        Ok(())
    }

    pub fn state_id(&self, name: &str) -> Option<TmState> {
        self.states.iter().position(|s| s == name)
    }

    fn check_rule(&self, (s, a): (TmState, Sym), r: &TmRule) -> Result<(), MachineError> {
        let q = self.states.len();
        if s >= q || r.next >= q {
            return Err(MachineError::Malformed(format!(
                "{}: rule refers to an unknown state",
                self.name
            )));
        }
        if !self.tape_alphabet.contains(&a) || !self.tape_alphabet.contains(&r.write) {
            return Err(MachineError::Malformed(format!(
                "{}: rule uses a symbol outside the tape alphabet",
                self.name
            )));
        }
        if s == self.accept || s == self.reject {
            return Err(MachineError::Malformed(format!(
                "{}: halting state has a rule",
                self.name
            )));
        }
        Ok(())
    }
}

/// Symbols the simulators keep for themselves.
pub(crate) const RESERVED: [Sym; 2] = ['?', SEP];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TMSpec {
    pub header: TmHeader,
    pub delta: BTreeMap<(TmState, Sym), TmRule>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NTMSpec {
    pub header: TmHeader,
    pub relation: BTreeMap<(TmState, Sym), Vec<TmRule>>,
    /// Largest candidate list a simulator accepts.
    pub k_max: usize,
}

impl TMSpec {
    pub fn new(
        header: TmHeader,
        delta: BTreeMap<(TmState, Sym), TmRule>,
    ) -> Result<Self, MachineError> {
        header.check()?;
        for (&k, r) in &delta {
            header.check_rule(k, r)?;
        }
        Ok(Self { header, delta })
    }

    /// The same machine viewed as a relation with at most one candidate.
    pub fn as_relation(&self) -> NTMSpec {
        NTMSpec {
            header: self.header.clone(),
            relation: self.delta.iter().map(|(&k, &r)| (k, vec![r])).collect(),
            k_max: 1,
        }
    }

    /// Runs the machine on `input`. A missing rule rejects; `None` means
    /// the step limit ran out.
    pub fn decide(&self, input: &str, max_steps: u64) -> Option<bool> {
        let mut tape: Vec<Sym> = input.chars().collect();
        let (mut state, mut head) = (self.header.start, 0usize);
        for _ in 0..=max_steps {
            if state == self.header.accept {
                return Some(true);
            }
            if state == self.header.reject {
                return Some(false);
            }
            if head == tape.len() {
                tape.push(BLANK);
            }
            let Some(r) = self.delta.get(&(state, tape[head])) else {
                return Some(false);
            };
            tape[head] = r.write;
            head = match r.moves {
                Move::Left => head.saturating_sub(1),
                Move::Right => head + 1,
            };
            state = r.next;
        }
        None
    }
}

impl NTMSpec {
    pub fn new(
        header: TmHeader,
        relation: BTreeMap<(TmState, Sym), Vec<TmRule>>,
        k_max: usize,
    ) -> Result<Self, MachineError> {
        header.check()?;
        for (&k, rules) in &relation {
            for r in rules {
                header.check_rule(k, r)?;
            }
            if rules.len() > k_max {
                return Err(MachineError::TooManyChoices {
                    found: rules.len(),
                    limit: k_max,
                });
            }
        }
        Ok(Self {
            header,
            relation,
            k_max,
        })
    }

    /// Whether some branch accepts within `max_steps` steps. Branches are
    /// explored depth first; `None` means some branch hit the limit before
    /// any accepted.
    pub fn accepts(&self, input: &str, max_steps: u64) -> Option<bool> {
        let mut stack = vec![(
            self.header.start,
            0usize,
            input.chars().collect::<Vec<Sym>>(),
            0u64,
        )];
        let mut cut = false;
        while let Some((state, head, mut tape, steps)) = stack.pop() {
            if state == self.header.accept {
                return Some(true);
            }
            if state == self.header.reject {
                continue;
            }
            if steps == max_steps {
                cut = true;
                continue;
            }
            if head == tape.len() {
                tape.push(BLANK);
            }
            for r in self
                .relation
                .get(&(state, tape[head]))
                .into_iter()
                .flatten()
            {
                let mut t = tape.clone();
                t[head] = r.write;
                let h = match r.moves {
                    Move::Left => head.saturating_sub(1),
                    Move::Right => head + 1,
                };
                stack.push((r.next, h, t, steps + 1));
            }
        }
        if cut {
            None
        } else {
            Some(false)
        }
    }
}

/// The machine input for a population whose agents hold `inputs`.
pub fn tm_input<S: AsRef<str>>(inputs: &[S]) -> String {
    inputs
        .iter()
        .map(|s| s.as_ref())
        .collect::<Vec<_>>()
        .join(",")
}

fn header(name: &str, input: &str, tape: &str, states: &[&str]) -> TmHeader {
    let id = |s: &str| states.iter().position(|x| *x == s).unwrap();
    TmHeader {
        name: name.into(),
        input_alphabet: input.chars().collect(),
        tape_alphabet: tape.chars().collect(),
        states: states.iter().map(|s| s.to_string()).collect(),
        start: 0,
        accept: id("accept"),
        reject: id("reject"),
    }
}

fn rule(next: TmState, write: Sym, moves: Move) -> TmRule {
    TmRule { next, write, moves }
}

/// Accepts iff the number of `1`s is even.
pub fn parity_tm() -> TMSpec {
    let (even, odd, acc, rej) = (0, 1, 2, 3);
    let mut d = BTreeMap::new();
    for (s, flip) in [(even, odd), (odd, even)] {
        d.insert((s, '0'), rule(s, '0', Move::Right));
        d.insert((s, ','), rule(s, ',', Move::Right));
        d.insert((s, '1'), rule(flip, '1', Move::Right));
    }
    d.insert((even, BLANK), rule(acc, BLANK, Move::Left));
    d.insert((odd, BLANK), rule(rej, BLANK, Move::Left));
    TMSpec::new(
        header("parity", "01", "01,_", &["even", "odd", "accept", "reject"]),
        d,
    )
    .expect("parity machine is well formed")
}

/// Accepts iff all inputs are the same symbol.
pub fn all_equal_tm() -> TMSpec {
    let states = ["start", "seen_a", "seen_b", "accept", "reject"];
    let (start, sa, sb, acc, rej) = (0, 1, 2, 3, 4);
    let mut d = BTreeMap::new();
    d.insert((start, 'a'), rule(sa, 'a', Move::Right));
    d.insert((start, 'b'), rule(sb, 'b', Move::Right));
    d.insert((start, BLANK), rule(acc, BLANK, Move::Left));
    for (s, own, other) in [(sa, 'a', 'b'), (sb, 'b', 'a')] {
        d.insert((s, own), rule(s, own, Move::Right));
        d.insert((s, ','), rule(s, ',', Move::Right));
        d.insert((s, other), rule(rej, other, Move::Right));
        d.insert((s, BLANK), rule(acc, BLANK, Move::Left));
    }
    TMSpec::new(header("all_equal", "ab", "ab,_", &states), d)
        .expect("all_equal machine is well formed")
}

/// Walks to the right end of the input, then guesses once: one candidate
/// accepts, the other rejects.
pub fn one_accepting_branch_ntm() -> NTMSpec {
    let (scan, acc, rej) = (0, 1, 2);
    let mut r = BTreeMap::new();
    for c in ['0', '1', ','] {
        r.insert((scan, c), vec![rule(scan, c, Move::Right)]);
    }
    r.insert(
        (scan, BLANK),
        vec![rule(rej, BLANK, Move::Left), rule(acc, BLANK, Move::Left)],
    );
    NTMSpec::new(
        header("one_branch", "01", "01,_", &["scan", "accept", "reject"]),
        r,
        2,
    )
    .expect("well formed")
}

/// Both candidates reject.
pub fn all_rejecting_ntm() -> NTMSpec {
    let (scan, rej) = (0, 2);
    let mut r = BTreeMap::new();
    for c in ['0', '1', ','] {
        r.insert((scan, c), vec![rule(scan, c, Move::Right)]);
    }
    r.insert(
        (scan, BLANK),
        vec![rule(rej, BLANK, Move::Left), rule(rej, '0', Move::Left)],
    );
    NTMSpec::new(
        header("all_reject", "01", "01,_", &["scan", "accept", "reject"]),
        r,
        2,
    )
    .expect("well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_matches_direct_count() {
        let tm = parity_tm();
        for bits in 0u32..64 {
            for n in 1..=6 {
                let inputs: Vec<String> = (0..n).map(|i| ((bits >> i) & 1).to_string()).collect();
                let ones = inputs.iter().filter(|s| *s == "1").count();
                assert_eq!(tm.decide(&tm_input(&inputs), 1000), Some(ones % 2 == 0));
            }
        }
    }

    #[test]
    fn all_equal_machine() {
        let tm = all_equal_tm();
        assert_eq!(tm.decide("a,a,a,a", 100), Some(true));
        assert_eq!(tm.decide("b", 100), Some(true));
        assert_eq!(tm.decide("a,a,b", 100), Some(false));
    }

    #[test]
    fn ntm_branches() {
        assert_eq!(one_accepting_branch_ntm().accepts("0,1,1", 100), Some(true));
        assert_eq!(all_rejecting_ntm().accepts("0,1,1", 100), Some(false));
        assert_eq!(one_accepting_branch_ntm().accepts("0,1,1", 2), None);
        assert_eq!(parity_tm().as_relation().accepts("1,1", 100), Some(true));
    }

    #[test]
    fn malformed_machines_are_rejected() {
        let mut h = parity_tm().header;
        h.accept = h.reject;
        assert!(TMSpec::new(h, BTreeMap::new()).is_err());
        let mut h = parity_tm().header;
        h.tape_alphabet.push('?');
        assert!(TMSpec::new(h, BTreeMap::new()).is_err());
        let h = one_accepting_branch_ntm().header;
        let r = one_accepting_branch_ntm().relation;
        assert!(matches!(
            NTMSpec::new(h, r, 1),
            Err(MachineError::TooManyChoices { found: 2, limit: 1 })
        ));
    }
}
