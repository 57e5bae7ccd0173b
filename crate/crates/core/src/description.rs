//! Text descriptions of protocols and Turing machines.
//!
//! A file is a list of `[section]` headers, each followed by lines. Lines
//! starting with `;` and blank lines are ignored.
//!
//! ```text
//! [protocol]
//! name = flip
//! initial = i
//! inputs = single          ; any, single, or strings: a b c
//! layout = 4 8             ; cap_factor cap_const
//! [alphabets]
//! input = 01
//! tape = 01_#
//! [states]
//! i f r
//! [delta]
//! i 0 -> f 1 R             ; trailing "ready" clears the working flag
//! [gamma]
//! f f -> r f
//! [macro]
//! routine = mult           ; replaces [delta] with a built-in routine
//! ```
//!
//! Machine files use `[machine]` (keys name, start, accept, reject and,
//! for relations, k_max), `[alphabets]`, `[states]`, and either `[delta]`
//! with `q a -> p b R` lines or `[relation]` with `q a -> p b R | p' b' L`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::protocols::registry::{self, RegistryError};
use crate::protocols::tm::{NTMSpec, TMSpec, TmHeader, TmRule};
use crate::tape_machine::{
    InputSet, MachineError, Move, Program, ProtocolSpec, StateId, Sym, TapeLayout, Transition,
};

#[derive(Debug, Error)]
pub enum DescriptionError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("[{section}] lacks key {key}")]
    MissingKey {
        section: &'static str,
        key: &'static str,
    },
    #[error("routine {name}: {source}")]
    Routine {
        name: String,
        #[source]
        source: Box<RegistryError>,
    },
    #[error(transparent)]
    Machine(#[from] MachineError),
}

struct Line<'a> {
    no: usize,
    text: &'a str,
}

struct Sections<'a> {
    map: BTreeMap<&'a str, Vec<Line<'a>>>,
}

impl<'a> Sections<'a> {
    fn parse(text: &'a str) -> Result<Self, DescriptionError> {
        let mut map: BTreeMap<&str, Vec<Line>> = BTreeMap::new();
        let mut current = None;
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let text = raw.split_once(" ;").map_or(raw, |(a, _)| a).trim();
            if text.is_empty() || text.starts_with(';') {
                continue;
            }
            if let Some(name) = text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
                if map.contains_key(name) {
                    return Err(DescriptionError::Syntax {
                        line: no,
                        reason: format!("section [{name}] repeated"),
                    });
                }
                map.insert(name, Vec::new());
                current = Some(name);
                continue;
            }
            let Some(section) = current else {
                return Err(DescriptionError::Syntax {
                    line: no,
                    reason: "text before the first section".into(),
                });
            };
            map.get_mut(section)
                .expect("section exists")
                .push(Line { no, text });
        }
        Ok(Self { map })
    }

    fn get(&self, name: &'static str) -> Option<&[Line<'a>]> {
        self.map.get(name).map(|v| v.as_slice())
    }

    fn require(&self, name: &'static str) -> Result<&[Line<'a>], DescriptionError> {
        self.get(name).ok_or(DescriptionError::MissingSection(name))
    }

    fn keys(
        &self,
        name: &'static str,
    ) -> Result<BTreeMap<&'a str, (usize, &'a str)>, DescriptionError> {
        let mut out = BTreeMap::new();
        for l in self.require(name)? {
            let (k, v) = l
                .text
                .split_once('=')
                .ok_or_else(|| DescriptionError::Syntax {
                    line: l.no,
                    reason: "expected key = value".into(),
                })?;
            out.insert(k.trim(), (l.no, v.trim()));
        }
        Ok(out)
    }

    fn states(&self) -> Result<Vec<String>, DescriptionError> {
        let states: Vec<String> = self
            .require("states")?
            .iter()
            .flat_map(|l| l.text.split_whitespace())
            .map(String::from)
            .collect();
        if states.is_empty() {
            return Err(DescriptionError::Syntax {
                line: 0,
                reason: "no states".into(),
            });
        }
        Ok(states)
    }
}

fn key<'a>(
    keys: &BTreeMap<&str, (usize, &'a str)>,
    section: &'static str,
    key: &'static str,
) -> Result<(usize, &'a str), DescriptionError> {
    keys.get(key)
        .copied()
        .ok_or(DescriptionError::MissingKey { section, key })
}

fn symbols(s: &str) -> Vec<Sym> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn symbol(line: usize, s: &str) -> Result<Sym, DescriptionError> {
    let mut cs = s.chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(DescriptionError::Syntax {
            line,
            reason: format!("{s:?} is not a single symbol"),
        }),
    }
}

fn moves(line: usize, s: &str) -> Result<Move, DescriptionError> {
    match s {
        "L" => Ok(Move::Left),
        "R" => Ok(Move::Right),
        _ => Err(DescriptionError::Syntax {
            line,
            reason: format!("move {s:?} is neither L nor R"),
        }),
    }
}

fn move_name(m: Move) -> &'static str {
    match m {
        Move::Left => "L",
        Move::Right => "R",
    }
}

fn lookup(states: &[String], line: usize, name: &str) -> Result<usize, DescriptionError> {
    states
        .iter()
        .position(|s| s == name)
        .ok_or_else(|| DescriptionError::Syntax {
            line,
            reason: format!("unknown state {name}"),
        })
}

fn arrow<'a>(l: &Line<'a>) -> Result<(Vec<&'a str>, &'a str), DescriptionError> {
    let (lhs, rhs) = l
        .text
        .split_once("->")
        .ok_or_else(|| DescriptionError::Syntax {
            line: l.no,
            reason: "expected ->".into(),
        })?;
    Ok((lhs.split_whitespace().collect(), rhs))
}

fn syntax(line: usize, reason: &str) -> DescriptionError {
    DescriptionError::Syntax {
        line,
        reason: reason.into(),
    }
}

/// Parses a protocol description. Macro routines are looked up in the
/// built-in registry.
pub fn parse_protocol(text: &str) -> Result<ProtocolSpec, DescriptionError> {
    let s = Sections::parse(text)?;
    let head = s.keys("protocol")?;
    let alpha = s.keys("alphabets")?;
    let states = s.states()?;
    let name = key(&head, "protocol", "name")?.1.to_string();
    let (l, initial) = key(&head, "protocol", "initial")?;
    let initial = lookup(&states, l, initial)? as StateId;
    let layout = match head.get("layout") {
        None => TapeLayout::default(),
        Some(&(l, v)) => {
            let nums: Vec<usize> = v
                .split_whitespace()
                .map(|x| {
                    x.parse()
                        .map_err(|_| syntax(l, "layout needs two integers"))
                })
                .collect::<Result<_, _>>()?;
            match nums[..] {
                [f, c] => TapeLayout::new(f, c),
                _ => return Err(syntax(l, "layout needs two integers")),
            }
        }
    };
    let mut gamma = Vec::new();
    for l in s.get("gamma").unwrap_or_default() {
        let (lhs, rhs) = arrow(l)?;
        let rhs: Vec<&str> = rhs.split_whitespace().collect();
        let ([a, b], [c, d]) = (&lhs[..], &rhs[..]) else {
            return Err(syntax(l.no, "expected p q -> p' q'"));
        };
        let id = |x: &str| lookup(&states, l.no, x).map(|i| i as StateId);
        gamma.push(((id(a)?, id(b)?), (id(c)?, id(d)?)));
    }
    let (program, routine_inputs) = match (s.get("macro"), s.get("delta")) {
        (Some(_), Some(_)) => return Err(syntax(0, "[macro] and [delta] are exclusive")),
        (Some(_), None) => {
            let keys = s.keys("macro")?;
            let routine = key(&keys, "macro", "routine")?.1;
            let p = registry::routine(routine).map_err(|e| DescriptionError::Routine {
                name: routine.into(),
                source: Box::new(e),
            })?;
            (p.program, Some(p.inputs))
        }
        (None, delta) => {
            let mut table = BTreeMap::new();
            for l in delta.unwrap_or_default() {
                let (lhs, rhs) = arrow(l)?;
                let rhs: Vec<&str> = rhs.split_whitespace().collect();
                let (working, rhs) = match rhs[..] {
                    [.., "ready"] => (false, &rhs[..rhs.len() - 1]),
                    _ => (true, &rhs[..]),
                };
                let ([q, a], [p, b, m]) = (&lhs[..], rhs) else {
                    return Err(syntax(l.no, "expected q a -> p b L|R [ready]"));
                };
                let key = (lookup(&states, l.no, q)? as StateId, symbol(l.no, a)?);
                let t = Transition {
                    next: lookup(&states, l.no, p)? as StateId,
                    write: symbol(l.no, b)?,
                    moves: moves(l.no, m)?,
                    working,
                };
                if table.insert(key, t).is_some() {
                    return Err(syntax(l.no, "duplicate transition"));
                }
            }
            (Program::Micro(table), None)
        }
    };
    let (l, inputs) = head.get("inputs").copied().unwrap_or((0, "any"));
    let inputs = match inputs
        .split_once(':')
        .map_or((inputs, ""), |(a, b)| (a.trim(), b.trim()))
    {
        ("any", _) => InputSet::Any,
        ("single", _) => InputSet::SingleSymbol,
        ("strings", list) => InputSet::Strings(list.split_whitespace().map(String::from).collect()),
        ("custom", _) => {
            routine_inputs.ok_or_else(|| syntax(l, "custom inputs need a [macro] routine"))?
        }
        _ => return Err(syntax(l, "inputs must be any, single, strings or custom")),
    };
    Ok(ProtocolSpec::new(
        name,
        symbols(key(&alpha, "alphabets", "input")?.1),
        inputs,
        symbols(key(&alpha, "alphabets", "tape")?.1),
        states,
        initial,
        gamma,
        program,
        layout,
    )?)
}

/// Inverse of [`parse_protocol`].
pub fn serialize_protocol(p: &ProtocolSpec) -> String {
    let mut out = String::new();
    let inputs = match &p.inputs {
        InputSet::Any => "any".to_string(),
        InputSet::SingleSymbol => "single".to_string(),
        InputSet::Strings(list) => format!("strings: {}", list.join(" ")),
        InputSet::Custom { name, .. } => format!("custom: {name}"),
    };
    let _ = writeln!(
        out,
        "[protocol]\nname = {}\ninitial = {}\ninputs = {inputs}",
        p.name,
        p.state_name(p.initial)
    );
    let _ = writeln!(
        out,
        "layout = {} {}",
        p.layout_hint.cap_factor, p.layout_hint.cap_const
    );
    let alpha = |v: &[Sym]| v.iter().collect::<String>();
    let _ = writeln!(
        out,
        "[alphabets]\ninput = {}\ntape = {}",
        alpha(&p.input_alphabet),
        alpha(&p.tape_alphabet)
    );
    let _ = writeln!(out, "[states]\n{}", p.states.join(" "));
    match &p.program {
        Program::Micro(delta) => {
            out.push_str("[delta]\n");
            for (&(q, a), t) in delta {
                let ready = if t.working { "" } else { " ready" };
                let _ = writeln!(
                    out,
                    "{} {a} -> {} {} {}{ready}",
                    p.state_name(q),
                    p.state_name(t.next),
                    t.write,
                    move_name(t.moves)
                );
            }
        }
        Program::Macro(r) => {
            let _ = writeln!(out, "[macro]\nroutine = {}", r.name());
        }
    }
    out.push_str("[gamma]\n");
    for ((a, b), (c, d)) in p.gamma_entries() {
        let _ = writeln!(
            out,
            "{} {} -> {} {}",
            p.state_name(a),
            p.state_name(b),
            p.state_name(c),
            p.state_name(d)
        );
    }
    out
}

/// A parsed machine file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Machine {
    Deterministic(TMSpec),
    Nondeterministic(NTMSpec),
}

fn parse_rule(states: &[String], line: usize, rhs: &str) -> Result<TmRule, DescriptionError> {
    let parts: Vec<&str> = rhs.split_whitespace().collect();
    let [p, b, m] = parts[..] else {
        return Err(syntax(line, "expected p b L|R"));
    };
    Ok(TmRule {
        next: lookup(states, line, p)?,
        write: symbol(line, b)?,
        moves: moves(line, m)?,
    })
}

fn machine_lhs<'a>(
    states: &[String],
    l: &Line<'a>,
) -> Result<(usize, Sym, &'a str), DescriptionError> {
    let (lhs, rhs) = arrow(l)?;
    let [q, a] = lhs[..] else {
        return Err(syntax(l.no, "expected q a -> ..."));
    };
    Ok((lookup(states, l.no, q)?, symbol(l.no, a)?, rhs))
}

pub fn parse_machine(text: &str) -> Result<Machine, DescriptionError> {
    let s = Sections::parse(text)?;
    let head = s.keys("machine")?;
    let alpha = s.keys("alphabets")?;
    let states = s.states()?;
    let state = |k: &'static str| -> Result<usize, DescriptionError> {
        let (l, v) = key(&head, "machine", k)?;
        lookup(&states, l, v)
    };
    let header = TmHeader {
        name: key(&head, "machine", "name")?.1.to_string(),
        input_alphabet: symbols(key(&alpha, "alphabets", "input")?.1),
        tape_alphabet: symbols(key(&alpha, "alphabets", "tape")?.1),
        start: state("start")?,
        accept: state("accept")?,
        reject: state("reject")?,
        states: states.clone(),
    };
    match (s.get("delta"), s.get("relation")) {
        (Some(lines), None) => {
            let mut delta = BTreeMap::new();
            for l in lines {
                let (q, a, rhs) = machine_lhs(&states, l)?;
                if delta
                    .insert((q, a), parse_rule(&states, l.no, rhs)?)
                    .is_some()
                {
                    return Err(syntax(l.no, "duplicate transition"));
                }
            }
            Ok(Machine::Deterministic(TMSpec::new(header, delta)?))
        }
        (None, Some(lines)) => {
            let mut relation: BTreeMap<(usize, Sym), Vec<TmRule>> = BTreeMap::new();
            for l in lines {
                let (q, a, rhs) = machine_lhs(&states, l)?;
                let rules = rhs
                    .split('|')
                    .map(|r| parse_rule(&states, l.no, r))
                    .collect::<Result<Vec<_>, _>>()?;
                relation.entry((q, a)).or_default().extend(rules);
            }
            let k_max = match head.get("k_max") {
                Some(&(l, v)) => v
                    .parse()
                    .map_err(|_| syntax(l, "k_max must be an integer"))?,
                None => relation.values().map(Vec::len).max().unwrap_or(1),
            };
            Ok(Machine::Nondeterministic(NTMSpec::new(
                header, relation, k_max,
            )?))
        }
        (Some(_), Some(_)) => Err(syntax(0, "[delta] and [relation] are exclusive")),
        (None, None) => Err(DescriptionError::MissingSection("delta")),
    }
}

fn machine_head(out: &mut String, h: &TmHeader) {
    let _ = writeln!(
        out,
        "[machine]\nname = {}\nstart = {}\naccept = {}\nreject = {}",
        h.name, h.states[h.start], h.states[h.accept], h.states[h.reject]
    );
}

fn machine_tail(out: &mut String, h: &TmHeader) {
    let alpha = |v: &[Sym]| v.iter().collect::<String>();
    let _ = writeln!(
        out,
        "[alphabets]\ninput = {}\ntape = {}",
        alpha(&h.input_alphabet),
        alpha(&h.tape_alphabet)
    );
    let _ = writeln!(out, "[states]\n{}", h.states.join(" "));
}

fn rule_text(h: &TmHeader, r: &TmRule) -> String {
    format!("{} {} {}", h.states[r.next], r.write, move_name(r.moves))
}

pub fn serialize_machine(m: &Machine) -> String {
    let mut out = String::new();
    match m {
        Machine::Deterministic(tm) => {
            let h = &tm.header;
            machine_head(&mut out, h);
            machine_tail(&mut out, h);
            out.push_str("[delta]\n");
            for (&(q, a), r) in &tm.delta {
                let _ = writeln!(out, "{} {a} -> {}", h.states[q], rule_text(h, r));
            }
        }
        Machine::Nondeterministic(ntm) => {
            let h = &ntm.header;
            machine_head(&mut out, h);
            let _ = writeln!(out, "k_max = {}", ntm.k_max);
            machine_tail(&mut out, h);
            out.push_str("[relation]\n");
            for (&(q, a), rules) in &ntm.relation {
                let rhs: Vec<String> = rules.iter().map(|r| rule_text(h, r)).collect();
                let _ = writeln!(out, "{} {a} -> {}", h.states[q], rhs.join(" | "));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::tm::{all_equal_tm, one_accepting_branch_ntm, parity_tm};
    use crate::protocols::{mult_protocol, pow2_protocol};

    const FLIP: &str = "\
[protocol]
name = flip
initial = i
inputs = single
layout = 0 4
[alphabets]
input = 01
tape = 01_#
[states]
i f
[delta]
i 0 -> f 1 R      ; write a one
f _ -> f _ R ready
[gamma]
f f -> i i
";

    #[test]
    fn micro_protocol_round_trip() {
        let p = parse_protocol(FLIP).unwrap();
        assert_eq!(p.states, vec!["i", "f"]);
        assert_eq!(p.gamma(1, 1), (0, 0));
        let Program::Micro(d) = &p.program else {
            panic!("micro expected")
        };
        assert!(!d[&(1, '_')].working);
        let text = serialize_protocol(&p);
        let q = parse_protocol(&text).unwrap();
        assert_eq!(serialize_protocol(&q), text);
    }

    #[test]
    fn macro_protocol_round_trip() {
        for p in [mult_protocol(), pow2_protocol()] {
            let text = serialize_protocol(&p);
            let q = parse_protocol(&text).unwrap();
            assert_eq!(q.states, p.states);
            assert_eq!(
                q.gamma_entries().collect::<Vec<_>>(),
                p.gamma_entries().collect::<Vec<_>>()
            );
            assert_eq!(serialize_protocol(&q), text);
        }
    }

    #[test]
    fn machine_round_trip() {
        for m in [
            Machine::Deterministic(parity_tm()),
            Machine::Deterministic(all_equal_tm()),
            Machine::Nondeterministic(one_accepting_branch_ntm()),
        ] {
            let text = serialize_machine(&m);
            assert_eq!(parse_machine(&text).unwrap(), m);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = FLIP.replace("i 0 -> f 1 R", "i 0 -> g 1 R");
        assert!(matches!(
            parse_protocol(&bad),
            Err(DescriptionError::Syntax { line: 12, .. })
        ));
        let bad = FLIP.replace("f f -> i i", "f f -> i");
        assert!(matches!(
            parse_protocol(&bad),
            Err(DescriptionError::Syntax { line: 15, .. })
        ));
        assert!(matches!(
            parse_protocol("[protocol]\nname = x\n"),
            Err(DescriptionError::MissingSection(_))
        ));
        assert!(matches!(
            parse_protocol("name = x"),
            Err(DescriptionError::Syntax { line: 1, .. })
        ));
        let bad = FLIP.replace("[delta]", "[macro]\nroutine = nope\n[delta]");
        assert!(parse_protocol(&bad).is_err());
    }
}
