//! Exhaustive exploration of the configuration graph of a small population.
//!
//! Configurations are identified up to agent permutation: the canonical key
//! concatenates the agents' serialized forms in sorted order. Each edge is
//! labelled with whether it changed the output of an agent taking part in it,
//! which keeps output stability exact even though the nodes forget which
//! agent is which.
//!
//! A configuration is output stable when no output-changing edge is
//! reachable from it. The verdict for an expected output array is
//! `StablyComputes` exactly when every reachable configuration can still
//! reach an output-stable configuration whose outputs match.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use indexmap::IndexSet;
use rayon::prelude::*;
use thiserror::Error;

use crate::population::{initial_config, InputAssignment, PopulationConfig, PopulationError};
use crate::scheduler::{Event, ExecutionTrace, Mode, TraceHeader};
use crate::tape_machine::{AgentConfig, ProtocolSpec, TapeLayout, DEFAULT_INTERNAL_BUDGET};

/// Explored-configuration limit when none is given.
pub const DEFAULT_BUDGET: usize = 5_000_000;
/// Environment variable overriding [`DEFAULT_BUDGET`].
pub const BUDGET_VAR: &str = "PALOMA_BUDGET";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("more than {budget} configurations are reachable")]
    BudgetExceeded { budget: usize },
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error("canonical configuration could not be decoded")]
    Corrupt,
}

/// [`DEFAULT_BUDGET`] unless the environment overrides it.
pub fn default_budget() -> usize {
    std::env::var(BUDGET_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_BUDGET)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOptions {
    pub mode: Mode,
    pub layout: TapeLayout,
    /// Maximum number of distinct configurations.
    pub budget: usize,
    /// Step budget for one internal phase.
    pub internal_budget: u64,
}

impl OracleOptions {
    pub fn new(layout: TapeLayout) -> Self {
        Self {
            mode: Mode::Atomic,
            layout,
            budget: default_budget(),
            internal_budget: DEFAULT_INTERNAL_BUDGET,
        }
    }
}

fn encode_agent(a: &AgentConfig) -> Vec<u8> {
    let tape: String = a.tape.iter().collect();
    let mut out = Vec::with_capacity(11 + tape.len());
    out.extend_from_slice(&a.state.to_le_bytes());
    out.push(u8::from(a.working));
    out.extend_from_slice(&(a.head as u32).to_le_bytes());
    out.extend_from_slice(&(tape.len() as u32).to_le_bytes());
    out.extend_from_slice(tape.as_bytes());
    out
}

/// Permutation-invariant byte key of a configuration.
pub fn canonical(c: &PopulationConfig) -> Box<[u8]> {
    let mut agents: Vec<Vec<u8>> = c.agents.iter().map(encode_agent).collect();
    agents.sort_unstable();
    agents.concat().into_boxed_slice()
}

/// The configuration whose agents appear in canonical order.
pub fn decode(bytes: &[u8]) -> Result<PopulationConfig, OracleError> {
    let mut agents = Vec::new();
    let mut rest = bytes;
    let take = |rest: &mut &[u8], k: usize| -> Result<Vec<u8>, OracleError> {
        if rest.len() < k {
            return Err(OracleError::Corrupt);
        }
        let (head, tail) = rest.split_at(k);
        *rest = tail;
        Ok(head.to_vec())
    };
    while !rest.is_empty() {
        let state = u16::from_le_bytes(take(&mut rest, 2)?.try_into().unwrap());
        let working = take(&mut rest, 1)?[0] == 1;
        let head = u32::from_le_bytes(take(&mut rest, 4)?.try_into().unwrap()) as usize;
        let len = u32::from_le_bytes(take(&mut rest, 4)?.try_into().unwrap()) as usize;
        let tape = String::from_utf8(take(&mut rest, len)?).map_err(|_| OracleError::Corrupt)?;
        agents.push(AgentConfig {
            state,
            tape: tape.chars().collect(),
            head,
            working,
        });
    }
    Ok(PopulationConfig { agents })
}

/// One transition out of a configuration.
#[derive(Clone, Debug)]
pub struct Move {
    pub events: Vec<Event>,
    pub next: PopulationConfig,
    /// Whether a participating agent's output changed.
    pub changes_output: bool,
}

/// Every transition out of `c`. Atomic mode: each effective encounter
/// followed by both participants' internal phases. Interleaved mode: one
/// internal step of a working agent, or an effective encounter. Case 2
/// encounters are omitted since they leave `c` unchanged.
pub fn moves(
    protocol: &ProtocolSpec,
    c: &PopulationConfig,
    mode: Mode,
    internal_budget: u64,
) -> Result<Vec<Move>, PopulationError> {
    let n = c.n();
    let mut out = Vec::new();
    if mode == Mode::Interleaved {
        for u in (0..n).filter(|&u| c.agents[u].working) {
            let mut next = c.clone();
            next.apply_agent_transition(protocol, u, internal_budget)?;
            let changes_output = next.agents[u].output() != c.agents[u].output();
            out.push(Move {
                events: vec![Event::Internal { u, steps: 1 }],
                next,
                changes_output,
            });
        }
    }
    for u in 0..n {
        for v in 0..n {
            if u == v || c.agents[u].working || c.agents[v].working {
                continue;
            }
            let mut next = c.clone();
            next.apply_encounter(protocol, u, v)?;
            let mut events = vec![Event::Encounter {
                u,
                v,
                effective: true,
            }];
            if mode == Mode::Atomic {
                for w in [u, v] {
                    let steps = next.settle_agent(protocol, w, internal_budget)?;
                    events.push(Event::Internal { u: w, steps });
                }
            }
            let changes_output = [u, v]
                .iter()
                .any(|&w| next.agents[w].output() != c.agents[w].output());
            out.push(Move {
                events,
                next,
                changes_output,
            });
        }
    }
    Ok(out)
}

/// Canonical successors of `c`.
pub fn successors(
    protocol: &ProtocolSpec,
    c: &PopulationConfig,
    mode: Mode,
) -> Result<BTreeSet<Box<[u8]>>, PopulationError> {
    Ok(moves(protocol, c, mode, DEFAULT_INTERNAL_BUDGET)?
        .iter()
        .map(|m| canonical(&m.next))
        .collect())
}

/// The starting configuration the oracle explores from. In atomic mode every
/// agent first finishes its initial internal phase.
pub fn start(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    opts: &OracleOptions,
) -> Result<(PopulationConfig, Vec<Event>), PopulationError> {
    let mut c = initial_config(protocol, assignment, &opts.layout)?;
    let mut events = Vec::new();
    if opts.mode == Mode::Atomic {
        for u in 0..c.n() {
            let steps = c.settle_agent(protocol, u, opts.internal_budget)?;
            events.push(Event::Internal { u, steps });
        }
    }
    Ok((c, events))
}

/// Reachable configurations with labelled edges. Node 0 is the start.
#[derive(Clone, Debug)]
pub struct ReachGraph {
    pub configs: IndexSet<Box<[u8]>>,
    /// `(target, changes_output)` per node.
    pub edges: Vec<Vec<(u32, bool)>>,
    /// Breadth-first parent of each node, for shortest witness paths.
    pub parent: Vec<Option<u32>>,
}

impl ReachGraph {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn config(&self, i: usize) -> PopulationConfig {
        decode(&self.configs[i]).expect("graph holds well-formed keys")
    }

    /// Sorted output array of node `i`.
    pub fn outputs(&self, i: usize) -> Vec<String> {
        let mut o = self.config(i).outputs();
        o.sort();
        o
    }

    fn reverse(&self) -> Vec<Vec<u32>> {
        let mut rev = vec![Vec::new(); self.len()];
        for (i, es) in self.edges.iter().enumerate() {
            for &(j, _) in es {
                rev[j as usize].push(i as u32);
            }
        }
        rev
    }

    /// Every node that can reach a node in `seeds` (seeds included).
    fn backward_closure(&self, rev: &[Vec<u32>], seeds: impl Iterator<Item = usize>) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for s in seeds {
            if !mark[s] {
                mark[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &p in &rev[i] {
                if !mark[p as usize] {
                    mark[p as usize] = true;
                    queue.push_back(p as usize);
                }
            }
        }
        mark
    }

    /// Output stability of every node.
    pub fn stable_mask(&self) -> Vec<bool> {
        let rev = self.reverse();
        let unstable = self.backward_closure(
            &rev,
            (0..self.len()).filter(|&i| self.edges[i].iter().any(|&(_, ch)| ch)),
        );
        unstable.into_iter().map(|u| !u).collect()
    }

    /// Nodes reachable from `from`, in breadth-first order.
    pub fn forward(&self, from: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut order = vec![from];
        seen[from] = true;
        let mut k = 0;
        while k < order.len() {
            for &(j, _) in &self.edges[order[k]] {
                if !std::mem::replace(&mut seen[j as usize], true) {
                    order.push(j as usize);
                }
            }
            k += 1;
        }
        order
    }

    /// Shortest path from `from` to `to` using only nodes for which `allowed`
    /// holds.
    fn path(&self, from: usize, to: usize, allowed: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.len()];
        prev[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(i) = queue.pop_front() {
            if i == to {
                let mut p = vec![to];
                while *p.last().unwrap() != from {
                    p.push(prev[*p.last().unwrap()]);
                }
                p.reverse();
                return Some(p);
            }
            for &(j, _) in &self.edges[i] {
                let j = j as usize;
                if prev[j] == usize::MAX && allowed(j) {
                    prev[j] = i;
                    queue.push_back(j);
                }
            }
        }
        None
    }

    /// Strongly connected component index of every node.
    pub fn components(&self) -> Vec<usize> {
        const NONE: usize = usize::MAX;
        let n = self.len();
        let mut index = vec![NONE; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comp = vec![NONE; n];
        let (mut next_index, mut next_comp) = (0, 0);
        for root in 0..n {
            if index[root] != NONE {
                continue;
            }
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut k)) = call.last_mut() {
                if let Some(&(w, _)) = self.edges[v].get(*k) {
                    *k += 1;
                    let w = w as usize;
                    if index[w] == NONE {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                    continue;
                }
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
        comp
    }

    fn path_from_start(&self, to: usize) -> Vec<usize> {
        let mut p = vec![to];
        while let Some(q) = self.parent[*p.last().unwrap()] {
            p.push(q as usize);
        }
        p.reverse();
        p
    }
}

/// Breadth-first closure from the start configuration.
pub fn reachable_set(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    opts: &OracleOptions,
) -> Result<ReachGraph, OracleError> {
    let (c0, _) = start(protocol, assignment, opts)?;
    let mut g = ReachGraph {
        configs: IndexSet::new(),
        edges: Vec::new(),
        parent: vec![None],
    };
    g.configs.insert(canonical(&c0));
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let expanded: Vec<Vec<(Box<[u8]>, bool)>> = frontier
            .par_iter()
            .map(|&i| {
                let c = decode(&g.configs[i])?;
                Ok(moves(protocol, &c, opts.mode, opts.internal_budget)?
                    .into_iter()
                    .map(|m| (canonical(&m.next), m.changes_output))
                    .collect())
            })
            .collect::<Result<_, OracleError>>()?;
        let mut next = Vec::new();
        for (&i, succ) in frontier.iter().zip(expanded) {
            let mut es: Vec<(u32, bool)> = Vec::with_capacity(succ.len());
            for (key, ch) in succ {
                let (j, fresh) = g.configs.insert_full(key);
                if fresh {
                    if g.configs.len() > opts.budget {
                        return Err(OracleError::BudgetExceeded {
                            budget: opts.budget,
                        });
                    }
                    g.parent.push(Some(i as u32));
                    next.push(j);
                }
                if let Some(e) = es.iter_mut().find(|e| e.0 == j as u32) {
                    e.1 |= ch;
                } else {
                    es.push((j as u32, ch));
                }
            }
            debug_assert_eq!(g.edges.len(), i);
            g.edges.push(es);
        }
        frontier = next;
    }
    Ok(g)
}

/// Whether no configuration reachable from node `i` changes any output.
pub fn check_output_stable(graph: &ReachGraph, i: usize) -> bool {
    graph
        .forward(i)
        .iter()
        .all(|&j| graph.edges[j].iter().all(|&(_, ch)| !ch))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    StablyComputes,
    WrongStableOutput,
    NonConvergentComponent,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// A path of canonical configurations, optionally closing into a cycle, and
/// the same path as a replayable trace.
#[derive(Clone, Debug)]
pub struct Witness {
    pub path: Vec<usize>,
    /// Position in `path` where a repeating cycle starts; the last node
    /// steps back to it.
    pub cycle_from: Option<usize>,
    pub trace: ExecutionTrace,
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub protocol: String,
    pub expected: Vec<String>,
    pub reachable_count: usize,
    pub stable_count: usize,
    pub stable_correct_count: usize,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Sorted output arrays of all output-stable configurations.
    pub stable_outputs: BTreeSet<Vec<String>>,
}

impl OracleReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "protocol: {}", self.protocol).unwrap();
        writeln!(s, "verdict: {}", self.verdict).unwrap();
        writeln!(s, "expected: {}", self.expected.join("|")).unwrap();
        writeln!(s, "reachable: {}", self.reachable_count).unwrap();
        writeln!(s, "stable: {}", self.stable_count).unwrap();
        writeln!(s, "stable_correct: {}", self.stable_correct_count).unwrap();
        for o in &self.stable_outputs {
            writeln!(s, "stable_outputs: {}", o.join("|")).unwrap();
        }
        if let Some(w) = &self.witness {
            let cycle = w.cycle_from.map_or("none".to_string(), |k| k.to_string());
            writeln!(
                s,
                "witness: {} configurations, cycle from {cycle}",
                w.path.len()
            )
            .unwrap();
            s.push_str(&w.trace.to_text());
        }
        s
    }
}

/// Concrete events realizing a canonical path.
fn realize(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    opts: &OracleOptions,
    graph: &ReachGraph,
    path: &[usize],
) -> Result<ExecutionTrace, OracleError> {
    let (mut c, mut events) = start(protocol, assignment, opts)?;
    for w in path.windows(2) {
        let target = &graph.configs[w[1]];
        let m = moves(protocol, &c, opts.mode, opts.internal_budget)?
            .into_iter()
            .find(|m| canonical(&m.next)[..] == target[..])
            .ok_or(OracleError::Corrupt)?;
        events.extend(m.events);
        c = m.next;
    }
    Ok(ExecutionTrace {
        header: TraceHeader {
            seed: 0,
            mode: opts.mode,
            n: assignment.len(),
            protocol: protocol.name.clone(),
            layout: opts.layout,
        },
        events,
        snapshots: Vec::new(),
        stop_reason: None,
    })
}

/// Verdict on an explored graph.
pub fn analyze(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    opts: &OracleOptions,
    graph: &ReachGraph,
    expected: &[String],
) -> Result<OracleReport, OracleError> {
    let mut want = expected.to_vec();
    want.sort();
    let stable = graph.stable_mask();
    let stable_nodes: Vec<usize> = (0..graph.len()).filter(|&i| stable[i]).collect();
    let outputs: Vec<Option<Vec<String>>> = (0..graph.len())
        .map(|i| stable[i].then(|| graph.outputs(i)))
        .collect();
    let correct: Vec<usize> = stable_nodes
        .iter()
        .copied()
        .filter(|&i| outputs[i].as_ref() == Some(&want))
        .collect();
    let rev = graph.reverse();
    let good = graph.backward_closure(&rev, correct.iter().copied());
    let mut report = OracleReport {
        protocol: protocol.name.clone(),
        expected: expected.to_vec(),
        reachable_count: graph.len(),
        stable_count: stable_nodes.len(),
        stable_correct_count: correct.len(),
        verdict: Verdict::StablyComputes,
        witness: None,
        stable_outputs: stable_nodes
            .iter()
            .filter_map(|&i| outputs[i].clone())
            .collect(),
    };
    let Some(bad) = (0..graph.len()).find(|&i| !good[i]) else {
        return Ok(report);
    };
    // Everything reachable from a bad node is bad, so a bottom strongly
    // connected component below it is bad as well.
    let comp = graph.components();
    let mut exits = vec![false; comp.iter().max().map_or(0, |m| m + 1)];
    for (i, es) in graph.edges.iter().enumerate() {
        if es.iter().any(|&(j, _)| comp[j as usize] != comp[i]) {
            exits[comp[i]] = true;
        }
    }
    let at = graph
        .forward(bad)
        .into_iter()
        .find(|&i| !exits[comp[i]])
        .expect("a finite graph has a bottom component");
    let inside = |j: usize| comp[j] == comp[at];
    let mut path = graph.path_from_start(at);
    let mut cycle_from = None;
    if stable[at] {
        report.verdict = Verdict::WrongStableOutput;
    } else {
        report.verdict = Verdict::NonConvergentComponent;
        let (x, y) = (0..graph.len())
            .filter(|&x| inside(x))
            .find_map(|x| {
                graph.edges[x]
                    .iter()
                    .find(|e| e.1)
                    .map(|e| (x, e.0 as usize))
            })
            .expect("unstable bottom component holds an output-changing edge");
        let to_x = graph.path(at, x, inside).expect("strongly connected");
        let back = graph.path(y, at, inside).expect("strongly connected");
        cycle_from = Some(path.len() - 1);
        path.extend(&to_x[1..]);
        path.extend(&back[..back.len() - 1]);
    }
    let mut full = path.clone();
    if let Some(k) = cycle_from {
        full.push(path[k]);
    }
    let trace = realize(protocol, assignment, opts, graph, &full)?;
    report.witness = Some(Witness {
        path,
        cycle_from,
        trace,
    });
    Ok(report)
}

pub fn check_stable_computation(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    expected: &[String],
    opts: &OracleOptions,
) -> Result<OracleReport, OracleError> {
    let graph = reachable_set(protocol, assignment, opts)?;
    analyze(protocol, assignment, opts, &graph, expected)
}
