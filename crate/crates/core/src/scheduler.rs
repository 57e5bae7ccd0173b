//! Executions: uniform random encounter selection, atomic and interleaved
//! internal phases, text traces and replay.
//!
//! Random numbers come from ChaCha8 seeded with `seed_from_u64`. Bounded
//! draws use rejection sampling on whole `u64` words: a word `x` is accepted
//! when `x < zone`, `zone = bound * floor(2^64 / bound)`, and mapped to
//! `x % bound`. An ordered pair is one draw `x < n(n-1)`; `u = x / (n-1)`,
//! `r = x % (n-1)` and `v = r` if `r < u` else `r + 1`. Only integer
//! operations are involved, so traces are identical on every platform.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::population::{initial_config, InputAssignment, PopulationConfig, PopulationError};
use crate::tape_machine::{ProtocolSpec, TapeLayout, DEFAULT_INTERNAL_BUDGET};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("at least two agents are needed to choose a pair")]
    PopulationTooSmall,
    #[error("trace event {index} cannot be replayed: {reason}")]
    TraceMismatch { index: usize, reason: String },
    #[error("trace line {line}: {reason}")]
    TraceSyntax { line: usize, reason: String },
    #[error(transparent)]
    Population(#[from] PopulationError),
}

/// Seeded generator with unbiased bounded draws.
#[derive(Clone, Debug)]
pub struct SchedRng(ChaCha8Rng);

impl SchedRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, bound)`; `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = (u64::MAX / bound) * bound;
        loop {
            let x = self.0.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    pub fn coin(&mut self) -> bool {
        self.0.next_u64() >> 63 == 1
    }
}

/// Uniform ordered pair of distinct agents.
pub fn random_pair(rng: &mut SchedRng, n: usize) -> Result<(usize, usize), SchedulerError> {
    if n < 2 {
        return Err(SchedulerError::PopulationTooSmall);
    }
    let m = n as u64 - 1;
    let x = rng.below(n as u64 * m);
    let (u, r) = ((x / m) as usize, (x % m) as usize);
    Ok((u, if r < u { r } else { r + 1 }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Both participants of an effective encounter finish their internal
    /// phase before the next event.
    #[default]
    Atomic,
    /// Encounters and single internal steps interleave.
    Interleaved,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Atomic => "atomic",
            Mode::Interleaved => "interleaved",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "atomic" => Ok(Mode::Atomic),
            "interleaved" => Ok(Mode::Interleaved),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Encounter {
        u: usize,
        v: usize,
        effective: bool,
    },
    /// `steps` internal steps of agent `u`.
    Internal {
        u: usize,
        steps: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    /// Number of events preceding the snapshot.
    pub after: usize,
    pub outputs: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopReason {
    Quiescent,
    TargetReached,
    StopWithoutConvergence,
    /// A single agent has nobody to meet.
    NoPairs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Quiescent => "quiescent",
            StopReason::TargetReached => "target",
            StopReason::StopWithoutConvergence => "no-convergence",
            StopReason::NoPairs => "no-pairs",
        })
    }
}

impl FromStr for StopReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "quiescent" => StopReason::Quiescent,
            "target" => StopReason::TargetReached,
            "no-convergence" => StopReason::StopWithoutConvergence,
            "no-pairs" => StopReason::NoPairs,
            other => return Err(format!("unknown stop reason {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopCriterion {
    /// Upper bound on encounters, effective or not.
    pub max_interactions: u64,
    /// Stop after this many consecutive effective encounters without an
    /// output change. `None` means `50 n^2`.
    pub quiescence_window: Option<u64>,
    pub target_outputs: Option<Vec<String>>,
}

impl Default for StopCriterion {
    fn default() -> Self {
        Self {
            max_interactions: 1_000_000,
            quiescence_window: None,
            target_outputs: None,
        }
    }
}

impl StopCriterion {
    pub fn window(&self, n: usize) -> u64 {
        self.quiescence_window.unwrap_or(50 * (n as u64).pow(2))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceHeader {
    pub seed: u64,
    pub mode: Mode,
    pub n: usize,
    pub protocol: String,
    pub layout: TapeLayout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
    pub stop_reason: Option<StopReason>,
}

impl ExecutionTrace {
    pub fn effective_encounters(&self) -> usize {
        self.events
            .iter()
            .filter(|e| {
                matches!(
                    e,
                    Event::Encounter {
                        effective: true,
                        ..
                    }
                )
            })
            .count()
    }

    pub fn final_outputs(&self) -> Option<&[String]> {
        self.snapshots.last().map(|s| s.outputs.as_slice())
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "paloma-trace v1 seed={} mode={} n={} protocol={} cap_factor={} cap_const={}\n",
            h.seed, h.mode, h.n, h.protocol, h.layout.cap_factor, h.layout.cap_const
        );
        let mut snaps = self.snapshots.iter().peekable();
        for i in 0..=self.events.len() {
            while let Some(s) = snaps.next_if(|s| s.after == i) {
                out.push_str(&format!("S {} {}\n", s.after, s.outputs.join("|")));
            }
            match self.events.get(i) {
                Some(Event::Encounter { u, v, effective }) => {
                    out.push_str(&format!("E {u} {v} {}\n", u8::from(*effective)))
                }
                Some(Event::Internal { u, steps }) => out.push_str(&format!("I {u} {steps}\n")),
                None => {}
            }
        }
        if let Some(r) = self.stop_reason {
            out.push_str(&format!("STOP {r}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SchedulerError> {
        let mut lines = text.lines().enumerate();
        let syntax = |line: usize, reason: &str| SchedulerError::TraceSyntax {
            line: line + 1,
            reason: reason.into(),
        };
        let (_, first) = lines.next().ok_or_else(|| syntax(0, "empty trace"))?;
        let mut words = first.split_whitespace();
        if words.next() != Some("paloma-trace") || words.next() != Some("v1") {
            return Err(syntax(0, "missing header"));
        }
        let mut fields = std::collections::HashMap::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| syntax(0, "header field without ="))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| syntax(0, &format!("header lacks {k}")))
        };
        let num = |k: &str| {
            get(k)?
                .parse::<u64>()
                .map_err(|_| syntax(0, &format!("bad {k}")))
        };
        let header = TraceHeader {
            seed: num("seed")?,
            mode: get("mode")?.parse().map_err(|e: String| syntax(0, &e))?,
            n: num("n")? as usize,
            protocol: get("protocol")?.to_string(),
            layout: TapeLayout::new(num("cap_factor")? as usize, num("cap_const")? as usize),
        };
        let mut trace = ExecutionTrace {
            header,
            events: Vec::new(),
            snapshots: Vec::new(),
            stop_reason: None,
        };
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            let ints = |count: usize| -> Result<Vec<u64>, SchedulerError> {
                let v: Vec<u64> = rest
                    .split(' ')
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| syntax(i, "bad number"))?;
                if v.len() == count {
                    Ok(v)
                } else {
                    Err(syntax(i, "wrong field count"))
                }
            };
            match tag {
                "E" => {
                    let v = ints(3)?;
                    if v[2] > 1 {
                        return Err(syntax(i, "flag must be 0 or 1"));
                    }
                    trace.events.push(Event::Encounter {
                        u: v[0] as usize,
                        v: v[1] as usize,
                        effective: v[2] == 1,
                    });
                }
                "I" => {
                    let v = ints(2)?;
                    trace.events.push(Event::Internal {
                        u: v[0] as usize,
                        steps: v[1],
                    });
                }
                "S" => {
                    let (idx, outs) = rest.split_once(' ').unwrap_or((rest, ""));
                    let after = idx.parse().map_err(|_| syntax(i, "bad snapshot index"))?;
                    let outputs = if trace.header.n == 0 {
                        Vec::new()
                    } else {
                        outs.split('|').map(String::from).collect()
                    };
                    trace.snapshots.push(Snapshot { after, outputs });
                }
                "STOP" => {
                    trace.stop_reason = Some(rest.parse().map_err(|e: String| syntax(i, &e))?)
                }
                _ => return Err(syntax(i, "unknown record")),
            }
        }
        Ok(trace)
    }
}

/// Everything that, with the protocol and assignment, determines a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub mode: Mode,
    pub stop: StopCriterion,
    pub layout: TapeLayout,
    /// Step budget for one internal phase.
    pub budget: u64,
    /// Output snapshot every this many events; 0 records only the initial
    /// and final snapshots.
    pub snapshot_interval: u64,
}

impl RunOptions {
    pub fn new(seed: u64, layout: TapeLayout) -> Self {
        Self {
            seed,
            mode: Mode::Atomic,
            stop: StopCriterion::default(),
            layout,
            budget: DEFAULT_INTERNAL_BUDGET,
            snapshot_interval: 0,
        }
    }
}

/// What one scheduler step did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepReport {
    pub events: Vec<Event>,
    pub outputs_changed: bool,
}

/// A live execution, advanced one scheduling decision at a time.
pub struct Simulation<'p> {
    protocol: &'p ProtocolSpec,
    config: PopulationConfig,
    rng: SchedRng,
    mode: Mode,
    budget: u64,
    snapshot_interval: u64,
    trace: ExecutionTrace,
    outputs: Vec<String>,
    interactions: u64,
    quiet: u64,
}

impl<'p> Simulation<'p> {
    pub fn new(
        protocol: &'p ProtocolSpec,
        assignment: &InputAssignment,
        opts: &RunOptions,
    ) -> Result<Self, SchedulerError> {
        let config = initial_config(protocol, assignment, &opts.layout)?;
        let mut sim = Self::from_config(protocol, config, opts);
        if sim.mode == Mode::Atomic {
            for u in 0..sim.config.n() {
                let steps = sim.config.settle_agent(protocol, u, sim.budget)?;
                sim.trace.events.push(Event::Internal { u, steps });
            }
            sim.outputs = sim.config.outputs();
        }
        sim.snapshot();
        Ok(sim)
    }

    /// Continues from an arbitrary configuration; no initial phase is run.
    pub fn from_config(
        protocol: &'p ProtocolSpec,
        config: PopulationConfig,
        opts: &RunOptions,
    ) -> Self {
        let header = TraceHeader {
            seed: opts.seed,
            mode: opts.mode,
            n: config.n(),
            protocol: protocol.name.clone(),
            layout: opts.layout,
        };
        let mut sim = Self {
            protocol,
            outputs: config.outputs(),
            config,
            rng: SchedRng::new(opts.seed),
            mode: opts.mode,
            budget: opts.budget,
            snapshot_interval: opts.snapshot_interval,
            trace: ExecutionTrace {
                header,
                events: Vec::new(),
                snapshots: Vec::new(),
                stop_reason: None,
            },
            interactions: 0,
            quiet: 0,
        };
        sim.snapshot();
        sim
    }

    pub fn config(&self) -> &PopulationConfig {
        &self.config
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn protocol(&self) -> &ProtocolSpec {
        self.protocol
    }

    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    /// Consecutive effective encounters since the last output change.
    pub fn quiet_run(&self) -> u64 {
        self.quiet
    }

    fn snapshot(&mut self) {
        let after = self.trace.events.len();
        if self
            .trace
            .snapshots
            .last()
            .is_some_and(|s| s.after == after)
        {
            self.trace.snapshots.pop();
        }
        self.trace.snapshots.push(Snapshot {
            after,
            outputs: self.outputs.clone(),
        });
    }

    fn push(&mut self, e: Event) {
        self.trace.events.push(e);
        let k = self.snapshot_interval;
        if k > 0 && (self.trace.events.len() as u64).is_multiple_of(k) {
            self.snapshot();
        }
    }

    /// One scheduling decision: in atomic mode an encounter plus the
    /// participants' internal phases; in interleaved mode either an
    /// encounter or one internal step.
    pub fn step(&mut self) -> Result<StepReport, SchedulerError> {
        let first = self.trace.events.len();
        let n = self.config.n();
        let working: Vec<usize> = match self.mode {
            Mode::Atomic => Vec::new(),
            Mode::Interleaved => (0..n).filter(|&u| self.config.agents[u].working).collect(),
        };
        let mut effective = false;
        if !working.is_empty() && (n < 2 || self.rng.coin()) {
            let u = working[self.rng.below(working.len() as u64) as usize];
            self.config
                .apply_agent_transition(self.protocol, u, self.budget)?;
            self.push(Event::Internal { u, steps: 1 });
        } else {
            let (u, v) = random_pair(&mut self.rng, n)?;
            effective = self.config.apply_encounter(self.protocol, u, v)?;
            self.interactions += 1;
            self.push(Event::Encounter { u, v, effective });
            if effective && self.mode == Mode::Atomic {
                for w in [u, v] {
                    let steps = self.config.settle_agent(self.protocol, w, self.budget)?;
                    self.push(Event::Internal { u: w, steps });
                }
            }
        }
        let outputs = self.config.outputs();
        let outputs_changed = outputs != self.outputs;
        if outputs_changed {
            self.outputs = outputs;
            self.quiet = 0;
        } else if effective {
            self.quiet += 1;
        }
        Ok(StepReport {
            events: self.trace.events[first..].to_vec(),
            outputs_changed,
        })
    }

    /// Records the final snapshot and stop reason.
    pub fn finish(mut self, reason: StopReason) -> (ExecutionTrace, PopulationConfig) {
        self.snapshot();
        self.trace.stop_reason = Some(reason);
        (self.trace, self.config)
    }

    /// Steps until a criterion fires.
    pub fn run_until(
        mut self,
        stop: &StopCriterion,
    ) -> Result<(ExecutionTrace, PopulationConfig), SchedulerError> {
        let n = self.config.n();
        let window = stop.window(n);
        let reason = loop {
            if stop
                .target_outputs
                .as_ref()
                .is_some_and(|t| *t == self.outputs)
            {
                break StopReason::TargetReached;
            }
            if n < 2 && !self.config.agents.iter().any(|a| a.working) {
                break StopReason::NoPairs;
            }
            if self.quiet >= window {
                break StopReason::Quiescent;
            }
            if self.interactions >= stop.max_interactions {
                break StopReason::StopWithoutConvergence;
            }
            self.step()?;
        };
        Ok(self.finish(reason))
    }
}

pub fn run(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    opts: &RunOptions,
) -> Result<ExecutionTrace, SchedulerError> {
    Ok(Simulation::new(protocol, assignment, opts)?
        .run_until(&opts.stop)?
        .0)
}

/// Re-executes the events of `trace` from the initial configuration.
pub fn replay(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    trace: &ExecutionTrace,
) -> Result<PopulationConfig, SchedulerError> {
    replay_observed(protocol, assignment, trace, |_, _| {})
}

/// [`replay`], calling `observe` with each event and the configuration it
/// produced.
pub fn replay_observed(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    trace: &ExecutionTrace,
    mut observe: impl FnMut(&Event, &PopulationConfig),
) -> Result<PopulationConfig, SchedulerError> {
    let mut c = initial_config(protocol, assignment, &trace.header.layout)?;
    if c.n() != trace.header.n {
        return Err(SchedulerError::TraceMismatch {
            index: 0,
            reason: "population size differs".into(),
        });
    }
    for (index, e) in trace.events.iter().enumerate() {
        let mismatch = |reason: String| SchedulerError::TraceMismatch { index, reason };
        match *e {
            Event::Encounter { u, v, effective } => {
                let got = c
                    .apply_encounter(protocol, u, v)
                    .map_err(|e| mismatch(e.to_string()))?;
                if got != effective {
                    return Err(mismatch(format!("encounter ({u},{v}) effective = {got}")));
                }
            }
            Event::Internal { u, steps } => {
                for _ in 0..steps {
                    c.apply_agent_transition(protocol, u, u64::MAX)
                        .map_err(|e| mismatch(e.to_string()))?;
                }
            }
        }
        observe(e, &c);
    }
    Ok(c)
}

/// Total id increase over a trace, for protocols whose agents expose ids;
/// `None` otherwise. Ids are read whenever an agent is ready.
pub fn id_increments(
    protocol: &ProtocolSpec,
    assignment: &InputAssignment,
    trace: &ExecutionTrace,
) -> Result<Option<u64>, SchedulerError> {
    let c = initial_config(protocol, assignment, &trace.header.layout)?;
    let mut ids: Vec<Option<u64>> = c
        .agents
        .iter()
        .map(|a| protocol.probe(a).id.filter(|_| !a.working))
        .collect();
    let mut total = 0;
    let mut seen = ids.iter().any(Option::is_some);
    replay_observed(protocol, assignment, trace, |e, c| {
        if let Event::Internal { u, .. } = *e {
            let a = &c.agents[u];
            if a.working {
                return;
            }
            if let Some(id) = protocol.probe(a).id {
                seen = true;
                if let Some(old) = ids[u] {
                    total += id.saturating_sub(old);
                }
                ids[u] = Some(id);
            }
        }
    })?;
    Ok(seen.then_some(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_needs_two_agents() {
        let mut rng = SchedRng::new(1);
        assert_eq!(
            random_pair(&mut rng, 1),
            Err(SchedulerError::PopulationTooSmall)
        );
        assert_eq!(
            random_pair(&mut rng, 0),
            Err(SchedulerError::PopulationTooSmall)
        );
    }

    #[test]
    fn pairs_are_seed_determined() {
        let draw = |seed| {
            let mut rng = SchedRng::new(seed);
            (0..100)
                .map(|_| random_pair(&mut rng, 5).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
        assert!(draw(42).iter().all(|&(u, v)| u != v && u < 5 && v < 5));
    }

    #[test]
    fn two_agent_pairs_are_balanced() {
        let mut rng = SchedRng::new(2024);
        let draws = 100_000;
        let forward = (0..draws)
            .filter(|_| random_pair(&mut rng, 2).unwrap() == (0, 1))
            .count() as f64;
        let e = draws as f64 / 2.0;
        let chi2 = (forward - e).powi(2) / e + (draws as f64 - forward - e).powi(2) / e;
        // Upper 0.001 quantile of chi-square with one degree of freedom.
        assert!(chi2 < 10.828, "chi2 = {chi2}");
    }

    #[test]
    fn all_ordered_pairs_are_uniform() {
        let n = 5;
        let mut rng = SchedRng::new(9);
        let mut counts = vec![0u32; n * n];
        let draws = 200_000;
        for _ in 0..draws {
            let (u, v) = random_pair(&mut rng, n).unwrap();
            counts[u * n + v] += 1;
        }
        let e = draws as f64 / 20.0;
        let chi2: f64 = (0..n * n)
            .filter(|i| i / n != i % n)
            .map(|i| (counts[i] as f64 - e).powi(2) / e)
            .sum();
        // Upper 0.001 quantile with 19 degrees of freedom.
        assert!(chi2 < 43.82, "chi2 = {chi2}");
    }

    #[test]
    fn every_pair_appears_within_a_window() {
        for n in 2..=16usize {
            let window = (6.0 * (n * n) as f64 * (n as f64).ln()).ceil() as usize;
            let mut rng = SchedRng::new(n as u64);
            let trials = 500;
            let mut covered = 0;
            for _ in 0..trials {
                let mut seen = vec![false; n * n];
                let mut missing = n * (n - 1);
                for _ in 0..window {
                    let (u, v) = random_pair(&mut rng, n).unwrap();
                    if !std::mem::replace(&mut seen[u * n + v], true) {
                        missing -= 1;
                    }
                }
                covered += usize::from(missing == 0);
            }
            assert!(
                covered as f64 / trials as f64 >= 0.99,
                "n = {n}: {covered}/{trials}"
            );
        }
    }

    #[test]
    fn bounded_draws_stay_in_range() {
        let mut rng = SchedRng::new(0);
        for bound in 1..50 {
            for _ in 0..50 {
                assert!(rng.below(bound) < bound);
            }
        }
    }

    #[test]
    fn trace_text_round_trip() {
        let trace = ExecutionTrace {
            header: TraceHeader {
                seed: 7,
                mode: Mode::Interleaved,
                n: 3,
                protocol: "mult".into(),
                layout: TapeLayout::default(),
            },
            events: vec![
                Event::Internal { u: 0, steps: 1 },
                Event::Encounter {
                    u: 1,
                    v: 2,
                    effective: true,
                },
                Event::Encounter {
                    u: 2,
                    v: 0,
                    effective: false,
                },
            ],
            snapshots: vec![
                Snapshot {
                    after: 0,
                    outputs: vec!["".into(), "".into(), "".into()],
                },
                Snapshot {
                    after: 3,
                    outputs: vec!["1".into(), "".into(), "0".into()],
                },
            ],
            stop_reason: Some(StopReason::StopWithoutConvergence),
        };
        let text = trace.to_text();
        assert_eq!(
            text,
            "paloma-trace v1 seed=7 mode=interleaved n=3 protocol=mult cap_factor=4 cap_const=8\n\
             S 0 ||\nI 0 1\nE 1 2 1\nE 2 0 0\nS 3 1||0\nSTOP no-convergence\n"
        );
        assert_eq!(ExecutionTrace::from_text(&text).unwrap(), trace);
        assert!(matches!(
            ExecutionTrace::from_text("E 0 1 1"),
            Err(SchedulerError::TraceSyntax { .. })
        ));
    }
}
