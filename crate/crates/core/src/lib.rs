//! Population protocols whose agents carry small Turing-machine tapes.

pub mod batch;
pub mod description;
pub mod oracle;
pub mod population;
pub mod protocols;
pub mod scheduler;
pub mod tape_machine;
pub mod tapecalc;

pub use batch::{run_batch, BatchReport, BatchRun};
pub use description::{
    parse_machine, parse_protocol, serialize_machine, serialize_protocol, DescriptionError, Machine,
};
pub use oracle::{check_stable_computation, OracleError, OracleOptions, OracleReport, Verdict};
pub use population::{
    agent_transition, encounter, initial_config, outputs, EncounterOutcome, InputAssignment,
    PopulationConfig, PopulationError,
};
pub use protocols::{builtin, RegistryError};
pub use scheduler::{
    id_increments, random_pair, replay, replay_observed, run, Event, ExecutionTrace, Mode,
    RunOptions, SchedRng, SchedulerError, Simulation, StopCriterion, StopReason,
};
pub use tape_machine::{
    AgentConfig, IdEnv, InputSet, MachineError, MacroMachine, MacroRoutine, Move, Probe, Program,
    ProtocolSpec, Segment, StateId, Sym, TapeLayout, Transition, WrapperAction, BLANK, SEP,
};
pub use tapecalc::{CounterRegion, TapeCalcError};
