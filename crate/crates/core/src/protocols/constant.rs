//! A one-state protocol that writes a fixed output on every internal phase.

use crate::tape_machine::{
    InputSet, MachineError, MacroMachine, MacroRoutine, ProtocolSpec, TapeLayout,
};

use super::{alphabet, macro_program, names};

struct Constant(String);

impl MacroRoutine for Constant {
    fn name(&self) -> String {
        format!("const{}", self.0)
    }

    fn run(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.tick()?;
        m.set_output(&self.0)
    }

    fn emit_message(&self, m: &mut MacroMachine<'_>) -> Result<(), MachineError> {
        m.message.fill(crate::tape_machine::BLANK);
        Ok(())
    }
}

/// Accepts any string over `0`, `1`, `a`, `b`, `c`.
pub fn constant_protocol(output: &str) -> ProtocolSpec {
    ProtocolSpec::new(
        format!("const{output}"),
        "01abc".chars().collect(),
        InputSet::Any,
        alphabet(&format!("01abc{output}")),
        names(&["q0"]),
        0,
        [],
        macro_program(Constant(output.to_string())),
        TapeLayout::default(),
    )
    .expect("constant protocol is well formed")
}
