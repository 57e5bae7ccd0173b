//! Stable names for the built-in protocols.
//!
//! `mult`, `pow2`, `gcdeq`, `ids`, `const0`, `const1`, `reinit:<name>`,
//! `dtm:<machine>` and `ntm:<machine>`, where `<machine>` is a file path or
//! one of `parity`, `all_equal`, `one_branch`, `all_reject`. Machine
//! simulators are wrapped in the reinitiation protocol automatically. Any
//! other name that is an existing file is read as a protocol description.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::description::{self, DescriptionError, Machine};
use crate::tape_machine::{MachineError, ProtocolSpec};

use super::tm::{all_equal_tm, all_rejecting_ntm, one_accepting_branch_ntm, parity_tm};
use super::{
    constant_protocol, dtm_sim_protocol, gcd_equality_protocol, id_assign_known_n, mult_protocol,
    ntm_sim_protocol, pow2_protocol, reinit_protocol, DEFAULT_INNER_STEPS,
};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown protocol {0}")]
    Unknown(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Description {
        path: PathBuf,
        #[source]
        source: DescriptionError,
    },
    #[error("{0} describes a nondeterministic machine")]
    NotDeterministic(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// Names accepted by [`builtin`] that need no file.
pub const NAMES: [&str; 6] = ["mult", "pow2", "gcdeq", "ids", "const0", "const1"];

fn machine(spec: &str) -> Result<Machine, RegistryError> {
    Ok(match spec {
        "parity" => Machine::Deterministic(parity_tm()),
        "all_equal" => Machine::Deterministic(all_equal_tm()),
        "one_branch" => Machine::Nondeterministic(one_accepting_branch_ntm()),
        "all_reject" => Machine::Nondeterministic(all_rejecting_ntm()),
        path => {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            description::parse_machine(&text).map_err(|source| RegistryError::Description {
                path: path.to_path_buf(),
                source,
            })?
        }
    })
}

/// Resolves a name without adding the wrapper around machine simulators.
pub fn routine(name: &str) -> Result<ProtocolSpec, RegistryError> {
    if let Some(inner) = name.strip_prefix("reinit:") {
        return Ok(reinit_protocol(&routine(inner)?, DEFAULT_INNER_STEPS)?);
    }
    if let Some(spec) = name.strip_prefix("dtm:") {
        return match machine(spec)? {
            Machine::Deterministic(tm) => Ok(dtm_sim_protocol(&tm)?),
            Machine::Nondeterministic(_) => Err(RegistryError::NotDeterministic(spec.into())),
        };
    }
    if let Some(spec) = name.strip_prefix("ntm:") {
        return Ok(match machine(spec)? {
            Machine::Deterministic(tm) => ntm_sim_protocol(&tm.as_relation())?,
            Machine::Nondeterministic(ntm) => ntm_sim_protocol(&ntm)?,
        });
    }
    Ok(match name {
        "mult" => mult_protocol(),
        "pow2" => pow2_protocol(),
        "gcdeq" => gcd_equality_protocol(),
        "ids" => id_assign_known_n(),
        "const0" => constant_protocol("0"),
        "const1" => constant_protocol("1"),
        other => return Err(RegistryError::Unknown(other.into())),
    })
}

/// Resolves a protocol name or description file.
pub fn builtin(name: &str) -> Result<ProtocolSpec, RegistryError> {
    if name.starts_with("dtm:") || name.starts_with("ntm:") {
        return Ok(reinit_protocol(&routine(name)?, DEFAULT_INNER_STEPS)?);
    }
    match routine(name) {
        Err(RegistryError::Unknown(_)) if Path::new(name).is_file() => {
            let path = Path::new(name);
            let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            description::parse_protocol(&text).map_err(|source| RegistryError::Description {
                path: path.to_path_buf(),
                source,
            })
        }
        other => other,
    }
}
