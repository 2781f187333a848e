//! One module per subcommand, plus the shared failure type that carries the
//! process exit code.

pub mod bench;
pub mod degrade;
pub mod estimate;
pub mod evaluate;
pub mod gen_kernels;
pub mod oracle_check;

use std::fmt;

/// Command failure classified by exit code: solver and verification
/// failures exit 1, usage and data problems exit 2.
#[derive(Debug)]
pub enum Failure {
    Solver(udke_core::Error),
    Check(String),
    Data(String),
}

pub type CmdResult = Result<(), Failure>;

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Solver(_) | Failure::Check(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Solver(e) => write!(f, "{e}"),
            Failure::Check(msg) | Failure::Data(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<udke_core::Error> for Failure {
    fn from(e: udke_core::Error) -> Failure {
        fn is_solver(e: &udke_core::Error) -> bool {
            match e {
                udke_core::Error::Singular { .. } => true,
                udke_core::Error::Stage { source, .. } => is_solver(source),
                _ => false,
            }
        }
        if is_solver(&e) {
            Failure::Solver(e)
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Data(format!("io: {e}"))
    }
}

/// Kernel families exposed on the command line.
#[derive(Debug, Clone, Copy, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussIso,
    GaussAniso,
    Random,
}

impl From<Family> for udke_core::degrade::KernelFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::GaussIso => udke_core::degrade::KernelFamily::GaussIso,
            Family::GaussAniso => udke_core::degrade::KernelFamily::GaussAniso,
            Family::Random => udke_core::degrade::KernelFamily::Random,
        }
    }
}
