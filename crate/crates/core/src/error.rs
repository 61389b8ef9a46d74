use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("branch {branch} references unknown bus {bus}")]
    DanglingBranch { branch: usize, bus: u32 },
    #[error("generator {generator} references unknown bus {bus}")]
    DanglingGenerator { generator: usize, bus: u32 },
    #[error("branch {branch} has non-positive reactance {reactance}")]
    NonPositiveReactance { branch: usize, reactance: f64 },
    #[error("case has no slack bus")]
    NoSlack,
    #[error("case has more than one slack bus ({first} and {second})")]
    MultipleSlack { first: u32, second: u32 },
    #[error("slack bus {0} hosts no generator")]
    SlackWithoutGenerator(u32),
    #[error("grid is disconnected: bus {0} is unreachable from the slack bus")]
    Disconnected(u32),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("unobservable system: {0}")]
    Unobservable(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("attack window [{start}, {end}] outside series of length {len}")]
    WindowOutOfRange { start: usize, end: usize, len: usize },
    #[error("infeasible attack schedule: {0}")]
    InfeasibleSchedule(String),
    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty partition: {0}")]
    EmptyPartition(String),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
}
