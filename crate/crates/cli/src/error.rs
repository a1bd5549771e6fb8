//! One error type per exit-code class. The mapping from library errors to
//! exit codes is the CLI's contract: 2 config, 3 I/O, 4 training, 5
//! compatibility (0 is success; clap's own usage errors also exit 2).

use std::fmt;

use copresence_core::model::ModelError;
use copresence_core::sim::SimError;
use copresence_core::train::TrainError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Training(String),
    Incompatible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Training(_) => 4,
            CliError::Incompatible(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
            CliError::Training(m) => write!(f, "training: {m}"),
            CliError::Incompatible(m) => write!(f, "incompatible: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(_) | SimError::Manifest(_) | SimError::Codec(_) => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) | ModelError::Json(_) | ModelError::Checkpoint(_) => {
                CliError::Io(e.to_string())
            }
            ModelError::Config(_) => CliError::Config(e.to_string()),
            ModelError::ImageSize { .. } | ModelError::LabelSize { .. } => {
                CliError::Incompatible(e.to_string())
            }
            ModelError::Tensor(_) | ModelError::UnknownParam(_) => {
                CliError::Training(e.to_string())
            }
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::EmptySplit(_) => CliError::Config(e.to_string()),
            TrainError::Mismatch(_) => CliError::Incompatible(e.to_string()),
            TrainError::Sim(inner) => inner.into(),
            TrainError::Model(inner) => inner.into(),
            TrainError::Objective(_) | TrainError::Tensor(_) | TrainError::Optimizer(_) => {
                CliError::Training(e.to_string())
            }
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(format!("json: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Io("x".into()).exit_code(), 3);
        assert_eq!(CliError::Training("x".into()).exit_code(), 4);
        assert_eq!(CliError::Incompatible("x".into()).exit_code(), 5);
    }

    #[test]
    fn library_errors_land_in_the_right_class() {
        let e: CliError = SimError::Config("bad".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = TrainError::Mismatch("m".into()).into();
        assert_eq!(e.exit_code(), 5);
        let e: CliError = TrainError::Optimizer("o".into()).into();
        assert_eq!(e.exit_code(), 4);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e: CliError = SimError::Io(io).into();
        assert_eq!(e.exit_code(), 3);
    }
}
