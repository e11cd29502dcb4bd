//! Runtime side of schema evolution: serialized object graphs, invariant
//! checks, transformer interpretation and versioned retrieval.

mod graph;
mod interp;
mod invariant;
mod retrieve;

use thiserror::Error;

pub use graph::{deserialize, serialize, value_conforms, Field, ObjectGraph, ObjectRecord};
pub use interp::{default_value, interpret_transformer, InterpretOptions, Interpreted};
pub use invariant::{eval_invariant, InvariantOutcome};
pub use retrieve::{find_path, retrieve, InputMap, RetrieveOptions, Retrieved};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("FormatError {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("DanglingReference {0}")]
    DanglingReference(usize),
    #[error("TypeMismatchInInvariant {tag}: {reason}")]
    TypeMismatchInInvariant { tag: String, reason: String },
    #[error("MissingAttribute {0}")]
    MissingAttribute(String),
    #[error("RecordMismatch {0}")]
    RecordMismatch(String),
    #[error("MissingInput {0}")]
    MissingInput(String),
    #[error("ConversionFailure {converter} {value}")]
    ConversionFailure { converter: String, value: String },
    #[error("AttachmentViolation {0}")]
    AttachmentViolation(String),
    #[error("EvaluationError {index}: {reason}")]
    Evaluation { index: usize, reason: String },
    #[error("HandlerMissing {0}")]
    HandlerMissing(String),
    #[error("TransformationMissing {class} {from} {to}")]
    TransformationMissing { class: String, from: u32, to: u32 },
    #[error("InvariantViolation {class} {id} {tag}")]
    InvariantViolation { class: String, id: usize, tag: String },
    #[error("UnknownSchema {class} {version}")]
    UnknownSchema { class: String, version: u32 },
}

impl RuntimeError {
    /// The error name, i.e. the first word of the rendered message.
    pub fn name(&self) -> &'static str {
        match self {
            RuntimeError::Format { .. } => "FormatError",
            RuntimeError::DanglingReference(_) => "DanglingReference",
            RuntimeError::TypeMismatchInInvariant { .. } => "TypeMismatchInInvariant",
            RuntimeError::MissingAttribute(_) => "MissingAttribute",
            RuntimeError::RecordMismatch(_) => "RecordMismatch",
            RuntimeError::MissingInput(_) => "MissingInput",
            RuntimeError::ConversionFailure { .. } => "ConversionFailure",
            RuntimeError::AttachmentViolation(_) => "AttachmentViolation",
            RuntimeError::Evaluation { .. } => "EvaluationError",
            RuntimeError::HandlerMissing(_) => "HandlerMissing",
            RuntimeError::TransformationMissing { .. } => "TransformationMissing",
            RuntimeError::InvariantViolation { .. } => "InvariantViolation",
            RuntimeError::UnknownSchema { .. } => "UnknownSchema",
        }
    }
}
