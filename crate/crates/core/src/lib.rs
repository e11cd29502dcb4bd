//! Schema evolution for persistent object-oriented data.
//!
//! The crate covers the whole workflow: parsing versioned class schemas,
//! detecting attribute-level schema modification operators between two
//! versions, generating and interpreting object transformers, enforcing class
//! invariants when objects are retrieved, managing numbered releases on disk
//! and measuring how robust a class history is to evolution.

pub mod cli;
pub mod converter;
pub mod expr;
pub mod lexer;
pub mod per;
pub mod release;
pub mod runtime;
pub mod schema;
pub mod smo;
pub mod transformer;
pub mod value;

pub use converter::{assignable, ConverterRegistry};
pub use per::{per_class, per_release, per_version, EvolutionHistory};
pub use release::{apply_filter, Release, Repository};
pub use runtime::{
    deserialize, eval_invariant, interpret_transformer, retrieve, serialize, Field, ObjectGraph,
    ObjectRecord, RetrieveOptions,
};
pub use schema::{parse_schema, render_schema, type_equal, Attribute, ClassSchema, TypeExpr};
pub use smo::{apply_smo, apply_transformation, completeness_witness, diff_schemas, ClassTransformation, Smo};
pub use transformer::{
    generate_transformer, parse_transformer, render_transformer, Instr, ObjectTransformer,
};
pub use value::ObjectValue;
