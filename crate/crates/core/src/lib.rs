//! Temporary build scaffold; full module map lands with the remaining files.
pub mod formulas;
pub mod job;
pub mod reps;
pub mod scalar;
pub mod tensor;
pub mod trace;
pub mod verify;

pub use formulas::{rank_recursion, closed_form, tensor_split, MMatrix, SplitArity};
pub use reps::{Assembly, Case, ModuleSpec, Realization, RepModule, RepNode};
pub use scalar::Scalar;
pub use tensor::{LinearOperator, Space};
pub use trace::{Composition, VarCollection, WeightResult};
pub use job::{cmd_compute, cmd_explain, cmd_verify, fingerprint, JobError, JobSpec, Method};
pub use verify::{has_failures, run_suite, ReportEntry, Scale, Suite, Verdict, VerifyError};
