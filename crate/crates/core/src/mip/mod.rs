//! Mixed-integer program data model, MPS I/O, and instance transforms.

mod model;
mod mps;
mod transform;

pub use model::{
    Coefficient, ConstraintDef, ConstraintSense, MipInstance, ModelError, ObjectiveSense,
    VarType, VariableDef,
};
pub use mps::{parse_mps, write_mps, MpsError};
pub use transform::{add_pseudo_cut, drop_constraints, PSEUDO_CUT_NAME};
