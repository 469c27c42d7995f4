//! The five network topologies: parameter layout, forward evaluation,
//! gamma memory, Gaussian basis layer and model files.

mod forward;
mod persist;
mod spec;
mod state;

pub use forward::{gamma_step, rbf_activations, RecurrentContext};
pub(crate) use forward::StepTrace;
pub use persist::ModelFile;
pub use spec::{
    kolmogorov_hidden, lallahem_feasible, sigmoid, NetworkSpec, Recurrence, Topology, Transfer, MAX_HIDDEN_LAYERS,
};
pub use state::{Layout, NetworkState, ParamBlock, ParamGroup, ParamKind, RbfBasis, INIT_GAMMA, INIT_RANGE};
