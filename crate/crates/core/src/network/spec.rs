use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Upper bound on hidden layers covered by the sweep grid.
pub const MAX_HIDDEN_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Topology {
    /// Multilayer perceptron: each layer feeds only the next.
    Mlp,
    /// Generalized feed-forward: every layer also feeds every later layer.
    Gffn,
    /// Gaussian basis layer over learned centers, then a feed-forward stack.
    Rbf,
    /// Focused gamma memory on the inputs, then a feed-forward stack.
    Tlrn,
    /// Feed-forward stack whose hidden layers feed back on themselves.
    Rn,
}

impl Topology {
    pub const ALL: [Topology; 5] = [Topology::Tlrn, Topology::Rn, Topology::Mlp, Topology::Gffn, Topology::Rbf];

    pub fn code(self) -> &'static str {
        match self {
            Topology::Mlp => "MLP",
            Topology::Gffn => "GFFN",
            Topology::Rbf => "RBF",
            Topology::Tlrn => "TLRN",
            Topology::Rn => "RN",
        }
    }

    /// Whether outputs depend on earlier inputs in the sequence.
    pub fn is_temporal(self) -> bool {
        matches!(self, Topology::Tlrn | Topology::Rn)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        Topology::ALL
            .iter()
            .copied()
            .find(|x| x.code().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown topology `{t}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transfer {
    Sigmoid,
    Linear,
}

impl Transfer {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transfer::Sigmoid => sigmoid(x),
            Transfer::Linear => x,
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Transfer::Sigmoid => a * (1.0 - a),
            Transfer::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transfer::Sigmoid => "sigmoid",
            Transfer::Linear => "linear",
        }
    }
}

impl FromStr for Transfer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Transfer::Sigmoid),
            "linear" => Ok(Transfer::Linear),
            other => Err(format!("unknown transfer `{other}`")),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Hidden-layer feedback for [`Topology::Rn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recurrence {
    /// Each unit feeds back only to itself.
    Partial,
    /// Full unit-to-unit matrix within the layer.
    Full,
}

impl Recurrence {
    pub fn name(self) -> &'static str {
        match self {
            Recurrence::Partial => "partial",
            Recurrence::Full => "full",
        }
    }
}

impl FromStr for Recurrence {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "partial" => Ok(Recurrence::Partial),
            "full" => Ok(Recurrence::Full),
            other => Err(format!("unknown recurrence `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub nodes_per_hidden: Vec<usize>,
    /// Gamma taps per input after the current value (TLRN).
    pub memory_depth: usize,
    pub trajectory_length: usize,
    /// Basis units (RBF).
    pub n_centers: usize,
    pub recurrence: Recurrence,
    pub output_transfer: Transfer,
}

impl NetworkSpec {
    /// A spec with the defaults of the comparison grid: depth-10 memory,
    /// 10-step trajectories, 80 centers, partial recurrence, linear output.
    pub fn new(topology: Topology, n_inputs: usize, nodes_per_hidden: Vec<usize>, n_outputs: usize) -> Self {
        NetworkSpec {
            topology,
            n_inputs,
            n_outputs,
            nodes_per_hidden,
            memory_depth: 10,
            trajectory_length: 10,
            n_centers: 80,
            recurrence: Recurrence::Partial,
            output_transfer: Transfer::Linear,
        }
    }

    pub fn hidden_layers(&self) -> usize {
        self.nodes_per_hidden.len()
    }

    /// Width of the vector the first weighted layer sees.
    pub fn feature_width(&self) -> usize {
        match self.topology {
            Topology::Tlrn => self.n_inputs * (self.memory_depth + 1),
            Topology::Rbf => self.n_centers,
            _ => self.n_inputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_outputs == 0 {
            return Err(Error::Parameter("networks need at least one input and one output".into()));
        }
        if self.hidden_layers() > MAX_HIDDEN_LAYERS {
            return Err(Error::Parameter(format!(
                "at most {MAX_HIDDEN_LAYERS} hidden layers, got {}",
                self.hidden_layers()
            )));
        }
        if self.nodes_per_hidden.contains(&0) {
            return Err(Error::Parameter("hidden layers need at least one node".into()));
        }
        if self.topology == Topology::Tlrn && self.memory_depth == 0 {
            return Err(Error::Parameter("TLRN memory depth must be >= 1".into()));
        }
        if self.topology == Topology::Rbf && self.n_centers == 0 {
            return Err(Error::Parameter("RBF needs at least one center".into()));
        }
        if self.trajectory_length == 0 {
            return Err(Error::Parameter("trajectory length must be >= 1".into()));
        }
        Ok(())
    }
}

/// Hidden-node count from the `2n + 1` rule.
pub fn kolmogorov_hidden(n_inputs: usize) -> Result<usize> {
    if n_inputs < 1 {
        return Err(Error::Domain("kolmogorov_hidden needs n >= 1".into()));
    }
    Ok(2 * n_inputs + 1)
}

/// `(A + 1)·B + (B + 1)·C ≤ D / 10` for `A` inputs, `B` hidden nodes,
/// `C` outputs and `D` training exemplars. Evaluated as
/// `10·((A+1)·B + (B+1)·C) ≤ D` to stay in integers.
pub fn lallahem_feasible(a: u64, b: u64, c: u64, d: u64) -> bool {
    let lhs = (a + 1) as u128 * b as u128 + (b + 1) as u128 * c as u128;
    10 * lhs <= d as u128
}
