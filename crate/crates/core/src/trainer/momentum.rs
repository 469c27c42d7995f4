use crate::network::ParamGroup;

/// `ΔW(k) = γ·ΔW(k−1) − μ·δE(k)`. The caller applies `W ← W + ΔW`.
#[inline]
pub fn momentum_update(prev_delta: f64, grad: f64, step_size: f64, momentum: f64) -> f64 {
    momentum * prev_delta - step_size * grad
}

/// Per-group step size and momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub step_size: f64,
    pub momentum: f64,
}

/// Momentum state for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    deltas: Vec<f64>,
    groups: Vec<ParamGroup>,
    /// Parameters that never move (e.g. frozen gamma).
    frozen: Vec<bool>,
}

impl Momentum {
    pub fn new(groups: Vec<ParamGroup>, frozen: Vec<bool>) -> Self {
        Momentum {
            deltas: vec![0.0; groups.len()],
            groups,
            frozen,
        }
    }

    pub fn clear(&mut self) {
        self.deltas.fill(0.0);
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], hidden: GroupRates, output: GroupRates) {
        for i in 0..params.len() {
            if self.frozen[i] {
                continue;
            }
            let r = match self.groups[i] {
                ParamGroup::Hidden => hidden,
                ParamGroup::Output => output,
            };
            self.deltas[i] = momentum_update(self.deltas[i], grad[i], r.step_size, r.momentum);
            params[i] += self.deltas[i];
        }
    }
}
