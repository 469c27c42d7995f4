//! Analytic gradients of the cost `E = ½ Σ_t Σ_j (d_tj − y_tj)²`.
//!
//! Static topologies back-propagate through one step per sample. Temporal
//! ones unroll a trajectory of steps; whatever context precedes the
//! trajectory is treated as a constant.

use crate::error::{Error, Result};
use crate::network::{NetworkState, RecurrentContext, StepTrace};

/// Gradient of the cost with respect to every entry of
/// [`NetworkState::params`], in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
    /// The cost the gradient belongs to.
    pub cost: f64,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Gradients {
            values: vec![0.0; n],
            cost: 0.0,
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        self.cost += other.cost;
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self.cost *= factor;
    }
}

/// One step of a trajectory: input, target, and whether the target counts
/// towards the cost.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
    pub scored: bool,
}

fn check_target(state: &NetworkState, d: &[f64]) -> Result<()> {
    if d.len() != state.spec.n_outputs {
        return Err(Error::shape(format!("{} targets", state.spec.n_outputs), d.len()));
    }
    Ok(())
}

fn divergence_check(traces: &[StepTrace]) -> Result<()> {
    if traces.iter().any(|t| t.output().iter().any(|v| !v.is_finite())) {
        return Err(Error::Divergence("non-finite activation".into()));
    }
    Ok(())
}

/// Cost of a trajectory started from `ctx`, which is advanced in place.
pub(crate) fn trajectory_cost(state: &NetworkState, ctx: &mut RecurrentContext, steps: &[Step]) -> f64 {
    steps
        .iter()
        .map(|s| {
            let tr = state.step(s.input, ctx);
            if s.scored {
                0.5 * tr.output().iter().zip(s.target).map(|(y, d)| (d - y) * (d - y)).sum::<f64>()
            } else {
                0.0
            }
        })
        .sum()
}

/// Forward a trajectory from `ctx` (advanced in place) and back-propagate
/// through all of its steps.
pub(crate) fn trajectory_gradients(state: &NetworkState, ctx: &mut RecurrentContext, steps: &[Step]) -> Result<Gradients> {
    let traces: Vec<StepTrace> = steps.iter().map(|s| state.step(s.input, ctx)).collect();
    divergence_check(&traces)?;
    Ok(backward(state, &traces, steps))
}

fn backward(state: &NetworkState, traces: &[StepTrace], steps: &[Step]) -> Gradients {
    let layout = &state.layout;
    let params = &state.params;
    let n_layers = layout.layers.len();
    let mut grad = Gradients::zeros(params.len());

    let depth = state.spec.memory_depth + 1;
    let gammas = state.gammas();
    let n_in = state.spec.n_inputs;

    // adjoints flowing from step t+1 back into step t
    let mut rec_carry: Vec<Vec<f64>> = layout.layers.iter().map(|l| vec![0.0; l.size]).collect();
    let mut tap_carry: Vec<f64> = if gammas.is_some() { vec![0.0; n_in * depth] } else { Vec::new() };

    for t in (0..traces.len()).rev() {
        let tr = &traces[t];
        let step = &steps[t];
        let mut da: Vec<Vec<f64>> = std::mem::take(&mut rec_carry);
        if step.scored {
            let y = tr.output();
            for ((g, &yj), &dj) in da[n_layers - 1].iter_mut().zip(y).zip(step.target) {
                *g += yj - dj;
                grad.cost += 0.5 * (dj - yj) * (dj - yj);
            }
        }
        let mut dfeat = vec![0.0; layout.feature_width];
        rec_carry = layout.layers.iter().map(|l| vec![0.0; l.size]).collect();

        for l in (0..n_layers).rev() {
            let layer = &layout.layers[l];
            let delta: Vec<f64> = da[l]
                .iter()
                .zip(&tr.acts[l])
                .map(|(g, &a)| g * layer.transfer.derivative_from_output(a))
                .collect();
            for (gb, d) in grad.values[layer.bias_offset..layer.bias_offset + layer.size]
                .iter_mut()
                .zip(&delta)
            {
                *gb += d;
            }
            for conn in &layer.conns {
                let src: &[f64] = if conn.source == 0 { &tr.features } else { &tr.acts[conn.source - 1] };
                let w = &params[conn.offset..conn.offset + layer.size * conn.cols];
                let gw = &mut grad.values[conn.offset..conn.offset + layer.size * conn.cols];
                let mut back = vec![0.0; conn.cols];
                for (j, &dj) in delta.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let row = j * conn.cols..(j + 1) * conn.cols;
                    for ((g, &s), (b, &wv)) in gw[row.clone()].iter_mut().zip(src).zip(back.iter_mut().zip(&w[row])) {
                        *g += dj * s;
                        *b += dj * wv;
                    }
                }
                let target = if conn.source == 0 { &mut dfeat } else { &mut da[conn.source - 1] };
                for (a, b) in target.iter_mut().zip(back) {
                    *a += b;
                }
            }
            if let Some(rec) = &layer.recurrent {
                let prev = &tr.prev_acts[l];
                let n = layer.size;
                if rec.full {
                    for j in 0..n {
                        for k in 0..n {
                            grad.values[rec.offset + j * n + k] += delta[j] * prev[k];
                            if t > 0 {
                                rec_carry[l][k] += params[rec.offset + j * n + k] * delta[j];
                            }
                        }
                    }
                } else {
                    for j in 0..n {
                        grad.values[rec.offset + j] += delta[j] * prev[j];
                        if t > 0 {
                            rec_carry[l][j] += params[rec.offset + j] * delta[j];
                        }
                    }
                }
            }
        }

        if let (Some(gs), Some(goff)) = (gammas, layout.gamma_offset) {
            // lambda[i*depth + k] = dE/dx_{i,k}(t)
            let lambda: Vec<f64> = dfeat.iter().zip(&tap_carry).map(|(a, b)| a + b).collect();
            let mut next_carry = vec![0.0; lambda.len()];
            for i in 0..n_in {
                let g = gs[i];
                let before = &tr.taps_before[i];
                let lam = &lambda[i * depth..(i + 1) * depth];
                let mut dg = 0.0;
                for k in 1..depth {
                    dg += lam[k] * (before[k - 1] - before[k]);
                }
                grad.values[goff + i] += dg;
                if t > 0 {
                    // x_k(t-1) feeds x_k(t) with (1-g) for k >= 1 and x_{k+1}(t) with g
                    let carry = &mut next_carry[i * depth..(i + 1) * depth];
                    for k in 0..depth {
                        let mut c = 0.0;
                        if k >= 1 {
                            c += (1.0 - g) * lam[k];
                        }
                        if k + 1 < depth {
                            c += g * lam[k + 1];
                        }
                        carry[k] = c;
                    }
                }
            }
            tap_carry = next_carry;
        }
    }
    grad
}

/// Gradient over a batch of independent samples, each evaluated from a
/// fresh context.
pub fn gradients<X: AsRef<[f64]>, D: AsRef<[f64]>>(state: &NetworkState, inputs: &[X], targets: &[D]) -> Result<Gradients> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::shape("a nonempty batch with one target per input", format!("{} / {}", inputs.len(), targets.len())));
    }
    let mut total = Gradients::zeros(state.params.len());
    let fresh = RecurrentContext::new(state);
    for (x, d) in inputs.iter().zip(targets) {
        state.check_input(x.as_ref())?;
        check_target(state, d.as_ref())?;
        let mut ctx = fresh.clone();
        let step = Step {
            input: x.as_ref(),
            target: d.as_ref(),
            scored: true,
        };
        total.accumulate(&trajectory_gradients(state, &mut ctx, &[step])?);
    }
    Ok(total)
}

/// Truncated back-propagation through time at the end of a sequence.
///
/// The network runs from a fresh context over the first
/// `len − min(trajectory_length, len)` steps without recording; the last
/// `min(trajectory_length, len)` steps are unrolled and every one of them
/// contributes to the cost.
pub fn bptt_gradients<X: AsRef<[f64]>, D: AsRef<[f64]>>(
    state: &NetworkState,
    inputs: &[X],
    targets: &[D],
    trajectory_length: usize,
) -> Result<Gradients> {
    if !state.spec.topology.is_temporal() {
        return Err(Error::Usage(format!(
            "back-propagation through time needs a temporal topology, got {}",
            state.spec.topology
        )));
    }
    if inputs.is_empty() || inputs.len() != targets.len() || trajectory_length == 0 {
        return Err(Error::shape("a nonempty sequence and trajectory length", format!("{} / {}", inputs.len(), targets.len())));
    }
    for (x, d) in inputs.iter().zip(targets) {
        state.check_input(x.as_ref())?;
        check_target(state, d.as_ref())?;
    }
    let unroll = trajectory_length.min(inputs.len());
    let warm = inputs.len() - unroll;
    let mut ctx = RecurrentContext::new(state);
    for x in &inputs[..warm] {
        state.step(x.as_ref(), &mut ctx);
    }
    let steps: Vec<Step> = inputs[warm..]
        .iter()
        .zip(&targets[warm..])
        .map(|(x, d)| Step {
            input: x.as_ref(),
            target: d.as_ref(),
            scored: true,
        })
        .collect();
    trajectory_gradients(state, &mut ctx, &steps)
}

/// Cost matching [`bptt_gradients`]: sum over the unrolled tail only.
pub fn bptt_cost<X: AsRef<[f64]>, D: AsRef<[f64]>>(
    state: &NetworkState,
    inputs: &[X],
    targets: &[D],
    trajectory_length: usize,
) -> f64 {
    let unroll = trajectory_length.min(inputs.len());
    let warm = inputs.len() - unroll;
    let mut ctx = RecurrentContext::new(state);
    for x in &inputs[..warm] {
        state.step(x.as_ref(), &mut ctx);
    }
    let steps: Vec<Step> = inputs[warm..]
        .iter()
        .zip(&targets[warm..])
        .map(|(x, d)| Step {
            input: x.as_ref(),
            target: d.as_ref(),
            scored: true,
        })
        .collect();
    trajectory_cost(state, &mut ctx, &steps)
}

/// Cost matching [`gradients`].
pub fn batch_cost<X: AsRef<[f64]>, D: AsRef<[f64]>>(state: &NetworkState, inputs: &[X], targets: &[D]) -> f64 {
    let fresh = RecurrentContext::new(state);
    inputs
        .iter()
        .zip(targets)
        .map(|(x, d)| {
            let step = Step {
                input: x.as_ref(),
                target: d.as_ref(),
                scored: true,
            };
            trajectory_cost(state, &mut fresh.clone(), &[step])
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkSpec, ParamKind, Topology};

    #[test]
    fn single_linear_neuron_by_hand() {
        let spec = NetworkSpec::new(Topology::Mlp, 1, vec![], 1);
        let mut s = NetworkState::build(&spec, 0).unwrap();
        s.params.fill(0.0);
        let g = gradients(&s, &[[1.0]], &[[1.0]]).unwrap();
        // E = (d - wx - b)^2 / 2 -> dE/dw = -(d - y) x = -1
        assert_eq!(g.values, vec![-1.0, -1.0]);
        assert_eq!(g.cost, 0.5);
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let spec = NetworkSpec::new(Topology::Gffn, 3, vec![4], 2);
        let s = NetworkState::build(&spec, 5).unwrap();
        let x = [0.1, 0.7, -0.3];
        let (y, _) = s.forward(&x, &RecurrentContext::new(&s)).unwrap();
        let g = gradients(&s, &[x.to_vec()], &[y]).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bptt_rejects_static() {
        let s = NetworkState::build(&NetworkSpec::new(Topology::Mlp, 1, vec![], 1), 0).unwrap();
        assert!(matches!(bptt_gradients(&s, &[[1.0]], &[[1.0]], 3), Err(Error::Usage(_))));
    }

    #[test]
    fn trajectory_one_freezes_context() {
        let spec = NetworkSpec::new(Topology::Rn, 2, vec![3], 1);
        let s = NetworkState::build(&spec, 2).unwrap();
        let xs = [[0.2, 0.4], [0.9, -0.1], [0.3, 0.3]];
        let ds = [[0.1], [0.5], [0.2]];
        let g = bptt_gradients(&s, &xs, &ds, 1).unwrap();

        // static backprop through the last step, context held fixed
        let mut ctx = RecurrentContext::new(&s);
        s.step(&xs[0], &mut ctx);
        s.step(&xs[1], &mut ctx);
        let step = Step {
            input: &xs[2],
            target: &ds[2],
            scored: true,
        };
        let manual = trajectory_gradients(&s, &mut ctx, &[step]).unwrap();
        assert_eq!(g, manual);
        let rec = s.layout.find(ParamKind::Recurrent, Some(0), None).unwrap();
        assert!(g.values[rec.range()].iter().any(|&v| v != 0.0));
    }
}
