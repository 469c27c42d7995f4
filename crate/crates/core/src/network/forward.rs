use super::spec::Topology;
use super::state::NetworkState;
use crate::error::{Error, Result};

/// Temporal state carried between steps: gamma taps per input (TLRN) and
/// previous activations of recurrent layers (RN). Empty for static nets.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentContext {
    /// `taps[i][k]` is tap `k` of input `i`; tap 0 is the latest input.
    pub taps: Vec<Vec<f64>>,
    /// Previous activations, per layer; empty for non-recurrent layers.
    pub prev: Vec<Vec<f64>>,
}

impl RecurrentContext {
    pub fn new(state: &NetworkState) -> Self {
        let spec = &state.spec;
        let taps = if spec.topology == Topology::Tlrn {
            vec![vec![0.0; spec.memory_depth + 1]; spec.n_inputs]
        } else {
            Vec::new()
        };
        let prev = state
            .layout
            .layers
            .iter()
            .map(|l| if l.recurrent.is_some() { vec![0.0; l.size] } else { Vec::new() })
            .collect();
        RecurrentContext { taps, prev }
    }

    pub fn reset(&mut self) {
        self.taps.iter_mut().for_each(|t| t.fill(0.0));
        self.prev.iter_mut().for_each(|p| p.fill(0.0));
    }
}

/// One step of a gamma memory:
/// `x_0 ← u`, `x_k ← (1 − g)·x_k + g·x_{k−1}` using the previous tap values.
pub fn gamma_step(taps: &mut [f64], new_input: f64, g: f64) -> Result<()> {
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::Parameter(format!("gamma parameter must lie in (0, 1], got {g}")));
    }
    gamma_step_unchecked(taps, new_input, g);
    Ok(())
}

#[inline]
pub(crate) fn gamma_step_unchecked(taps: &mut [f64], new_input: f64, g: f64) {
    // descending k so x_{k-1} still holds its previous value
    for k in (1..taps.len()).rev() {
        taps[k] = (1.0 - g) * taps[k] + g * taps[k - 1];
    }
    if let Some(x0) = taps.first_mut() {
        *x0 = new_input;
    }
}

/// Gaussian responses `exp(−‖x − c_i‖² / (2 w_i²))`.
pub fn rbf_activations(centers: &[Vec<f64>], widths: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    if centers.len() != widths.len() {
        return Err(Error::shape(format!("{} widths", centers.len()), widths.len()));
    }
    if let Some(w) = widths.iter().find(|&&w| !(w > 0.0)) {
        return Err(Error::Parameter(format!("RBF width must be positive, got {w}")));
    }
    centers
        .iter()
        .zip(widths)
        .map(|(c, &w)| {
            if c.len() != input.len() {
                return Err(Error::shape(format!("center of width {}", input.len()), c.len()));
            }
            let d2: f64 = c.iter().zip(input).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((-d2 / (2.0 * w * w)).exp())
        })
        .collect()
}

/// Everything a backward pass needs about one forward step.
#[derive(Debug, Clone)]
pub(crate) struct StepTrace {
    pub features: Vec<f64>,
    pub acts: Vec<Vec<f64>>,
    /// Gamma taps before this step's update.
    pub taps_before: Vec<Vec<f64>>,
    /// Recurrent-layer activations of the previous step.
    pub prev_acts: Vec<Vec<f64>>,
}

impl StepTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

impl NetworkState {
    pub(crate) fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.n_inputs {
            return Err(Error::shape(format!("{} inputs", self.spec.n_inputs), input.len()));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite network input".into()));
        }
        Ok(())
    }

    pub(crate) fn check_context(&self, ctx: &RecurrentContext) -> Result<()> {
        let fresh = RecurrentContext::new(self);
        let same_shape = ctx.taps.len() == fresh.taps.len()
            && ctx.taps.iter().zip(&fresh.taps).all(|(a, b)| a.len() == b.len())
            && ctx.prev.len() == fresh.prev.len()
            && ctx.prev.iter().zip(&fresh.prev).all(|(a, b)| a.len() == b.len());
        if !same_shape {
            return Err(Error::shape("context matching the network", "mismatched context"));
        }
        Ok(())
    }

    /// Evaluate one step, advancing `ctx` in place. Inputs must already be
    /// validated.
    pub(crate) fn step(&self, input: &[f64], ctx: &mut RecurrentContext) -> StepTrace {
        let taps_before = ctx.taps.clone();
        let features = match self.spec.topology {
            Topology::Tlrn => {
                let gammas = self.gammas().expect("TLRN has gamma parameters");
                for ((taps, &u), &g) in ctx.taps.iter_mut().zip(input).zip(gammas) {
                    gamma_step_unchecked(taps, u, g);
                }
                ctx.taps.iter().flatten().copied().collect()
            }
            Topology::Rbf => {
                let b = self.basis.as_ref().expect("RBF has a basis");
                rbf_activations(&b.centers, &b.widths, input).expect("basis validated on construction")
            }
            _ => input.to_vec(),
        };

        let prev_acts = ctx.prev.clone();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layout.layers.len());
        for (l, layer) in self.layout.layers.iter().enumerate() {
            let mut net = self.params[layer.bias_offset..layer.bias_offset + layer.size].to_vec();
            for conn in &layer.conns {
                let src: &[f64] = if conn.source == 0 { &features } else { &acts[conn.source - 1] };
                let w = &self.params[conn.offset..conn.offset + layer.size * conn.cols];
                for (j, n) in net.iter_mut().enumerate() {
                    let row = &w[j * conn.cols..(j + 1) * conn.cols];
                    *n += row.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            if let Some(rec) = &layer.recurrent {
                let prev = &prev_acts[l];
                if rec.full {
                    let r = &self.params[rec.offset..rec.offset + layer.size * layer.size];
                    for (j, n) in net.iter_mut().enumerate() {
                        let row = &r[j * layer.size..(j + 1) * layer.size];
                        *n += row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    }
                } else {
                    let r = &self.params[rec.offset..rec.offset + layer.size];
                    for ((n, &rj), &pj) in net.iter_mut().zip(r).zip(prev) {
                        *n += rj * pj;
                    }
                }
            }
            let a: Vec<f64> = net.iter().map(|&x| layer.transfer.apply(x)).collect();
            if layer.recurrent.is_some() {
                ctx.prev[l].clone_from(&a);
            }
            acts.push(a);
        }
        StepTrace {
            features,
            acts,
            taps_before,
            prev_acts,
        }
    }

    /// Evaluate one step. Static topologies return the context unchanged.
    pub fn forward(&self, input: &[f64], ctx: &RecurrentContext) -> Result<(Vec<f64>, RecurrentContext)> {
        self.check_input(input)?;
        self.check_context(ctx)?;
        let mut next = ctx.clone();
        let trace = self.step(input, &mut next);
        Ok((trace.output().to_vec(), next))
    }

    /// Run a whole sequence from a fresh context.
    pub fn run_sequence<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<Vec<Vec<f64>>> {
        let mut ctx = RecurrentContext::new(self);
        inputs
            .iter()
            .map(|x| {
                self.check_input(x.as_ref())?;
                Ok(self.step(x.as_ref(), &mut ctx).output().to_vec())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::spec::{NetworkSpec, Transfer};
    use super::super::state::ParamKind;
    use super::*;

    #[test]
    fn single_sigmoid_neuron() {
        let mut spec = NetworkSpec::new(Topology::Mlp, 2, vec![], 1);
        spec.output_transfer = Transfer::Sigmoid;
        let mut s = NetworkState::build(&spec, 0).unwrap();
        s.params.copy_from_slice(&[0.5, -0.25, 0.1]);
        let ctx = RecurrentContext::new(&s);
        let (y, _) = s.forward(&[1.0, 2.0], &ctx).unwrap();
        // net = 0.5 - 0.5 + 0.1 = 0.1
        let expected = 1.0 / (1.0 + (-0.1f64).exp());
        assert!((y[0] - expected).abs() < 1e-15);
        assert!((y[0] - 0.52498).abs() < 1e-5);
    }

    #[test]
    fn zero_params_give_half_activations() {
        let mut spec = NetworkSpec::new(Topology::Mlp, 3, vec![4, 2], 2);
        spec.output_transfer = Transfer::Sigmoid;
        let mut s = NetworkState::build(&spec, 0).unwrap();
        s.params.fill(0.0);
        let mut ctx = RecurrentContext::new(&s);
        let tr = s.step(&[0.3, -2.0, 7.0], &mut ctx);
        assert!(tr.acts.iter().flatten().all(|&a| a == 0.5));
    }

    #[test]
    fn identity_output_wiring_copies_hidden() {
        let spec = NetworkSpec::new(Topology::Mlp, 2, vec![2], 2);
        let mut s = NetworkState::build(&spec, 3).unwrap();
        let out_w = s.layout.find(ParamKind::Weight, Some(1), Some(1)).unwrap().clone();
        let out_b = s.layout.find(ParamKind::Bias, Some(1), None).unwrap().clone();
        s.block_mut(&out_w).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        s.block_mut(&out_b).fill(0.0);
        let mut ctx = RecurrentContext::new(&s);
        let tr = s.step(&[0.4, 0.9], &mut ctx);
        assert_eq!(tr.acts[1], tr.acts[0]);
    }

    #[test]
    fn shape_errors() {
        let s = NetworkState::build(&NetworkSpec::new(Topology::Mlp, 2, vec![], 1), 0).unwrap();
        let ctx = RecurrentContext::new(&s);
        assert!(matches!(s.forward(&[1.0], &ctx), Err(Error::Shape { .. })));
        let t = NetworkState::build(&NetworkSpec::new(Topology::Tlrn, 2, vec![], 1), 0).unwrap();
        assert!(s.forward(&[1.0, 1.0], &RecurrentContext::new(&t)).is_err());
    }

    #[test]
    fn gamma_two_steps_by_hand() {
        let mut taps = vec![0.0; 4];
        gamma_step(&mut taps, 1.0, 0.5).unwrap();
        assert_eq!(taps, vec![1.0, 0.0, 0.0, 0.0]);
        gamma_step(&mut taps, 0.25, 0.5).unwrap();
        assert_eq!(taps, vec![0.25, 0.5, 0.0, 0.0]);
        gamma_step(&mut taps, 0.0, 0.5).unwrap();
        // x1 = 0.5*0.5 + 0.5*0.25 ; x2 = 0.5*0 + 0.5*0.5
        assert_eq!(taps, vec![0.0, 0.375, 0.25, 0.0]);
    }

    #[test]
    fn gamma_one_is_delay_line() {
        let mut taps = vec![0.0; 5];
        let u = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        for (t, &x) in u.iter().enumerate() {
            gamma_step(&mut taps, x, 1.0).unwrap();
            for (k, &tap) in taps.iter().enumerate() {
                let expected = if t >= k { u[t - k] } else { 0.0 };
                assert_eq!(tap, expected);
            }
        }
    }

    #[test]
    fn gamma_converges_to_constant_input() {
        let mut taps = vec![0.0; 11];
        for _ in 0..2000 {
            gamma_step(&mut taps, 0.7, 0.3).unwrap();
        }
        assert!(taps.iter().all(|&x| (x - 0.7).abs() < 1e-12));
        assert!(gamma_step(&mut taps, 1.0, 0.0).is_err());
        assert!(gamma_step(&mut taps, 1.0, 1.5).is_err());
    }

    #[test]
    fn rbf_responses() {
        let c = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        let r = rbf_activations(&c, &[1.0, 5.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r[0], 1.0);
        // distance 5 == width 5
        assert!((r[1] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((r[1] - 0.60653).abs() < 1e-5);
        let far = rbf_activations(&c, &[1.0, 1.0], &[1e3, 1e3]).unwrap();
        assert!(far.iter().all(|&v| v < 1e-300));
        assert!(rbf_activations(&c, &[1.0, 0.0], &[0.0, 0.0]).is_err());
    }
}
