use rand::Rng;

use super::spec::{NetworkSpec, Recurrence, Topology, Transfer};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Half-width of the uniform initialization interval.
pub const INIT_RANGE: f64 = 0.5;
/// Initial gamma memory parameter.
pub const INIT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    Recurrent,
    Gamma,
}

impl ParamKind {
    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Weight => "weight",
            ParamKind::Bias => "bias",
            ParamKind::Recurrent => "recurrent",
            ParamKind::Gamma => "gamma",
        }
    }
}

/// Which step size / momentum pair a parameter trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Hidden,
    Output,
}

/// A contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub kind: ParamKind,
    /// Receiving layer; `None` for gamma parameters.
    pub layer: Option<usize>,
    /// Source index for weight blocks: 0 is the feature vector, `s > 0` is
    /// the output of layer `s - 1`.
    pub source: Option<usize>,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Connection {
    pub source: usize,
    pub offset: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RecurrentLayout {
    pub offset: usize,
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerLayout {
    pub size: usize,
    pub transfer: Transfer,
    /// The direct connection (from the previous layer) comes first.
    pub conns: Vec<Connection>,
    pub bias_offset: usize,
    pub recurrent: Option<RecurrentLayout>,
}

/// Parameter layout derived from a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub(crate) layers: Vec<LayerLayout>,
    pub(crate) gamma_offset: Option<usize>,
    pub(crate) feature_width: usize,
    blocks: Vec<ParamBlock>,
    len: usize,
}

impl Layout {
    pub fn new(spec: &NetworkSpec) -> Self {
        let mut sizes = spec.nodes_per_hidden.clone();
        sizes.push(spec.n_outputs);
        let n_layers = sizes.len();
        let feature_width = spec.feature_width();
        let source_width = |s: usize| if s == 0 { feature_width } else { sizes[s - 1] };

        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |blocks: &mut Vec<ParamBlock>, kind, layer, source, rows, cols| {
            let b = ParamBlock {
                kind,
                layer,
                source,
                offset,
                rows,
                cols,
            };
            offset += rows * cols;
            blocks.push(b.clone());
            b
        };

        let mut layers = Vec::with_capacity(n_layers);
        for (l, &size) in sizes.iter().enumerate() {
            let mut sources = vec![l];
            if spec.topology == Topology::Gffn {
                sources.extend(0..l);
            }
            let conns = sources
                .into_iter()
                .map(|s| {
                    let b = push(&mut blocks, ParamKind::Weight, Some(l), Some(s), size, source_width(s));
                    Connection {
                        source: s,
                        offset: b.offset,
                        cols: b.cols,
                    }
                })
                .collect();
            let bias_offset = push(&mut blocks, ParamKind::Bias, Some(l), None, size, 1).offset;
            // Hidden layers recur; with no hidden layer the output layer does.
            let recurs = spec.topology == Topology::Rn && (l + 1 < n_layers || n_layers == 1);
            let recurrent = recurs.then(|| {
                let full = spec.recurrence == Recurrence::Full;
                let cols = if full { size } else { 1 };
                RecurrentLayout {
                    offset: push(&mut blocks, ParamKind::Recurrent, Some(l), None, size, cols).offset,
                    full,
                }
            });
            let transfer = if l + 1 == n_layers {
                spec.output_transfer
            } else {
                Transfer::Sigmoid
            };
            layers.push(LayerLayout {
                size,
                transfer,
                conns,
                bias_offset,
                recurrent,
            });
        }
        let gamma_offset = (spec.topology == Topology::Tlrn)
            .then(|| push(&mut blocks, ParamKind::Gamma, None, None, spec.n_inputs, 1).offset);
        Layout {
            layers,
            gamma_offset,
            feature_width,
            blocks,
            len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_size(&self, l: usize) -> usize {
        self.layers[l].size
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// Group of every parameter, indexed like the flat vector.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let out_layer = self.layers.len() - 1;
        let mut g = vec![ParamGroup::Hidden; self.len];
        for b in &self.blocks {
            if b.layer == Some(out_layer) {
                g[b.range()].fill(ParamGroup::Output);
            }
        }
        g
    }

    /// Kind of every parameter, indexed like the flat vector.
    pub fn kinds(&self) -> Vec<ParamKind> {
        let mut k = vec![ParamKind::Weight; self.len];
        for b in &self.blocks {
            k[b.range()].fill(b.kind);
        }
        k
    }

    pub fn find(&self, kind: ParamKind, layer: Option<usize>, source: Option<usize>) -> Option<&ParamBlock> {
        self.blocks
            .iter()
            .find(|b| b.kind == kind && b.layer == layer && b.source == source)
    }
}

/// Frozen Gaussian basis of an RBF network.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfBasis {
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

/// A network's parameters. All trainable values live in one flat vector
/// described by [`Layout`]; the RBF basis is held separately because it is
/// fitted by clustering, not by gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub basis: Option<RbfBasis>,
    pub seed: u64,
}

impl NetworkState {
    /// Weights, biases and recurrent weights uniform in `[-0.5, 0.5]`;
    /// gamma parameters at 0.5; RBF centers uniform in the unit cube with
    /// unit widths until clustering replaces them.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::new(spec);
        let mut rng = seeded_rng(seed);
        let mut params = vec![0.0; layout.len()];
        for b in layout.blocks() {
            for p in &mut params[b.range()] {
                *p = match b.kind {
                    ParamKind::Gamma => INIT_GAMMA,
                    _ => rng.gen_range(-INIT_RANGE..=INIT_RANGE),
                };
            }
        }
        let basis = (spec.topology == Topology::Rbf).then(|| RbfBasis {
            centers: (0..spec.n_centers)
                .map(|_| (0..spec.n_inputs).map(|_| rng.gen::<f64>()).collect())
                .collect(),
            widths: vec![1.0; spec.n_centers],
        });
        Ok(NetworkState {
            spec: spec.clone(),
            layout,
            params,
            basis,
            seed,
        })
    }

    pub fn block(&self, b: &ParamBlock) -> &[f64] {
        &self.params[b.range()]
    }

    pub fn block_mut(&mut self, b: &ParamBlock) -> &mut [f64] {
        let r = b.range();
        &mut self.params[r]
    }

    pub fn gammas(&self) -> Option<&[f64]> {
        self.layout
            .gamma_offset
            .map(|o| &self.params[o..o + self.spec.n_inputs])
    }

    pub fn set_basis(&mut self, basis: RbfBasis) -> Result<()> {
        if self.spec.topology != Topology::Rbf {
            return Err(Error::Usage(format!("{} has no radial basis", self.spec.topology)));
        }
        if basis.centers.len() != self.spec.n_centers || basis.widths.len() != self.spec.n_centers {
            return Err(Error::shape(
                format!("{} centers", self.spec.n_centers),
                format!("{} centers / {} widths", basis.centers.len(), basis.widths.len()),
            ));
        }
        if basis.centers.iter().any(|c| c.len() != self.spec.n_inputs) {
            return Err(Error::shape(format!("centers of width {}", self.spec.n_inputs), "ragged centers"));
        }
        if basis.widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Parameter("RBF widths must be positive".into()));
        }
        self.basis = Some(basis);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hidden_mlp_shape() {
        let spec = NetworkSpec::new(Topology::Mlp, 25, vec![], 14);
        let s = NetworkState::build(&spec, 1).unwrap();
        let blocks = s.layout.blocks();
        assert_eq!(blocks.len(), 2);
        assert_eq!((blocks[0].kind, blocks[0].rows, blocks[0].cols), (ParamKind::Weight, 14, 25));
        assert_eq!((blocks[1].kind, blocks[1].len()), (ParamKind::Bias, 14));
        assert_eq!(s.params.len(), 25 * 14 + 14);
    }

    #[test]
    fn build_is_deterministic_and_in_range() {
        let spec = NetworkSpec::new(Topology::Rn, 6, vec![4, 3], 2);
        let a = NetworkState::build(&spec, 9).unwrap();
        let b = NetworkState::build(&spec, 9).unwrap();
        assert_eq!(a.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>(), b.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
        assert!(a.params.iter().all(|p| p.abs() <= INIT_RANGE));
        let c = NetworkState::build(&spec, 10).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn gffn_has_skip_connections_mlp_lacks() {
        let mlp = Layout::new(&NetworkSpec::new(Topology::Mlp, 25, vec![14, 14], 14));
        let gffn = Layout::new(&NetworkSpec::new(Topology::Gffn, 25, vec![14, 14], 14));
        let weight_blocks = |l: &Layout| l.blocks().iter().filter(|b| b.kind == ParamKind::Weight).count();
        assert_eq!(weight_blocks(&mlp), 3);
        // layer0: {0}; layer1: {1,0}; output: {2,0,1}
        assert_eq!(weight_blocks(&gffn), 6);
        assert!(gffn.find(ParamKind::Weight, Some(2), Some(0)).is_some());
        assert!(mlp.find(ParamKind::Weight, Some(2), Some(0)).is_none());
        let conn = |l: &Layout| l.blocks().iter().filter(|b| b.kind == ParamKind::Weight).map(|b| b.len()).sum::<usize>();
        assert_eq!(conn(&gffn) - conn(&mlp), 25 * 14 + 25 * 14 + 14 * 14);
    }

    #[test]
    fn recurrent_and_gamma_blocks() {
        let mut spec = NetworkSpec::new(Topology::Rn, 3, vec![4], 2);
        let partial = Layout::new(&spec);
        assert_eq!(partial.find(ParamKind::Recurrent, Some(0), None).unwrap().len(), 4);
        assert!(partial.find(ParamKind::Recurrent, Some(1), None).is_none());
        spec.recurrence = Recurrence::Full;
        assert_eq!(Layout::new(&spec).find(ParamKind::Recurrent, Some(0), None).unwrap().len(), 16);
        spec.nodes_per_hidden.clear();
        assert!(Layout::new(&spec).find(ParamKind::Recurrent, Some(0), None).is_some());

        let t = NetworkSpec::new(Topology::Tlrn, 3, vec![], 2);
        let s = NetworkState::build(&t, 0).unwrap();
        assert_eq!(s.gammas().unwrap(), &[0.5, 0.5, 0.5]);
        assert_eq!(s.layout.feature_width(), 33);
    }

    #[test]
    fn groups_split_output_layer() {
        let spec = NetworkSpec::new(Topology::Mlp, 2, vec![3], 1);
        let l = Layout::new(&spec);
        let g = l.groups();
        assert_eq!(g.iter().filter(|&&x| x == ParamGroup::Output).count(), 3 + 1);
        assert_eq!(g.iter().filter(|&&x| x == ParamGroup::Hidden).count(), 6 + 3);
    }
}
