//! Plain-text model files.
//!
//! ```text
//! ippsnet-model 1
//! topology TLRN
//! n_inputs 26
//! ...
//! block weight layer=0 source=0 rows=14 cols=286
//! <rows*cols values>
//! ...
//! basis 80 26
//! <one center per line> ... widths <values>
//! normalizer
//! column=min,max
//! end
//! ```
//!
//! Floats are written in shortest round-trip scientific notation, so a
//! save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::spec::{NetworkSpec, Recurrence, Topology, Transfer};
use super::state::{Layout, NetworkState, RbfBasis};
use crate::dataset::Normalizer;
use crate::error::{Error, Result};

const MAGIC: &str = "ippsnet-model";
const VERSION: u32 = 1;

/// A network together with the normalizer its inputs were encoded with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub state: NetworkState,
    pub normalizer: Option<Normalizer>,
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:e}").unwrap();
    }
    s
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let st = &self.state;
        let sp = &st.spec;
        let mut out = String::new();
        let hidden: Vec<String> = sp.nodes_per_hidden.iter().map(ToString::to_string).collect();
        writeln!(out, "{MAGIC} {VERSION}").unwrap();
        writeln!(out, "topology {}", sp.topology).unwrap();
        writeln!(out, "n_inputs {}", sp.n_inputs).unwrap();
        writeln!(out, "n_outputs {}", sp.n_outputs).unwrap();
        writeln!(out, "hidden {}", if hidden.is_empty() { "-".to_string() } else { hidden.join(",") }).unwrap();
        writeln!(out, "memory_depth {}", sp.memory_depth).unwrap();
        writeln!(out, "trajectory_length {}", sp.trajectory_length).unwrap();
        writeln!(out, "n_centers {}", sp.n_centers).unwrap();
        writeln!(out, "recurrence {}", sp.recurrence.name()).unwrap();
        writeln!(out, "output_transfer {}", sp.output_transfer.name()).unwrap();
        writeln!(out, "seed {}", st.seed).unwrap();
        for b in st.layout.blocks() {
            let layer = b.layer.map_or("-".to_string(), |l| l.to_string());
            let source = b.source.map_or("-".to_string(), |s| s.to_string());
            writeln!(
                out,
                "block {} layer={layer} source={source} rows={} cols={}",
                b.kind.name(),
                b.rows,
                b.cols
            )
            .unwrap();
            writeln!(out, "{}", join(st.block(b))).unwrap();
        }
        if let Some(basis) = &st.basis {
            writeln!(out, "basis {} {}", basis.centers.len(), sp.n_inputs).unwrap();
            for c in &basis.centers {
                writeln!(out, "{}", join(c)).unwrap();
            }
            writeln!(out, "{}", join(&basis.widths)).unwrap();
        }
        if let Some(n) = &self.normalizer {
            writeln!(out, "normalizer").unwrap();
            out.push_str(&n.to_text());
        }
        writeln!(out, "end").unwrap();
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader {
            lines: text.lines().collect(),
            pos: 0,
        };
        let head = r.next("header")?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(r.err(format!("not a model file (expected `{MAGIC}` header)")));
        }
        let version: u32 = r.parse_tok(parts.next(), "version")?;
        if version != VERSION {
            return Err(r.err(format!("unsupported model version {version}")));
        }
        let topology: Topology = r.field("topology")?;
        let n_inputs: usize = r.field("n_inputs")?;
        let n_outputs: usize = r.field("n_outputs")?;
        let hidden_raw: String = r.field("hidden")?;
        let nodes_per_hidden = if hidden_raw == "-" {
            Vec::new()
        } else {
            hidden_raw
                .split(',')
                .map(|t| r.parse_tok(Some(t), "hidden"))
                .collect::<Result<Vec<usize>>>()?
        };
        let spec = NetworkSpec {
            topology,
            n_inputs,
            n_outputs,
            nodes_per_hidden,
            memory_depth: r.field("memory_depth")?,
            trajectory_length: r.field("trajectory_length")?,
            n_centers: r.field("n_centers")?,
            recurrence: r.field::<Recurrence>("recurrence")?,
            output_transfer: r.field::<Transfer>("output_transfer")?,
        };
        spec.validate().map_err(|e| r.err(e.to_string()))?;
        let seed: u64 = r.field("seed")?;
        let layout = Layout::new(&spec);
        let mut params = vec![0.0; layout.len()];
        for b in layout.blocks() {
            let layer = b.layer.map_or("-".to_string(), |l| l.to_string());
            let source = b.source.map_or("-".to_string(), |s| s.to_string());
            let expected = format!(
                "block {} layer={layer} source={source} rows={} cols={}",
                b.kind.name(),
                b.rows,
                b.cols
            );
            let got = r.next("block header")?;
            if got.trim() != expected {
                return Err(r.err(format!("expected `{expected}`, found `{}`", got.trim())));
            }
            let values = r.values(b.len())?;
            params[b.range()].copy_from_slice(&values);
        }
        let basis = if topology == Topology::Rbf {
            let head = r.next("basis header")?;
            let expected = format!("basis {} {}", spec.n_centers, n_inputs);
            if head.trim() != expected {
                return Err(r.err(format!("expected `{expected}`, found `{}`", head.trim())));
            }
            let centers = (0..spec.n_centers)
                .map(|_| r.values(n_inputs))
                .collect::<Result<Vec<_>>>()?;
            let widths = r.values(spec.n_centers)?;
            if widths.iter().any(|&w| !(w > 0.0)) {
                return Err(r.err("RBF widths must be positive"));
            }
            Some(RbfBasis { centers, widths })
        } else {
            None
        };
        let mut normalizer = None;
        loop {
            let line = r.next("`end`")?.trim();
            match line {
                "end" => break,
                "normalizer" => {
                    let start = r.pos;
                    while r.pos < r.lines.len() && r.lines[r.pos].contains('=') {
                        r.pos += 1;
                    }
                    let body = r.lines[start..r.pos].join("\n");
                    normalizer = Some(Normalizer::parse("model normalizer", &body)?);
                }
                other => return Err(r.err(format!("unexpected section `{other}`"))),
            }
        }
        let state = NetworkState {
            spec,
            layout,
            params,
            basis,
            seed,
        };
        if !state.is_finite() {
            return Err(Error::ModelFormat {
                line: 0,
                msg: "non-finite parameter".into(),
            });
        }
        Ok(ModelFile { state, normalizer })
    }
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.pos,
            msg: msg.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        let l = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::ModelFormat {
                line: self.pos + 1,
                msg: format!("unexpected end of file, expected {what}"),
            })?;
        self.pos += 1;
        Ok(l)
    }

    fn parse_tok<T: std::str::FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        tok.and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| self.err(format!("invalid {what}")))
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => self.parse_tok(Some(v), key),
            _ => Err(self.err(format!("expected `{key} <value>`, found `{line}`"))),
        }
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.next("parameter values")?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(format!("bad number: {e}")))?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }
}
