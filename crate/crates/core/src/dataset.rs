//! Row ingestion, encoding, min-max normalization, train/CV/test splitting and
//! per-sector temporal sequencing.
//!
//! Column order of the input CSV is fixed:
//!
//! ```text
//! sector,year,employment,output_value,pi_so2,...,pi_bod,load_so2,...,load_tss
//! ```
//!
//! with 13 intensity columns ([`PI_COLUMNS`]) and 14 load columns
//! ([`TARGET_COLUMNS`]). The encoded input vector is the 10-wide sector
//! one-hot block followed by the normalized continuous columns (year when
//! enabled, employment, output value, then the 13 intensities).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ipps::{parse_f64, read_csv, Pollutant, Sector};
use crate::rng::seeded_rng;

/// Intensity inputs, in input-file order. TSS has no intensity input.
pub const PI_COLUMNS: [Pollutant; 13] = [
    Pollutant::So2,
    Pollutant::No2,
    Pollutant::Co,
    Pollutant::Voc,
    Pollutant::Fp,
    Pollutant::Tsp,
    Pollutant::TcAir,
    Pollutant::TcLand,
    Pollutant::TcWater,
    Pollutant::TmAir,
    Pollutant::TmWater,
    Pollutant::TmLand,
    Pollutant::Bod,
];

/// Load targets, in input-file order.
pub const TARGET_COLUMNS: [Pollutant; 14] = [
    Pollutant::So2,
    Pollutant::No2,
    Pollutant::Co,
    Pollutant::Voc,
    Pollutant::Fp,
    Pollutant::Tsp,
    Pollutant::TcAir,
    Pollutant::TcLand,
    Pollutant::TcWater,
    Pollutant::TmAir,
    Pollutant::TmWater,
    Pollutant::TmLand,
    Pollutant::Bod,
    Pollutant::Tss,
];

pub const N_SECTORS: usize = 10;
pub const N_TARGETS: usize = TARGET_COLUMNS.len();

pub fn data_header() -> Vec<String> {
    let mut h: Vec<String> = ["sector", "year", "employment", "output_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(PI_COLUMNS.iter().map(|p| format!("pi_{}", p.code().to_ascii_lowercase())));
    h.extend(TARGET_COLUMNS.iter().map(|p| format!("load_{}", p.code().to_ascii_lowercase())));
    h
}

/// Width of an encoded input vector.
pub fn input_width(include_year: bool) -> usize {
    N_SECTORS + usize::from(include_year) + 2 + PI_COLUMNS.len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub sector: Sector,
    pub year: i32,
    pub employment: f64,
    pub output_value: f64,
    pub pi: [f64; 13],
    pub targets: [f64; 14],
}

impl RawRow {
    /// Target value for a pollutant.
    pub fn target(&self, p: Pollutant) -> f64 {
        let idx = TARGET_COLUMNS.iter().position(|&q| q == p).expect("all pollutants are targets");
        self.targets[idx]
    }
}

pub fn load_rows(path: &Path) -> Result<Vec<RawRow>> {
    let name = path.display().to_string();
    let header = data_header();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<RawRow> = read_csv(path, &header_refs)?
        .into_iter()
        .map(|(line, rec)| {
            let sector: Sector = rec[0].parse().map_err(|e: String| Error::parse(&name, line, e))?;
            let year: i32 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(&name, line, format!("year is not an integer: `{}`", rec[1])))?;
            let mut values = Vec::with_capacity(rec.len() - 2);
            for (field, raw) in header[2..].iter().zip(&rec[2..]) {
                values.push(parse_f64(&name, line, field, raw)?);
            }
            let mut pi = [0.0; 13];
            pi.copy_from_slice(&values[2..15]);
            let mut targets = [0.0; 14];
            targets.copy_from_slice(&values[15..29]);
            Ok(RawRow {
                sector,
                year,
                employment: values[0],
                output_value: values[1],
                pi,
                targets,
            })
        })
        .collect::<Result<_>>()?;
    log::info!("{name}: loaded {} rows", rows.len());
    Ok(rows)
}

pub fn write_rows<W: Write>(mut out: W, rows: &[RawRow]) -> std::io::Result<()> {
    writeln!(out, "{}", data_header().join(","))?;
    for r in rows {
        write!(out, "{},{},{},{}", r.sector, r.year, r.employment, r.output_value)?;
        for v in r.pi.iter().chain(r.targets.iter()) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Train,
    CrossValidation,
    Test,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "TRAIN",
            Role::CrossValidation => "CV",
            Role::Test => "TEST",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Seeded shuffle, stratified by group.
    Random,
    /// Earliest years of every group train, latest years test.
    Chronological,
}

impl FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(SplitMode::Random),
            "chrono" | "chronological" => Ok(SplitMode::Chronological),
            other => Err(format!("unknown split mode `{other}` (expected random or chrono)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub cv: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.60,
            cv: 0.25,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.cv, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Split(format!("fractions must be finite and >= 0: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("fractions must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// Row counts for `n` rows; the test split absorbs rounding.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let n_train = ((self.train * n as f64).round() as usize).min(n);
        let n_cv = ((self.cv * n as f64).round() as usize).min(n - n_train);
        (n_train, n_cv, n - n_train - n_cv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub roles: Vec<Role>,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub mode: SplitMode,
}

impl SplitAssignment {
    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    pub fn indices(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == role)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Split rows stratified by sector; in chronological mode rows are ordered
/// by year inside each sector.
pub fn split(rows: &[RawRow], fractions: SplitFractions, seed: u64, mode: SplitMode) -> Result<SplitAssignment> {
    let groups: Vec<usize> = rows.iter().map(|r| r.sector.index()).collect();
    let order: Vec<i64> = rows.iter().map(|r| i64::from(r.year)).collect();
    split_grouped(&groups, &order, fractions, seed, mode)
}

/// Stratified split over arbitrary groups.
///
/// Each group is ordered (shuffled, or by `order_key` in chronological mode)
/// and every row receives the key `rank / group_size`. Rows are then sorted
/// globally by that key and the first `train` share goes to TRAIN, the next
/// `cv` share to CV and the rest to TEST. Rank-0 rows sort first, so every
/// group is represented in TRAIN whenever the TRAIN count allows it.
pub fn split_grouped(
    groups: &[usize],
    order_key: &[i64],
    fractions: SplitFractions,
    seed: u64,
    mode: SplitMode,
) -> Result<SplitAssignment> {
    fractions.validate()?;
    let n = groups.len();
    if order_key.len() != n {
        return Err(Error::shape(format!("{n} order keys"), order_key.len()));
    }
    if n < 3 {
        return Err(Error::Split(format!("need at least 3 rows to split, got {n}")));
    }
    let mut rng = seeded_rng(seed);
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    // (position key, tiebreak, row)
    let mut keyed: Vec<(f64, u64, usize)> = Vec::with_capacity(n);
    for (&g, idx) in members.iter_mut() {
        match mode {
            SplitMode::Random => idx.shuffle(&mut rng),
            SplitMode::Chronological => idx.sort_by_key(|&i| (order_key[i], i)),
        }
        let size = idx.len() as f64;
        for (rank, &i) in idx.iter().enumerate() {
            let tiebreak = match mode {
                SplitMode::Random => rng.gen::<u64>(),
                SplitMode::Chronological => g as u64,
            };
            keyed.push((rank as f64 / size, tiebreak, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let (n_train, n_cv, _) = fractions.counts(n);
    let mut roles = vec![Role::Test; n];
    for (pos, &(_, _, i)) in keyed.iter().enumerate() {
        roles[i] = if pos < n_train {
            Role::Train
        } else if pos < n_train + n_cv {
            Role::CrossValidation
        } else {
            Role::Test
        };
    }
    Ok(SplitAssignment {
        roles,
        fractions,
        seed,
        mode,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_constant() {
            0.5
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + v * (self.max - self.min)
        }
    }
}

/// Per-column min/max fitted on TRAIN rows. Input columns come first, then
/// the 14 target columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub include_year: bool,
    pub inputs: Vec<ColumnRange>,
    pub targets: Vec<ColumnRange>,
}

fn continuous_input_names(include_year: bool) -> Vec<String> {
    let mut names = Vec::new();
    if include_year {
        names.push("year".to_string());
    }
    names.push("employment".to_string());
    names.push("output_value".to_string());
    names.extend(PI_COLUMNS.iter().map(|p| format!("pi_{}", p.code().to_ascii_lowercase())));
    names
}

fn target_names() -> Vec<String> {
    TARGET_COLUMNS
        .iter()
        .map(|p| format!("load_{}", p.code().to_ascii_lowercase()))
        .collect()
}

fn continuous_inputs(row: &RawRow, include_year: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(16);
    if include_year {
        v.push(f64::from(row.year));
    }
    v.push(row.employment);
    v.push(row.output_value);
    v.extend_from_slice(&row.pi);
    v
}

fn fit_ranges<'a>(names: Vec<String>, values: impl Iterator<Item = Vec<f64>> + 'a) -> Vec<ColumnRange> {
    let mut ranges: Vec<ColumnRange> = names
        .into_iter()
        .map(|name| ColumnRange {
            name,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        })
        .collect();
    for v in values {
        for (r, x) in ranges.iter_mut().zip(v) {
            r.min = r.min.min(x);
            r.max = r.max.max(x);
        }
    }
    ranges
}

/// Running count of values clamped into [0, 1] during encoding.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ClampCounter(pub usize);

impl Normalizer {
    /// Fit on the rows whose role is TRAIN.
    pub fn fit(rows: &[RawRow], assignment: &SplitAssignment, include_year: bool) -> Result<Self> {
        if rows.len() != assignment.roles.len() {
            return Err(Error::shape(format!("{} split roles", rows.len()), assignment.roles.len()));
        }
        let train: Vec<&RawRow> = rows
            .iter()
            .zip(&assignment.roles)
            .filter(|(_, &r)| r == Role::Train)
            .map(|(row, _)| row)
            .collect();
        Self::fit_rows(&train, include_year)
    }

    pub fn fit_rows(rows: &[&RawRow], include_year: bool) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Split("no TRAIN rows to fit the normalizer on".into()));
        }
        let inputs = fit_ranges(
            continuous_input_names(include_year),
            rows.iter().map(|r| continuous_inputs(r, include_year)),
        );
        let targets = fit_ranges(target_names(), rows.iter().map(|r| r.targets.to_vec()));
        for c in inputs.iter().chain(&targets).filter(|c| c.is_constant()) {
            log::warn!("column `{}` is constant on TRAIN rows; it encodes to 0.5", c.name);
        }
        Ok(Normalizer {
            include_year,
            inputs,
            targets,
        })
    }

    pub fn input_width(&self) -> usize {
        input_width(self.include_year)
    }

    pub fn encode(&self, row: &RawRow, clamped: &mut ClampCounter) -> EncodedSample {
        let mut clamp = |v: f64| {
            if !(0.0..=1.0).contains(&v) {
                clamped.0 += 1;
                v.clamp(0.0, 1.0)
            } else {
                v
            }
        };
        let mut input = vec![0.0; N_SECTORS];
        input[row.sector.index()] = 1.0;
        for (range, x) in self.inputs.iter().zip(continuous_inputs(row, self.include_year)) {
            input.push(clamp(range.normalize(x)));
        }
        let target = self
            .targets
            .iter()
            .zip(row.targets.iter())
            .map(|(range, &x)| clamp(range.normalize(x)))
            .collect();
        EncodedSample {
            sector: row.sector,
            year: row.year,
            input,
            target,
        }
    }

    /// Map a normalized target vector back to ton/yr, in target-column order.
    pub fn denormalize_targets(&self, v: &[f64]) -> Vec<f64> {
        self.targets.iter().zip(v).map(|(r, &x)| r.denormalize(x)).collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for c in self.inputs.iter().chain(&self.targets) {
            writeln!(out, "{}={},{}", c.name, c.min, c.max)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }

    /// Parse the `column=min,max` format written by [`Normalizer::write`].
    /// Whether year is an input is inferred from the presence of `year`.
    pub fn parse(source: &str, text: &str) -> Result<Self> {
        let mut found: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i as u64 + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::parse(source, line, "expected `column=min,max`"))?;
            let (a, b) = v
                .split_once(',')
                .ok_or_else(|| Error::parse(source, line, "expected `min,max`"))?;
            let min = parse_f64(source, line, "min", a)?;
            let max = parse_f64(source, line, "max", b)?;
            if max < min {
                return Err(Error::parse(source, line, format!("max < min for `{}`", k.trim())));
            }
            found.insert(k.trim().to_string(), (min, max));
        }
        let include_year = found.contains_key("year");
        let take = |names: Vec<String>| -> Result<Vec<ColumnRange>> {
            names
                .into_iter()
                .map(|name| {
                    let (min, max) = *found
                        .get(&name)
                        .ok_or_else(|| Error::Compatibility(format!("{source}: normalizer lacks column `{name}`")))?;
                    Ok(ColumnRange { name, min, max })
                })
                .collect()
        };
        let inputs = take(continuous_input_names(include_year))?;
        let targets = take(target_names())?;
        let expected = inputs.len() + targets.len();
        if found.len() != expected {
            return Err(Error::Compatibility(format!(
                "{source}: normalizer has {} columns, expected {expected}",
                found.len()
            )));
        }
        Ok(Normalizer {
            include_year,
            inputs,
            targets,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub sector: Sector,
    pub year: i32,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Rows that have been split, normalized and encoded.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    pub samples: Vec<EncodedSample>,
    pub assignment: SplitAssignment,
    pub normalizer: Normalizer,
    pub clamped: usize,
}

impl EncodedDataset {
    pub fn prepare(
        rows: &[RawRow],
        fractions: SplitFractions,
        seed: u64,
        mode: SplitMode,
        include_year: bool,
    ) -> Result<Self> {
        let assignment = split(rows, fractions, seed, mode)?;
        let normalizer = Normalizer::fit(rows, &assignment, include_year)?;
        let mut clamped = ClampCounter::default();
        let samples = rows.iter().map(|r| normalizer.encode(r, &mut clamped)).collect();
        if clamped.0 > 0 {
            log::warn!("{} CV/test values fell outside the fitted range and were clamped", clamped.0);
        }
        Ok(EncodedDataset {
            samples,
            assignment,
            normalizer,
            clamped: clamped.0,
        })
    }

    pub fn sequences(&self) -> Result<SequenceView> {
        make_sequences(&self.samples, &self.assignment.roles)
    }

    pub fn training_set(&self) -> Result<TrainingSet> {
        Ok(self.sequences()?.to_training_set(&self.samples))
    }
}

/// Per-sector index lists, ascending by year.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceView {
    pub sequences: Vec<SectorSequence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorSequence {
    pub sector: Sector,
    /// Indices into the sample list.
    pub indices: Vec<usize>,
    pub years: Vec<i32>,
    pub roles: Vec<Role>,
}

pub fn make_sequences(samples: &[EncodedSample], roles: &[Role]) -> Result<SequenceView> {
    if samples.len() != roles.len() {
        return Err(Error::shape(format!("{} roles", samples.len()), roles.len()));
    }
    let mut by_sector: BTreeMap<Sector, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_sector.entry(s.sector).or_default().push(i);
    }
    let mut duplicates = Vec::new();
    let mut sequences = Vec::new();
    for (sector, mut idx) in by_sector {
        idx.sort_by_key(|&i| (samples[i].year, i));
        for w in idx.windows(2) {
            if samples[w[0]].year == samples[w[1]].year {
                duplicates.push(format!("({sector}, {})", samples[w[0]].year));
            }
        }
        sequences.push(SectorSequence {
            sector,
            years: idx.iter().map(|&i| samples[i].year).collect(),
            roles: idx.iter().map(|&i| roles[i]).collect(),
            indices: idx,
        });
    }
    if !duplicates.is_empty() {
        duplicates.dedup();
        return Err(Error::Duplicate(duplicates.join(", ")));
    }
    Ok(SequenceView { sequences })
}

impl SequenceView {
    pub fn to_training_set(&self, samples: &[EncodedSample]) -> TrainingSet {
        let episodes = self
            .sequences
            .iter()
            .map(|s| Episode {
                inputs: s.indices.iter().map(|&i| samples[i].input.clone()).collect(),
                targets: s.indices.iter().map(|&i| samples[i].target.clone()).collect(),
                roles: s.roles.clone(),
            })
            .collect();
        TrainingSet { episodes }
    }
}

/// One temporally ordered run of samples. Static topologies treat every
/// step independently; temporal ones carry context along the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub roles: Vec<Role>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// What the trainer consumes: episodes of (input, target, role) steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub episodes: Vec<Episode>,
}

impl TrainingSet {
    /// Every sample is its own length-1 episode.
    pub fn independent(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, roles: Vec<Role>) -> Self {
        let episodes = inputs
            .into_iter()
            .zip(targets)
            .zip(roles)
            .map(|((x, d), r)| Episode {
                inputs: vec![x],
                targets: vec![d],
                roles: vec![r],
            })
            .collect();
        TrainingSet { episodes }
    }

    /// A single time series.
    pub fn single_series(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, roles: Vec<Role>) -> Self {
        TrainingSet {
            episodes: vec![Episode { inputs, targets, roles }],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.episodes
            .iter()
            .find_map(|e| e.inputs.first())
            .map_or(0, Vec::len)
    }

    pub fn n_outputs(&self) -> usize {
        self.episodes
            .iter()
            .find_map(|e| e.targets.first())
            .map_or(0, Vec::len)
    }

    pub fn count(&self, role: Role) -> usize {
        self.episodes
            .iter()
            .map(|e| e.roles.iter().filter(|&&r| r == role).count())
            .sum()
    }

    /// Inputs and targets of all steps with the given role, in episode order.
    pub fn samples(&self, role: Role) -> (Vec<&[f64]>, Vec<&[f64]>) {
        let mut xs = Vec::new();
        let mut ds = Vec::new();
        for e in &self.episodes {
            for t in 0..e.len() {
                if e.roles[t] == role {
                    xs.push(e.inputs[t].as_slice());
                    ds.push(e.targets[t].as_slice());
                }
            }
        }
        (xs, ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (ni, no) = (self.n_inputs(), self.n_outputs());
        for e in &self.episodes {
            if e.targets.len() != e.len() || e.roles.len() != e.len() {
                return Err(Error::shape("equal-length episode columns", "ragged episode"));
            }
            for (x, d) in e.inputs.iter().zip(&e.targets) {
                if x.len() != ni || d.len() != no {
                    return Err(Error::shape(format!("{ni} inputs / {no} targets"), format!("{} / {}", x.len(), d.len())));
                }
                if x.iter().chain(d).any(|v| !v.is_finite()) {
                    return Err(Error::Domain("non-finite value in training set".into()));
                }
            }
        }
        Ok(())
    }
}
