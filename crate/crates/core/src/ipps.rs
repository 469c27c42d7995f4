//! Sectoral pollution-load estimation from pollution intensities.
//!
//! A pollution intensity is the discharge of one pollutant per unit of
//! manufacturing activity (per employee, or per unit of output value). The
//! load of a sector in a year is `intensity × activity × scale`, where
//! `scale` converts the table's native units into ton/yr.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::{Error, Result};

/// The ten manufacturing sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sector {
    Fbt,
    Twa,
    Wwp,
    Ppp,
    Cph,
    Nmp,
    Dip,
    Ees,
    Bm,
    Mvm,
}

impl Sector {
    pub const ALL: [Sector; 10] = [
        Sector::Fbt,
        Sector::Twa,
        Sector::Wwp,
        Sector::Ppp,
        Sector::Cph,
        Sector::Nmp,
        Sector::Dip,
        Sector::Ees,
        Sector::Bm,
        Sector::Mvm,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Sector::Fbt => "FBT",
            Sector::Twa => "TWA",
            Sector::Wwp => "WWP",
            Sector::Ppp => "PPP",
            Sector::Cph => "CPH",
            Sector::Nmp => "NMP",
            Sector::Dip => "DIP",
            Sector::Ees => "EES",
            Sector::Bm => "BM",
            Sector::Mvm => "MVM",
        }
    }

    /// Position in [`Sector::ALL`]; used as the one-hot index.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Sector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        Sector::ALL
            .iter()
            .copied()
            .find(|c| c.code().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown sector `{t}`"))
    }
}

/// Receiving environmental compartment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Medium {
    Air,
    Water,
    Land,
}

impl Medium {
    pub const ALL: [Medium; 3] = [Medium::Air, Medium::Water, Medium::Land];

    pub fn name(self) -> &'static str {
        match self {
            Medium::Air => "AIR",
            Medium::Water => "WATER",
            Medium::Land => "LAND",
        }
    }
}

impl fmt::Display for Medium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The fourteen pollutants, declared in canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pollutant {
    So2,
    No2,
    Co,
    Voc,
    Fp,
    Tsp,
    TcAir,
    TcLand,
    TcWater,
    TmAir,
    TmLand,
    TmWater,
    Bod,
    Tss,
}

impl Pollutant {
    pub const ALL: [Pollutant; 14] = [
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
        Pollutant::TmLand,
        Pollutant::TmWater,
        Pollutant::Bod,
        Pollutant::Tss,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Pollutant::So2 => "SO2",
            Pollutant::No2 => "NO2",
            Pollutant::Co => "CO",
            Pollutant::Voc => "VOC",
            Pollutant::Fp => "FP",
            Pollutant::Tsp => "TSP",
            Pollutant::TcAir => "TCAIR",
            Pollutant::TcLand => "TCLAND",
            Pollutant::TcWater => "TCWATER",
            Pollutant::TmAir => "TMAIR",
            Pollutant::TmLand => "TMLAND",
            Pollutant::TmWater => "TMWATER",
            Pollutant::Bod => "BOD",
            Pollutant::Tss => "TSS",
        }
    }

    pub fn medium(self) -> Medium {
        use Pollutant::*;
        match self {
            So2 | No2 | Co | Voc | Fp | Tsp | TcAir | TmAir => Medium::Air,
            TcWater | TmWater | Bod | Tss => Medium::Water,
            TcLand | TmLand => Medium::Land,
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Pollutant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        Pollutant::ALL
            .iter()
            .copied()
            .find(|p| p.code().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown pollutant `{t}`"))
    }
}

/// Which activity measure an intensity table is expressed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivityBasis {
    Employment,
    OutputValue,
}

impl FromStr for ActivityBasis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "employment" => Ok(ActivityBasis::Employment),
            "output_value" | "output" => Ok(ActivityBasis::OutputValue),
            other => Err(format!("unknown activity basis `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTable {
    basis: ActivityBasis,
    scale: f64,
    entries: BTreeMap<(Sector, Pollutant), f64>,
}

impl IntensityTable {
    pub fn new(basis: ActivityBasis, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!("intensity scale must be finite and > 0, got {scale}")));
        }
        Ok(IntensityTable {
            basis,
            scale,
            entries: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, sector: Sector, pollutant: Pollutant, intensity: f64) -> Result<()> {
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(Error::Domain(format!(
                "intensity for ({sector}, {pollutant}) must be finite and >= 0, got {intensity}"
            )));
        }
        self.entries.insert((sector, pollutant), intensity);
        Ok(())
    }

    pub fn basis(&self) -> ActivityBasis {
        self.basis
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `None` means the pair is absent from the table, which is distinct
    /// from an intensity of zero.
    pub fn get(&self, sector: Sector, pollutant: Pollutant) -> Option<f64> {
        self.entries.get(&(sector, pollutant)).copied()
    }

    pub fn has_sector(&self, sector: Sector) -> bool {
        Pollutant::ALL.iter().any(|&p| self.entries.contains_key(&(sector, p)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load from `sector,pollutant,intensity` rows plus a key-value sidecar
    /// carrying `basis` and `scale`.
    pub fn from_csv(csv_path: &Path, meta: &KeyValues) -> Result<Self> {
        let basis: ActivityBasis = meta
            .get("basis")?
            .ok_or_else(|| Error::Lookup(format!("{}: missing `basis`", meta.source())))?;
        let scale: f64 = meta
            .get("scale")?
            .ok_or_else(|| Error::Lookup(format!("{}: missing `scale`", meta.source())))?;
        let mut table = IntensityTable::new(basis, scale)?;
        let name = csv_path.display().to_string();
        for (line, rec) in read_csv(csv_path, &["sector", "pollutant", "intensity"])? {
            let sector: Sector = rec[0].parse().map_err(|e: String| Error::parse(&name, line, e))?;
            let pollutant: Pollutant = rec[1].parse().map_err(|e: String| Error::parse(&name, line, e))?;
            let intensity = parse_f64(&name, line, "intensity", &rec[2])?;
            table
                .insert(sector, pollutant, intensity)
                .map_err(|e| Error::parse(&name, line, e.to_string()))?;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityRecord {
    pub sector: Sector,
    pub year: i32,
    pub employment: u64,
    pub output_value: f64,
}

impl ActivityRecord {
    pub fn activity(&self, basis: ActivityBasis) -> f64 {
        match basis {
            ActivityBasis::Employment => self.employment as f64,
            ActivityBasis::OutputValue => self.output_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadEstimate {
    pub sector: Sector,
    pub year: i32,
    pub pollutant: Pollutant,
    /// ton/yr
    pub load: f64,
}

pub fn estimate_load(intensity: f64, activity: f64, scale: f64) -> Result<f64> {
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(Error::Domain(format!("intensity must be finite and >= 0, got {intensity}")));
    }
    if !(activity.is_finite() && activity >= 0.0) {
        return Err(Error::Domain(format!("activity must be finite and >= 0, got {activity}")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Domain(format!("scale must be finite and > 0, got {scale}")));
    }
    let load = intensity * activity * scale;
    if !load.is_finite() {
        return Err(Error::Domain(format!("load overflows: {intensity} x {activity} x {scale}")));
    }
    Ok(load)
}

/// One estimate per pollutant the table lists for the record's sector, in
/// canonical pollutant order.
pub fn estimate_sector_year(table: &IntensityTable, record: &ActivityRecord) -> Result<Vec<LoadEstimate>> {
    if !table.has_sector(record.sector) {
        return Err(Error::Lookup(format!("sector {} is absent from the intensity table", record.sector)));
    }
    let activity = record.activity(table.basis());
    Pollutant::ALL
        .iter()
        .filter_map(|&p| table.get(record.sector, p).map(|i| (p, i)))
        .map(|(pollutant, intensity)| {
            Ok(LoadEstimate {
                sector: record.sector,
                year: record.year,
                pollutant,
                load: estimate_load(intensity, activity, table.scale())?,
            })
        })
        .collect()
}

/// Sectors ordered by descending load of `pollutant`. Loads of the same
/// sector (several years) are summed first. Ties break on the sector code.
/// An empty result means no load for that pollutant was supplied.
pub fn rank_sectors(loads: &[LoadEstimate], pollutant: Pollutant) -> Vec<(Sector, f64)> {
    let mut per_sector: BTreeMap<Sector, f64> = BTreeMap::new();
    for l in loads.iter().filter(|l| l.pollutant == pollutant) {
        *per_sector.entry(l.sector).or_insert(0.0) += l.load;
    }
    let mut ranked: Vec<(Sector, f64)> = per_sector.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.code().cmp(b.0.code())));
    ranked
}

/// Totals per medium; every medium is present in the result.
pub fn aggregate_by_medium(loads: &[LoadEstimate]) -> BTreeMap<Medium, f64> {
    let mut totals: BTreeMap<Medium, f64> = Medium::ALL.iter().map(|&m| (m, 0.0)).collect();
    for l in loads {
        *totals.get_mut(&l.pollutant.medium()).unwrap() += l.load;
    }
    totals
}

pub fn read_activity_csv(path: &Path) -> Result<Vec<ActivityRecord>> {
    let name = path.display().to_string();
    read_csv(path, &["sector", "year", "employment", "output_value"])?
        .into_iter()
        .map(|(line, rec)| {
            let sector: Sector = rec[0].parse().map_err(|e: String| Error::parse(&name, line, e))?;
            let year: i32 = rec[1]
                .trim()
                .parse()
                .ok()
                .filter(|y: &i32| (1000..=9999).contains(y))
                .ok_or_else(|| Error::parse(&name, line, format!("year must be a 4-digit integer, got `{}`", rec[1])))?;
            let employment: u64 = rec[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(&name, line, format!("employment must be a nonnegative integer, got `{}`", rec[2])))?;
            let output_value = parse_f64(&name, line, "output_value", &rec[3])?;
            if output_value < 0.0 {
                return Err(Error::parse(&name, line, "output_value must be >= 0"));
            }
            Ok(ActivityRecord {
                sector,
                year,
                employment,
                output_value,
            })
        })
        .collect()
}

pub const LOAD_CSV_HEADER: &str = "sector,year,pollutant,medium,load_ton_per_yr";

pub fn write_loads_csv<W: Write>(mut out: W, loads: &[LoadEstimate]) -> std::io::Result<()> {
    writeln!(out, "{LOAD_CSV_HEADER}")?;
    for l in loads {
        writeln!(out, "{},{},{},{},{}", l.sector, l.year, l.pollutant, l.pollutant.medium(), l.load)?;
    }
    Ok(())
}

pub fn write_medium_summary<W: Write>(mut out: W, totals: &BTreeMap<Medium, f64>) -> std::io::Result<()> {
    writeln!(out, "medium,total_load_ton_per_yr")?;
    for (m, t) in totals {
        writeln!(out, "{m},{t}")?;
    }
    Ok(())
}

pub(crate) fn parse_f64(source: &str, line: u64, field: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(source, line, format!("field `{field}` is not a finite number: `{raw}`")))
}

/// Read a headed CSV, checking the header exactly and every record's width.
/// Returns `(line_number, fields)` pairs.
pub(crate) fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(&name, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if got != header {
        return Err(Error::parse(
            &name,
            1,
            format!("header mismatch: expected `{}`, found `{}`", header.join(","), got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(&name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::parse(
                &name,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        if rec.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::parse(&name, line, "blank field"));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}
