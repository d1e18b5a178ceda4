//! Observation ingestion, feature normalization, growth grouping and
//! grouped k-fold partitioning.

use std::collections::HashMap;
use std::io::Read;

use crate::error::{invalid, Error, Result};
use crate::growth::GrowthPoint;

/// Exact CSV header, in canonical column order.
pub const CSV_COLUMNS: [&str; 7] = [
    "duty_cycle",
    "frequency_hz",
    "duration_h",
    "temperature_c",
    "n0_od600",
    "t_h",
    "od600",
];

/// One row of the observation file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub duty_cycle: f64,
    pub frequency_hz: f64,
    /// Irradiation duration. Stored but not a model input.
    pub duration_h: f64,
    pub temperature_c: f64,
    pub n0: f64,
    pub t: f64,
    pub od: f64,
}

impl RawRecord {
    pub fn conditions(&self) -> Conditions {
        Conditions {
            temperature_c: self.temperature_c,
            frequency_hz: self.frequency_hz,
            duty_cycle: self.duty_cycle,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let fields = [
            ("duty_cycle", self.duty_cycle),
            ("frequency_hz", self.frequency_hz),
            ("duration_h", self.duration_h),
            ("temperature_c", self.temperature_c),
            ("n0_od600", self.n0),
            ("t_h", self.t),
            ("od600", self.od),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name}={v} is not finite"));
        }
        if self.od < 0.0 {
            return Err(format!("od600={} is negative", self.od));
        }
        if self.n0 < 0.0 {
            return Err(format!("n0_od600={} is negative", self.n0));
        }
        if self.t < 0.0 {
            return Err(format!("t_h={} is negative", self.t));
        }
        if self.frequency_hz <= 0.0 {
            return Err(format!("frequency_hz={} must be positive", self.frequency_hz));
        }
        if !(0.0..=1.0).contains(&self.duty_cycle) {
            return Err(format!("duty_cycle={} outside [0, 1]", self.duty_cycle));
        }
        if self.duration_h < 0.0 {
            return Err(format!("duration_h={} is negative", self.duration_h));
        }
        Ok(())
    }
}

/// Raw environmental set-point fed to the network after normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub temperature_c: f64,
    pub frequency_hz: f64,
    pub duty_cycle: f64,
}

impl Conditions {
    fn as_array(&self) -> [f64; 3] {
        [self.temperature_c, self.frequency_hz, self.duty_cycle]
    }
}

/// Normalized `(temperature, frequency, duty cycle)` in the unit cube.
pub type Features = [f64; 3];

pub const FEATURE_NAMES: [&str; 3] = ["temperature_c", "frequency_hz", "duty_cycle"];

/// Parses CSV observations. The header must name all seven columns.
pub fn load_records<R: Read>(source: R) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    }

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, column: String::new(), message: e.to_string() }
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let mut vals = [0.0; 7];
        for ((v, &col), name) in vals.iter_mut().zip(&index).zip(CSV_COLUMNS) {
            let cell = row.get(col).unwrap_or("");
            *v = cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: name.to_string(),
                message: format!("`{cell}` is not a number"),
            })?;
        }
        let rec = RawRecord {
            duty_cycle: vals[0],
            frequency_hz: vals[1],
            duration_h: vals[2],
            temperature_c: vals[3],
            n0: vals[4],
            t: vals[5],
            od: vals[6],
        };
        rec.validate().map_err(|message| Error::Validation { line, message })?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes records in the canonical column order, 17 significant digits.
pub fn write_records<W: std::io::Write>(mut w: W, records: &[RawRecord]) -> Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for r in records {
        let cells = [r.duty_cycle, r.frequency_hz, r.duration_h, r.temperature_c, r.n0, r.t, r.od];
        let line: Vec<String> = cells.iter().map(|&v| crate::fmt17(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Per-feature `(min, max)` bounds of the training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationBounds {
    /// Indexed as [`FEATURE_NAMES`].
    pub bounds: [(f64, f64); 3],
}

/// A feature that fell outside the training bounds and was clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampWarning {
    pub feature: &'static str,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

impl std::fmt::Display for ClampWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}={} outside training range [{}, {}]; clamped",
            self.feature, self.value, self.min, self.max
        )
    }
}

impl NormalizationBounds {
    pub fn from_conditions<'a>(conds: impl IntoIterator<Item = &'a Conditions>) -> Result<Self> {
        let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        let mut any = false;
        for c in conds {
            any = true;
            for (b, v) in bounds.iter_mut().zip(c.as_array()) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        if !any {
            return Err(invalid("cannot compute normalization bounds of an empty set"));
        }
        Ok(Self { bounds })
    }

    /// Min-max map into `[0, 1]`, clamping out-of-range values.
    ///
    /// A constant training column maps every value to 0.5.
    pub fn apply(&self, conditions: &Conditions) -> (Features, Vec<ClampWarning>) {
        let mut out = [0.0; 3];
        let mut warnings = Vec::new();
        for (i, v) in conditions.as_array().into_iter().enumerate() {
            let (lo, hi) = self.bounds[i];
            if v < lo || v > hi {
                warnings.push(ClampWarning { feature: FEATURE_NAMES[i], value: v, min: lo, max: hi });
            }
            out[i] = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
        }
        (out, warnings)
    }
}

/// Identity of one biological growth: the experimental set-point.
///
/// Equality is exact on the parsed values.
#[derive(Debug, Clone, Copy)]
pub struct GroupKey {
    pub duty_cycle: f64,
    pub frequency_hz: f64,
    /// `None` under the three-field key.
    pub temperature_c: Option<f64>,
    pub n0: f64,
}

impl GroupKey {
    fn bits(&self) -> (u64, u64, Option<u64>, u64) {
        // + 0.0 folds -0.0 onto 0.0
        let b = |x: f64| (x + 0.0).to_bits();
        (b(self.duty_cycle), b(self.frequency_hz), self.temperature_c.map(b), b(self.n0))
    }
}

impl PartialEq for GroupKey {
    fn eq(&self, other: &Self) -> bool {
        self.bits() == other.bits()
    }
}

impl Eq for GroupKey {}

impl std::hash::Hash for GroupKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.bits().hash(state)
    }
}

/// Which fields identify a growth for cross-validation purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupKeyMode {
    /// Duty cycle, frequency, temperature and initial density.
    #[default]
    FourField,
    /// Duty cycle, frequency and initial density.
    ThreeField,
}

/// Observations of a single set-point, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthGroup {
    pub key: GroupKey,
    pub conditions: Conditions,
    pub features: Features,
    pub n0: f64,
    pub observations: Vec<GrowthPoint>,
}

/// Normalized observations grouped by set-point.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthDataset {
    groups: Vec<GrowthGroup>,
    normalization: NormalizationBounds,
    key_mode: GroupKeyMode,
}

/// Min-max normalizes the records and groups them under the four-field key.
pub fn normalize(records: &[RawRecord]) -> Result<GrowthDataset> {
    normalize_with(records, GroupKeyMode::FourField)
}

pub fn normalize_with(records: &[RawRecord], key_mode: GroupKeyMode) -> Result<GrowthDataset> {
    if records.is_empty() {
        return Err(invalid("cannot normalize an empty record set"));
    }
    let conds: Vec<Conditions> = records.iter().map(RawRecord::conditions).collect();
    let normalization = NormalizationBounds::from_conditions(&conds)?;
    let mut groups: Vec<GrowthGroup> = Vec::new();
    let mut by_key: HashMap<GroupKey, usize> = HashMap::new();
    for (r, c) in records.iter().zip(&conds) {
        let key = GroupKey {
            duty_cycle: r.duty_cycle,
            frequency_hz: r.frequency_hz,
            temperature_c: Some(r.temperature_c),
            n0: r.n0,
        };
        let idx = *by_key.entry(key).or_insert_with(|| {
            groups.push(GrowthGroup {
                key,
                conditions: *c,
                features: normalization.apply(c).0,
                n0: r.n0,
                observations: Vec::new(),
            });
            groups.len() - 1
        });
        groups[idx].observations.push(GrowthPoint { t: r.t, od: r.od });
    }
    for g in &mut groups {
        g.observations.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    Ok(GrowthDataset { groups, normalization, key_mode })
}

impl GrowthDataset {
    pub fn groups(&self) -> &[GrowthGroup] {
        &self.groups
    }

    pub fn normalization(&self) -> &NormalizationBounds {
        &self.normalization
    }

    pub fn key_mode(&self) -> GroupKeyMode {
        self.key_mode
    }

    pub fn n_observations(&self) -> usize {
        self.groups.iter().map(|g| g.observations.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_observations() == 0
    }

    /// Normalizes inference-time conditions with the stored training bounds.
    pub fn apply_normalization(&self, conditions: &Conditions) -> (Features, Vec<ClampWarning>) {
        self.normalization.apply(conditions)
    }

    /// The key under which a group is kept atomic during cross-validation.
    pub fn split_key(&self, group: usize) -> GroupKey {
        let mut key = self.groups[group].key;
        if self.key_mode == GroupKeyMode::ThreeField {
            key.temperature_c = None;
        }
        key
    }

    /// Distinct split keys in order of first appearance, each with its member groups.
    pub fn split_units(&self) -> Vec<(GroupKey, Vec<usize>)> {
        let mut units: Vec<(GroupKey, Vec<usize>)> = Vec::new();
        let mut seen: HashMap<GroupKey, usize> = HashMap::new();
        for i in 0..self.groups.len() {
            let key = self.split_key(i);
            match seen.get(&key) {
                Some(&u) => units[u].1.push(i),
                None => {
                    seen.insert(key, units.len());
                    units.push((key, vec![i]));
                }
            }
        }
        units
    }

    /// Round-robin fold assignment over the split units, expanded to groups.
    pub fn fold_assignment(&self, k: usize) -> Result<FoldAssignment> {
        let units = self.split_units();
        let unit_folds = round_robin_folds(units.len(), k)?;
        let mut assignment = vec![0; self.groups.len()];
        for (u, (_, members)) in units.iter().enumerate() {
            for &g in members {
                assignment[g] = unit_folds.assignment[u];
            }
        }
        Ok(FoldAssignment { k, assignment })
    }

    /// A dataset restricted to the given groups, keeping the global normalization.
    pub fn subset(&self, groups: &[usize]) -> GrowthDataset {
        GrowthDataset {
            groups: groups.iter().map(|&i| self.groups[i].clone()).collect(),
            normalization: self.normalization,
            key_mode: self.key_mode,
        }
    }
}

/// Group index to fold index map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_groups(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&g| self.assignment[g] == fold).collect()
    }

    pub fn train_groups(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&g| self.assignment[g] != fold).collect()
    }
}

/// Group `i` goes to fold `i mod k`.
pub fn round_robin_folds(n_groups: usize, k: usize) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(invalid(format!("fold count k={k} must be at least 2")));
    }
    if n_groups < k {
        return Err(invalid(format!("{n_groups} groups cannot fill {k} folds")));
    }
    Ok(FoldAssignment { k, assignment: (0..n_groups).map(|i| i % k).collect() })
}
