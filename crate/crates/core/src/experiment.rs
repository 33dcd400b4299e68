//! Tomography dataset schema, synthetic count generation, and validated
//! ingestion of externally supplied datasets.
//!
//! Datasets are JSON documents with a top-level schema version; records are
//! an array of flat objects. A dataset is complete when every (preparation,
//! time) pair carries all three measurement bases.

use crate::model::ModelParams;
use crate::qstate::BlochVector;
use crate::solver::{choi_check, Propagator};
use crate::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;
/// Shots per (preparation, time, basis) combination unless overridden.
pub const DEFAULT_SHOTS: u64 = 8192;

/// Measurement basis tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn index(&self) -> usize {
        match self {
            Basis::X => 0,
            Basis::Y => 1,
            Basis::Z => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Basis::X => "x",
            Basis::Y => "y",
            Basis::Z => "z",
        }
    }
}

/// Ordered list of labeled pure preparation states.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PreparationSet {
    pub entries: Vec<PrepEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PrepEntry {
    pub label: String,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl PreparationSet {
    pub fn new(entries: Vec<(String, BlochVector)>) -> Result<Self> {
        let set = Self {
            entries: entries
                .into_iter()
                .map(|(label, v)| PrepEntry {
                    label,
                    vx: v.vx,
                    vy: v.vy,
                    vz: v.vz,
                })
                .collect(),
        };
        set.validate()?;
        Ok(set)
    }

    /// The five-state default: a tetrahedron (psi0..psi3, with psi1 the
    /// excited state) plus one fixed arbitrary pure state psi4. The psi4
    /// direction is stored unit-normalized.
    pub fn standard_five() -> Self {
        let psi4 = {
            let (x, y, z) = (0.50f64, -0.75f64, -0.41f64);
            let n = (x * x + y * y + z * z).sqrt();
            BlochVector::new(x / n, y / n, z / n)
        };
        let states = vec![
            (
                "psi0".to_string(),
                BlochVector::new((8.0f64 / 9.0).sqrt(), 0.0, -1.0 / 3.0),
            ),
            ("psi1".to_string(), BlochVector::new(0.0, 0.0, -1.0)),
            (
                "psi2".to_string(),
                BlochVector::new(-(2.0f64 / 9.0).sqrt(), (2.0f64 / 3.0).sqrt(), -1.0 / 3.0),
            ),
            (
                "psi3".to_string(),
                BlochVector::new(-(2.0f64 / 9.0).sqrt(), -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0),
            ),
            ("psi4".to_string(), psi4),
        ];
        Self::new(states).expect("built-in preparation set is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Validation("preparation set is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.label.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate preparation label {:?}",
                    e.label
                )));
            }
            let v = BlochVector::new(e.vx, e.vy, e.vz);
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "preparation {:?} is not a pure state: |v| = {}",
                    e.label,
                    v.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<BlochVector> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| BlochVector::new(e.vx, e.vy, e.vz))
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }
}

/// One measured combination of preparation, evolution time and basis.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TomographyRecord {
    pub prep: String,
    /// Free-evolution time, us.
    pub t: f64,
    pub basis: Basis,
    /// Number of shots yielding outcome 1.
    pub count_one: u64,
    /// Shots for this combination; 0 marks an exact-probability record.
    pub shots: u64,
    /// Infinite-shot frequency of outcome 1, present only when shots = 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_one: Option<f64>,
}

impl TomographyRecord {
    /// Observed frequency of outcome 1.
    pub fn frequency(&self) -> f64 {
        if self.shots == 0 {
            self.freq_one.unwrap_or(f64::NAN)
        } else {
            self.count_one as f64 / self.shots as f64
        }
    }
}

/// Column-stochastic readout response matrix: entry (k, j) is the
/// probability of measuring outcome k given true outcome j.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ReadoutModel {
    pub m00: f64,
    pub m01: f64,
    pub m10: f64,
    pub m11: f64,
}

impl ReadoutModel {
    pub fn identity() -> Self {
        Self {
            m00: 1.0,
            m01: 0.0,
            m10: 0.0,
            m11: 1.0,
        }
    }

    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        let r = Self {
            m00: m[0][0],
            m01: m[0][1],
            m10: m[1][0],
            m11: m[1][1],
        };
        r.validate()?;
        Ok(r)
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.m00, self.m01], [self.m10, self.m11]]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.matrix();
        for (j, col) in [(0, [m[0][0], m[1][0]]), (1, [m[0][1], m[1][1]])] {
            for v in col {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation(format!(
                        "readout entry {v} outside [0, 1]"
                    )));
                }
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "readout column {j} sums to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Applies the confusion matrix to a (p0, p1) probability pair.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.m00 * p[0] + self.m01 * p[1],
            self.m10 * p[0] + self.m11 * p[1],
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct DatasetMetadata {
    pub shots_default: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator_theta: Option<ModelParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default)]
    pub mitigated: bool,
    /// Free-form label, e.g. a spectator-qubit configuration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Complete tomography dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TomographyDataset {
    pub schema_version: u32,
    pub preparations: PreparationSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutModel>,
    pub metadata: DatasetMetadata,
    pub records: Vec<TomographyRecord>,
}

impl TomographyDataset {
    /// Validates every type invariant plus frame completeness.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        self.preparations.validate()?;
        if let Some(r) = &self.readout {
            r.validate()?;
        }
        let labels: std::collections::BTreeSet<String> =
            self.preparations.labels().into_iter().collect();
        let mut frames: BTreeMap<(String, u64), Vec<Basis>> = BTreeMap::new();
        for rec in &self.records {
            if !labels.contains(&rec.prep) {
                return Err(Error::Validation(format!(
                    "record references unknown preparation {:?}",
                    rec.prep
                )));
            }
            if !rec.t.is_finite() || rec.t < 0.0 {
                return Err(Error::Validation(format!("record time {} invalid", rec.t)));
            }
            if rec.shots == 0 {
                match rec.freq_one {
                    Some(f) if (0.0..=1.0).contains(&f) => {}
                    Some(f) => {
                        return Err(Error::Validation(format!(
                            "exact-mode frequency {f} outside [0, 1]"
                        )))
                    }
                    None => {
                        return Err(Error::Validation(
                            "exact-mode record (shots = 0) lacks freq_one".into(),
                        ))
                    }
                }
            } else {
                if rec.count_one > rec.shots {
                    return Err(Error::Validation(format!(
                        "count_one {} exceeds shots {} (prep {:?}, t = {}, basis {})",
                        rec.count_one,
                        rec.shots,
                        rec.prep,
                        rec.t,
                        rec.basis.name()
                    )));
                }
                if rec.freq_one.is_some() {
                    return Err(Error::Validation(
                        "sampled record must not carry freq_one".into(),
                    ));
                }
            }
            let key = (rec.prep.clone(), rec.t.to_bits());
            let bases = frames.entry(key).or_default();
            if bases.contains(&rec.basis) {
                return Err(Error::Validation(format!(
                    "duplicate record for prep {:?} at t = {} basis {}",
                    rec.prep,
                    rec.t,
                    rec.basis.name()
                )));
            }
            bases.push(rec.basis);
        }
        for ((prep, tbits), bases) in &frames {
            for b in Basis::ALL {
                if !bases.contains(&b) {
                    return Err(Error::Validation(format!(
                        "incomplete tomography frame for prep {:?} at t = {}: missing basis {}",
                        prep,
                        f64::from_bits(*tbits),
                        b.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Frames for one preparation, sorted by time: (t, [record_x, record_y, record_z]).
    pub fn frames_for(&self, prep: &str) -> Result<Vec<(f64, [TomographyRecord; 3])>> {
        let mut by_time: BTreeMap<u64, [Option<TomographyRecord>; 3]> = BTreeMap::new();
        for rec in self.records.iter().filter(|r| r.prep == prep) {
            by_time.entry(rec.t.to_bits()).or_default()[rec.basis.index()] = Some(rec.clone());
        }
        if by_time.is_empty() {
            return Err(Error::Validation(format!(
                "no records for preparation {prep:?}"
            )));
        }
        let mut out = Vec::with_capacity(by_time.len());
        for (tbits, recs) in by_time {
            let t = f64::from_bits(tbits);
            let [x, y, z] = recs;
            let frame = [
                x.ok_or_else(|| missing(prep, t, Basis::X))?,
                y.ok_or_else(|| missing(prep, t, Basis::Y))?,
                z.ok_or_else(|| missing(prep, t, Basis::Z))?,
            ];
            out.push((t, frame));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }
}

fn missing(prep: &str, t: f64, basis: Basis) -> Error {
    Error::Validation(format!(
        "incomplete tomography frame for prep {prep:?} at t = {t}: missing basis {}",
        basis.name()
    ))
}

/// Born-rule probability of outcome 1 when measuring basis k on the state
/// with Bloch vector v: (1 - v_k) / 2.
pub fn outcome_one_probability(v: &BlochVector, basis: Basis) -> f64 {
    let comp = match basis {
        Basis::X => v.vx,
        Basis::Y => v.vy,
        Basis::Z => v.vz,
    };
    0.5 * (1.0 - comp)
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Generates a synthetic dataset from a ground-truth model. `shots = 0`
/// switches to the exact-probability mode, which stores infinite-shot
/// frequencies rounded to 12 decimal digits. Deterministic given the seed.
///
/// Returns the dataset together with warnings for any requested time at
/// which the ground-truth map violates complete positivity.
pub fn simulate_dataset(
    theta: &ModelParams,
    preps: &PreparationSet,
    times: &[f64],
    shots: u64,
    readout: &ReadoutModel,
    seed: u64,
) -> Result<(TomographyDataset, Vec<String>)> {
    theta.validate()?;
    preps.validate()?;
    readout.validate()?;
    if times.is_empty() {
        return Err(Error::Validation("no sampling times given".into()));
    }
    for &t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Validation(format!("invalid sampling time {t}")));
        }
    }
    let prop = Propagator::build(theta)?;

    let mut warnings = Vec::new();
    for &t in times {
        let report = choi_check(&prop, theta, t);
        if !report.cp_ok {
            warnings.push(format!(
                "ground-truth map violates complete positivity at t = {t} (margin {:.3e})",
                report.margin
            ));
        }
    }

    let mut records = Vec::with_capacity(preps.entries.len() * times.len() * 3);
    let mut record_idx: u64 = 0;
    for entry in &preps.entries {
        let v0 = BlochVector::new(entry.vx, entry.vy, entry.vz);
        for &t in times {
            let v = prop.propagate_bloch(&v0, t);
            for basis in Basis::ALL {
                let p_true = outcome_one_probability(&v, basis).clamp(0.0, 1.0);
                let p_meas = readout.apply([1.0 - p_true, p_true])[1].clamp(0.0, 1.0);
                let rec = if shots == 0 {
                    TomographyRecord {
                        prep: entry.label.clone(),
                        t,
                        basis,
                        count_one: 0,
                        shots: 0,
                        freq_one: Some(round12(p_meas)),
                    }
                } else {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    rng.set_stream(record_idx);
                    let count = rand_distr::Binomial::new(shots, p_meas)
                        .map_err(|e| Error::Numerical(format!("binomial sampling: {e}")))?
                        .sample(&mut rng);
                    TomographyRecord {
                        prep: entry.label.clone(),
                        t,
                        basis,
                        count_one: count,
                        shots,
                        freq_one: None,
                    }
                };
                records.push(rec);
                record_idx += 1;
            }
        }
    }

    let dataset = TomographyDataset {
        schema_version: SCHEMA_VERSION,
        preparations: preps.clone(),
        readout: Some(*readout),
        metadata: DatasetMetadata {
            shots_default: shots,
            seed: Some(seed),
            generator_theta: Some(*theta),
            timestamp: None,
            mitigated: false,
            note: None,
        },
        records,
    };
    dataset.validate()?;
    Ok((dataset, warnings))
}

/// Loads and validates a dataset from a JSON file.
pub fn load_dataset(path: &Path) -> Result<TomographyDataset> {
    let text = std::fs::read_to_string(path)?;
    let dataset: TomographyDataset = serde_json::from_str(&text)?;
    dataset.validate()?;
    Ok(dataset)
}

/// Serializes a dataset to pretty JSON (stable field order, trailing newline).
pub fn dataset_to_json(dataset: &TomographyDataset) -> Result<String> {
    let mut s = serde_json::to_string_pretty(dataset)?;
    s.push('\n');
    Ok(s)
}

pub fn save_dataset(dataset: &TomographyDataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_json(dataset)?)?;
    Ok(())
}

/// CSV of the exact-mode outcome-1 probabilities: prep,t,basis,p_one.
pub fn probabilities_csv(dataset: &TomographyDataset) -> String {
    let mut out = String::from("prep,t,basis,p_one\n");
    for rec in &dataset.records {
        out.push_str(&format!(
            "{},{:.12e},{},{:.12e}\n",
            rec.prep,
            rec.t,
            rec.basis.name(),
            rec.frequency()
        ));
    }
    out
}

/// n log-spaced times between start and stop (inclusive).
pub fn log_spaced_times(start: f64, stop: f64, n: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > start) || n < 2 {
        return Err(Error::Validation(format!(
            "log-spaced grid requires 0 < start < stop and n >= 2, got {start}..{stop} x {n}"
        )));
    }
    let (la, lb) = (start.log10(), stop.log10());
    Ok((0..n)
        .map(|i| 10f64.powf(la + (lb - la) * i as f64 / (n - 1) as f64))
        .collect())
}

/// The default experimental grid: 25 log-spaced points on [0.1, 100] us.
pub fn default_times() -> Vec<f64> {
    log_spaced_times(0.1, 100.0, 25).expect("default grid is valid")
}
