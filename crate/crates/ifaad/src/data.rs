//! Labeled datasets: CSV ingestion with class mapping, anomaly downsampling,
//! benchmark preparation and the synthetic 2-D generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use ifaad_core::{Instance, Label};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Raw class values assigned to each side of the binary split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMapping {
    pub nominal_classes: BTreeSet<String>,
    pub anomaly_classes: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downsample_anomaly_fraction: Option<f64>,
}

impl ClassMapping {
    pub fn new<S: Into<String>>(
        nominal: impl IntoIterator<Item = S>,
        anomaly: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let mapping = Self {
            nominal_classes: nominal.into_iter().map(Into::into).collect(),
            anomaly_classes: anomaly.into_iter().map(Into::into).collect(),
            downsample_anomaly_fraction: None,
        };
        mapping.validate()?;
        Ok(mapping)
    }

    /// The mapping used by canonical prepared files.
    pub fn canonical() -> Self {
        Self::new(["nominal"], ["anomaly"]).expect("static mapping")
    }

    pub fn validate(&self) -> Result<()> {
        if self.nominal_classes.is_empty() || self.anomaly_classes.is_empty() {
            return Err(Error::Schema("class sets must be non-empty".into()));
        }
        if let Some(c) = self.nominal_classes.intersection(&self.anomaly_classes).next() {
            return Err(Error::Schema(format!("class {c:?} is both nominal and anomalous")));
        }
        Ok(())
    }

    fn classify(&self, raw: &str) -> Option<Label> {
        if self.anomaly_classes.contains(raw) {
            Some(Label::Anomaly)
        } else if self.nominal_classes.contains(raw) {
            Some(Label::Nominal)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Comma,
    Tab,
    Semicolon,
    /// Runs of spaces or tabs, as in several UCI `.data` files.
    Whitespace,
}

/// How to read a CSV into a labeled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    pub mapping: ClassMapping,
    pub delimiter: Delimiter,
    /// Column names for headerless files. When set, the first row is data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
    /// Columns dummy-encoded with one indicator per level except the first
    /// (levels sorted lexically).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categorical: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drop: Vec<String>,
}

impl CsvSchema {
    /// Comma-separated file with a header and a `label` column holding
    /// `anomaly`/`nominal`.
    pub fn canonical() -> Self {
        Self {
            label_column: "label".into(),
            mapping: ClassMapping::canonical(),
            delimiter: Delimiter::Comma,
            column_names: None,
            categorical: Vec::new(),
            drop: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub provenance: String,
    pub feature_names: Vec<String>,
    pub instances: Vec<Instance>,
    pub truth: Vec<Label>,
    /// Rows skipped because their class was in neither mapped set.
    pub dropped_rows: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_anomalies(&self) -> usize {
        self.truth.iter().filter(|l| l.is_anomaly()).count()
    }

    pub fn anomaly_fraction(&self) -> f64 {
        self.num_anomalies() as f64 / self.len() as f64
    }

    /// Ground-truth oracle for simulated analysts.
    pub fn label_of(&self, id: usize) -> Option<Label> {
        self.truth.get(id).copied()
    }

    /// Renders the canonical CSV: header of feature names plus `label`.
    pub fn to_canonical_csv(&self) -> Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = self.feature_names.clone();
        header.push("label".into());
        writer.write_record(&header)?;
        for (inst, label) in self.instances.iter().zip(&self.truth) {
            let mut row: Vec<String> = inst.features.iter().map(|v| format!("{v:?}")).collect();
            row.push(label.as_str().into());
            writer.write_record(&row)?;
        }
        writer
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))
    }

    fn from_rows(
        name: String,
        provenance: String,
        feature_names: Vec<String>,
        rows: Vec<(Vec<f64>, Label)>,
        dropped_rows: usize,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Core(ifaad_core::Error::EmptyDataset));
        }
        let (instances, truth) = rows
            .into_iter()
            .enumerate()
            .map(|(id, (features, label))| (Instance::new(id, features), label))
            .unzip();
        Ok(Self {
            name,
            provenance,
            feature_names,
            instances,
            truth,
            dropped_rows,
        })
    }
}

fn read_records(text: &str, schema: &CsvSchema) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rows: Vec<Vec<String>> = match schema.delimiter {
        Delimiter::Whitespace => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect(),
        other => {
            let delimiter = match other {
                Delimiter::Tab => b'\t',
                Delimiter::Semicolon => b';',
                _ => b',',
            };
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            reader
                .records()
                .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let header = match &schema.column_names {
        Some(names) => names.clone(),
        None => {
            if rows.is_empty() {
                return Err(Error::Core(ifaad_core::Error::EmptyDataset));
            }
            rows.remove(0)
        }
    };
    Ok((header, rows))
}

/// Parses CSV text. Row order is preserved; rows whose class is in neither
/// mapped set are dropped and counted.
pub fn parse_csv(text: &str, schema: &CsvSchema, name: &str) -> Result<LabeledDataset> {
    schema.mapping.validate()?;
    let (header, rows) = read_records(text, schema)?;
    let label_idx = header
        .iter()
        .position(|h| h == &schema.label_column)
        .ok_or_else(|| Error::Schema(format!("missing label column {:?}", schema.label_column)))?;
    for col in schema.categorical.iter().chain(&schema.drop) {
        if !header.contains(col) {
            return Err(Error::Schema(format!("unknown column {col:?}")));
        }
    }

    enum Column {
        Numeric,
        Categorical(Vec<String>),
        Skip,
    }
    let mut kept = Vec::new();
    let mut dropped = 0;
    for (line, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Parse {
                row: line + 1,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        match schema.mapping.classify(&row[label_idx]) {
            Some(label) => kept.push((line + 1, row, label)),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{name}: dropped {dropped} rows with unmapped classes");
    }

    let columns: Vec<Column> = header
        .iter()
        .enumerate()
        .map(|(i, h)| {
            if i == label_idx || schema.drop.contains(h) {
                Column::Skip
            } else if schema.categorical.contains(h) {
                let levels: BTreeSet<&str> = kept.iter().map(|(_, r, _)| r[i].as_str()).collect();
                Column::Categorical(levels.into_iter().skip(1).map(str::to_owned).collect())
            } else {
                Column::Numeric
            }
        })
        .collect();

    let mut feature_names = Vec::new();
    for (h, col) in header.iter().zip(&columns) {
        match col {
            Column::Numeric => feature_names.push(h.clone()),
            Column::Categorical(levels) => {
                feature_names.extend(levels.iter().map(|lvl| format!("{h}={lvl}")))
            }
            Column::Skip => {}
        }
    }

    let mut out = Vec::with_capacity(kept.len());
    for (line, row, label) in kept {
        let mut features = Vec::with_capacity(feature_names.len());
        for ((cell, col), h) in row.iter().zip(&columns).zip(&header) {
            match col {
                Column::Numeric => {
                    let value: f64 = cell.parse().map_err(|_| Error::Parse {
                        row: line,
                        message: format!("non-numeric value {cell:?} in column {h:?}"),
                    })?;
                    if !value.is_finite() {
                        return Err(Error::Core(ifaad_core::Error::NonFinite {
                            instance: out.len(),
                            feature: features.len(),
                        }));
                    }
                    features.push(value);
                }
                Column::Categorical(levels) => {
                    features.extend(levels.iter().map(|lvl| if lvl == cell { 1.0 } else { 0.0 }))
                }
                Column::Skip => {}
            }
        }
        out.push((features, label));
    }
    LabeledDataset::from_rows(name.into(), format!("csv:{name}"), feature_names, out, dropped)
}

/// Parses a headed CSV in which every column is a numeric feature. Truth
/// labels are unknown and recorded as nominal.
pub fn parse_features_csv(text: &str, name: &str) -> Result<LabeledDataset> {
    let schema = CsvSchema::canonical();
    let (header, rows) = read_records(text, &schema)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Parse {
                row: line + 1,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let features = row
            .iter()
            .zip(&header)
            .map(|(cell, h)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row: line + 1,
                    message: format!("non-numeric value {cell:?} in column {h:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((features, Label::Nominal));
    }
    LabeledDataset::from_rows(name.into(), format!("upload:{name}"), header, out, 0)
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut ds = parse_csv(&text, schema, &name)?;
    ds.provenance = format!("csv:{}", path.display());
    Ok(ds)
}

/// Keeps a seeded uniform subset of the anomalies so their share is as
/// close as possible to `target_fraction`. Nominals and row order are kept.
pub fn downsample_anomalies(ds: &LabeledDataset, target_fraction: f64, seed: u64) -> Result<LabeledDataset> {
    let current = ds.anomaly_fraction();
    if !(target_fraction > 0.0 && target_fraction < current) {
        return Err(Error::Schema(format!(
            "target anomaly fraction {target_fraction} must lie in (0, {current})"
        )));
    }
    let anomalies: Vec<usize> = (0..ds.len()).filter(|&i| ds.truth[i].is_anomaly()).collect();
    let nominals = (ds.len() - anomalies.len()) as f64;
    let keep = ((target_fraction * nominals / (1.0 - target_fraction)).round() as usize)
        .clamp(1, anomalies.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: BTreeSet<usize> = index::sample(&mut rng, anomalies.len(), keep)
        .into_iter()
        .map(|i| anomalies[i])
        .collect();
    let rows = (0..ds.len())
        .filter(|i| !ds.truth[*i].is_anomaly() || kept.contains(i))
        .map(|i| (ds.instances[i].features.clone(), ds.truth[i]))
        .collect();
    LabeledDataset::from_rows(
        ds.name.clone(),
        format!("{}; anomalies downsampled to {target_fraction} (seed {seed})", ds.provenance),
        ds.feature_names.clone(),
        rows,
        ds.dropped_rows,
    )
}

/// A nominal Gaussian cluster of the synthetic generator.
#[derive(Debug, Clone, Copy)]
pub struct Cluster {
    pub center: [f64; 2],
    pub sigma: f64,
    /// Share of the nominal points drawn from this cluster.
    pub share: f64,
}

/// Nominal clusters: two tight ones and a broad one whose tail produces
/// nominal outliers.
pub const SYNTHETIC_CLUSTERS: [Cluster; 3] = [
    Cluster { center: [0.0, 0.0], sigma: 0.5, share: 0.4 },
    Cluster { center: [5.0, 5.0], sigma: 0.6, share: 0.35 },
    Cluster { center: [5.0, -2.0], sigma: 1.2, share: 0.25 },
];

/// Anomalies come from two small pockets between the clusters.
const ANOMALY_POCKETS: [([f64; 2], f64); 2] = [([1.8, 3.6], 0.35), ([2.4, -4.8], 0.35)];

/// 2-D benchmark: dense Gaussian nominal clusters plus anomalies that all
/// lie outside three standard deviations of every cluster center.
pub fn make_synthetic_2d(num_nominal: usize, num_anomaly: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(num_nominal + num_anomaly);

    let mut remaining = num_nominal;
    for (k, cluster) in SYNTHETIC_CLUSTERS.iter().enumerate() {
        let count = if k + 1 == SYNTHETIC_CLUSTERS.len() {
            remaining
        } else {
            ((num_nominal as f64 * cluster.share).round() as usize).min(remaining)
        };
        remaining -= count;
        for _ in 0..count {
            let x = cluster.center[0] + cluster.sigma * std_normal.sample(&mut rng);
            let y = cluster.center[1] + cluster.sigma * std_normal.sample(&mut rng);
            rows.push((vec![x, y], Label::Nominal));
        }
    }
    for i in 0..num_anomaly {
        let (center, sigma) = ANOMALY_POCKETS[i % ANOMALY_POCKETS.len()];
        loop {
            let x = center[0] + sigma * std_normal.sample(&mut rng);
            let y = center[1] + sigma * std_normal.sample(&mut rng);
            if outside_all_clusters([x, y]) {
                rows.push((vec![x, y], Label::Anomaly));
                break;
            }
        }
    }
    // Interleave so ids carry no label information.
    for i in (1..rows.len()).rev() {
        let j = rng.gen_range(0..=i);
        rows.swap(i, j);
    }
    LabeledDataset::from_rows(
        "synthetic-2d".into(),
        format!("synthetic:{num_nominal}:{num_anomaly}:{seed}"),
        vec!["x".into(), "y".into()],
        rows,
        0,
    )
    .expect("counts are positive")
}

pub(crate) fn outside_all_clusters(p: [f64; 2]) -> bool {
    SYNTHETIC_CLUSTERS.iter().all(|c| {
        let (dx, dy) = (p[0] - c.center[0], p[1] - c.center[1]);
        (dx * dx + dy * dy).sqrt() > 3.0 * c.sigma
    })
}

/// A benchmark recipe: how to turn a raw UCI-style file into the binary
/// dataset with the published size.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub schema: CsvSchema,
    /// Expected `(total, dims, anomalies)` after preparation.
    pub expected: (usize, usize, usize),
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

fn preset_schema(
    label: &str,
    nominal: &[&str],
    anomaly: &[&str],
    delimiter: Delimiter,
    columns: Option<Vec<String>>,
) -> CsvSchema {
    CsvSchema {
        label_column: label.into(),
        mapping: ClassMapping::new(nominal.iter().copied(), anomaly.iter().copied()).expect("static mapping"),
        delimiter,
        column_names: columns,
        categorical: Vec::new(),
        drop: Vec::new(),
    }
}

/// Built-in preparation recipes.
pub fn presets() -> Vec<Preset> {
    let numbered = |prefix: &str, n: usize, label: &str| {
        let mut cols: Vec<String> = (1..=n).map(|i| format!("{prefix}{i}")).collect();
        cols.push(label.into());
        cols
    };

    let mut abalone = preset_schema(
        "rings",
        &["8", "9", "10"],
        &["3", "21"],
        Delimiter::Comma,
        Some(strings(&[
            "sex", "length", "diameter", "height", "whole_weight", "shucked_weight",
            "viscera_weight", "shell_weight", "rings",
        ])),
    );
    abalone.categorical = vec!["sex".into()];

    let mut yeast = preset_schema(
        "class",
        &["CYT", "NUC", "MIT"],
        &["ERL", "POX", "VAC"],
        Delimiter::Whitespace,
        Some(strings(&[
            "sequence", "mcg", "gvh", "alm", "mit", "erl", "pox", "vac", "nuc", "class",
        ])),
    );
    yeast.drop = vec!["sequence".into()];

    let mut cardio = preset_schema("NSP", &["1"], &["3"], Delimiter::Comma, None);
    cardio.mapping.downsample_anomaly_fraction = Some(0.0265);

    vec![
        Preset { name: "abalone", schema: abalone, expected: (1920, 9, 29) },
        Preset {
            name: "ann-thyroid-1v3",
            schema: preset_schema("class", &["3"], &["1"], Delimiter::Whitespace, Some(numbered("f", 21, "class"))),
            expected: (3251, 21, 73),
        },
        Preset { name: "cardiotocography", schema: cardio, expected: (1700, 22, 45) },
        Preset {
            name: "covtype",
            schema: preset_schema("cover_type", &["2"], &["4"], Delimiter::Comma, Some(numbered("f", 54, "cover_type"))),
            expected: (286048, 54, 2747),
        },
        Preset {
            name: "mammography",
            schema: preset_schema("class", &["-1", "'-1'"], &["1", "+1", "'1'"], Delimiter::Comma, None),
            expected: (11183, 6, 260),
        },
        Preset {
            name: "shuttle",
            schema: preset_schema(
                "class",
                &["1"],
                &["2", "3", "5", "6", "7"],
                Delimiter::Whitespace,
                Some(numbered("f", 9, "class")),
            ),
            expected: (12345, 9, 867),
        },
        Preset { name: "yeast", schema: yeast, expected: (1191, 8, 55) },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

/// Sidecar written next to a prepared CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub source: String,
    pub mapping: ClassMapping,
    pub total: usize,
    pub dims: usize,
    pub anomalies: usize,
    pub feature_names: Vec<String>,
    pub sha256: String,
}

/// Applies a preset to raw text. Fails when the result does not have the
/// preset's published size.
pub fn prepare(preset: &Preset, raw: &str, seed: u64) -> Result<LabeledDataset> {
    let mut ds = parse_csv(raw, &preset.schema, preset.name)?;
    if let Some(fraction) = preset.schema.mapping.downsample_anomaly_fraction {
        ds = downsample_anomalies(&ds, fraction, seed)?;
    }
    ds.name = preset.name.into();
    let got = (ds.len(), ds.dims(), ds.num_anomalies());
    if got != preset.expected {
        return Err(Error::Schema(format!(
            "{}: prepared (total, dims, anomalies) = {got:?}, expected {:?}",
            preset.name, preset.expected
        )));
    }
    Ok(ds)
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.manifest.json`.
pub fn write_prepared(ds: &LabeledDataset, mapping: &ClassMapping, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let csv = ds.to_canonical_csv()?;
    let manifest = Manifest {
        name: ds.name.clone(),
        source: ds.provenance.clone(),
        mapping: mapping.clone(),
        total: ds.len(),
        dims: ds.dims(),
        anomalies: ds.num_anomalies(),
        feature_names: ds.feature_names.clone(),
        sha256: sha256_hex(&csv),
    };
    fs::write(dir.join(format!("{}.csv", ds.name)), &csv)?;
    fs::write(
        dir.join(format!("{}.manifest.json", ds.name)),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Class histogram of a raw file's label column, for diagnosing presets.
pub fn class_counts(raw: &str, schema: &CsvSchema) -> Result<BTreeMap<String, usize>> {
    let (header, rows) = read_records(raw, schema)?;
    let idx = header
        .iter()
        .position(|h| h == &schema.label_column)
        .ok_or_else(|| Error::Schema(format!("missing label column {:?}", schema.label_column)))?;
    let mut counts = BTreeMap::new();
    for row in rows {
        if let Some(class) = row.get(idx) {
            *counts.entry(class.clone()).or_insert(0) += 1;
        }
    }
    Ok(counts)
}
