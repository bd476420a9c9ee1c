//! Simulated-analyst experiments: discovery curves averaged over seeded runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ifaad_core::{
    baseline_rank, build_tree, run_feedback_loop, AadConfig, Forest, ForestParams, Label, WeightScheme,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// The algorithms compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    /// Feedback over all tree nodes.
    #[serde(rename = "if-aad")]
    IfAad,
    /// Feedback over leaf nodes only.
    #[serde(rename = "if-aad-leaf")]
    IfAadLeaf,
    /// Fixed uniform-weight isolation-forest ranking; ignores feedback.
    #[serde(rename = "if-baseline")]
    IfBaseline,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::IfAad, Arm::IfAadLeaf, Arm::IfBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Arm::IfAad => "if-aad",
            Arm::IfAadLeaf => "if-aad-leaf",
            Arm::IfBaseline => "if-baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn scheme(self) -> WeightScheme {
        match self {
            Arm::IfAadLeaf => WeightScheme::LeafDepth,
            Arm::IfAad | Arm::IfBaseline => WeightScheme::Isolation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub arm: Arm,
    pub budget: usize,
    pub num_runs: usize,
    /// Run `r` builds its forest with seed `base_seed + r`.
    pub base_seed: u64,
    pub num_trees: usize,
    pub subsample_size: usize,
    /// `budget` inside is overridden by the field above.
    pub aad: AadConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            arm: Arm::IfAad,
            budget: 60,
            num_runs: 10,
            base_seed: 0,
            num_trees: 100,
            subsample_size: 256,
            aad: AadConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn forest_params(&self, run: usize) -> ForestParams {
        ForestParams {
            num_trees: self.num_trees,
            subsample_size: self.subsample_size,
            scheme: self.arm.scheme(),
            seed: self.base_seed.wrapping_add(run as u64),
        }
    }

    pub fn aad_config(&self) -> AadConfig {
        AadConfig {
            budget: self.budget,
            ..self.aad
        }
    }
}

/// Builds the forest with trees grown in parallel; identical to the
/// sequential build because every tree has its own seeded stream.
pub fn build_forest_parallel(ds: &LabeledDataset, params: &ForestParams) -> Result<Forest> {
    let trees = (0..params.num_trees)
        .into_par_iter()
        .map(|i| build_tree(&ds.instances, params, i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let n = ds.instances.first().map_or(0, |i| i.features.len());
    Ok(Forest::assemble(trees, n, params)?)
}

/// Queries of one run, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub queried: Vec<usize>,
}

/// Cumulative true anomalies seen per query, over several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryCurve {
    pub arm: Arm,
    pub budget: usize,
    pub total_anomalies: usize,
    /// `runs[r][i]`: anomalies found by run `r` within its first `i + 1`
    /// queries.
    pub runs: Vec<Vec<usize>>,
    pub mean: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub records: Vec<RunRecord>,
}

impl DiscoveryCurve {
    /// Aggregates per-run curves: mean and normal-approximation 95% interval
    /// `mean ± 1.96·s/√R`.
    pub fn from_runs(arm: Arm, budget: usize, total_anomalies: usize, runs: Vec<Vec<usize>>, records: Vec<RunRecord>) -> Self {
        let r = runs.len() as f64;
        let mut mean = Vec::with_capacity(budget);
        let mut ci_low = Vec::with_capacity(budget);
        let mut ci_high = Vec::with_capacity(budget);
        for i in 0..budget {
            let m = runs.iter().map(|c| c[i] as f64).sum::<f64>() / r;
            let half = if runs.len() > 1 {
                let var = runs.iter().map(|c| (c[i] as f64 - m).powi(2)).sum::<f64>() / (r - 1.0);
                1.96 * (var / r).sqrt()
            } else {
                0.0
            };
            mean.push(m);
            ci_low.push(m - half);
            ci_high.push(m + half);
        }
        Self {
            arm,
            budget,
            total_anomalies,
            runs,
            mean,
            ci_low,
            ci_high,
            records,
        }
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }
}

/// Prefix count of anomalies along a query order.
pub fn cumulative(queried: &[usize], truth: &[Label]) -> Vec<usize> {
    queried
        .iter()
        .scan(0, |found, &id| {
            *found += usize::from(truth[id].is_anomaly());
            Some(*found)
        })
        .collect()
}

/// Runs one arm of the experiment once.
pub fn run_once(ds: &LabeledDataset, cfg: &ExperimentConfig, run: usize) -> Result<RunRecord> {
    let params = cfg.forest_params(run);
    let forest = build_forest_parallel(ds, &params)?;
    let queried = match cfg.arm {
        Arm::IfBaseline => {
            let mut order = baseline_rank(&forest, &ds.instances)?;
            order.truncate(cfg.budget);
            order
        }
        Arm::IfAad | Arm::IfAadLeaf => {
            let outcome = run_feedback_loop(&forest, &ds.instances, |id| ds.label_of(id), &cfg.aad_config())?;
            outcome.state.query_history.iter().map(|&(id, _)| id).collect()
        }
    };
    Ok(RunRecord {
        run,
        seed: params.seed,
        queried,
    })
}

/// Runs `num_runs` independent seeded runs (in parallel) and aggregates.
pub fn run_experiment(ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<DiscoveryCurve> {
    if cfg.budget > ds.len() {
        return Err(Error::Config(format!(
            "budget {} exceeds dataset size {}",
            cfg.budget,
            ds.len()
        )));
    }
    if cfg.num_runs == 0 {
        return Err(Error::Config("num_runs must be at least 1".into()));
    }
    if cfg.budget > 0 {
        cfg.aad_config().validate()?;
    }
    let records = if cfg.budget == 0 {
        (0..cfg.num_runs)
            .map(|run| RunRecord {
                run,
                seed: cfg.base_seed.wrapping_add(run as u64),
                queried: Vec::new(),
            })
            .collect()
    } else {
        (0..cfg.num_runs)
            .into_par_iter()
            .map(|run| run_once(ds, cfg, run))
            .collect::<Result<Vec<_>>>()?
    };
    let runs = records.iter().map(|r| cumulative(&r.queried, &ds.truth)).collect();
    Ok(DiscoveryCurve::from_runs(cfg.arm, cfg.budget, ds.num_anomalies(), runs, records))
}

/// Curve columns read back from an exported CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCurve {
    pub iteration: Vec<usize>,
    pub mean: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub runs: Vec<Vec<usize>>,
}

/// Path of the per-query companion file for a curve CSV.
pub fn queries_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.queries.csv"))
}

/// Writes the curve (`iteration, mean, ci_low, ci_high, run_0, ...`) to
/// `path`, and every query (`run, seed, queried_at, instance_id, truth`) to
/// the companion `<stem>.queries.csv` for external plotting or embedding.
pub fn export_results(curve: &DiscoveryCurve, ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iteration".to_owned(), "mean".into(), "ci_low".into(), "ci_high".into()];
    header.extend((0..curve.runs.len()).map(|r| format!("run_{r}")));
    out.write_record(&header)?;
    for i in 0..curve.budget {
        let mut row = vec![
            (i + 1).to_string(),
            format!("{:?}", curve.mean[i]),
            format!("{:?}", curve.ci_low[i]),
            format!("{:?}", curve.ci_high[i]),
        ];
        row.extend(curve.runs.iter().map(|r| r[i].to_string()));
        out.write_record(&row)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(path, bytes)?;

    let mut q = csv::Writer::from_writer(Vec::new());
    q.write_record(["run", "seed", "queried_at", "instance_id", "truth"])?;
    for record in &curve.records {
        for (at, &id) in record.queried.iter().enumerate() {
            q.write_record([
                record.run.to_string(),
                record.seed.to_string(),
                (at + 1).to_string(),
                id.to_string(),
                ds.truth[id].as_str().to_owned(),
            ])?;
        }
    }
    let bytes = q.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(queries_path(path), bytes)?;
    Ok(())
}

pub fn load_results(path: &Path) -> Result<LoadedCurve> {
    let mut reader = csv::Reader::from_path(path)?;
    let num_runs = reader.headers()?.len().saturating_sub(4);
    let mut curve = LoadedCurve {
        iteration: Vec::new(),
        mean: Vec::new(),
        ci_low: Vec::new(),
        ci_high: Vec::new(),
        runs: vec![Vec::new(); num_runs],
    };
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                row: line + 1,
                message: format!("missing column {i}"),
            })
        };
        let bad = |e: &dyn std::fmt::Display| Error::Parse {
            row: line + 1,
            message: e.to_string(),
        };
        curve.iteration.push(field(0)?.parse().map_err(|e| bad(&e))?);
        curve.mean.push(field(1)?.parse().map_err(|e| bad(&e))?);
        curve.ci_low.push(field(2)?.parse().map_err(|e| bad(&e))?);
        curve.ci_high.push(field(3)?.parse().map_err(|e| bad(&e))?);
        for (r, run) in curve.runs.iter_mut().enumerate() {
            run.push(field(4 + r)?.parse().map_err(|e| bad(&e))?);
        }
    }
    Ok(curve)
}

/// One arm's final-iteration summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalSummary {
    pub arm: Arm,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `mean − reference mean`.
    pub delta: f64,
    /// Whether this arm's interval overlaps the reference arm's.
    pub ci_overlaps_reference: bool,
}

/// Side-by-side view of several arms run with the same budget. Deltas are
/// taken against the baseline arm when present, otherwise the first arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub arms: Vec<Arm>,
    pub reference: usize,
    /// `means[a][i]`.
    pub means: Vec<Vec<f64>>,
    /// `deltas[a][i] = means[a][i] − means[reference][i]`.
    pub deltas: Vec<Vec<f64>>,
    pub finals: Vec<FinalSummary>,
}

pub fn compare_arms(curves: &[DiscoveryCurve]) -> Result<Comparison> {
    let first = curves.first().ok_or_else(|| Error::Config("no curves to compare".into()))?;
    if let Some(c) = curves.iter().find(|c| c.budget != first.budget) {
        return Err(Error::Config(format!(
            "mismatched budgets: {} vs {}",
            first.budget, c.budget
        )));
    }
    let reference = curves.iter().position(|c| c.arm == Arm::IfBaseline).unwrap_or(0);
    let base = &curves[reference];
    let means = curves.iter().map(|c| c.mean.clone()).collect();
    let deltas = curves
        .iter()
        .map(|c| c.mean.iter().zip(&base.mean).map(|(a, b)| a - b).collect())
        .collect();
    let last = first.budget.checked_sub(1);
    let finals = curves
        .iter()
        .map(|c| match last {
            Some(i) => FinalSummary {
                arm: c.arm,
                mean: c.mean[i],
                ci_low: c.ci_low[i],
                ci_high: c.ci_high[i],
                delta: c.mean[i] - base.mean[i],
                ci_overlaps_reference: c.ci_low[i] <= base.ci_high[i] && base.ci_low[i] <= c.ci_high[i],
            },
            None => FinalSummary {
                arm: c.arm,
                mean: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                delta: 0.0,
                ci_overlaps_reference: true,
            },
        })
        .collect();
    Ok(Comparison {
        arms: curves.iter().map(|c| c.arm).collect(),
        reference,
        means,
        deltas,
        finals,
    })
}

impl Comparison {
    /// Plain-text table: one row per iteration, one mean column per arm and
    /// one delta column per non-reference arm.
    pub fn render(&self) -> String {
        let mut s = String::from("iteration");
        for arm in &self.arms {
            write!(s, "\t{}", arm.name()).unwrap();
        }
        for (a, arm) in self.arms.iter().enumerate() {
            if a != self.reference {
                write!(s, "\tdelta({})", arm.name()).unwrap();
            }
        }
        s.push('\n');
        let iterations = self.means.first().map_or(0, Vec::len);
        for i in 0..iterations {
            write!(s, "{}", i + 1).unwrap();
            for m in &self.means {
                write!(s, "\t{:.2}", m[i]).unwrap();
            }
            for (a, d) in self.deltas.iter().enumerate() {
                if a != self.reference {
                    write!(s, "\t{:+.2}", d[i]).unwrap();
                }
            }
            s.push('\n');
        }
        for f in &self.finals {
            writeln!(
                s,
                "final {}: mean {:.2} [{:.2}, {:.2}] delta {:+.2}{}",
                f.arm.name(),
                f.mean,
                f.ci_low,
                f.ci_high,
                f.delta,
                if f.ci_overlaps_reference { " (CI overlaps reference)" } else { "" }
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic_2d;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            arm: Arm::IfBaseline,
            budget: 10,
            num_runs: 3,
            base_seed: 7,
            num_trees: 20,
            subsample_size: 64,
            aad: AadConfig::default(),
        }
    }

    #[test]
    fn zero_budget_gives_empty_curve() {
        let ds = make_synthetic_2d(50, 3, 1);
        let curve = run_experiment(&ds, &ExperimentConfig { budget: 0, ..small() }).unwrap();
        assert!(curve.mean.is_empty());
        assert_eq!(curve.runs.len(), 3);
    }

    #[test]
    fn budget_larger_than_data_is_rejected() {
        let ds = make_synthetic_2d(5, 1, 1);
        assert!(run_experiment(&ds, &small()).is_err());
    }

    #[test]
    fn ci_uses_sample_deviation() {
        let curve = DiscoveryCurve::from_runs(Arm::IfAad, 1, 5, vec![vec![1], vec![3]], Vec::new());
        assert_eq!(curve.mean, vec![2.0]);
        let half = 1.96 * (2.0f64 / 2.0).sqrt();
        assert!((curve.ci_high[0] - (2.0 + half)).abs() < 1e-12);
    }

    #[test]
    fn comparison_of_identical_arms_has_zero_deltas() {
        let ds = make_synthetic_2d(60, 4, 2);
        let a = run_experiment(&ds, &small()).unwrap();
        let cmp = compare_arms(&[a.clone(), a.clone()]).unwrap();
        assert!(cmp.deltas.iter().flatten().all(|&d| d == 0.0));
        let other = DiscoveryCurve { budget: 3, ..a };
        assert!(compare_arms(&[cmp_curve(&ds), other]).is_err());
    }

    fn cmp_curve(ds: &LabeledDataset) -> DiscoveryCurve {
        run_experiment(ds, &small()).unwrap()
    }

    #[test]
    fn three_arm_table_has_three_mean_columns() {
        let ds = make_synthetic_2d(60, 4, 2);
        let curves: Vec<_> = Arm::ALL
            .iter()
            .map(|&arm| run_experiment(&ds, &ExperimentConfig { arm, budget: 5, num_runs: 2, ..small() }).unwrap())
            .collect();
        let cmp = compare_arms(&curves).unwrap();
        assert_eq!(cmp.means.len(), 3);
        assert_eq!(cmp.reference, 2);
        let header = cmp.render().lines().next().unwrap().to_owned();
        assert_eq!(header.split('\t').count(), 1 + 3 + 2);
    }

    #[test]
    fn arm_names_round_trip() {
        for arm in Arm::ALL {
            assert_eq!(Arm::parse(arm.name()), Some(arm));
        }
        assert_eq!(Arm::parse("loda-aad"), None);
    }
}
