//! Files: datasets (CSV), run configurations (JSON), chain traces (JSON
//! lines) and run summaries (CSV or JSON).
//!
//! Dataset CSV: a header row, one numeric column per feature, a response
//! column and optionally a column with the noiseless regression function.
//! Features already inside `[0, 1]` are used as is; any other feature is
//! min-max scaled and the map is kept for scaling test points.
//!
//! Chain trace: one JSON object per line,
//! `{"iteration":0,"tree":"I(v=0,c=49,T,T)","sigma2":1.02,"waiting_time":0.41,"move":"birth"}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainRecord;
use crate::config::RunConfig;
use crate::data::{uniform_grid, DataError, Dataset, EvalSet, FeatureScale, DEFAULT_MIN_NODE_SIZE};
use crate::estimate::{aggregate, PosteriorSummary};
use crate::experiment::OracleReport;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("column {column:?}, row {row}: {value:?} is not a number")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column {0:?} is constant")]
    ConstantColumn(String),
    #[error("response column {0:?} not found")]
    MissingResponse(String),
    #[error("feature column {0:?} not found")]
    MissingFeature(String),
    #[error("no feature columns")]
    NoFeatures,
    #[error("chain line {line}: {message}")]
    ChainLine { line: usize, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// How to read a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub response: String,
    /// Column holding the noiseless regression function, if present.
    pub truth: Option<String>,
    pub n_cut: usize,
    pub min_node_size: usize,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        DatasetSchema {
            response: "y".into(),
            truth: Some("f_true".into()),
            n_cut: 100,
            min_node_size: DEFAULT_MIN_NODE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub data: Dataset,
    pub truth: Option<Vec<f64>>,
}

struct Table {
    header: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, IoError> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (c, cell) in record.iter().enumerate() {
            let value = f64::from_str(cell.trim())
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IoError::NonNumeric {
                    column: header[c].clone(),
                    row: row + 1,
                    value: cell.to_string(),
                })?;
            columns[c].push(value);
        }
    }
    Ok(Table { header, columns })
}

/// Scale of a feature column: identity if it already lies in `[0, 1]`,
/// min-max otherwise. Constant columns are rejected.
pub fn feature_scale(name: &str, values: &[f64]) -> Result<FeatureScale, IoError> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if hi <= lo {
        return Err(IoError::ConstantColumn(name.to_string()));
    }
    if lo >= 0.0 && hi <= 1.0 {
        Ok(FeatureScale::IDENTITY)
    } else {
        Ok(FeatureScale {
            min: lo,
            range: hi - lo,
        })
    }
}

pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<LoadedData, IoError> {
    let table = read_table(path)?;
    let find = |name: &str| table.header.iter().position(|h| h == name);
    let y_col =
        find(&schema.response).ok_or_else(|| IoError::MissingResponse(schema.response.clone()))?;
    let truth_col = schema.truth.as_deref().and_then(find);
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut scales = Vec::new();
    for (c, name) in table.header.iter().enumerate() {
        if c == y_col || Some(c) == truth_col {
            continue;
        }
        let scale = feature_scale(name, &table.columns[c])?;
        columns.push(
            table.columns[c]
                .iter()
                .map(|x| scale.apply(*x).clamp(0.0, 1.0))
                .collect(),
        );
        scales.push(scale);
        names.push(name.clone());
    }
    if columns.is_empty() {
        return Err(IoError::NoFeatures);
    }
    let data = Dataset::with_uniform_grid(
        columns,
        table.columns[y_col].clone(),
        schema.n_cut,
        schema.min_node_size,
    )?
    .with_scales(scales)
    .with_names(names);
    Ok(LoadedData {
        data,
        truth: truth_col.map(|c| table.columns[c].clone()),
    })
}

/// Held-out rows, scaled with the training data's maps and matched to its
/// feature columns by name.
pub fn load_eval_set(
    path: &Path,
    schema: &DatasetSchema,
    train: &Dataset,
) -> Result<EvalSet, IoError> {
    let table = read_table(path)?;
    let find = |name: &str| table.header.iter().position(|h| h == name);
    let y_col =
        find(&schema.response).ok_or_else(|| IoError::MissingResponse(schema.response.clone()))?;
    let cols: Vec<usize> = train
        .names()
        .iter()
        .map(|n| find(n).ok_or_else(|| IoError::MissingFeature(n.clone())))
        .collect::<Result<_, _>>()?;
    let n = table.columns[y_col].len();
    let rows = (0..n)
        .map(|i| {
            cols.iter()
                .zip(train.scales())
                .map(|(c, s)| s.apply(table.columns[*c][i]))
                .collect()
        })
        .collect();
    let truth = schema
        .truth
        .as_deref()
        .and_then(find)
        .map(|c| table.columns[c].clone());
    Ok(EvalSet {
        rows,
        response: table.columns[y_col].clone(),
        truth,
    })
}

/// Write features on their original scale, then `y` and optionally `f_true`.
pub fn write_dataset(path: &Path, data: &Dataset, truth: Option<&[f64]>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = data.names().to_vec();
    header.push("y".into());
    if truth.is_some() {
        header.push("f_true".into());
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut row: Vec<String> = (0..data.d())
            .map(|v| data.scales()[v].invert(data.feature(v, i)).to_string())
            .collect();
        row.push(data.response()[i].to_string());
        if let Some(t) = truth {
            row.push(t[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Grid-free convenience used by tests: reload a written dataset with the
/// same grid size and node size.
pub fn schema_for(data: &Dataset) -> DatasetSchema {
    let n_cut = data.n_cuts(0);
    debug_assert_eq!(data.grid(0), uniform_grid(n_cut).as_slice());
    DatasetSchema {
        n_cut,
        min_node_size: data.min_node_size(),
        ..DatasetSchema::default()
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, IoError> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

pub fn write_run_config(path: &Path, cfg: &RunConfig) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, cfg)?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_chain(path: &Path, chain: &[ChainRecord]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for r in chain {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_chain(path: &Path) -> Result<Vec<ChainRecord>, IoError> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| IoError::ChainLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryFormat {
    Csv,
    Json,
}

impl FromStr for SummaryFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(SummaryFormat::Csv),
            "json" => Ok(SummaryFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// Per-run rows followed by one averaged row per algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub runs: Vec<PosteriorSummary>,
    pub aggregate: Vec<PosteriorSummary>,
}

impl SummaryReport {
    pub fn new(runs: Vec<PosteriorSummary>) -> Self {
        let aggregate = aggregate(&runs);
        SummaryReport { runs, aggregate }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header and rows of the CSV summary. Replication is `mean` on averaged rows.
pub fn summary_table(report: &SummaryReport) -> (Vec<String>, Vec<Vec<String>>) {
    let first = report.runs.first().or(report.aggregate.first());
    let monitored = first.map(|s| s.monitored()).unwrap_or_default();
    let variables = first.map(|s| s.variables.clone()).unwrap_or_default();
    let mut header: Vec<String> = [
        "algorithm",
        "replication",
        "mse",
        "mse_unweighted",
        "mse_noiseless",
        "mse_noiseless_unweighted",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(monitored.iter().map(|m| format!("ess_{m}")));
    header.extend(variables.iter().map(|v| format!("activity_{v}")));
    header.push("unique_trees".into());
    header.extend(monitored.iter().map(|m| format!("ess_per_second_{m}")));
    header.push("wall_time_seconds".into());
    let rows = report
        .runs
        .iter()
        .chain(&report.aggregate)
        .map(|s| {
            let mut row = vec![
                s.algorithm.to_string(),
                s.replication
                    .map(|r| r.to_string())
                    .unwrap_or_else(|| "mean".into()),
                s.mse.to_string(),
                s.mse_unweighted.to_string(),
                opt(s.mse_noiseless),
                opt(s.mse_noiseless_unweighted),
            ];
            row.extend(monitored.iter().map(|m| opt(s.ess.get(m).copied())));
            row.extend(s.activity.iter().map(|a| a.to_string()));
            row.push(s.unique_trees.to_string());
            row.extend(
                monitored
                    .iter()
                    .map(|m| opt(s.ess_per_second.get(m).copied())),
            );
            row.push(s.wall_time_seconds.to_string());
            row
        })
        .collect();
    (header, rows)
}

pub fn write_summary(
    path: &Path,
    runs: &[PosteriorSummary],
    format: SummaryFormat,
) -> Result<(), IoError> {
    let report = SummaryReport::new(runs.to_vec());
    match format {
        SummaryFormat::Json => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            w.flush().map_err(io_err(path))?;
        }
        SummaryFormat::Csv => {
            let (header, rows) = summary_table(&report);
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(&header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush().map_err(io_err(path))?;
        }
    }
    Ok(())
}

/// CSV: one row per tree. JSON: the whole report, distances included.
pub fn write_oracle_report(
    path: &Path,
    report: &OracleReport,
    format: SummaryFormat,
) -> Result<(), IoError> {
    match format {
        SummaryFormat::Json => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, report)?;
            w.flush().map_err(io_err(path))?;
        }
        SummaryFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(path)?);
            for row in &report.rows {
                w.serialize(row)?;
            }
            w.flush().map_err(io_err(path))?;
        }
    }
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<SummaryReport, IoError> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Algorithm;
    use crate::moves::MoveKind;
    use crate::tree::Tree;
    use std::collections::BTreeMap;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn unit_features_keep_identity_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            "a,b,y\n0.1,0.5,1\n0.4,0.2,2\n0.9,1.0,3\n",
        );
        let loaded = load_dataset(&p, &DatasetSchema::default()).unwrap();
        assert_eq!(loaded.data.scales(), &[FeatureScale::IDENTITY; 2]);
        assert_eq!(loaded.data.names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(loaded.truth, None);
    }

    #[test]
    fn wide_feature_is_min_max_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "x,y\n2,1\n7,2\n12,3\n");
        let loaded = load_dataset(&p, &DatasetSchema::default()).unwrap();
        assert_eq!(
            loaded.data.scales()[0],
            FeatureScale {
                min: 2.0,
                range: 10.0
            }
        );
        assert_eq!(loaded.data.column(0), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn bad_files_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let schema = DatasetSchema::default();
        let p = write(dir.path(), "a.csv", "x,y\n1,1\nfoo,2\n");
        let err = load_dataset(&p, &schema).unwrap_err();
        assert!(
            matches!(&err, IoError::NonNumeric { column, row: 2, .. } if column == "x"),
            "{err}"
        );
        let p = write(dir.path(), "b.csv", "x,z,y\n1,3,1\n2,3,2\n");
        let err = load_dataset(&p, &schema).unwrap_err();
        assert!(err.to_string().contains("\"z\""));
        let p = write(dir.path(), "c.csv", "x,z\n1,3\n2,4\n");
        assert!(matches!(
            load_dataset(&p, &schema),
            Err(IoError::MissingResponse(_))
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(
            dir.path(),
            "a.csv",
            "u,w,y,f_true\n3.5,0.25,1.5,1\n-1.25,0.75,2.5,3\n10,0.5,0.1,5\n",
        );
        let a = load_dataset(&src, &DatasetSchema::default()).unwrap();
        let out = dir.path().join("b.csv");
        write_dataset(&out, &a.data, a.truth.as_deref()).unwrap();
        let b = load_dataset(&out, &schema_for(&a.data)).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.data.response(), b.data.response());
        for v in 0..2 {
            for (x, y) in a.data.column(v).iter().zip(b.data.column(v)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let eval = load_eval_set(&src, &DatasetSchema::default(), &a.data).unwrap();
        assert_eq!(eval.rows[1], a.data.row(1));
    }

    fn record(i: u64, tree: &str) -> ChainRecord {
        ChainRecord {
            iteration: i,
            tree: tree.parse().unwrap(),
            sigma2: 1.0 / (i as f64 + 3.0),
            waiting_time: std::f64::consts::PI * i as f64 + 0.1,
            move_kind: MoveKind::Birth,
        }
    }

    #[test]
    fn chain_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("chain.jsonl");
        write_chain(&p, &[]).unwrap();
        assert!(read_chain(&p).unwrap().is_empty());
        let chain: Vec<ChainRecord> = (0..1000)
            .map(|i| {
                record(
                    i,
                    if i % 2 == 0 {
                        "T"
                    } else {
                        "I(v=2,c=17,T,I(v=0,c=3,T,T))"
                    },
                )
            })
            .collect();
        write_chain(&p, &chain).unwrap();
        let back = read_chain(&p).unwrap();
        assert_eq!(back, chain);
        for (a, b) in back.iter().zip(&chain) {
            assert_eq!(a.sigma2.to_bits(), b.sigma2.to_bits());
            assert_eq!(a.waiting_time.to_bits(), b.waiting_time.to_bits());
        }
    }

    #[test]
    fn malformed_chain_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let good = serde_json::to_string(&record(0, "T")).unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            &format!("{good}\n{good}\n{{\"tree\":\"I(\"}}\n"),
        );
        match read_chain(&p) {
            Err(IoError::ChainLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    fn summary(rep: usize) -> PosteriorSummary {
        let ess: BTreeMap<String, f64> = [
            ("sigma2".to_string(), 100.5 + rep as f64),
            ("x1".to_string(), 7.25),
        ]
        .into();
        PosteriorSummary {
            algorithm: Algorithm::CtC,
            replication: Some(rep),
            variables: vec!["x1".into()],
            mse: 1.0 / 3.0,
            mse_unweighted: 0.5,
            mse_noiseless: Some(1e-4),
            mse_noiseless_unweighted: None,
            ess: ess.clone(),
            activity: vec![1.0],
            unique_trees: 4.0,
            ess_per_second: ess,
            wall_time_seconds: 2.0,
        }
    }

    #[test]
    fn summary_formats_agree() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![summary(0)];
        let csv_path = dir.path().join("s.csv");
        let json_path = dir.path().join("s.json");
        write_summary(&csv_path, &runs, SummaryFormat::Csv).unwrap();
        write_summary(&json_path, &runs, SummaryFormat::Json).unwrap();
        let report = read_summary_json(&json_path).unwrap();
        assert_eq!(report.runs, runs);
        assert_eq!(report.aggregate.len(), 1);
        let mut reader = csv::Reader::from_path(&csv_path).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[1][1], "mean");
        for (row, s) in rows.iter().zip(report.runs.iter().chain(&report.aggregate)) {
            let get = |name: &str| {
                row[header.iter().position(|h| h == name).unwrap()]
                    .parse::<f64>()
                    .unwrap()
            };
            assert_eq!(get("mse"), s.mse);
            assert_eq!(get("ess_sigma2"), s.ess["sigma2"]);
            assert_eq!(get("ess_per_second_x1"), s.ess_per_second["x1"]);
            assert_eq!(get("activity_x1"), s.activity[0]);
            assert_eq!(get("mse_noiseless"), s.mse_noiseless.unwrap());
        }
    }

    #[test]
    fn run_config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        let mut cfg = RunConfig::new(Algorithm::RjB, 500);
        cfg.seed = 9;
        cfg.prior = Some(crate::prior::PriorConfig::default());
        write_run_config(&p, &cfg).unwrap();
        assert_eq!(load_run_config(&p).unwrap(), cfg);
    }

    #[test]
    fn canonical_trees_survive_the_trace() {
        let tree: Tree = "I(v=1,c=0,I(v=0,c=4,T,T),T)".parse().unwrap();
        let line = serde_json::to_string(&ChainRecord {
            tree: tree.clone(),
            ..record(1, "T")
        })
        .unwrap();
        assert!(line.contains("\"move\":\"birth\""));
        let back: ChainRecord = serde_json::from_str(&line).unwrap();
        assert!(back.tree.topology_eq(&tree));
    }
}
