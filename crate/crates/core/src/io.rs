//! Panel CSV files, fit files and flat key-value configuration.

use crate::error::{Error, Result};
use crate::fit::{Estimator, FitResult, Penalties};
use crate::jgl::PrecisionSet;
use crate::panel::{CoefficientSet, MultiClassPanel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

pub const FIT_FORMAT: &str = "mcvar-fit";
pub const FIT_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { delimiter: b',' }
    }
}

/// Reads a long-format panel with header `class,time,<series...>`.
///
/// Rows may come in any order. Classes keep the order of their first
/// appearance; each class must cover the same run of consecutive integer
/// times exactly once.
pub fn load_panel_csv(path: &Path, options: &CsvOptions) -> Result<MultiClassPanel<f64>> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_panel(file, options, &path.display().to_string())
}

/// [`load_panel_csv`] on any reader; `source` names it in errors.
pub fn read_panel<R: std::io::Read>(reader: R, options: &CsvOptions, source: &str) -> Result<MultiClassPanel<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let ctx = |line: u64| format!("{source}, line {line}");
    let header = rdr.headers().map_err(|e| Error::parse(source, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "class" || &header[1] != "time" {
        return Err(Error::parse(
            source,
            "header must be `class,time,<series1>,...` with at least one series",
        ));
    }
    let series_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let j = series_names.len();

    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<BTreeMap<i64, (u64, Vec<f64>)>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(source, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != j + 2 {
            return Err(Error::parse(ctx(line), format!("expected {} fields, found {}", j + 2, rec.len())));
        }
        let class = rec[0].to_string();
        let time: i64 = rec[1]
            .parse()
            .map_err(|_| Error::parse(ctx(line), format!("column `time`: `{}` is not an integer", &rec[1])))?;
        let values = (0..j)
            .map(|c| {
                let cell = &rec[c + 2];
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::parse(
                        ctx(line),
                        format!("column {} (`{}`): `{cell}` is not a finite number", c + 3, series_names[c]),
                    )),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let k = *class_index.entry(class.clone()).or_insert_with(|| {
            class_names.push(class.clone());
            rows.push(BTreeMap::new());
            class_names.len() - 1
        });
        if let Some((first, _)) = rows[k].insert(time, (line, values)) {
            return Err(Error::parse(
                ctx(line),
                format!("duplicate row for class `{class}`, time {time} (first on line {first})"),
            ));
        }
    }
    if rows.is_empty() {
        return Err(Error::parse(source, "no data rows"));
    }

    let times: Vec<i64> = rows[0].keys().copied().collect();
    let mut data = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let lo = *r.keys().next().expect("class has a row");
        let hi = *r.keys().next_back().expect("class has a row");
        if let Some(gap) = (lo..=hi).find(|t| !r.contains_key(t)) {
            return Err(Error::Unbalanced(format!("class `{}` is missing time {gap}", class_names[k])));
        }
        if r.keys().ne(times.iter()) {
            return Err(Error::Unbalanced(format!(
                "class `{}` covers times {lo}..={hi}, class `{}` covers {}..={}",
                class_names[k],
                class_names[0],
                times[0],
                times[times.len() - 1]
            )));
        }
        let t = r.len();
        data.push(DMatrix::from_fn(t, j, |row, col| r[&times[row]].1[col]));
    }
    MultiClassPanel::new(data, series_names, class_names)
}

/// Writes a panel in the format read by [`load_panel_csv`], times `1..=T`.
pub fn write_panel_csv(panel: &MultiClassPanel<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["class".to_string(), "time".to_string()];
    header.extend(panel.series_names().iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, name) in panel.class_names().iter().enumerate() {
        let m = panel.class_data(k);
        for t in 0..m.nrows() {
            let mut rec = vec![name.clone(), (t + 1).to_string()];
            rec.extend((0..m.ncols()).map(|c| m[(t, c)].to_string()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::parse(path.display().to_string(), format!("{other:?}")),
    }
}

#[derive(Serialize, Deserialize)]
struct PenaltiesFile {
    lambda1: f64,
    lambda2: f64,
    gamma1: f64,
    gamma2: f64,
}

/// On-disk fit. Matrices are lists of rows; `beta[k][p]` is the lag `p + 1`
/// matrix of class k.
#[derive(Serialize, Deserialize)]
struct FitFile {
    format: String,
    version: u32,
    estimator: Estimator,
    order: usize,
    class_names: Vec<String>,
    series_names: Vec<String>,
    beta: Vec<Vec<Vec<Vec<f64>>>>,
    omega: Vec<Vec<Vec<f64>>>,
    penalties: PenaltiesFile,
    objective_trace: Vec<f64>,
    outer_iterations: usize,
    converged: bool,
    warnings: Vec<String>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], context: &str) -> Result<DMatrix<f64>> {
    let n = r.len();
    if r.iter().any(|row| row.len() != n) {
        return Err(Error::parse(context, "matrix is not square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
}

/// Serializes a fit as JSON.
pub fn fit_to_string(fit: &FitResult<f64>) -> Result<String> {
    let order = fit.beta.order();
    let file = FitFile {
        format: FIT_FORMAT.to_string(),
        version: FIT_VERSION,
        estimator: fit.estimator,
        order,
        class_names: fit.class_names.clone(),
        series_names: fit.series_names.clone(),
        beta: (0..fit.beta.classes())
            .map(|k| (0..order).map(|p| rows(&fit.beta.lag_matrix(k, p))).collect())
            .collect(),
        omega: fit.omega.matrices().iter().map(rows).collect(),
        penalties: PenaltiesFile {
            lambda1: fit.penalties.lambda1,
            lambda2: fit.penalties.lambda2,
            gamma1: fit.penalties.gamma1,
            gamma2: fit.penalties.gamma2,
        },
        objective_trace: fit.objective_trace.clone(),
        outer_iterations: fit.outer_iterations,
        converged: fit.converged,
        warnings: fit.warnings.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::parse("fit", e.to_string()))
}

/// Parses [`fit_to_string`] output; `source` names the input in errors.
pub fn fit_from_str(text: &str, source: &str) -> Result<FitResult<f64>> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::parse(source, e.to_string()))?;
    if header.format.as_deref() != Some(FIT_FORMAT) {
        return Err(Error::parse(source, format!("not a {FIT_FORMAT} file")));
    }
    match header.version {
        Some(FIT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: FIT_VERSION,
            })
        }
        None => return Err(Error::parse(source, "missing version field")),
    }
    let f: FitFile = serde_json::from_str(text).map_err(|e| Error::parse(source, e.to_string()))?;
    let lags = f
        .beta
        .iter()
        .map(|class| {
            if class.len() != f.order {
                return Err(Error::parse(source, "lag count does not match `order`"));
            }
            class.iter().map(|m| from_rows(m, source)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let beta = CoefficientSet::from_lags(lags)?;
    let omega = PrecisionSet::new(f.omega.iter().map(|m| from_rows(m, source)).collect::<Result<_>>()?)?;
    if omega.classes() != beta.classes()
        || omega.series() != beta.series()
        || f.class_names.len() != beta.classes()
        || f.series_names.len() != beta.series()
    {
        return Err(Error::parse(source, "inconsistent dimensions"));
    }
    Ok(FitResult {
        estimator: f.estimator,
        beta,
        omega,
        penalties: Penalties {
            lambda1: f.penalties.lambda1,
            lambda2: f.penalties.lambda2,
            gamma1: f.penalties.gamma1,
            gamma2: f.penalties.gamma2,
        },
        objective_trace: f.objective_trace,
        outer_iterations: f.outer_iterations,
        converged: f.converged,
        class_names: f.class_names,
        series_names: f.series_names,
        warnings: f.warnings,
    })
}

pub fn export_fit(fit: &FitResult<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, fit_to_string(fit)?).map_err(|e| io_err(path, e))
}

pub fn load_fit(path: &Path) -> Result<FitResult<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    fit_from_str(&text, &path.display().to_string())
}

/// Flat `key = value` settings; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    pub source: Option<PathBuf>,
    pub entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(format!("{source}, line {}", n + 1), "expected `key = value`"));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(format!("{source}, line {}", n + 1), "empty key"));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::parse(format!("{source}, line {}", n + 1), format!("`{key}` set twice")));
            }
        }
        Ok(Config { source: None, entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut c = Config::parse(&text, &path.display().to_string())?;
        c.source = Some(path.to_path_buf());
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parses a value, naming the key and file on failure.
    pub fn get_parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    let src = self.source.as_ref().map_or("config".to_string(), |p| p.display().to_string());
                    Error::parse(src, format!("`{key}`: cannot parse `{v}`"))
                })
            })
            .transpose()
    }
}
