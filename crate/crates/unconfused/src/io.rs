//! On-disk formats.
//!
//! Class labels are 1-based in every file and 0-based in memory. CSV files
//! may start with `#` comment lines; writers put the config hash and seed
//! there.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unconfused_core::uma::IterationTrace;
use unconfused_core::{DenseMatrix, DenseVector, LabeledDataset, LabeledExample, LinearModel};

use crate::error::{AppError, Result};

/// `# config_sha256=… seed=…`, the first line of every CSV we write.
pub fn provenance_line(config_hash: &str, seed: u64) -> String {
    format!("# config_sha256={config_hash} seed={seed}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| AppError::io(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(contents.as_bytes()).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

fn label_cell(label: Option<usize>) -> String {
    label.map(|l| (l + 1).to_string()).unwrap_or_default()
}

/// `label,noisy_label,f1,…,fd`; an absent label is an empty cell.
pub fn dataset_to_csv(ds: &LabeledDataset, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("label,noisy_label");
    for j in 1..=ds.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for ex in ds.examples() {
        out.push_str(&label_cell(ex.true_label()));
        out.push(',');
        out.push_str(&label_cell(ex.noisy_label()));
        for v in ex.x() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, ds: &LabeledDataset, comment: Option<&str>) -> Result<()> {
    write_text(path, &dataset_to_csv(ds, comment))
}

/// Reads a dataset CSV. The class count is `q` when given, otherwise the
/// largest label in the file.
pub fn read_dataset(path: &Path, q: Option<usize>) -> Result<LabeledDataset> {
    let text = read_to_string(path)?;
    parse_dataset(path, &text, q)
}

fn parse_label(path: &Path, line: usize, cell: &str) -> Result<Option<usize>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<usize>() {
        Ok(0) => Err(AppError::format(path, line, "labels are 1-based; found 0")),
        Ok(l) => Ok(Some(l - 1)),
        Err(_) => Err(AppError::format(path, line, format!("bad label {cell:?}"))),
    }
}

pub fn parse_dataset(path: &Path, text: &str, q: Option<usize>) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_line = text.lines().position(|l| !l.starts_with('#')).map_or(1, |i| i + 1);
    let headers = reader.headers().map_err(|e| AppError::format(path, header_line, e.to_string()))?.clone();
    let dim = headers.len().saturating_sub(2);
    let expected: Vec<String> =
        ["label".to_string(), "noisy_label".to_string()].into_iter().chain((1..=dim).map(|j| format!("f{j}"))).collect();
    if dim == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(AppError::format(path, header_line, format!("expected header {}", expected.join(","))));
    }

    let mut examples = Vec::new();
    let mut max_label = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            AppError::format(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let truth = parse_label(path, line, &record[0])?;
        let noisy = parse_label(path, line, &record[1])?;
        let mut x = Vec::with_capacity(dim);
        for (j, cell) in record.iter().skip(2).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| AppError::format(path, line, format!("f{}: bad number {cell:?}", j + 1)))?;
            x.push(v);
        }
        let features = DenseVector::new(x).map_err(|e| AppError::format(path, line, e.to_string()))?;
        let ex = LabeledExample::new(features, truth, noisy)
            .map_err(|e| AppError::format(path, line, e.to_string()))?;
        for l in [truth, noisy].into_iter().flatten() {
            max_label = max_label.max(l + 1);
            if let Some(q) = q.filter(|&q| l >= q) {
                return Err(AppError::format(path, line, format!("label {} exceeds q = {q}", l + 1)));
            }
        }
        examples.push(ex);
    }
    let q = q.unwrap_or(max_label.max(1));
    Ok(LabeledDataset::new(q, dim, examples)?)
}

/// What a confusion file holds: a noise matrix, or a sweep direction `N`
/// whose levels are `I + i·N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Stochastic,
    Direction,
}

/// `{ "q": Q, "rows": [[…]] }`; row `p`, column `q` is `P(observed p | true q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionFile {
    pub q: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<MatrixKind>,
    pub rows: DenseMatrix,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfusion {
    q: usize,
    #[serde(default)]
    kind: Option<MatrixKind>,
    rows: Vec<Vec<f64>>,
}

/// 1-based line of the first occurrence of `"key"`, for errors found after parsing.
fn key_line(text: &str, key: &str) -> usize {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map_or(1, |i| i + 1)
}

fn json_error(path: &Path, e: serde_json::Error) -> AppError {
    AppError::format(path, e.line(), e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::Config(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| json_error(path, e))
}

pub fn write_confusion(path: &Path, m: &DenseMatrix, kind: Option<MatrixKind>) -> Result<()> {
    write_json(path, &ConfusionFile { q: m.rows(), kind, rows: m.clone() })
}

pub fn read_confusion(path: &Path) -> Result<ConfusionFile> {
    let text = read_to_string(path)?;
    let raw: RawConfusion = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    if raw.q == 0 || raw.rows.len() != raw.q || raw.rows.iter().any(|r| r.len() != raw.q) {
        return Err(AppError::format(path, key_line(&text, "rows"), format!("rows must form a {0}x{0} matrix", raw.q)));
    }
    let rows = DenseMatrix::from_rows(&raw.rows).map_err(|e| AppError::format(path, key_line(&text, "rows"), e.to_string()))?;
    Ok(ConfusionFile { q: raw.q, kind: raw.kind, rows })
}

/// `{ "q", "d", "columns": [[…]] }`, column `k` being the prototype of class `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    q: usize,
    d: usize,
    columns: Vec<Vec<f64>>,
}

pub fn write_model(path: &Path, model: &LinearModel) -> Result<()> {
    write_json(path, &ModelFile { q: model.q(), d: model.dim(), columns: model.columns() })
}

pub fn read_model(path: &Path) -> Result<LinearModel> {
    let text = read_to_string(path)?;
    let raw: ModelFile = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    if raw.columns.len() != raw.q || raw.columns.iter().any(|c| c.len() != raw.d) {
        let line = key_line(&text, "columns");
        return Err(AppError::format(path, line, format!("columns must be {} vectors of length {}", raw.q, raw.d)));
    }
    LinearModel::from_columns(&raw.columns).map_err(|e| AppError::format(path, key_line(&text, "columns"), e.to_string()))
}

/// `iter,p,q,norm_z,error_set_size,train_noisy_error`.
pub fn write_trace(path: &Path, trace: &[IterationTrace], comment: Option<&str>) -> Result<()> {
    let mut out = String::new();
    if let Some(c) = comment {
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("iter,p,q,norm_z,error_set_size,train_noisy_error\n");
    for t in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.iter,
            t.chosen_p + 1,
            t.chosen_q + 1,
            t.norm_z,
            t.error_set_size,
            t.train_noisy_error
        ));
    }
    write_text(path, &out)
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    write_json(path, report)
}

pub fn read_report<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> LabeledDataset {
        let ex = |x: [f64; 2], t, y| LabeledExample::renormalized(DenseVector::new(x.to_vec()).unwrap(), t, y).unwrap();
        LabeledDataset::new(3, 2, vec![ex([1.0, 0.0], Some(0), Some(2)), ex([0.3, -0.4], None, Some(1)), ex([-1.0, 1e-3], Some(2), None)])
            .unwrap()
    }

    fn parse(text: &str) -> Result<LabeledDataset> {
        parse_dataset(Path::new("d.csv"), text, None)
    }

    fn line_of(err: AppError) -> usize {
        match err {
            AppError::Format { line, .. } => line,
            other => panic!("expected a format error, got {other}"),
        }
    }

    #[test]
    fn dataset_csv_round_trips_exactly() {
        let text = dataset_to_csv(&ds(), Some("# hello"));
        assert!(text.starts_with("# hello\nlabel,noisy_label,f1,f2\n1,3,1,0\n,2,"));
        let back = parse(&text).unwrap();
        assert_eq!(back, ds());
        assert_eq!(dataset_to_csv(&back, Some("# hello")), text);
    }

    #[test]
    fn dataset_errors_carry_line_numbers() {
        let head = "# c\nlabel,noisy_label,f1,f2\n";
        assert_eq!(line_of(parse(&format!("{head}1,1,1,0\n1,2,0.5,0.5\n")).unwrap_err()), 4);
        assert_eq!(line_of(parse(&format!("{head}1,1,1,0\n0,1,1,0\n")).unwrap_err()), 4);
        assert_eq!(line_of(parse(&format!("{head}1,1,x,0\n")).unwrap_err()), 3);
        assert_eq!(line_of(parse(&format!("{head}1,1,1\n")).unwrap_err()), 3);
        assert_eq!(line_of(parse(&format!("{head},,1,0\n")).unwrap_err()), 3);
        assert_eq!(line_of(parse("# c\nlabel,f1\n1,1\n").unwrap_err()), 2);
        let err = parse_dataset(Path::new("d.csv"), &format!("{head}4,1,1,0\n"), Some(3)).unwrap_err();
        assert_eq!(line_of(err), 3);
    }

    #[test]
    fn confusion_json_keeps_kind_and_checks_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let m = DenseMatrix::from_rows(&[[0.9, 0.2], [0.1, 0.8]]).unwrap();
        write_confusion(&path, &m, Some(MatrixKind::Direction)).unwrap();
        let back = read_confusion(&path).unwrap();
        assert_eq!((back.q, back.kind, back.rows), (2, Some(MatrixKind::Direction), m));

        std::fs::write(&path, "{\n \"q\": 2,\n \"rows\": [[1, 0], [0]]\n}").unwrap();
        let err = read_confusion(&path).unwrap_err();
        assert!(err.to_string().contains("2x2"), "{err}");
        assert_eq!(line_of(err), 3);
        std::fs::write(&path, "{\"q\": 1, \"rows\": [[1]], \"kind\": \"odd\"}").unwrap();
        assert!(read_confusion(&path).is_err());
    }

    #[test]
    fn model_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = LinearModel::from_columns(&[[0.1, -0.2], [3.0, 0.25], [-3.1, -0.05]]).unwrap();
        write_model(&path, &model).unwrap();
        assert_eq!(read_model(&path).unwrap(), model);
        std::fs::write(&path, "{\n  \"q\": 2,\n  \"d\": 2,\n  \"columns\": [[1, 0]]\n}").unwrap();
        assert_eq!(line_of(read_model(&path).unwrap_err()), 4);
    }

    #[test]
    fn trace_is_one_based() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = IterationTrace { iter: 0, chosen_p: 0, chosen_q: 2, norm_z: 0.5, error_set_size: 1, train_noisy_error: 0.25 };
        write_trace(&path, &[t], None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "iter,p,q,norm_z,error_set_size,train_noisy_error\n0,1,3,0.5,1,0.25\n");
    }
}
