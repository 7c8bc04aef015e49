//! File formats.
//!
//! * Tensors: a JSON header `{dims, layout: "slice-major", dtype: "f64-le",
//!   data}` next to a raw little-endian `f64` file; entry `(i, j, l)` sits at
//!   position `i + n1 (j + n2 l)`.
//! * Matrices: headerless CSV, one row per line.
//! * Intraday panels: CSV with a `time` column followed by one column per
//!   asset holding log prices.
//! * Ticks: CSV with columns `asset,timestamp,price` (Unix seconds, raw
//!   price).
//! * Fitted models: `model.json` (metadata and array index) plus `model.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ptpoet::{PtPoetModel, SieveDesign, SieveSpec, TensorFit, ThresholdRule};
use crate::realized_vol::IntradayPanel;
use crate::tensor::Tensor3;

pub fn write_json<S: Serialize + ?Sized>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn f64s_to_bytes(values: &[f64], out: &mut Vec<u8>) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn bytes_to_f64s(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::format(path, "length is not a multiple of 8 bytes"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorHeader {
    pub dims: [usize; 3],
    pub layout: String,
    pub dtype: String,
    /// Binary file name, relative to the header.
    pub data: String,
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the header path.
pub fn write_tensor(dir: impl AsRef<Path>, stem: &str, t: &Tensor3<f64>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let bin_name = format!("{stem}.bin");
    let mut bytes = Vec::new();
    f64s_to_bytes(t.as_slice(), &mut bytes);
    let bin = dir.join(&bin_name);
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let header = TensorHeader {
        dims: t.dims(),
        layout: "slice-major".into(),
        dtype: "f64-le".into(),
        data: bin_name,
    };
    let json = dir.join(format!("{stem}.json"));
    write_json(&json, &header)?;
    Ok(json)
}

pub fn read_tensor(header_path: impl AsRef<Path>) -> Result<Tensor3<f64>> {
    let path = header_path.as_ref();
    let header: TensorHeader = read_json(path)?;
    if header.layout != "slice-major" || header.dtype != "f64-le" {
        return Err(Error::format(
            path,
            format!("unsupported layout/dtype {}/{}", header.layout, header.dtype),
        ));
    }
    let bin = path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let data = bytes_to_f64s(&bin, &bytes)?;
    let [a, b, c] = header.dims;
    if data.len() != a * b * c {
        return Err(Error::format(
            &bin,
            format!("expected {} values for dims {:?}, found {}", a * b * c, header.dims, data.len()),
        ));
    }
    Tensor3::from_vec(header.dims, data)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Shortest round-tripping decimal representation.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| fmt_f64(*v)))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", rows.len() + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(path, format!("ragged row {}", rows.len() + 1)));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

pub fn write_panel_csv(path: impl AsRef<Path>, panel: &IntradayPanel<f64>, names: &[String]) -> Result<()> {
    let path = path.as_ref();
    if names.len() != panel.n_assets() {
        return Err(Error::dims("write_panel_csv names", panel.n_assets(), names.len()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["time".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (s, t) in panel.times.iter().enumerate() {
        let mut rec = vec![fmt_f64(*t)];
        rec.extend(panel.log_prices.row(s).iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a panel CSV; returns the panel and the asset names.
pub fn read_panel_csv(path: impl AsRef<Path>, day_index: usize) -> Result<(IntradayPanel<f64>, Vec<String>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.get(0) != Some("time") || header.len() < 2 {
        return Err(Error::format(path, "expected header `time,<asset>,...`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parsed = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", line + 2)))?;
        times.push(parsed[0]);
        values.extend_from_slice(&parsed[1..]);
    }
    let p = names.len();
    let prices = DMatrix::from_row_slice(times.len(), p, &values);
    let panel = IntradayPanel::new(day_index, times, prices)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((panel, names))
}

#[derive(Debug, Clone, Deserialize)]
struct TickRecord {
    asset: String,
    timestamp: f64,
    price: f64,
}

/// Tick data grouped by calendar day (UTC) and asset.
#[derive(Debug, Clone, Default)]
pub struct TickData {
    /// Sorted asset names.
    pub assets: Vec<String>,
    /// day number (`⌊timestamp / 86400⌋`) → per-asset `(seconds of day,
    /// log price)` ticks.
    pub days: BTreeMap<i64, Vec<Vec<(f64, f64)>>>,
}

pub fn read_ticks_csv(path: impl AsRef<Path>) -> Result<TickData> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut records = Vec::new();
    for rec in r.deserialize::<TickRecord>() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if !(rec.price > 0.0) || !rec.timestamp.is_finite() {
            return Err(Error::format(
                path,
                format!("invalid tick for {}: price {} at {}", rec.asset, rec.price, rec.timestamp),
            ));
        }
        records.push(rec);
    }
    let mut assets: Vec<String> = records.iter().map(|r| r.asset.clone()).collect();
    assets.sort();
    assets.dedup();
    let index: BTreeMap<&str, usize> = assets.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut days: BTreeMap<i64, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for rec in &records {
        let day = (rec.timestamp / 86_400.0).floor() as i64;
        let sod = rec.timestamp - day as f64 * 86_400.0;
        let slot = days.entry(day).or_insert_with(|| vec![Vec::new(); assets.len()]);
        slot[index[rec.asset.as_str()]].push((sod, rec.price.ln()));
    }
    Ok(TickData { assets, days })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f64` values from the start of the binary file.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub days: usize,
    pub r1: usize,
    pub r2: usize,
    pub tau: f64,
    pub rule: ThresholdRule,
    pub sieve: SieveSpec,
    pub standardization: Vec<(f64, f64)>,
    pub covariate_stats: Vec<(f64, f64)>,
    pub binary: String,
    pub arrays: Vec<ArrayEntry>,
}

struct ArrayWriter {
    bytes: Vec<u8>,
    entries: Vec<ArrayEntry>,
    offset: usize,
}

impl ArrayWriter {
    fn push(&mut self, name: &str, shape: Vec<usize>, data: &[f64]) {
        f64s_to_bytes(data, &mut self.bytes);
        self.entries.push(ArrayEntry {
            name: name.into(),
            shape,
            offset: self.offset,
        });
        self.offset += data.len();
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        self.push(name, vec![m.nrows(), m.ncols()], m.as_slice());
    }

    fn tensor(&mut self, name: &str, t: &Tensor3<f64>) {
        self.push(name, t.dims().to_vec(), t.as_slice());
    }
}

/// Writes `model.json` and `model.bin` into `dir`.
pub fn save_model(dir: impl AsRef<Path>, model: &PtPoetModel<f64>) -> Result<()> {
    let dir = dir.as_ref();
    let mut w = ArrayWriter {
        bytes: Vec::new(),
        entries: Vec::new(),
        offset: 0,
    };
    w.matrix("q_hat", &model.fit.q_hat);
    w.matrix("g_hat", &model.fit.g_hat);
    w.matrix("a_hat", &model.a_hat);
    w.tensor("core", &model.fit.core);
    w.matrix("idio_mean", &model.fit.idio_mean);
    w.tensor("idio_hats", &Tensor3::from_slices(&model.fit.idio_hats)?);
    w.matrix("x", &model.sieve.x);
    w.matrix("phi", &model.sieve.phi);
    w.matrix("projection", &model.sieve.projection);
    let bin = dir.join("model.bin");
    fs::write(&bin, &w.bytes).map_err(|e| Error::io(&bin, e))?;
    let header = ModelHeader {
        format: "voltensor-model".into(),
        version: 1,
        p: model.fit.q_hat.nrows(),
        days: model.fit.g_hat.nrows(),
        r1: model.r1,
        r2: model.r2,
        tau: model.tau,
        rule: model.rule,
        sieve: model.sieve.spec,
        standardization: model.sieve.standardization.clone(),
        covariate_stats: model.sieve.covariate_stats.clone(),
        binary: "model.bin".into(),
        arrays: w.entries,
    };
    write_json(dir.join("model.json"), &header)
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<PtPoetModel<f64>> {
    let dir = dir.as_ref();
    let json = dir.join("model.json");
    let header: ModelHeader = read_json(&json)?;
    if header.format != "voltensor-model" || header.version != 1 {
        return Err(Error::format(&json, "not a version-1 voltensor model"));
    }
    let bin = dir.join(&header.binary);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let data = bytes_to_f64s(&bin, &bytes)?;
    let get = |name: &str| -> Result<(&[usize], &[f64])> {
        let e = header
            .arrays
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format(&json, format!("missing array `{name}`")))?;
        let len: usize = e.shape.iter().product();
        data.get(e.offset..e.offset + len)
            .map(|s| (e.shape.as_slice(), s))
            .ok_or_else(|| Error::format(&bin, format!("array `{name}` out of bounds")))
    };
    let matrix = |name: &str| -> Result<DMatrix<f64>> {
        let (shape, values) = get(name)?;
        if shape.len() != 2 {
            return Err(Error::format(&json, format!("`{name}` is not a matrix")));
        }
        Ok(DMatrix::from_column_slice(shape[0], shape[1], values))
    };
    let tensor = |name: &str| -> Result<Tensor3<f64>> {
        let (shape, values) = get(name)?;
        let dims: [usize; 3] = shape
            .try_into()
            .map_err(|_| Error::format(&json, format!("`{name}` is not an order-3 tensor")))?;
        Tensor3::from_vec(dims, values.to_vec())
    };
    let idio_hats = tensor("idio_hats")?.slices();
    let fit = TensorFit {
        q_hat: matrix("q_hat")?,
        g_hat: matrix("g_hat")?,
        core: tensor("core")?,
        idio_hats,
        idio_mean: matrix("idio_mean")?,
    };
    let sieve = SieveDesign {
        spec: header.sieve,
        x: matrix("x")?,
        phi: matrix("phi")?,
        projection: matrix("projection")?,
        standardization: header.standardization.clone(),
        covariate_stats: header.covariate_stats.clone(),
    };
    Ok(PtPoetModel {
        r1: header.r1,
        r2: header.r2,
        tau: header.tau,
        rule: header.rule,
        fit,
        a_hat: matrix("a_hat")?,
        sieve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor3::from_fn(2, 3, 4, |i, j, l| (i as f64 + 0.1) * (j as f64 - 1.3) / (l as f64 + 0.7));
        let header = write_tensor(dir.path(), "y", &t).unwrap();
        assert_eq!(read_tensor(&header).unwrap(), t);
        let bytes = fs::read(dir.path().join("y.bin")).unwrap();
        // entry (1, 2, 3) at 1 + 2 (2 + 3·3)
        let k = 1 + 2 * (2 + 3 * 3);
        let v = f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        assert_eq!(v, t.get(1, 2, 3));
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor3::<f64>::zeros(2, 2, 2);
        let header = write_tensor(dir.path(), "y", &t).unwrap();
        fs::write(dir.path().join("y.bin"), [0u8; 16]).unwrap();
        assert!(matches!(read_tensor(&header), Err(Error::Format { .. })));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 1e-300, 3.5, 1.0 / 3.0, 7.0]);
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }

    #[test]
    fn panel_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let prices = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.01, 1.02, -0.02, 0.99]);
        let panel = IntradayPanel::new(4, vec![0.0, 0.5, 1.0], prices).unwrap();
        let names = vec!["A".to_string(), "B".to_string()];
        let path = dir.path().join("p.csv");
        write_panel_csv(&path, &panel, &names).unwrap();
        let (back, n) = read_panel_csv(&path, 4).unwrap();
        assert_eq!(back, panel);
        assert_eq!(n, names);
    }

    #[test]
    fn ticks_group_by_day() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(
            &path,
            "asset,timestamp,price\nB,86400,10\nA,86460,20\nA,172800,21\n",
        )
        .unwrap();
        let t = read_ticks_csv(&path).unwrap();
        assert_eq!(t.assets, vec!["A", "B"]);
        assert_eq!(t.days.len(), 2);
        assert_eq!(t.days[&1][0], vec![(60.0, 20f64.ln())]);
        assert_eq!(t.days[&1][1], vec![(0.0, 10f64.ln())]);
        assert!(t.days[&2][1].is_empty());
    }
}
