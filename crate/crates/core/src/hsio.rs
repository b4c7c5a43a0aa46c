//! Hyperspectral cube ingestion, unfolding and joint normalization.
//!
//! Cubes are exchanged as a little-endian `f32` payload (`<name>.f32`) with a JSON
//! sidecar header (`<name>.json`):
//!
//! ```json
//! {"n": 145, "m": 145, "f": 200, "order": "row-major", "band_wavelengths": [...]}
//! ```
//!
//! The payload holds `n·m·f` values ordered row-major over `(row, col, band)`, i.e. value
//! `(row, col, band)` sits at index `(row·m + col)·f + band`. Unfolding maps pixel
//! `(row, col)` to column `row·m + col` of the `f × nm` data matrix, so the payload is
//! exactly the column-major storage of that matrix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg;

/// Class id of the stone-steel-towers class in the Indian Pines ground truth.
pub const DEFAULT_POSITIVE_CLASS: i64 = 16;

/// An `n × m × f` reflectance cube.
#[derive(Debug, Clone, PartialEq)]
pub struct HsCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f64>,
    band_wavelengths: Option<Vec<f64>>,
}

impl HsCube {
    /// `values` must be ordered row-major over `(row, col, band)`.
    pub fn new(
        height: usize,
        width: usize,
        bands: usize,
        values: Vec<f64>,
        band_wavelengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        if height == 0 {
            return Err(Error::format("n", "must be at least 1"));
        }
        if width == 0 {
            return Err(Error::format("m", "must be at least 1"));
        }
        if bands == 0 {
            return Err(Error::format("f", "must be at least 1"));
        }
        let expected = height * width * bands;
        if values.len() != expected {
            return Err(Error::Size {
                expected,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cube value #{pos}")));
        }
        if let Some(w) = &band_wavelengths {
            if w.len() != bands {
                return Err(Error::format(
                    "band_wavelengths",
                    format!("length {} does not match f = {bands}", w.len()),
                ));
            }
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
            band_wavelengths,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn band_wavelengths(&self) -> Option<&[f64]> {
        self.band_wavelengths.as_deref()
    }

    pub fn value(&self, row: usize, col: usize, band: usize) -> f64 {
        self.values[(row * self.width + col) * self.bands + band]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `f × nm` data matrix with finite entries; column `j` is the voxel at pixel index `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(Mat<f64>);

impl DataMatrix {
    pub fn new(m: Mat<f64>) -> Result<Self> {
        linalg::check_finite(m.as_ref(), "data matrix")?;
        Ok(Self(m))
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn mat(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }
}

/// Binary per-voxel labels in unfolding order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    labels: Vec<bool>,
    positive_class_id: i64,
}

impl GroundTruthMask {
    /// Binarize integer class labels against `positive_class_id`.
    pub fn from_class_labels(classes: &[i64], positive_class_id: i64) -> Self {
        Self {
            labels: classes.iter().map(|&c| c == positive_class_id).collect(),
            positive_class_id,
        }
    }

    pub fn from_labels(labels: Vec<bool>) -> Self {
        Self {
            labels,
            positive_class_id: 1,
        }
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positive_class_id(&self) -> i64 {
        self.positive_class_id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(j, &l)| l.then_some(j))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeFormat {
    /// `<name>.f32` payload plus `<name>.json` header.
    RawF32Json,
    /// Unfolded `f × nm` matrix in CSV; loaded as a `1 × nm × f` cube.
    CsvMatrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct CubeHeader {
    n: usize,
    m: usize,
    f: usize,
    order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    band_wavelengths: Option<Vec<f64>>,
}

/// Paths of the `.f32` payload and `.json` header that belong to `path`, which may name
/// either file or their common stem.
pub fn raw_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f32") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut payload = base.clone().into_os_string();
    payload.push(".f32");
    let mut header = base.into_os_string();
    header.push(".json");
    (payload.into(), header.into())
}

fn header_dim(v: &Value, field: &str) -> Result<usize> {
    let raw = v
        .get(field)
        .ok_or_else(|| Error::format(field, "missing"))?;
    let n = raw
        .as_u64()
        .ok_or_else(|| Error::format(field, format!("expected a positive integer, got {raw}")))?;
    if n == 0 {
        return Err(Error::format(field, "must be at least 1"));
    }
    Ok(n as usize)
}

fn parse_header(text: &str) -> Result<CubeHeader> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| Error::format("header", e.to_string()))?;
    if !v.is_object() {
        return Err(Error::format("header", "expected a JSON object"));
    }
    let n = header_dim(&v, "n")?;
    let m = header_dim(&v, "m")?;
    let f = header_dim(&v, "f")?;
    let order = match v.get("order") {
        None => "row-major".to_string(),
        Some(Value::String(s)) if s == "row-major" => s.clone(),
        Some(other) => {
            return Err(Error::format(
                "order",
                format!("only \"row-major\" is supported, got {other}"),
            ))
        }
    };
    let band_wavelengths = match v.get("band_wavelengths") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::format("band_wavelengths", format!("not a number: {x}")))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        Some(other) => {
            return Err(Error::format(
                "band_wavelengths",
                format!("expected an array, got {other}"),
            ))
        }
    };
    Ok(CubeHeader {
        n,
        m,
        f,
        order,
        band_wavelengths,
    })
}

pub fn load_cube(path: &Path, format: CubeFormat) -> Result<HsCube> {
    match format {
        CubeFormat::RawF32Json => {
            let (payload_path, header_path) = raw_paths(path);
            let text =
                fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
            let header = parse_header(&text)?;
            let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
            let expected = header.n * header.m * header.f;
            if bytes.len() != expected * 4 {
                return Err(Error::Size {
                    expected,
                    found: bytes.len() / 4,
                });
            }
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            HsCube::new(header.n, header.m, header.f, values, header.band_wavelengths)
        }
        CubeFormat::CsvMatrix => {
            let y = read_matrix_csv(path)?;
            refold(&DataMatrix::new(y)?, 1, 0)
        }
    }
}

/// Write `cube` as `<base>.f32` + `<base>.json`. Values are stored as `f32`.
pub fn save_cube(cube: &HsCube, base: &Path) -> Result<(PathBuf, PathBuf)> {
    let (payload_path, header_path) = raw_paths(base);
    let header = CubeHeader {
        n: cube.height,
        m: cube.width,
        f: cube.bands,
        order: "row-major".into(),
        band_wavelengths: cube.band_wavelengths.clone(),
    };
    let mut bytes = Vec::with_capacity(cube.values.len() * 4);
    for &v in &cube.values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))?;
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    Ok((payload_path, header_path))
}

/// Unfold to the `f × nm` data matrix, column `row·m + col` holding pixel `(row, col)`.
pub fn unfold(cube: &HsCube) -> DataMatrix {
    let f = cube.bands;
    let y = Mat::from_fn(f, cube.pixels(), |b, j| cube.values[j * f + b]);
    DataMatrix(y)
}

/// Inverse of [`unfold`]. A `width` of zero means `nm / height`.
pub fn refold(y: &DataMatrix, height: usize, width: usize) -> Result<HsCube> {
    let (f, nm) = (y.rows(), y.cols());
    if height == 0 {
        return Err(Error::format("n", "must be at least 1"));
    }
    let width = if width == 0 { nm / height } else { width };
    if height * width != nm {
        return Err(Error::Shape(format!(
            "cannot refold {nm} columns into a {height} x {width} image"
        )));
    }
    let mut values = Vec::with_capacity(f * nm);
    for j in 0..nm {
        for b in 0..f {
            values.push(y.0[(b, j)]);
        }
    }
    HsCube::new(height, width, f, values, None)
}

/// Divide both `y` and the raw dictionary `r` by `‖Y‖_∞`, preserving inter-voxel scaling.
///
/// Returns the scaled data, scaled dictionary and the scale. The largest absolute entry
/// of the returned data is exactly 1.
pub fn normalize_joint(y: &DataMatrix, r: MatRef<'_, f64>) -> Result<(DataMatrix, Mat<f64>, f64)> {
    let scale = linalg::max_abs(y.as_ref());
    if scale == 0.0 {
        return Err(Error::Degenerate("data matrix is identically zero".into()));
    }
    if r.nrows() != y.rows() {
        return Err(Error::Shape(format!(
            "dictionary has {} rows but data has {}",
            r.nrows(),
            y.rows()
        )));
    }
    let ys = Mat::from_fn(y.rows(), y.cols(), |i, j| y.0[(i, j)] / scale);
    let rs = Mat::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] / scale);
    Ok((DataMatrix(ys), rs, scale))
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>().map_err(|_| {
                Error::format(format!("line {lineno}"), format!("not a real number: {tok:?}"))
            })
        })
        .collect()
}

/// Parse a headerless CSV matrix, one row per line.
pub fn parse_matrix_csv(text: &str) -> Result<Mat<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line, k + 1)?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(
                    format!("line {}", k + 1),
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    let m = Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    linalg::check_finite(m.as_ref(), "csv matrix")?;
    Ok(m)
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text)
}

/// Shortest round-trip decimal representation, so reading back is bit-exact.
pub fn matrix_to_csv(m: MatRef<'_, f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    rows: usize,
    cols: usize,
    order: String,
}

/// Write `m` as a row-major `f32` payload with a `{rows, cols, order}` JSON sidecar.
pub fn write_matrix_f32(base: &Path, m: MatRef<'_, f64>) -> Result<(PathBuf, PathBuf)> {
    let (payload_path, header_path) = raw_paths(base);
    let mut bytes = Vec::with_capacity(m.nrows() * m.ncols() * 4);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
        }
    }
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))?;
    let header = MatrixHeader {
        rows: m.nrows(),
        cols: m.ncols(),
        order: "row-major".into(),
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    Ok((payload_path, header_path))
}

pub fn read_matrix_f32(base: &Path) -> Result<Mat<f64>> {
    let (payload_path, header_path) = raw_paths(base);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| Error::format("header", e.to_string()))?;
    let rows = header_dim(&v, "rows")?;
    let cols = header_dim(&v, "cols")?;
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    if bytes.len() != rows * cols * 4 {
        return Err(Error::Size {
            expected: rows * cols,
            found: bytes.len() / 4,
        });
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let m = Mat::from_fn(rows, cols, |i, j| vals[i * cols + j]);
    linalg::check_finite(m.as_ref(), "f32 matrix")?;
    Ok(m)
}

/// Parse integer class labels separated by commas, whitespace or newlines.
pub fn parse_class_labels(text: &str) -> Result<Vec<i64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(k, t)| {
            t.parse::<i64>()
                .map_err(|_| Error::format(format!("label #{k}"), format!("not an integer: {t:?}")))
        })
        .collect()
}

pub fn load_mask(path: &Path, positive_class_id: i64) -> Result<GroundTruthMask> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(GroundTruthMask::from_class_labels(
        &parse_class_labels(&text)?,
        positive_class_id,
    ))
}

/// One 0/1 label per line.
pub fn write_mask(path: &Path, labels: &[bool]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::with_capacity(labels.len() * 2);
    for &l in labels {
        text.push(if l { '1' } else { '0' });
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(dir: &Path, name: &str, header: &str, vals: &[f32]) -> PathBuf {
        let base = dir.join(name);
        let (p, h) = raw_paths(&base);
        fs::write(&h, header).unwrap();
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&p, bytes).unwrap();
        base
    }

    #[test]
    fn load_small_cube_round_trips_bits() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<f32> = (0..12).map(|k| k as f32 * 0.1 - 0.37).collect();
        let base = write_raw(dir.path(), "c", r#"{"n":2,"m":2,"f":3,"order":"row-major"}"#, &vals);
        let cube = load_cube(&base.with_extension("json"), CubeFormat::RawF32Json).unwrap();
        assert_eq!((cube.height(), cube.width(), cube.bands()), (2, 2, 3));
        for (k, v) in vals.iter().enumerate() {
            assert_eq!(cube.values()[k].to_bits(), (*v as f64).to_bits());
        }
        assert_eq!(cube.value(1, 0, 2), vals[(1 * 2) * 3 + 2] as f64);

        let out = dir.path().join("copy");
        save_cube(&cube, &out).unwrap();
        let (p0, _) = raw_paths(&base);
        let (p1, _) = raw_paths(&out);
        assert_eq!(fs::read(p0).unwrap(), fs::read(p1).unwrap());
    }

    #[test]
    fn short_payload_is_a_size_error() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec![0.5f32; 11];
        let base = write_raw(dir.path(), "c", r#"{"n":2,"m":2,"f":3}"#, &vals);
        match load_cube(&base, CubeFormat::RawF32Json) {
            Err(Error::Size { expected, found }) => assert_eq!((expected, found), (12, 11)),
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let base = write_raw(dir.path(), "c", r#"{"n":2,"m":"two","f":3}"#, &[0.0; 12]);
        match load_cube(&base, CubeFormat::RawF32Json) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "m"),
            other => panic!("expected format error, got {other:?}"),
        }
        let base = write_raw(dir.path(), "d", r#"{"n":2,"m":2}"#, &[0.0; 12]);
        match load_cube(&base, CubeFormat::RawF32Json) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "f"),
            other => panic!("expected format error, got {other:?}"),
        }
        let base = write_raw(
            dir.path(),
            "e",
            r#"{"n":1,"m":1,"f":2,"band_wavelengths":[400.0]}"#,
            &[0.0; 2],
        );
        match load_cube(&base, CubeFormat::RawF32Json) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "band_wavelengths"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unfold_single_voxel() {
        let cube = HsCube::new(1, 1, 3, vec![5.0, 6.0, 7.0], None).unwrap();
        let y = unfold(&cube);
        assert_eq!((y.rows(), y.cols()), (3, 1));
        assert_eq!(
            (y.mat()[(0, 0)], y.mat()[(1, 0)], y.mat()[(2, 0)]),
            (5.0, 6.0, 7.0)
        );
    }

    #[test]
    fn unfold_uses_row_major_pixel_order() {
        let values: Vec<f64> = (0..2 * 3 * 2).map(|k| k as f64).collect();
        let cube = HsCube::new(2, 3, 2, values, None).unwrap();
        let y = unfold(&cube);
        for row in 0..2 {
            for col in 0..3 {
                for b in 0..2 {
                    assert_eq!(y.mat()[(b, row * 3 + col)], cube.value(row, col, b));
                }
            }
        }
        assert_eq!(refold(&y, 2, 3).unwrap(), cube);
    }

    #[test]
    fn indian_pines_dimensions_unfold() {
        let cube = HsCube::new(145, 145, 200, vec![0.25; 145 * 145 * 200], None).unwrap();
        let y = unfold(&cube);
        assert_eq!((y.rows(), y.cols()), (200, 145 * 145));
    }

    #[test]
    fn normalize_joint_small_example() {
        let y = DataMatrix::new(Mat::from_fn(1, 2, |_, j| [2.0, -4.0][j])).unwrap();
        let r = Mat::from_fn(1, 2, |_, _| 1.0);
        let (ys, rs, scale) = normalize_joint(&y, r.as_ref()).unwrap();
        assert_eq!(scale, 4.0);
        assert_eq!((ys.mat()[(0, 0)], ys.mat()[(0, 1)]), (0.5, -1.0));
        assert_eq!((rs[(0, 0)], rs[(0, 1)]), (0.25, 0.25));
    }

    #[test]
    fn normalize_joint_identity_and_zero() {
        let y = DataMatrix::new(Mat::from_fn(2, 2, |i, j| [[1.0, -0.5], [0.25, 0.0]][i][j])).unwrap();
        let r = Mat::<f64>::identity(2, 2);
        let (ys, _, scale) = normalize_joint(&y, r.as_ref()).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(ys, y);
        let zero = DataMatrix::new(Mat::zeros(2, 2)).unwrap();
        assert!(matches!(normalize_joint(&zero, r.as_ref()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn csv_matrix_round_trip_is_exact() {
        let m = Mat::from_fn(3, 4, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0) - 0.1);
        let back = parse_matrix_csv(&matrix_to_csv(m.as_ref())).unwrap();
        assert_eq!(back, m);
        assert!(matches!(parse_matrix_csv("1,2\n3\n"), Err(Error::Format { .. })));
        assert!(matches!(parse_matrix_csv("1,x\n"), Err(Error::Format { .. })));
    }

    #[test]
    fn mask_binarizes_against_class() {
        let labels = parse_class_labels("0,16,3\n16 1\n").unwrap();
        let mask = GroundTruthMask::from_class_labels(&labels, DEFAULT_POSITIVE_CLASS);
        assert_eq!(mask.labels(), &[false, true, false, true, false]);
        assert_eq!(mask.positive_indices(), vec![1, 3]);
    }
}
