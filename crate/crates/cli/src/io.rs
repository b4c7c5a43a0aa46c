use std::fs;
use std::path::Path;

use faer::{Mat, MatRef};
use hsdemix::hsio::{self, CubeFormat, DataMatrix};
use hsdemix::{Dictionary, Error, Result};
use serde_json::Value;

use crate::args::MatrixFormat;
use crate::manifest::Run;

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("csv")
}

/// Read a matrix from CSV, an f32 matrix (`rows`/`cols` header) or an f32 cube
/// (`n`/`m`/`f` header, unfolded to bands by voxels).
pub fn read_matrix(run: &mut Run, path: &Path) -> Result<Mat<f64>> {
    if is_csv(path) {
        run.input(path);
        return hsio::read_matrix_csv(path);
    }
    let (payload, header) = hsio::raw_paths(path);
    run.input(&header);
    run.input(&payload);
    let text = fs::read_to_string(&header).map_err(|e| Error::io(&header, e))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| Error::format("header", e.to_string()))?;
    if v.get("rows").is_some() {
        hsio::read_matrix_f32(path)
    } else {
        let cube = hsio::load_cube(path, CubeFormat::RawF32Json)?;
        Ok(hsio::unfold(&cube).into_inner())
    }
}

pub fn read_data(run: &mut Run, path: &Path) -> Result<DataMatrix> {
    DataMatrix::new(read_matrix(run, path)?)
}

/// Data and dictionary, optionally scaled together by the largest absolute data entry.
pub fn read_problem(
    run: &mut Run,
    y_path: &Path,
    dict_path: &Path,
    normalize: bool,
) -> Result<(DataMatrix, Dictionary)> {
    let y = read_data(run, y_path)?;
    let raw = read_matrix(run, dict_path)?;
    if normalize {
        let (ys, rs, scale) = hsio::normalize_joint(&y, raw.as_ref())?;
        log::info!("scaled data and dictionary by 1/{scale:e}");
        Ok((ys, Dictionary::from_raw(rs.as_ref())?))
    } else {
        if raw.nrows() != y.rows() {
            return Err(Error::Shape(format!(
                "dictionary has {} rows but data has {}",
                raw.nrows(),
                y.rows()
            )));
        }
        Ok((y, Dictionary::from_raw(raw.as_ref())?))
    }
}

/// Write `m` as `<prefix>_<name>.csv` or `<prefix>_<name>.{f32,json}`.
pub fn write_matrix(run: &mut Run, name: &str, m: MatRef<'_, f64>, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => {
            let path = run.path(&format!("{name}.csv"));
            hsio::write_matrix_csv(&path, m)?;
            run.output(path);
        }
        MatrixFormat::F32 => {
            let (payload, header) = hsio::write_matrix_f32(&run.path(name), m)?;
            run.output(payload);
            run.output(header);
        }
    }
    Ok(())
}
