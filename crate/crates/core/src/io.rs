//! Grid persistence.
//!
//! A grid saved under `PREFIX` is two files:
//!
//! - `PREFIX.csv`: header `t_0,…,t_n`, then one row per particle, every
//!   value with 17 significant digits (exact round trip);
//! - `PREFIX.json`: `{T, n, N, seed, model_name, params}`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{fmt17, num17, Num17};
use crate::simulate::ObservationGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSidecar {
    #[serde(rename = "T", serialize_with = "num17")]
    pub horizon: f64,
    #[serde(rename = "n")]
    pub steps: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    pub seed: u64,
    pub model_name: String,
    pub params: BTreeMap<String, Num17>,
}

/// `prefix` with `ext` appended (`out/grid` → `out/grid.csv`).
pub fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn write_grid(grid: &ObservationGrid, prefix: &Path) -> Result<()> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(with_suffix(prefix, "csv"))?);
    let header: Vec<String> = (0..=grid.steps()).map(|j| format!("t_{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..grid.particles() {
        for j in 0..=grid.steps() {
            if j > 0 {
                out.write_all(b",")?;
            }
            out.write_all(fmt17(grid.value(i, j)).as_bytes())?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let sidecar = GridSidecar {
        horizon: grid.horizon(),
        steps: grid.steps(),
        particles: grid.particles(),
        seed: grid.seed(),
        model_name: grid.model_name().to_string(),
        params: grid.params().iter().map(|(k, v)| (k.clone(), Num17(*v))).collect(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(with_suffix(prefix, "json"), text)?;
    Ok(())
}

pub fn read_grid(prefix: &Path) -> Result<ObservationGrid> {
    let sidecar_path = with_suffix(prefix, "json");
    let sidecar: GridSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", sidecar_path.display())))?;
    let csv_path = with_suffix(prefix, "csv");
    let text = fs::read_to_string(&csv_path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", csv_path.display())))?;
    let width = header.split(',').count();
    if width != sidecar.steps + 1 {
        return Err(Error::Data(format!(
            "{}: {width} columns but sidecar says n = {}",
            csv_path.display(),
            sidecar.steps
        )));
    }
    let mut rows = Vec::with_capacity(sidecar.particles);
    for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("{}:{}: bad number '{f}'", csv_path.display(), lineno + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != width {
            return Err(Error::Data(format!(
                "{}:{}: expected {width} values, found {}",
                csv_path.display(),
                lineno + 2,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() != sidecar.particles {
        return Err(Error::Data(format!(
            "{}: {} rows but sidecar says N = {}",
            csv_path.display(),
            rows.len(),
            sidecar.particles
        )));
    }
    ObservationGrid::from_rows(
        &rows,
        sidecar.horizon,
        sidecar.seed,
        sidecar.model_name,
        sidecar.params.into_iter().map(|(k, v)| (k, v.0)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;
    use crate::simulate::simulate_particles;

    #[test]
    fn grid_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("sub").join("grid");
        let model = ModelSpec::new("mean-vol", [("theta", 1.0), ("sigma", 0.7), ("c", 0.3)])
            .build()
            .unwrap();
        let g = simulate_particles(&model, 9, 13, 2.0, 31).unwrap();
        write_grid(&g, &prefix).unwrap();
        let back = read_grid(&prefix).unwrap();
        assert_eq!(back, g);

        let csv = fs::read_to_string(with_suffix(&prefix, "csv")).unwrap();
        assert!(csv.starts_with("t_0,t_1,"));
        assert_eq!(csv.lines().count(), 10);
        let sidecar: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(with_suffix(&prefix, "json")).unwrap()).unwrap();
        assert_eq!(sidecar["N"], 9);
        assert_eq!(sidecar["n"], 13);
        assert_eq!(sidecar["model_name"], "mean-vol");
        assert_eq!(sidecar["params"]["c"].as_f64(), Some(0.3));
    }

    #[test]
    fn malformed_csv_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("g");
        fs::write(
            with_suffix(&prefix, "json"),
            r#"{"T":1.0,"n":2,"N":2,"seed":0,"model_name":"x","params":{}}"#,
        )
        .unwrap();
        fs::write(with_suffix(&prefix, "csv"), "t_0,t_1,t_2\n0,1,2\n0,1\n").unwrap();
        assert!(matches!(read_grid(&prefix), Err(Error::Data(_))));
        fs::write(with_suffix(&prefix, "csv"), "t_0,t_1,t_2\n0,1,2\n0,abc,2\n").unwrap();
        assert!(matches!(read_grid(&prefix), Err(Error::Data(_))));
        fs::write(with_suffix(&prefix, "csv"), "t_0,t_1,t_2\n0,1,2\n").unwrap();
        assert!(matches!(read_grid(&prefix), Err(Error::Data(_))));
    }
}
