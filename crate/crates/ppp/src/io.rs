//! Point pattern files and CSV tables.
//!
//! A pattern is a CSV file with header `x,y`. Its window is given on the
//! command line as `xmin,xmax,ymin,ymax` or read from a sidecar file next to
//! the CSV, `<file>.window.json`, holding
//! `{"x_min": .., "x_max": .., "y_min": .., "y_max": ..}`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ppp_core::{Point, PointPattern, Window};
use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl From<&Window> for WindowRecord {
    fn from(w: &Window) -> Self {
        Self {
            x_min: w.x_min(),
            x_max: w.x_max(),
            y_min: w.y_min(),
            y_max: w.y_max(),
        }
    }
}

impl TryFrom<WindowRecord> for Window {
    type Error = Error;
    fn try_from(r: WindowRecord) -> Result<Window> {
        Ok(Window::new(r.x_min, r.x_max, r.y_min, r.y_max)?)
    }
}

/// Window written as `xmin,xmax,ymin,ymax`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowArg(pub Window);

impl FromStr for WindowArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = parse_floats(s)?;
        if v.len() != 4 {
            return Err(format!("expected xmin,xmax,ymin,ymax, got {s:?}"));
        }
        Window::new(v[0], v[1], v[2], v[3])
            .map(WindowArg)
            .map_err(|e| e.to_string())
    }
}

/// Comma-separated numbers.
pub fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("{t:?}: {e}"))
        })
        .collect()
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".window.json");
    PathBuf::from(name)
}

pub fn read_points_csv(path: &Path) -> Result<Vec<Point>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Invalid(format!("{}: no `{name}` column", path.display())))
    };
    let (ix, iy) = (col("x")?, col("y")?);
    let mut pts = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Invalid(format!("{}: bad number on row {}", path.display(), line + 1)))
        };
        pts.push(Point::new(get(ix)?, get(iy)?));
    }
    Ok(pts)
}

/// Read a pattern; the window comes from `window` if given, otherwise from the
/// sidecar file.
pub fn read_pattern(path: &Path, window: Option<Window>) -> Result<PointPattern> {
    let pts = read_points_csv(path)?;
    let w = match window {
        Some(w) => w,
        None => {
            let side = sidecar_path(path);
            let text = fs::read_to_string(&side).map_err(|e| {
                Error::Invalid(format!(
                    "no window given and sidecar {} unreadable: {e}",
                    side.display()
                ))
            })?;
            serde_json::from_str::<WindowRecord>(&text)?.try_into()?
        }
    };
    let p = PointPattern::new(pts, w)?;
    let dup = p.duplicate_count();
    if dup > 0 {
        log::warn!("{}: {dup} duplicated points", path.display());
    }
    Ok(p)
}

/// Write the CSV and its window sidecar.
pub fn write_pattern(path: &Path, p: &PointPattern) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for u in p.points() {
        w.write_record([u.x.to_string(), u.y.to_string()])?;
    }
    w.flush().at(path)?;
    let side = sidecar_path(path);
    let rec = WindowRecord::from(p.window());
    fs::write(&side, serde_json::to_string_pretty(&rec)?).at(&side)?;
    Ok(())
}

/// Write a numeric table with the given header.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().at(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let w = Window::new(0.0, 125.0, 0.0, 188.0).unwrap();
        let p = PointPattern::new(vec![Point::new(1.5, 2.25), Point::new(124.0, 0.1)], w).unwrap();
        write_pattern(&path, &p).unwrap();
        assert_eq!(read_pattern(&path, None).unwrap(), p);
        let other = Window::new(0.0, 200.0, 0.0, 200.0).unwrap();
        assert_eq!(read_pattern(&path, Some(other)).unwrap().window(), &other);
    }

    #[test]
    fn window_argument() {
        let w: WindowArg = "0,125,0,188".parse().unwrap();
        assert_eq!(w.0.height(), 188.0);
        assert!("0,1,0".parse::<WindowArg>().is_err());
        assert!("1,0,0,1".parse::<WindowArg>().is_err());
    }

    #[test]
    fn point_outside_window_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, "x,y\n0.5,0.5\n1.5,0.5\n").unwrap();
        assert!(read_pattern(&path, Some(Window::unit_square())).is_err());
        assert!(read_pattern(&path, None).is_err());
    }
}
