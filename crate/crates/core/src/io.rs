//! File formats: reduced tables (JSON), CSV extracts and 8-bit PGM heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use crate::concentration::{ConcentrationMap, ReducedTable};
use crate::error::{Error, Result};
use crate::grid::ComplexField;

/// Parse and validate a reduced table from JSON text.
pub fn parse_table(text: &str) -> Result<ReducedTable> {
    let t: ReducedTable = serde_json::from_str(text).map_err(|e| Error::Parse(format!("table: {e}")))?;
    t.validate()?;
    Ok(t)
}

pub fn table_to_json(table: &ReducedTable) -> String {
    let mut s = serde_json::to_string_pretty(table).expect("table serializes");
    s.push('\n');
    s
}

pub fn read_table(path: &Path) -> Result<ReducedTable> {
    parse_table(&std::fs::read_to_string(path)?)
}

pub fn write_table(path: &Path, table: &ReducedTable) -> Result<()> {
    std::fs::write(path, table_to_json(table))?;
    Ok(())
}

pub fn table_csv(table: &ReducedTable) -> String {
    let mut s = String::from("b,e,s_min,iterations,residual,boundary_ratio\n");
    for n in &table.nodes {
        let _ = writeln!(s, "{},{},{},{},{},{}", n.b, n.e, n.s_min, n.iterations, n.residual, n.boundary_ratio);
    }
    s
}

/// `x,y,V,B,C` per sample.
pub fn map_csv(map: &ConcentrationMap) -> String {
    let mut s = String::from("x,y,V,B,C\n");
    for k in 0..map.values.len() {
        let x = map.sample_points[k];
        let _ = writeln!(s, "{},{},{},{},{}", x[0], x[1], map.v_values[k], map.b_values[k], map.values[k]);
    }
    s
}

/// `x,y,re,im,abs` per node.
pub fn field_csv(u: &ComplexField) -> String {
    let mut s = String::from("x,y,re,im,abs\n");
    for (k, _, _, x) in u.grid.nodes() {
        let z = u.values[k];
        let _ = writeln!(s, "{},{},{},{},{}", x[0], x[1], z.re, z.im, z.norm());
    }
    s
}

/// Binary 8-bit PGM of row-major values, first row at the top; the minimum
/// maps to 0 and the maximum to 255 (a constant image is all zeros).
/// Missing samples (NaN) are drawn as 0.
pub fn pgm(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || values.len() != width * height {
        return Err(Error::InvalidParameter(format!(
            "heatmap needs {width}x{height} values, got {}",
            values.len()
        )));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for v in values {
        let b = if !v.is_finite() || !(hi > lo) {
            0
        } else {
            (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
        };
        out.push(b);
    }
    Ok(out)
}

/// Heatmap of a C-map on its sampling lattice, `y` increasing upwards.
pub fn map_pgm(map: &ConcentrationMap) -> Result<Vec<u8>> {
    let r = map.resolution;
    let mut img = vec![f64::NAN; r * r];
    for (k, idx) in map.sample_index.iter().enumerate() {
        img[(r - 1 - idx[1]) * r + idx[0]] = map.values[k];
    }
    pgm(r, r, &img)
}

/// Heatmap of `|u|`, `y` increasing upwards.
pub fn modulus_pgm(u: &ComplexField) -> Result<Vec<u8>> {
    let [nx, ny] = u.grid.n;
    let mut img = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            img[(ny - 1 - j) * nx + i] = u.values[u.grid.index(i, j)].norm();
        }
    }
    pgm(nx, ny, &img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_scaling() {
        let img = pgm(2, 2, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(&img[header.len()..], &[0, 64, 128, 255]);
        let flat = pgm(2, 1, &[4.0, 4.0]).unwrap();
        assert_eq!(&flat[flat.len() - 2..], &[0, 0]);
        assert!(pgm(3, 1, &[1.0]).is_err());
    }

    #[test]
    fn table_parse_rejects_garbage() {
        assert!(parse_table("{}").is_err());
        assert!(parse_table("not json").is_err());
        let bad = r#"{"p":4.0,"grid_n":8,"half_width":12.0,"nodes":[
            {"b":0.5,"e":6.0,"s_min":1.0,"iterations":1,"residual":0.0,"boundary_ratio":0.0},
            {"b":0.25,"e":5.9,"s_min":1.0,"iterations":1,"residual":0.0,"boundary_ratio":0.0}]}"#;
        assert!(parse_table(bad).is_err());
    }
}
