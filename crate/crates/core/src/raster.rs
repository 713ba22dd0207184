//! ASCII integer rasters: `height` lines of `width` space-separated values.
//!
//! Ground truth and segmentation caches share this format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntRaster {
    pub height: usize,
    pub width: usize,
    pub values: Vec<i64>,
}

pub fn parse_int_raster(text: &str) -> Result<IntRaster> {
    let mut values = Vec::new();
    let mut height = 0;
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let start = values.len();
        for tok in line.split_whitespace() {
            let v: i64 = tok.parse().map_err(|_| {
                Error::Data(format!("line {}: `{tok}` is not an integer", lineno + 1))
            })?;
            values.push(v);
        }
        let row_len = values.len() - start;
        match width {
            None => width = Some(row_len),
            Some(w) if w != row_len => {
                return Err(Error::Data(format!(
                    "line {}: expected {w} values, found {row_len}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| Error::Data("empty raster".into()))?;
    Ok(IntRaster {
        height,
        width,
        values,
    })
}

pub fn read_int_raster(path: &Path) -> Result<IntRaster> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_int_raster(&text)
}

pub fn format_int_raster<T: std::fmt::Display>(width: usize, values: &[T]) -> String {
    let mut out = String::with_capacity(values.len() * 3);
    for row in values.chunks(width.max(1)) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_int_raster<T: std::fmt::Display>(
    path: &Path,
    width: usize,
    values: &[T],
) -> Result<()> {
    fs::write(path, format_int_raster(width, values)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grid() {
        let r = parse_int_raster("0 1\n2 1\n").unwrap();
        assert_eq!((r.height, r.width), (2, 2));
        assert_eq!(r.values, vec![0, 1, 2, 1]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(parse_int_raster("0 1\n2\n").is_err());
        assert!(parse_int_raster("").is_err());
        assert!(parse_int_raster("a b").is_err());
    }

    #[test]
    fn format_round_trip() {
        let vals = [3i64, -1, 0, 7, 8, 9];
        let text = format_int_raster(3, &vals);
        assert_eq!(text, "3 -1 0\n7 8 9\n");
        assert_eq!(parse_int_raster(&text).unwrap().values, vals);
    }
}
