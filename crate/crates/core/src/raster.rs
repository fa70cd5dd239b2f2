//! Simple raster carrier: a JSON header file plus a sibling binary file of
//! row-major little-endian f32 values. Used for land masks, EVI transition
//! variables, NDVI and mountain masks.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterHeader {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub rows: usize,
    pub cols: usize,
    /// NaN (serialized as null) means "no sentinel, NaN cells are no-data".
    #[serde(with = "nodata_serde")]
    pub nodata: f32,
}

mod nodata_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f32, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f32, D::Error> {
        Ok(Option::<f32>::deserialize(d)?.unwrap_or(f32::NAN))
    }
}

#[derive(Debug, Clone)]
pub struct Raster {
    pub header: RasterHeader,
    pub values: Vec<f32>,
}

impl Raster {
    pub fn new(header: RasterHeader, values: Vec<f32>) -> Result<Self> {
        if header.rows == 0 || header.cols == 0 {
            return Err(Error::Invalid("raster dimensions must be positive".into()));
        }
        if header.dlat == 0.0 || header.dlon == 0.0 {
            return Err(Error::Invalid("raster cell sizes must be nonzero".into()));
        }
        if header.rows * header.cols != values.len() {
            return Err(Error::Invalid(format!(
                "raster value count {} does not match {}x{}",
                values.len(),
                header.rows,
                header.cols
            )));
        }
        Ok(Raster { header, values })
    }

    /// Uniform raster covering the whole globe, cell centers included.
    pub fn constant(rows: usize, cols: usize, value: f32) -> Self {
        let header = RasterHeader {
            lat0: -90.0,
            lon0: -180.0,
            dlat: 180.0 / rows as f64,
            dlon: 360.0 / cols as f64,
            rows,
            cols,
            nodata: f32::NAN,
        };
        Raster { header, values: vec![value; rows * cols] }
    }

    /// Value of the cell containing (lat, lon), or None outside the raster
    /// or at a no-data cell.
    pub fn sample(&self, lat: f64, lon: f64) -> Option<f32> {
        let h = &self.header;
        let row = ((lat - h.lat0) / h.dlat).floor();
        let col = ((lon - h.lon0) / h.dlon).floor();
        if row < 0.0 || col < 0.0 {
            return None;
        }
        let (row, col) = (row as usize, col as usize);
        if row >= h.rows || col >= h.cols {
            return None;
        }
        let v = self.values[row * h.cols + col];
        if v.is_nan() || (h.nodata.is_finite() && v == h.nodata) {
            None
        } else {
            Some(v)
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.header.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        let cols = self.header.cols;
        self.values[row * cols + col] = v;
    }

    /// Writes `<path>.json` (header) and `<path>.bin` (values, LE f32).
    pub fn write(&self, path: &Path) -> Result<()> {
        let header_path = path.with_extension("json");
        let bin_path = path.with_extension("bin");
        let header = serde_json::to_string_pretty(&self.header)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        fs::write(&header_path, header).map_err(|e| Error::io(&header_path, e))?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&bin_path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header_path = path.with_extension("json");
        let bin_path = path.with_extension("bin");
        let header_text =
            fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: RasterHeader = serde_json::from_str(&header_text).map_err(|e| {
            Error::Decode { path: header_path.clone(), line: e.line(), msg: e.to_string() }
        })?;
        let mut bytes = Vec::new();
        fs::File::open(&bin_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&bin_path, e))?;
        if bytes.len() != header.rows * header.cols * 4 {
            return Err(Error::Invalid(format!(
                "{}: expected {} bytes, found {}",
                bin_path.display(),
                header.rows * header.cols * 4,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Raster::new(header, values)
    }
}

/// Resolves the common `<stem>.json`/`<stem>.bin` pair from either path.
pub fn raster_stem(path: &Path) -> PathBuf {
    path.with_extension("")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_in_and_out_of_bounds() {
        let mut r = Raster::constant(18, 36, 0.0);
        r.set(9, 18, 1.0); // cell covering (0..10, 0..10) degrees
        assert_eq!(r.sample(5.0, 5.0), Some(1.0));
        assert_eq!(r.sample(5.0, 15.0), Some(0.0));
        assert_eq!(r.sample(95.0, 5.0), None);
    }

    #[test]
    fn nodata_cells_are_none() {
        let header = RasterHeader {
            lat0: 0.0,
            lon0: 0.0,
            dlat: 1.0,
            dlon: 1.0,
            rows: 1,
            cols: 2,
            nodata: -999.0,
        };
        let r = Raster::new(header, vec![-999.0, 3.0]).unwrap();
        assert_eq!(r.sample(0.5, 0.5), None);
        assert_eq!(r.sample(0.5, 1.5), Some(3.0));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Raster::constant(4, 8, 2.5);
        r.set(1, 3, -1.0);
        let path = dir.path().join("mask");
        r.write(&path).unwrap();
        let back = Raster::read(&path).unwrap();
        assert_eq!(back.values, r.values);
        assert_eq!(back.header.rows, 4);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let header = RasterHeader {
            lat0: 0.0,
            lon0: 0.0,
            dlat: 1.0,
            dlon: 1.0,
            rows: 2,
            cols: 2,
            nodata: f32::NAN,
        };
        assert!(Raster::new(header, vec![0.0; 3]).is_err());
    }
}
