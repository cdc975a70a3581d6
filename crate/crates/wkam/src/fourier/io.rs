//! Series serialization: a JSON form for human-readable state files and a
//! little-endian binary twin ("WKFS") that round-trips bit for bit.
//!
//! JSON layout:
//!
//! ```text
//! { "d": 1, "value_shape": [4, 1], "k_max": 64, "grid_size": 135,
//!   "coeffs": [[k_1, ..., k_d, re, im, re, im, ...], ...] }
//! ```
//!
//! Each coefficient row carries the multi-index followed by the value block
//! in row-major order, one `re, im` pair per entry.  Rows are sorted by
//! multi-index (the storage order), so output is deterministic.
//!
//! Binary layout (all little-endian): magic `WKFS`, version byte, `d` (u8),
//! rows/cols/k_max/grid_size (u32 each), coefficient count (u64), then per
//! coefficient the `d` i32 index components and `rows * cols` f64 pairs.

use super::{CMat, FourierSeries};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde_json::{json, Value};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"WKFS";
const VERSION: u8 = 1;

impl FourierSeries {
    pub fn to_json(&self) -> Result<Value> {
        let mut rows = Vec::with_capacity(self.mode_count());
        for (k, v) in self.coeffs() {
            let mut row: Vec<Value> = k.iter().map(|&ki| json!(ki)).collect();
            for i in 0..self.shape().0 {
                for j in 0..self.shape().1 {
                    let z = v[(i, j)];
                    if !z.re.is_finite() || !z.im.is_finite() {
                        return Err(Error::NonFinite {
                            context: "series coefficient in JSON output".into(),
                        });
                    }
                    row.push(json!(z.re));
                    row.push(json!(z.im));
                }
            }
            rows.push(Value::Array(row));
        }
        Ok(json!({
            "d": self.d(),
            "value_shape": [self.shape().0, self.shape().1],
            "k_max": self.k_max(),
            "grid_size": self.grid_size(),
            "coeffs": rows,
        }))
    }

    pub fn from_json(value: &Value) -> Result<FourierSeries> {
        let bad = |context: &str| Error::Format {
            context: format!("series JSON: {context}"),
        };
        let d = value["d"].as_u64().ok_or_else(|| bad("missing d"))? as usize;
        if !(1..=2).contains(&d) {
            return Err(bad("d must be 1 or 2"));
        }
        let shape_v = value["value_shape"]
            .as_array()
            .ok_or_else(|| bad("missing value_shape"))?;
        if shape_v.len() != 2 {
            return Err(bad("value_shape must have two entries"));
        }
        let rows = shape_v[0].as_u64().ok_or_else(|| bad("bad rows"))? as usize;
        let cols = shape_v[1].as_u64().ok_or_else(|| bad("bad cols"))? as usize;
        let k_max = value["k_max"].as_u64().ok_or_else(|| bad("missing k_max"))? as usize;
        let mut out = FourierSeries::zeros(d, (rows, cols), k_max);
        if let Some(g) = value["grid_size"].as_u64() {
            out.grid_size = g as usize;
        }
        let coeffs = value["coeffs"].as_array().ok_or_else(|| bad("missing coeffs"))?;
        for row in coeffs {
            let row = row.as_array().ok_or_else(|| bad("coefficient row"))?;
            if row.len() != d + 2 * rows * cols {
                return Err(bad("coefficient row length"));
            }
            let mut k = Vec::with_capacity(d);
            for item in &row[..d] {
                k.push(item.as_i64().ok_or_else(|| bad("mode index"))? as i32);
            }
            let mut block = CMat::zeros(rows, cols);
            let mut it = row[d..].iter();
            for i in 0..rows {
                for j in 0..cols {
                    let re = it.next().unwrap().as_f64().ok_or_else(|| bad("re"))?;
                    let im = it.next().unwrap().as_f64().ok_or_else(|| bad("im"))?;
                    block[(i, j)] = Complex64::new(re, im);
                }
            }
            out.set_coeff(&k, block)?;
        }
        Ok(out)
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, self.d() as u8])?;
        for field in [
            self.shape().0 as u32,
            self.shape().1 as u32,
            self.k_max() as u32,
            self.grid_size() as u32,
        ] {
            w.write_all(&field.to_le_bytes())?;
        }
        w.write_all(&(self.mode_count() as u64).to_le_bytes())?;
        for (k, v) in self.coeffs() {
            for &ki in k {
                w.write_all(&ki.to_le_bytes())?;
            }
            for i in 0..self.shape().0 {
                for j in 0..self.shape().1 {
                    w.write_all(&v[(i, j)].re.to_le_bytes())?;
                    w.write_all(&v[(i, j)].im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<FourierSeries> {
        let bad = |context: &str| Error::Format {
            context: format!("WKFS stream: {context}"),
        };
        let mut head = [0u8; 6];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if head[4] != VERSION {
            return Err(bad("unsupported version"));
        }
        let d = head[5] as usize;
        if !(1..=2).contains(&d) {
            return Err(bad("d must be 1 or 2"));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let k_max = read_u32(r)? as usize;
        let grid_size = read_u32(r)? as usize;
        if rows == 0 || cols == 0 || rows > 1024 || cols > 1024 || k_max > 1 << 20 {
            return Err(bad("implausible header"));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let mut out = FourierSeries::zeros(d, (rows, cols), k_max);
        out.grid_size = grid_size;
        let mut f64buf = [0u8; 8];
        for _ in 0..count {
            let mut k = Vec::with_capacity(d);
            for _ in 0..d {
                let mut i32buf = [0u8; 4];
                r.read_exact(&mut i32buf)?;
                k.push(i32::from_le_bytes(i32buf));
            }
            let mut block = CMat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    r.read_exact(&mut f64buf)?;
                    let re = f64::from_le_bytes(f64buf);
                    r.read_exact(&mut f64buf)?;
                    let im = f64::from_le_bytes(f64buf);
                    block[(i, j)] = Complex64::new(re, im);
                }
            }
            out.set_coeff(&k, block)?;
        }
        Ok(out)
    }
}

impl serde::Serialize for FourierSeries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json()
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for FourierSeries {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = Value::deserialize(d)?;
        FourierSeries::from_json(&value).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = ...)]` adapter storing a real vector as a plain array.
pub mod serde_rvec {
    use super::super::RVec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &RVec, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RVec, D::Error> {
        Ok(RVec::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// `#[serde(with = ...)]` adapter for floats that must survive JSON even
/// when non-finite (`serde_json` writes bare infinities as `null`).
pub mod serde_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("bad float string {other:?}"))),
            },
        }
    }
}

/// Like [`serde_rvec`] but for a list of real vectors.
pub mod serde_rvec_list {
    use super::super::RVec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[RVec], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|r| r.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<RVec>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(rows.into_iter().map(RVec::from_vec).collect())
    }
}
