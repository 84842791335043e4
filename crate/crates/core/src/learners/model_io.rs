//! Versioned on-disk format for fitted models: a magic tag, a schema
//! version, a JSON header describing the model and a JSON body.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LF2M";
pub const SCHEMA_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: String,
    pub hyperparameters: serde_json::Value,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn write_model<W: Write, T: Serialize>(mut w: W, header: &ModelHeader, body: &T) -> Result<()> {
    let head = serde_json::to_vec(header)?;
    let body = serde_json::to_vec(body)?;
    w.write_all(MAGIC)?;
    w.write_all(&SCHEMA_VERSION.to_le_bytes())?;
    w.write_all(&(head.len() as u32).to_le_bytes())?;
    w.write_all(&head)?;
    w.write_all(&(body.len() as u64).to_le_bytes())?;
    w.write_all(&body)?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<ModelHeader> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a model file (bad magic)".into()));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "model schema version {version} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut head = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut head)?;
    Ok(serde_json::from_slice(&head)?)
}

pub fn read_model<R: Read, T: DeserializeOwned>(mut r: R) -> Result<(ModelHeader, T)> {
    let header = read_header(&mut r)?;
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut body = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut body)?;
    Ok((header, serde_json::from_slice(&body)?))
}

pub fn save<T: Serialize>(path: &std::path::Path, header: &ModelHeader, body: &T) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(f, header, body)
}

pub fn load<T: DeserializeOwned>(path: &std::path::Path) -> Result<(ModelHeader, T)> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit_quantile, FeatureMatrix, FittedQuantile, QuantileRegressor, QuantileSpec};
    use crate::rng::SeedStream;

    #[test]
    fn round_trip_preserves_predictions() {
        let x = FeatureMatrix::new(1, (0..100).map(f64::from).collect()).unwrap();
        let y: Vec<f64> = (0..100).map(|i| f64::from(i % 7)).collect();
        let spec = QuantileSpec::default();
        let m = fit_quantile(&spec, &x, &y, 0.2, SeedStream::new(1)).unwrap();
        let header = ModelHeader {
            kind: "quantile".into(),
            hyperparameters: serde_json::to_value(&spec).unwrap(),
            metadata: serde_json::Value::Null,
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &header, &m).unwrap();
        let (h, back): (ModelHeader, FittedQuantile) = read_model(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        for v in [0.0, 33.0, 99.0] {
            assert_eq!(m.predict(&[v]), back.predict(&[v]));
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut buf = Vec::new();
        let header = ModelHeader { kind: "x".into(), hyperparameters: serde_json::Value::Null, metadata: serde_json::Value::Null };
        write_model(&mut buf, &header, &1u8).unwrap();
        buf[4] = 99;
        let err = read_model::<_, u8>(buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));
        buf[0] = b'X';
        assert!(read_model::<_, u8>(buf.as_slice()).is_err());
    }
}
