//! Binary weight files: an 8-byte magic, a little-endian `u64` header length,
//! a JSON header with shapes, then every parameter as little-endian `f64` in
//! row-major order (`w1, b1, w2, b2[, w1_self, w2_self]`).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::GcnModel;
use super::{Activation, Backbone};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ELGNNv1\0";

#[derive(Serialize, Deserialize)]
struct Header {
    backbone: Backbone,
    activation: Activation,
    input_dim: usize,
    hidden: usize,
    classes: usize,
}

pub(crate) fn encode(model: &GcnModel) -> Result<Vec<u8>> {
    model.validate()?;
    let header = serde_json::to_vec(&Header {
        backbone: model.backbone,
        activation: model.activation,
        input_dim: model.input_dim(),
        hidden: model.hidden(),
        classes: model.classes(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let mut put = |values: &mut dyn Iterator<Item = &f64>| {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    put(&mut model.w1.iter());
    put(&mut model.b1.iter());
    put(&mut model.w2.iter());
    put(&mut model.b2.iter());
    for w in [&model.w1_self, &model.w2_self].into_iter().flatten() {
        put(&mut w.iter());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::ModelFormat("truncated model file".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            count
                .checked_mul(8)
                .ok_or_else(|| Error::ModelFormat("shape overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let data = self.floats(rows * cols)?;
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    fn vector(&mut self, len: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.floats(len)?))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<GcnModel> {
    let mut r = Reader { bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    let (d, h, c) = (header.input_dim, header.hidden, header.classes);
    let w1 = r.matrix(d, h)?;
    let b1 = r.vector(h)?;
    let w2 = r.matrix(h, c)?;
    let b2 = r.vector(c)?;
    let (w1_self, w2_self) = match header.backbone {
        Backbone::Gcn => (None, None),
        Backbone::Sage => (Some(r.matrix(d, h)?), Some(r.matrix(h, c)?)),
    };
    if !r.bytes.is_empty() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes",
            r.bytes.len()
        )));
    }
    let model = GcnModel {
        backbone: header.backbone,
        activation: header.activation,
        w1,
        b1,
        w2,
        b2,
        w1_self,
        w2_self,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &GcnModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GcnModel> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    #[test]
    fn round_trip_is_bit_exact() {
        for backbone in [Backbone::Gcn, Backbone::Sage] {
            let mut rng = substream(9, Domain::Training, 0);
            let mut m = GcnModel::init(backbone, Activation::Relu, 5, 3, 2, &mut rng);
            m.b1[1] = -0.0;
            m.b2[0] = f64::MIN_POSITIVE / 3.0;
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.bin");
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.b1[1].to_bits(), (-0.0f64).to_bits());
            assert_eq!(encode(&back).unwrap(), encode(&m).unwrap());
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut rng = substream(9, Domain::Training, 0);
        let m = GcnModel::init(Backbone::Gcn, Activation::Relu, 2, 2, 2, &mut rng);
        let bytes = encode(&m).unwrap();
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3]),
            Err(Error::ModelFormat(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::ModelFormat(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::ModelFormat(_))));
    }
}
