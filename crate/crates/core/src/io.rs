//! JSON file formats.
//!
//! Complex matrices are written as nested rows of `[re, im]` pairs. Channels are
//! `{"d", "kraus", "label"}` objects and an ensemble is an array of channels.
//! Hamiltonians are `{"d", "h", "dt_us"}`.

use crate::channels::{KrausChannel, ProcessEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::measurement::{DensityMatrix, MeasurementDataset, Povm};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Row-major nested `[re, im]` representation of a complex matrix.
pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

pub fn matrix_from_json(rows: &JsonMatrix) -> Result<CMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if nrows == 0 || ncols == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Shape(format!("matrix row {i} has the wrong length")));
    }
    Ok(CMat::from_fn(nrows, ncols, |i, j| {
        c(rows[i][j][0], rows[i][j][1])
    }))
}

/// `#[serde(with = "crate::io::cmat")]` for a single matrix.
pub mod cmat {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rows = JsonMatrix::deserialize(d)?;
        matrix_from_json(&rows).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "crate::io::cmat_list")]` for a list of matrices.
pub mod cmat_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter()
            .map(matrix_to_json)
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<CMat>, D::Error> {
        let all = Vec::<JsonMatrix>::deserialize(d)?;
        all.iter()
            .map(matrix_from_json)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        cmat::serialize(self.matrix(), s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = cmat::deserialize(d)?;
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Povm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        cmat_list::serialize(self.elements(), s)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ms = cmat_list::deserialize(d)?;
        Povm::new(ms).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelJson {
    pub d: usize,
    pub kraus: Vec<JsonMatrix>,
    #[serde(default)]
    pub label: String,
}

impl ChannelJson {
    pub fn from_channel(ch: &KrausChannel) -> Self {
        Self {
            d: ch.dim(),
            kraus: ch.kraus().iter().map(matrix_to_json).collect(),
            label: ch.label().to_string(),
        }
    }

    pub fn to_channel(&self) -> Result<KrausChannel> {
        let kraus = self
            .kraus
            .iter()
            .map(matrix_from_json)
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = kraus
            .iter()
            .find(|k| k.nrows() != self.d || k.ncols() != self.d)
        {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: k.nrows(),
            });
        }
        KrausChannel::with_label(kraus, self.label.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HamiltonianJson {
    pub d: usize,
    pub h: JsonMatrix,
    pub dt_us: f64,
}

impl HamiltonianJson {
    pub fn matrix(&self) -> Result<CMat> {
        let h = matrix_from_json(&self.h)?;
        if h.nrows() != self.d || h.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: h.nrows(),
            });
        }
        Ok(h)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_ensemble(path: &Path) -> Result<ProcessEnsemble> {
    let chans: Vec<ChannelJson> = read_json(path)?;
    let chans = chans
        .iter()
        .map(ChannelJson::to_channel)
        .collect::<Result<Vec<_>>>()?;
    ProcessEnsemble::new(chans)
}

pub fn write_ensemble(path: &Path, ens: &ProcessEnsemble) -> Result<()> {
    let chans: Vec<ChannelJson> = ens
        .channels()
        .iter()
        .map(ChannelJson::from_channel)
        .collect();
    write_json(path, &chans)
}

pub fn read_dataset(path: &Path) -> Result<MeasurementDataset> {
    let ds: MeasurementDataset = read_json(path)?;
    ds.validate()?;
    Ok(ds)
}
