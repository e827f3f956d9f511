//! Versioned JSON checkpoints of trained models.
//!
//! A checkpoint holds a header (`format`, `version`, architecture sizes), the
//! network weights as named row-major arrays in canonical order, the ETS
//! parameter table and the per-epoch forecast snapshots. Values are stored as
//! `f64` and round-trip exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ets::EtsParams;
use crate::network::{Network, NetworkParams, DILATIONS};
use crate::scalar::Real;
use crate::trainer::TrainedModel;
use crate::windowing::INPUT_WINDOW;
use crate::{HORIZON, SEASON};

pub const FORMAT: &str = "mtlf-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    /// `[rows, cols]`; vectors have one column.
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsRecord {
    pub alpha_raw: f64,
    pub beta_raw: f64,
    pub init_season_raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub state_size: usize,
    pub dilations: Vec<usize>,
    pub input_window: usize,
    pub horizon: usize,
    pub arrays: Vec<NamedArray>,
    pub ets: BTreeMap<String, EtsRecord>,
    pub snapshots: BTreeMap<String, Vec<Vec<f64>>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &TrainedModel<T>) -> Self {
        let net = &model.network;
        let arrays = net
            .named_arrays()
            .into_iter()
            .map(|(name, shape, data)| NamedArray {
                name,
                shape,
                data: data.iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        let ets = model
            .ets
            .iter()
            .map(|(id, p)| {
                let record = EtsRecord {
                    alpha_raw: p.alpha_raw.as_f64(),
                    beta_raw: p.beta_raw.as_f64(),
                    init_season_raw: p.init_season_raw.iter().map(|v| v.as_f64()).collect(),
                };
                (id.clone(), record)
            })
            .collect();
        let snapshots = model
            .snapshots
            .iter()
            .map(|(id, snaps)| (id.clone(), snaps.iter().map(|s| s.iter().map(|v| v.as_f64()).collect()).collect()))
            .collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            state_size: net.state_size,
            dilations: DILATIONS.to_vec(),
            input_window: INPUT_WINDOW,
            horizon: HORIZON,
            arrays,
            ets,
            snapshots,
        }
    }

    fn check_header(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(invalid(format!("format {:?}, expected {FORMAT:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(invalid(format!("unsupported version {}, expected {VERSION}", self.version)));
        }
        if self.dilations != DILATIONS || self.input_window != INPUT_WINDOW || self.horizon != HORIZON {
            return Err(invalid(format!(
                "architecture (dilations {:?}, input {}, horizon {}) differs from this build",
                self.dilations, self.input_window, self.horizon
            )));
        }
        Ok(())
    }

    pub fn network<T: Real>(&self) -> Result<NetworkParams<T>> {
        self.check_header()?;
        let template = Network::filled(self.state_size, ());
        let expected = template.named_arrays();
        if expected.len() != self.arrays.len() {
            return Err(invalid(format!("{} arrays, expected {}", self.arrays.len(), expected.len())));
        }
        let mut flat = Vec::with_capacity(template.parameter_count());
        for ((name, shape, _), array) in expected.iter().zip(&self.arrays) {
            if *name != array.name || *shape != array.shape || array.data.len() != shape[0] * shape[1] {
                return Err(invalid(format!(
                    "array {:?} with shape {:?} and {} values where {name:?} with shape {shape:?} was expected",
                    array.name,
                    array.shape,
                    array.data.len()
                )));
            }
            flat.extend(array.data.iter().map(|&v| T::lit(v)));
        }
        Network::from_flat(self.state_size, &flat)
    }

    pub fn to_model<T: Real>(&self) -> Result<TrainedModel<T>> {
        let network = self.network()?;
        let ets = self
            .ets
            .iter()
            .map(|(id, r)| {
                if r.init_season_raw.len() != SEASON {
                    return Err(invalid(format!("{id}: {} initial seasonals", r.init_season_raw.len())));
                }
                let params = EtsParams {
                    alpha_raw: T::lit(r.alpha_raw),
                    beta_raw: T::lit(r.beta_raw),
                    init_season_raw: std::array::from_fn(|i| T::lit(r.init_season_raw[i])),
                };
                Ok((id.clone(), params))
            })
            .collect::<Result<_>>()?;
        let snapshots = self
            .snapshots
            .iter()
            .map(|(id, snaps)| (id.clone(), snaps.iter().map(|s| s.iter().map(|&v| T::lit(v)).collect()).collect()))
            .collect();
        Ok(TrainedModel {
            network,
            ets,
            snapshots,
            log: Vec::new(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let checkpoint: Self = serde_json::from_reader(BufReader::new(file))?;
        checkpoint.check_header()?;
        Ok(checkpoint)
    }
}

pub fn save_model<T: Real>(model: &TrainedModel<T>, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::from_model(model).save(path)
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<TrainedModel<T>> {
    Checkpoint::load(path)?.to_model()
}
