//! JSON model files:
//! `{"layers": [{"kernels": [[filter-ref]], "biases": [..], "nonlinearity": ".."}]}`
//! where a filter-ref is `{"values": [[..]], "spacing": h, "support_radius": r}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CnnModel, ConvLayer, Filter, Nonlinearity};
use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterRef {
    pub values: Vec<Vec<f64>>,
    pub spacing: f64,
    pub support_radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerFile {
    pub kernels: Vec<Vec<FilterRef>>,
    pub biases: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub layers: Vec<LayerFile>,
}

impl FilterRef {
    pub fn from_filter(f: &Filter) -> Self {
        let g = f.grid();
        FilterRef {
            values: (0..g.n()).map(|r| g.row(r).to_vec()).collect(),
            spacing: f.spacing(),
            support_radius: f.support_radius(),
        }
    }

    pub fn to_filter(&self) -> Result<Filter> {
        let n = self.values.len();
        if n % 2 == 0 {
            return Err(Error::Parse(format!("filter has {n} rows; need an odd count")));
        }
        if let Some(row) = self.values.iter().find(|r| r.len() != n) {
            return Err(Error::Parse(format!(
                "filter rows must be square: {} columns, {n} rows",
                row.len()
            )));
        }
        let geom = Geometry::from_half(self.spacing, n / 2)?;
        let grid = Grid::from_vec(geom, self.values.concat())?;
        Filter::new(grid, self.support_radius)
    }
}

impl ModelFile {
    pub fn from_model(m: &CnnModel) -> Self {
        ModelFile {
            layers: m
                .layers()
                .iter()
                .map(|l| LayerFile {
                    kernels: l
                        .kernels()
                        .iter()
                        .map(|row| row.iter().map(FilterRef::from_filter).collect())
                        .collect(),
                    biases: l.biases().to_vec(),
                    nonlinearity: l.nonlinearity(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<CnnModel> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let kernels = l
                    .kernels
                    .iter()
                    .map(|row| row.iter().map(FilterRef::to_filter).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                ConvLayer::new(kernels, l.biases.clone(), l.nonlinearity)
            })
            .collect::<Result<Vec<_>>>()?;
        CnnModel::new(layers)
    }
}

impl CnnModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<CnnModel> {
        serde_json::from_str::<ModelFile>(text)?.to_model()
    }

    pub fn load(path: &Path) -> Result<CnnModel> {
        CnnModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
