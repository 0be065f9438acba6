//! Flat numeric chain files with a JSON sidecar mapping parameter names to offsets.
//!
//! Each retained draw is one CSV row (no header) laid out as
//! `psi, gamma, tau[0..M], delta[i,j] for i<j, X[i,k] row-major`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, HmdsError, Result};
use crate::state::{AcceptanceRates, ChainOutput, ModelState};
use crate::triangle::{pairs, UpperTriangle};

/// Parameter layout of one flattened draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSchema {
    pub n_entities: usize,
    pub n_replicates: usize,
    pub dim: usize,
    pub n_params: usize,
    /// Parameter name to column offset.
    pub offsets: BTreeMap<String, usize>,
}

impl ChainSchema {
    pub fn new(n_entities: usize, n_replicates: usize, dim: usize) -> Self {
        let names = parameter_names(n_entities, n_replicates, dim);
        let offsets = names.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Self { n_entities, n_replicates, dim, n_params: names.len(), offsets }
    }

    pub fn for_chain(chain: &ChainOutput) -> Self {
        let first = chain.draws.first();
        Self::new(chain.n_entities(), chain.n_replicates(), first.map_or(0, ModelState::dim))
    }

    pub fn offset(&self, name: &str) -> Result<usize> {
        self.offsets.get(name).copied().ok_or_else(|| HmdsError::UnknownParameter(name.to_string()))
    }

    /// Names in column order.
    pub fn names(&self) -> Vec<String> {
        parameter_names(self.n_entities, self.n_replicates, self.dim)
    }
}

/// Names in flat-layout order: `psi`, `gamma`, `tau[p]`, `delta[i,j]`, `X[i,k]`.
pub fn parameter_names(n: usize, m: usize, dim: usize) -> Vec<String> {
    let mut names = vec!["psi".to_string(), "gamma".to_string()];
    names.extend((0..m).map(|p| format!("tau[{p}]")));
    names.extend(pairs(n).map(|(i, j)| format!("delta[{i},{j}]")));
    for i in 0..n {
        names.extend((0..dim).map(|k| format!("X[{i},{k}]")));
    }
    names
}

pub fn flatten_state(s: &ModelState) -> Vec<f64> {
    let mut v = vec![s.psi, s.gamma];
    v.extend(&s.tau);
    v.extend(s.delta.values());
    for row in &s.x {
        v.extend(row);
    }
    v
}

pub fn unflatten_state(schema: &ChainSchema, v: &[f64]) -> Result<ModelState> {
    if v.len() != schema.n_params {
        return Err(HmdsError::LengthMismatch { left: schema.n_params, right: v.len() });
    }
    let (n, m, dim) = (schema.n_entities, schema.n_replicates, schema.dim);
    let n_pairs = pairs(n).count();
    let tau = v[2..2 + m].to_vec();
    let delta = UpperTriangle::from_values(n, v[2 + m..2 + m + n_pairs].to_vec());
    let x = v[2 + m + n_pairs..].chunks(dim.max(1)).map(<[f64]>::to_vec).collect();
    Ok(ModelState { x, delta, tau, psi: v[0], gamma: v[1] })
}

/// Sidecar contents: layout plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub schema: ChainSchema,
    pub n_draws: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub rng_seed: u64,
    pub acceptance_rates: AcceptanceRates,
}

/// Paths `<stem>.csv` and `<stem>.schema.json`.
pub fn chain_paths(stem: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let stem = stem.as_ref();
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".csv"), with(".schema.json"))
}

pub fn write_chain(chain: &ChainOutput, stem: impl AsRef<Path>) -> Result<()> {
    let (data_path, schema_path) = chain_paths(stem);
    let schema = ChainSchema::for_chain(chain);
    let mut out = String::new();
    for d in &chain.draws {
        let row: Vec<String> = flatten_state(d).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(&data_path, out).map_err(io_err(&data_path))?;
    let sidecar = ChainSidecar {
        schema,
        n_draws: chain.draws.len(),
        n_burnin: chain.n_burnin,
        thin: chain.thin,
        rng_seed: chain.rng_seed,
        acceptance_rates: chain.acceptance_rates.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&schema_path, json + "\n").map_err(io_err(&schema_path))
}

pub fn read_chain(stem: impl AsRef<Path>) -> Result<ChainOutput> {
    let (data_path, schema_path) = chain_paths(stem);
    let sidecar: ChainSidecar =
        serde_json::from_str(&fs::read_to_string(&schema_path).map_err(io_err(&schema_path))?)?;
    let text = fs::read_to_string(&data_path).map_err(io_err(&data_path))?;
    let mut draws = Vec::with_capacity(sidecar.n_draws);
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| HmdsError::Parse { line: idx + 1, msg: e.to_string() })?;
        let state = unflatten_state(&sidecar.schema, &row)
            .map_err(|e| HmdsError::Parse { line: idx + 1, msg: e.to_string() })?;
        draws.push(state);
    }
    if draws.is_empty() {
        return Err(HmdsError::InvalidInput(format!("{} holds no draws", data_path.display())));
    }
    Ok(ChainOutput {
        draws,
        n_burnin: sidecar.n_burnin,
        thin: sidecar.thin,
        acceptance_rates: sidecar.acceptance_rates,
        rng_seed: sidecar.rng_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ChainOutput {
        let draws = (0..3)
            .map(|k| ModelState {
                x: vec![vec![0.1 * k as f64, -0.2], vec![0.3, 1.0 / 3.0], vec![-0.7, 0.25]],
                delta: UpperTriangle::from_fn(3, |i, j| (i + j + k) as f64 / 7.0 + 0.01),
                tau: vec![1.5, 0.25 + k as f64],
                psi: 10.0 / 3.0,
                gamma: 2.0 + k as f64,
            })
            .collect();
        ChainOutput {
            draws,
            n_burnin: 5,
            thin: 2,
            acceptance_rates: AcceptanceRates { x: vec![0.3; 3], psi: 0.4, gamma: 0.25 },
            rng_seed: 7,
        }
    }

    #[test]
    fn schema_offsets_match_flattening() {
        let c = chain();
        let schema = ChainSchema::for_chain(&c);
        let flat = flatten_state(&c.draws[2]);
        assert_eq!(flat.len(), schema.n_params);
        assert_eq!(flat[schema.offset("tau[1]").unwrap()], 2.25);
        assert_eq!(flat[schema.offset("delta[1,2]").unwrap()], c.draws[2].delta.get(1, 2));
        assert_eq!(flat[schema.offset("X[1,1]").unwrap()], 1.0 / 3.0);
        assert!(schema.offset("tau[9]").is_err());
    }

    #[test]
    fn chain_file_round_trip() {
        let c = chain();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("chain");
        write_chain(&c, &stem).unwrap();
        assert_eq!(read_chain(&stem).unwrap(), c);
    }
}
