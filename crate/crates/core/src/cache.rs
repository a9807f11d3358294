//! On-disk cache of simulated critical constants.
//!
//! An entry is keyed by everything the simulated value depends on: `α`,
//! side, shape, region, draw count, seed, grid and refinement settings, and
//! a hash of the fit geometry (basis, `(XᵀX)⁻¹` and `ν`). Each entry carries
//! a checksum of its contents; entries that fail to parse, fail the
//! checksum or disagree with the request are ignored and recomputed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::band::{critical_constants, BandSpec, ConstantRecord, ConstantSet, CriticalConstant, MonteCarloConfig, Shape, Side};
use crate::error::Result;
use crate::model::{BoxRegion, Dof, RegressionFit};

/// Hash of the parts of a fit the pivot distribution depends on.
pub fn geometry_hash(fit: &RegressionFit) -> String {
    let mut h = Sha256::new();
    h.update(fit.basis().to_string().as_bytes());
    h.update(b"|");
    let a = fit.xtx_inv();
    h.update((a.nrows() as u64).to_le_bytes());
    for v in a.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    match fit.dof() {
        Dof::Finite(n) => h.update(n.to_le_bytes()),
        Dof::Infinite => h.update(b"inf"),
    }
    hex::encode(h.finalize())
}

#[derive(Serialize)]
struct KeyFields<'a> {
    alpha: f64,
    side: Side,
    shape: Shape,
    region: &'a BoxRegion,
    draws: usize,
    seed: u64,
    grid_points_per_dim: usize,
    refine_iterations: usize,
    geometry_hash: &'a str,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    geometry_hash: String,
    record: ConstantRecord,
    checksum: String,
}

fn checksum(geometry_hash: &str, record: &ConstantRecord) -> Result<String> {
    let body = serde_json::to_string(&(geometry_hash, record))?;
    Ok(hex::encode(Sha256::digest(body.as_bytes())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
}

#[derive(Debug, Clone)]
pub struct ConstantCache {
    dir: PathBuf,
}

impl ConstantCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(fit: &RegressionFit, spec: &BandSpec, config: &MonteCarloConfig) -> Result<String> {
        let geometry = geometry_hash(fit);
        let fields = KeyFields {
            alpha: spec.alpha,
            side: spec.side,
            shape: spec.shape,
            region: &spec.region,
            draws: config.draws,
            seed: config.seed,
            grid_points_per_dim: config.grid_points_per_dim,
            refine_iterations: config.refine_iterations,
            geometry_hash: &geometry,
        };
        let body = serde_json::to_string(&fields)?;
        Ok(hex::encode(Sha256::digest(body.as_bytes())))
    }

    pub fn entry_path(&self, fit: &RegressionFit, spec: &BandSpec, config: &MonteCarloConfig) -> Result<PathBuf> {
        Ok(self.dir.join(format!("{}.json", Self::key(fit, spec, config)?)))
    }

    /// A cached constant whose every key field matches the request.
    pub fn lookup(&self, fit: &RegressionFit, spec: &BandSpec, config: &MonteCarloConfig) -> Result<Option<CriticalConstant>> {
        let path = self.entry_path(fit, spec, config)?;
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(None);
        };
        let entry: Entry = match serde_json::from_str(&text) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                return Ok(None);
            }
        };
        if checksum(&entry.geometry_hash, &entry.record)? != entry.checksum {
            log::warn!("ignoring cache entry {} with bad checksum", path.display());
            return Ok(None);
        }
        let r = &entry.record;
        let matches = entry.geometry_hash == geometry_hash(fit)
            && r.alpha == spec.alpha
            && r.side == spec.side
            && r.shape == spec.shape
            && r.region == spec.region
            && r.draws == config.draws
            && r.seed == config.seed
            && r.grid_points_per_dim == config.grid_points_per_dim
            && r.refine_iterations == config.refine_iterations;
        if !matches {
            log::warn!("ignoring cache entry {} that does not match its key", path.display());
            return Ok(None);
        }
        match entry.record.into_constant(config.workers) {
            Ok(c) => Ok(Some(c)),
            Err(e) => {
                log::warn!("ignoring invalid cache entry {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    pub fn store(&self, fit: &RegressionFit, c: &CriticalConstant) -> Result<()> {
        let geometry = geometry_hash(fit);
        let record = c.record();
        let entry = Entry {
            checksum: checksum(&geometry, &record)?,
            geometry_hash: geometry,
            record,
        };
        let path = self.entry_path(fit, &c.spec, &c.config)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&entry)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// All three constants, simulated only when any of them is missing.
    pub fn constants(
        &self,
        fit: &RegressionFit,
        region: &BoxRegion,
        shape: Shape,
        alpha: f64,
        config: &MonteCarloConfig,
    ) -> Result<(ConstantSet, CacheOutcome)> {
        let mut found = Vec::with_capacity(3);
        for side in [Side::Upper, Side::Lower, Side::TwoSided] {
            let spec = BandSpec::new(side, shape, alpha, region.clone())?;
            match self.lookup(fit, &spec, config)? {
                Some(c) => found.push(c),
                None => break,
            }
        }
        if let Ok([upper, lower, two_sided]) = <[CriticalConstant; 3]>::try_from(found) {
            return Ok((ConstantSet { upper, lower, two_sided }, CacheOutcome::Hit));
        }
        let set = critical_constants(fit, region, shape, alpha, config)?;
        for c in [&set.upper, &set.lower, &set.two_sided] {
            if let Err(e) = self.store(fit, c) {
                log::warn!("could not write cache entry: {e}");
            }
        }
        Ok((set, CacheOutcome::Miss))
    }
}
