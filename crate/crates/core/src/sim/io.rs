//! Flat-file exports: statistic CSV, JSON manifest, raw `SSPD` snapshot dump.
//!
//! `SSPD` layout, all little-endian: magic `b"SSPD"`, `u32` version, `u64` n,
//! `u64` n_snapshots, `f64` dx, `f64` dt, then for each dumped path its
//! snapshots in time order, each `n` `f64` values. The path count is implied
//! by the file length.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::estimate::{
    estimate_holder, estimate_mean, estimate_moments, estimate_spatial_sup, estimate_tail, estimate_variance, Site,
};
use super::{AbortedPath, PathEnsemble, SimConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SSPD";
const SSPD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8 + 8;

/// One estimated statistic; `param` is `p`, `z`, `R` or the lag, as `statistic` dictates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub t: f64,
    pub statistic: String,
    pub param: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub config: SimConfig,
    pub seed: u64,
    pub live_paths: usize,
    pub aborted: Vec<AbortedPath>,
    /// Clipping at 0 perturbs moments at the grid scale.
    pub clipped: bool,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(ens: &PathEnsemble, files: Vec<String>) -> Self {
        Manifest {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: ens.config.clone(),
            seed: ens.config.seed,
            live_paths: ens.live_paths(),
            aborted: ens.aborted.clone(),
            clipped: ens.config.clip,
            files,
        }
    }
}

/// Every statistic of the ensemble as CSV rows: mean, variance, moments, tail
/// frequencies, sup means and mean squared increments at each snapshot.
pub fn summary_rows(ens: &PathEnsemble, ps: &[f64], zs: &[f64], site: Site) -> Result<Vec<StatRow>> {
    let mut rows = Vec::new();
    let row = |t, statistic: &str, param, value, se| StatRow { t, statistic: statistic.into(), param, value, se };
    for m in estimate_mean(ens, site)? {
        rows.push(row(m.t, "mean", 1.0, m.mean, m.se));
    }
    for m in estimate_variance(ens, site)? {
        rows.push(row(m.t, "variance", 2.0, m.mean, m.se));
    }
    if !ps.is_empty() {
        for m in estimate_moments(ens, ps, site)? {
            rows.push(row(m.t, "moment", m.p, m.value, m.se));
        }
    }
    for s in &ens.snapshots {
        if !zs.is_empty() {
            for r in estimate_tail(ens, s.t, zs)? {
                let se = (r.frequency * (1.0 - r.frequency) / r.n as f64).sqrt();
                rows.push(row(s.t, if r.censored { "tail-censored" } else { "tail" }, r.z, r.frequency, se));
            }
        }
        if !ens.config.sup_radii.is_empty() {
            for r in estimate_spatial_sup(ens, s.t)? {
                rows.push(row(s.t, "sup-mean", r.r, r.mean, r.se));
            }
        }
        for (lag, v) in ens.lags.iter().zip(&s.increments) {
            let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
            rows.push(row(s.t, "increment", *lag as f64 * ens.dx, m, f64::NAN));
        }
        if let Ok(h) = estimate_holder(ens, s.t) {
            rows.push(row(s.t, "holder-eta", f64::NAN, h.eta, h.slope_se / 2.0));
        }
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, rows: &[StatRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let s = serde_json::to_string_pretty(manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SspdDump {
    pub version: u32,
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    /// `[path][snapshot][cell]`.
    pub fields: Vec<Vec<Vec<f64>>>,
}

/// Writes the ensemble's raw snapshot fields.
pub fn write_sspd(path: &Path, ens: &PathEnsemble) -> Result<()> {
    let mut out = Vec::with_capacity(HEADER_LEN + ens.raw.len() * ens.snapshots.len() * ens.config.n * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SSPD_VERSION.to_le_bytes());
    out.extend_from_slice(&(ens.config.n as u64).to_le_bytes());
    out.extend_from_slice(&(ens.snapshots.len() as u64).to_le_bytes());
    out.extend_from_slice(&ens.dx.to_le_bytes());
    out.extend_from_slice(&ens.config.dt.to_le_bytes());
    for field in ens.raw.iter().flatten().flatten() {
        out.extend_from_slice(&field.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_sspd(path: &Path) -> Result<SspdDump> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Io("not an SSPD file".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != SSPD_VERSION {
        return Err(Error::Io(format!("unsupported SSPD version {version}")));
    }
    let n = u64_at(8) as usize;
    let snaps = u64_at(16) as usize;
    let (dx, dt) = (f64_at(24), f64_at(32));
    let body = bytes.len() - HEADER_LEN;
    let per_path = n * snaps * 8;
    if per_path == 0 || body % per_path != 0 {
        return Err(Error::Io(format!("SSPD body of {body} bytes is not a whole number of paths")));
    }
    let fields = (0..body / per_path)
        .map(|p| {
            (0..snaps)
                .map(|s| (0..n).map(|j| f64_at(HEADER_LEN + ((p * snaps + s) * n + j) * 8)).collect())
                .collect()
        })
        .collect();
    Ok(SspdDump { version, n, dx, dt, fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::CoefficientSpec;
    use crate::sim::simulate;

    #[test]
    fn sspd_round_trip_and_outputs() {
        let mut c = crate::sim::tests::small(CoefficientSpec { family: "constant".into(), c: Some(0.5), ..Default::default() });
        c.paths = 6;
        c.batches = 3;
        let e = simulate(&c).unwrap();
        let dir = std::env::temp_dir().join(format!("sspd-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let f = dir.join("raw.sspd");
        write_sspd(&f, &e).unwrap();
        let d = read_sspd(&f).unwrap();
        assert_eq!((d.n, d.dx, d.dt), (64, e.dx, c.dt));
        assert_eq!(d.fields, e.raw);
        assert_eq!(d.fields[0][1][32], e.snapshots[1].center[0]);

        let rows = summary_rows(&e, &[2.0], &[0.0, 1.0], Site::Center).unwrap();
        assert!(rows.iter().any(|r| r.statistic == "variance"));
        write_csv(&dir.join("stats.csv"), &rows).unwrap();
        let text = std::fs::read_to_string(dir.join("stats.csv")).unwrap();
        assert!(text.starts_with("t,statistic,param,value,se\n"));
        let m = Manifest::new(&e, vec!["stats.csv".into()]);
        write_manifest(&dir.join("manifest.json"), &m).unwrap();
        let back: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back, m);
        std::fs::write(&f, b"nope").unwrap();
        assert!(read_sspd(&f).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
