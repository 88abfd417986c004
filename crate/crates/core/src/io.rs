//! Columnar binary files and CSV for bundles, fields and trajectories.
//!
//! Binary layout: the magic `DSDEBIN1`, a little-endian `u32` kind tag, a
//! little-endian `u32` header length, a JSON header, then the body as
//! little-endian `f64` columns in the order the header lists them.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_flow::PathBundle;
use crate::regularization::FieldGrid;
use crate::sde::{BlowUp, MildTrajectory, RecordedNoise};

pub const MAGIC: &[u8; 8] = b"DSDEBIN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u32)]
pub enum Kind {
    PathBundle = 1,
    FieldGrid = 2,
    Trajectory = 3,
}

impl Kind {
    fn from_u32(v: u32) -> Result<Kind> {
        match v {
            1 => Ok(Kind::PathBundle),
            2 => Ok(Kind::FieldGrid),
            3 => Ok(Kind::Trajectory),
            _ => Err(Error::Format(format!("unknown kind tag {v}"))),
        }
    }
}

/// Column names and lengths of the body, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Column {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<H> {
    columns: Vec<Column>,
    #[serde(flatten)]
    header: H,
}

fn encode<H: Serialize>(kind: Kind, header: H, columns: &[(&str, &[f64])]) -> Result<Vec<u8>> {
    let env = Envelope {
        columns: columns.iter().map(|(n, c)| Column { name: n.to_string(), len: c.len() }).collect(),
        header,
    };
    let json = serde_json::to_vec(&env).map_err(|e| Error::Format(e.to_string()))?;
    let body: usize = columns.iter().map(|(_, c)| c.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?.to_le_bytes());
    out.extend_from_slice(&json);
    for (_, c) in columns {
        for v in *c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode<H: DeserializeOwned>(bytes: &[u8], kind: Kind) -> Result<(H, Vec<Vec<f64>>)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing DSDEBIN1 magic".into()));
    }
    let tag = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let found = Kind::from_u32(tag)?;
    if found != kind {
        return Err(Error::Format(format!("expected {kind:?}, file holds {found:?}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let json = bytes.get(16..16 + hlen).ok_or_else(|| Error::Format("truncated header".into()))?;
    let env: Envelope<H> = serde_json::from_slice(json).map_err(|e| Error::Format(e.to_string()))?;
    let body = &bytes[16 + hlen..];
    let total: usize = env.columns.iter().map(|c| c.len).sum();
    if body.len() != 8 * total {
        return Err(Error::Format(format!("body has {} bytes, header declares {}", body.len(), 8 * total)));
    }
    let mut cols = Vec::with_capacity(env.columns.len());
    let mut off = 0;
    for c in &env.columns {
        let col = body[off..off + 8 * c.len]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        off += 8 * c.len;
        cols.push(col);
    }
    Ok((env.header, cols))
}

fn take(cols: &mut Vec<Vec<f64>>, n: usize) -> Result<Vec<Vec<f64>>> {
    if cols.len() != n {
        return Err(Error::Format(format!("expected {n} columns, found {}", cols.len())));
    }
    Ok(std::mem::take(cols))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    times: Vec<f64>,
    n_paths: usize,
    m: usize,
    d: usize,
    k: usize,
    seed: u64,
    stream: String,
}

pub fn bundle_to_bytes(b: &PathBundle) -> Result<Vec<u8>> {
    let header = BundleHeader { times: b.times.clone(), n_paths: b.n_paths, m: b.m, d: b.d, k: b.k, seed: b.seed, stream: b.stream.clone() };
    encode(Kind::PathBundle, header, &[("states", &b.states), ("dw", &b.dw), ("conv", &b.conv)])
}

pub fn bundle_from_bytes(bytes: &[u8]) -> Result<PathBundle> {
    let (h, mut cols): (BundleHeader, _) = decode(bytes, Kind::PathBundle)?;
    let mut c = take(&mut cols, 3)?.into_iter();
    let (states, dw, conv) = (c.next().unwrap(), c.next().unwrap(), c.next().unwrap());
    let n = h.times.len();
    let dim = h.m + h.d;
    if states.len() != h.n_paths * n * dim || dw.len() != h.n_paths * (n - 1) * h.k || conv.len() != h.n_paths * (n - 1) * dim {
        return Err(Error::Format("bundle column lengths do not match the header".into()));
    }
    Ok(PathBundle { times: h.times, n_paths: h.n_paths, m: h.m, d: h.d, k: h.k, states, dw, conv, seed: h.seed, stream: h.stream })
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    m: usize,
    d: usize,
    times: Vec<f64>,
    nodes: Vec<Vec<f64>>,
    description: String,
}

pub fn field_to_bytes(f: &FieldGrid, description: &str) -> Result<Vec<u8>> {
    let header = FieldHeader { m: f.m, d: f.d, times: f.times.clone(), nodes: f.nodes.clone(), description: description.to_string() };
    encode(Kind::FieldGrid, header, &[("values", &f.values)])
}

/// The field and its description.
pub fn field_from_bytes(bytes: &[u8]) -> Result<(FieldGrid, String)> {
    let (h, mut cols): (FieldHeader, _) = decode(bytes, Kind::FieldGrid)?;
    let values = take(&mut cols, 1)?.pop().unwrap();
    let points: usize = h.nodes.iter().map(Vec::len).product();
    if h.nodes.len() != h.m + h.d || values.len() != h.times.len() * points * h.d {
        return Err(Error::Format("field column length does not match the header".into()));
    }
    Ok((FieldGrid { m: h.m, d: h.d, times: h.times, nodes: h.nodes, values }, h.description))
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    m: usize,
    d: usize,
    k: usize,
    times: Vec<f64>,
    blow_up: Option<BlowUp>,
}

pub fn trajectory_to_bytes(t: &MildTrajectory) -> Result<Vec<u8>> {
    let header = TrajectoryHeader { m: t.m, d: t.d, k: t.noise.k, times: t.noise.times.clone(), blow_up: t.blow_up };
    encode(Kind::Trajectory, header, &[("states", &t.states), ("dw", &t.noise.dw), ("conv", &t.noise.conv)])
}

pub fn trajectory_from_bytes(bytes: &[u8]) -> Result<MildTrajectory> {
    let (h, mut cols): (TrajectoryHeader, _) = decode(bytes, Kind::Trajectory)?;
    let mut c = take(&mut cols, 3)?.into_iter();
    let (states, dw, conv) = (c.next().unwrap(), c.next().unwrap(), c.next().unwrap());
    let dim = h.m + h.d;
    let n = h.times.len() - 1;
    if dw.len() != n * h.k || conv.len() != n * dim || states.len() % dim != 0 || states.len() > (n + 1) * dim {
        return Err(Error::Format("trajectory column lengths do not match the header".into()));
    }
    let noise = RecordedNoise { times: h.times, k: h.k, dim, dw, conv };
    Ok(MildTrajectory { m: h.m, d: h.d, states, noise, blow_up: h.blow_up })
}

pub const BUNDLE_CSV_HEADER: &str = "path,step,t,component,value";

/// Long-format CSV of the states of a bundle.
pub fn bundle_to_csv(b: &PathBundle) -> String {
    let mut out = String::from(BUNDLE_CSV_HEADER);
    out.push('\n');
    for p in 0..b.n_paths {
        for (i, t) in b.times.iter().enumerate() {
            for (c, v) in b.state(p, i).iter().enumerate() {
                out.push_str(&format!("{p},{i},{t},{c},{v}\n"));
            }
        }
    }
    out
}

/// Long-format CSV of a field: `t, z0, …, component, value`.
pub fn field_to_csv(f: &FieldGrid) -> String {
    let dim = f.dim();
    let mut out = String::from("t");
    for a in 0..dim {
        out.push_str(&format!(",z{a}"));
    }
    out.push_str(",component,value\n");
    let mut z = vec![0.0; dim];
    for (ti, t) in f.times.iter().enumerate() {
        let slice = f.slice(ti);
        for p in 0..f.n_points() {
            f.point(p, &mut z);
            for c in 0..f.d {
                out.push_str(&t.to_string());
                for v in &z {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(&format!(",{c},{}\n", slice[p * f.d + c]));
            }
        }
    }
    out
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_flow::sample_linear;
    use crate::model::{DriftSpec, SpectralModel};
    use crate::regularization::GridSpec;
    use crate::sde::{integrate_mild, Noise};
    use std::sync::Arc;

    #[test]
    fn bundle_round_trip() {
        let model = SpectralModel::kinetic_scalar();
        let b = sample_linear(&model, 0.0, 1.0, &[0.1, 0.2], 3, 5, 7).unwrap();
        let bytes = bundle_to_bytes(&b).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bundle_from_bytes(&bytes).unwrap(), b);
        assert!(field_from_bytes(&bytes).is_err());
    }

    #[test]
    fn field_round_trip() {
        let spec = GridSpec::uniform(2, -1.0, 1.0, 4, 3, 1.0);
        let mut f = FieldGrid::zeros(&spec, 1, 1).unwrap();
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        let (g, desc) = field_from_bytes(&field_to_bytes(&f, "test field").unwrap()).unwrap();
        assert_eq!(g.values, f.values);
        assert_eq!(g.nodes, f.nodes);
        assert_eq!(desc, "test field");
        let csv = field_to_csv(&f);
        assert_eq!(csv.lines().count(), 1 + f.values.len());
    }

    #[test]
    fn trajectory_round_trip_with_blow_up() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftSpec::new("cube", 1, 1, Arc::new(|_, z: &[f64], o: &mut [f64]| o[0] = z[1].powi(3)));
        let t = integrate_mild(&model, &b, &[0.0, 3.0], 1.0, 32, Noise::Seed { seed: 1, index: 0 }).unwrap();
        assert!(t.blow_up.is_some());
        assert_eq!(trajectory_from_bytes(&trajectory_to_bytes(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let model = SpectralModel::kinetic_scalar();
        let b = sample_linear(&model, 0.0, 1.0, &[0.0, 0.0], 1, 2, 1).unwrap();
        let mut bytes = bundle_to_bytes(&b).unwrap();
        bytes.pop();
        assert!(matches!(bundle_from_bytes(&bytes), Err(Error::Format(_))));
        assert!(bundle_from_bytes(b"NOTMAGIC00000000").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("out.csv");
        write_atomic(&p, b"a").unwrap();
        write_atomic(&p, b"b").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"b");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
