//! Checkpoints, embedding tables and on-disk data/run directories.
//!
//! Checkpoint layout (little-endian):
//! `"HIFINETC"`, u32 version, u64 config length, config JSON, u64 seed,
//! u32 parameter count, then per parameter u32 name length, name, u64 rows,
//! u64 cols and rows·cols f64 values.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::roadnet::{
    load_network, load_trajectories, write_network, write_trajectories, RoadNetwork, SyntheticBundle, TrajectorySet,
};
use crate::tensor::{Matrix, ParamStore};
use crate::training::LossTrace;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HIFINETC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub const NETWORK_FILE: &str = "network.json";
pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";
pub const PLANTED_FILE: &str = "planted.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRACE_FILE: &str = "loss_trace.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seed: u64,
    pub params: ParamStore,
}

fn load_err(context: &str, detail: impl Into<String>) -> Error {
    Error::Load { context: context.to_string(), detail: detail.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(load_err("checkpoint", format!("truncated while reading {what} at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| load_err("checkpoint", format!("{what} does not fit in memory")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = serde_json::to_vec(&self.config)?;
        let mut out = Vec::with_capacity(64 + config.len() + self.params.numel() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, p) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
            for v in p.value.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(load_err("checkpoint", "not a checkpoint file (bad magic)"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(load_err("checkpoint", format!("unsupported version {version}")));
        }
        let n = r.len("config length")?;
        let config: TrainConfig =
            serde_json::from_slice(r.take(n, "config")?).map_err(|e| load_err("checkpoint config", e.to_string()))?;
        config.validate()?;
        let seed = r.u64("seed")?;
        let count = r.u32("parameter count")?;
        let mut params = ParamStore::new();
        for k in 0..count {
            let n = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(n, "name")?)
                .map_err(|_| load_err("checkpoint", format!("parameter {k} has a non-UTF-8 name")))?
                .to_string();
            let rows = r.len("rows")?;
            let cols = r.len("cols")?;
            let numel =
                rows.checked_mul(cols).ok_or_else(|| load_err("checkpoint", format!("`{name}` shape overflows")))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| load_err("checkpoint", "size overflow"))?, "values")?;
            let data: Vec<f64> =
                raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            if params.contains(&name) {
                return Err(load_err("checkpoint", format!("duplicate parameter `{name}`")));
            }
            params.insert(name, Matrix::from_vec(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(load_err("checkpoint", format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { config, seed, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| load_err(&path.display().to_string(), e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

/// CSV with header `segment_id,e0,…` and 17 significant digits per value.
pub fn write_embeddings(mut w: impl Write, ids: &[usize], emb: &Matrix) -> Result<()> {
    if ids.len() != emb.rows() {
        return Err(Error::Data(format!("{} ids for {} embedding rows", ids.len(), emb.rows())));
    }
    let header: Vec<String> =
        std::iter::once("segment_id".to_string()).chain((0..emb.cols()).map(|j| format!("e{j}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for (r, id) in ids.iter().enumerate() {
        write!(w, "{id}")?;
        for v in emb.row(r) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_embeddings(path: impl AsRef<Path>, ids: &[usize], emb: &Matrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_embeddings(&mut f, ids, emb)?;
    f.flush()?;
    Ok(())
}

pub fn read_embeddings(reader: impl std::io::Read) -> Result<(Vec<usize>, Matrix)> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().transpose()?.ok_or_else(|| load_err("embeddings", "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"segment_id") || cols[1..].iter().enumerate().any(|(j, c)| *c != format!("e{j}")) {
        return Err(load_err("embeddings line 1", "header must be segment_id,e0,e1,..."));
    }
    let d = cols.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = format!("embeddings line {}", k + 2);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(load_err(&ctx, format!("expected {} fields, found {}", d + 1, fields.len())));
        }
        ids.push(fields[0].trim().parse().map_err(|_| load_err(&ctx, "malformed segment id"))?);
        for f in &fields[1..] {
            let v: f64 = f.trim().parse().map_err(|_| load_err(&ctx, format!("malformed value `{f}`")))?;
            if !v.is_finite() {
                return Err(load_err(&ctx, "non-finite value"));
            }
            data.push(v);
        }
    }
    let n = ids.len();
    Ok((ids, Matrix::from_vec(n, d, data)?))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(Vec<usize>, Matrix)> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| load_err(&path.display().to_string(), e.to_string()))?;
    read_embeddings(f)
}

/// Network and trajectories read from a data directory.
#[derive(Clone, Debug)]
pub struct DataBundle {
    pub network: RoadNetwork,
    pub trajectories: TrajectorySet,
}

impl DataBundle {
    /// Per-segment labels; errors when any segment is unlabelled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.network.labels().ok_or_else(|| Error::Data("network has unlabelled segments".into()))
    }
}

pub fn write_bundle(dir: impl AsRef<Path>, b: &SyntheticBundle) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_network(&b.network, dir.join(NETWORK_FILE))?;
    write_trajectories(&b.trajectories, dir.join(TRAJECTORY_FILE))?;
    fs::write(dir.join(PLANTED_FILE), serde_json::to_string_pretty(&b.planted)?)?;
    Ok(())
}

pub fn load_data_dir(dir: impl AsRef<Path>) -> Result<DataBundle> {
    let dir = dir.as_ref();
    let (network, _) = load_network(dir.join(NETWORK_FILE))?;
    let trajectories = load_trajectories(dir.join(TRAJECTORY_FILE))?;
    trajectories.validate_ids(network.n_segments())?;
    Ok(DataBundle { network, trajectories })
}

/// Everything a training run leaves behind.
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub checkpoint: Checkpoint,
    pub trace: LossTrace,
    pub data: DataBundle,
}

pub fn run_paths(dir: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let dir = dir.as_ref();
    (dir.join(CHECKPOINT_FILE), dir.join(TRACE_FILE))
}

/// Writes the checkpoint, loss trace and a copy of the training data.
pub fn save_run(dir: impl AsRef<Path>, run: &RunArtifact) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (ckpt, trace) = run_paths(dir);
    run.checkpoint.save(ckpt)?;
    run.trace.save_csv(trace)?;
    write_network(&run.data.network, dir.join(NETWORK_FILE))?;
    write_trajectories(&run.data.trajectories, dir.join(TRAJECTORY_FILE))?;
    Ok(())
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<RunArtifact> {
    let dir = dir.as_ref();
    let (ckpt, trace) = run_paths(dir);
    let checkpoint = Checkpoint::load(ckpt)?;
    let text = fs::read_to_string(&trace).map_err(|e| load_err(&trace.display().to_string(), e.to_string()))?;
    Ok(RunArtifact { checkpoint, trace: LossTrace::parse_csv(&text)?, data: load_data_dir(dir)? })
}
