//! Binary dataset and network checkpoint files.
//!
//! Both formats are little-endian and start with a 4-byte magic and a `u32`
//! version. Dataset layout:
//!
//! ```text
//! "PPDE" version:u32 family:u8 p:u32 s:u32 k:u32 sigma:f64 mu:f64 r:f64
//! mesh_n:u32 dofs:u32 count:u64 seed:u64
//! count x (p x f64 parameters, dofs x f64 coefficients)
//! ```
//!
//! Checkpoint layout:
//!
//! ```text
//! "PNET" version:u32 alpha:f64 layers:u32 widths:(layers+1) x u32
//! per layer: rows x cols weights (row-major) f64, rows bias f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use ppde_core::nn::Layer;
use ppde_core::{Dataset, FamilyKind, Network, ParametricFamily, Record};

use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"PPDE";
pub const DATASET_VERSION: u32 = 1;
/// Size of the dataset header in bytes.
pub const DATASET_HEADER_LEN: u64 = 69;

pub const NETWORK_MAGIC: [u8; 4] = *b"PNET";
pub const NETWORK_VERSION: u32 = 1;

/// Everything in a dataset file except the records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub family: ParametricFamily,
    pub mesh_n: usize,
    pub dofs: usize,
    pub count: u64,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn of(dataset: &Dataset) -> Self {
        Self {
            family: dataset.family,
            mesh_n: dataset.mesh_n,
            dofs: dataset.dofs,
            count: dataset.len() as u64,
            seed: dataset.seed,
        }
    }

    pub fn p(&self) -> usize {
        self.family.p
    }

    /// Expected file size in bytes.
    pub fn file_len(&self) -> u64 {
        DATASET_HEADER_LEN + self.count * 8 * (self.family.p + self.dofs) as u64
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format {
        offset: 0,
        reason: format!("{what} = {v} does not fit in u32"),
    })
}

/// Reader that tracks the byte offset for error messages.
struct FieldReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> FieldReader<R> {
    fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    fn fail<T>(&self, offset: u64, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset,
            reason: reason.into(),
        })
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                self.fail(self.offset, format!("file truncated while reading {what}"))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, what)?;
        Ok(b)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.array(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.array(what).map(u64::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.array(what).map(f64::from_le_bytes)
    }

    fn f64s(&mut self, out: &mut Vec<f64>, count: usize, bytes: &mut Vec<u8>, what: &str) -> Result<()> {
        bytes.resize(count * 8, 0);
        self.fill(bytes, what)?;
        out.clear();
        out.extend(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))),
        );
        Ok(())
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let m = self.array::<4>("magic")?;
        if m != expected {
            return self.fail(0, format!("bad magic {m:?}, expected {:?}", expected));
        }
        Ok(())
    }

    fn version(&mut self, expected: u32) -> Result<()> {
        let at = self.offset;
        let v = self.u32("version")?;
        if v != expected {
            return self.fail(at, format!("unsupported version {v}"));
        }
        Ok(())
    }

    /// Fails unless the stream is exhausted.
    fn finish(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        loop {
            match self.inner.read(&mut b) {
                Ok(0) => return Ok(()),
                Ok(_) => return self.fail(self.offset, "trailing bytes after last record"),
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}

pub fn write_dataset_header<W: Write>(w: &mut W, h: &DatasetHeader) -> Result<()> {
    let f = &h.family;
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&[f.kind.code()])?;
    for v in [f.p, f.s, f.k] {
        w.write_all(&to_u32(v, "family dimension")?.to_le_bytes())?;
    }
    for v in [f.sigma, f.mu, f.r] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&to_u32(h.mesh_n, "mesh_n")?.to_le_bytes())?;
    w.write_all(&to_u32(h.dofs, "dofs")?.to_le_bytes())?;
    w.write_all(&h.count.to_le_bytes())?;
    w.write_all(&h.seed.to_le_bytes())?;
    Ok(())
}

pub fn write_dataset<W: Write>(w: &mut W, dataset: &Dataset) -> Result<()> {
    let header = DatasetHeader::of(dataset);
    for (i, r) in dataset.records.iter().enumerate() {
        if r.y.len() != header.p() || r.u.len() != header.dofs {
            return Err(ppde_core::Error::InvalidArgument(format!(
                "record {i} does not match the dataset dimensions"
            ))
            .into());
        }
    }
    write_dataset_header(w, &header)?;
    let mut buf = Vec::with_capacity(8 * (header.p() + header.dofs));
    for r in &dataset.records {
        buf.clear();
        for v in r.y.iter().chain(&r.u) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_dataset(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

fn parse_header<R: Read>(r: &mut FieldReader<R>) -> Result<DatasetHeader> {
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let family_at = r.offset;
    let code = r.u8("family tag")?;
    let Some(kind) = FamilyKind::from_code(code) else {
        return r.fail(family_at, format!("unknown family tag {code}"));
    };
    let p = r.u32("p")? as usize;
    let s = r.u32("s")? as usize;
    let k = r.u32("k")? as usize;
    let sigma = r.f64("sigma")?;
    let mu = r.f64("mu")?;
    let rad = r.f64("r")?;
    let family = ParametricFamily {
        kind,
        p,
        sigma,
        mu,
        r: rad,
        s,
        k,
    };
    if let Err(e) = family.validate() {
        return r.fail(family_at, format!("invalid family: {e}"));
    }
    let mesh_at = r.offset;
    let mesh_n = r.u32("mesh_n")? as usize;
    let dofs = r.u32("dofs")? as usize;
    if mesh_n < 3 || mesh_n.checked_mul(mesh_n) != Some(dofs) {
        return r.fail(mesh_at, format!("mesh_n = {mesh_n} inconsistent with {dofs} dofs"));
    }
    let count = r.u64("count")?;
    let seed = r.u64("seed")?;
    Ok(DatasetHeader {
        family,
        mesh_n,
        dofs,
        count,
        seed,
    })
}

/// Reads only the header of a dataset stream.
pub fn read_dataset_header<R: Read>(r: R) -> Result<DatasetHeader> {
    parse_header(&mut FieldReader::new(r))
}

/// Reads the header of a dataset file without touching the records.
pub fn inspect_dataset(path: impl AsRef<Path>) -> Result<DatasetHeader> {
    read_dataset_header(open(path.as_ref())?)
}

/// Reads a complete dataset; any truncation or trailing data is an error.
pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut r = FieldReader::new(r);
    let h = parse_header(&mut r)?;
    // do not trust `count` for the allocation before the data is seen
    let mut records = Vec::with_capacity(h.count.min(1 << 12) as usize);
    let mut bytes = Vec::new();
    for i in 0..h.count {
        let mut y = Vec::new();
        let mut u = Vec::new();
        r.f64s(&mut y, h.p(), &mut bytes, &format!("parameters of record {i}"))?;
        r.f64s(&mut u, h.dofs, &mut bytes, &format!("solution of record {i}"))?;
        records.push(Record { y, u });
    }
    r.finish()?;
    Ok(Dataset {
        family: h.family,
        mesh_n: h.mesh_n,
        dofs: h.dofs,
        seed: h.seed,
        records,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(open(path.as_ref())?)
}

pub fn write_network<W: Write>(w: &mut W, net: &Network) -> Result<()> {
    w.write_all(&NETWORK_MAGIC)?;
    w.write_all(&NETWORK_VERSION.to_le_bytes())?;
    w.write_all(&net.alpha().to_le_bytes())?;
    w.write_all(&to_u32(net.depth(), "layer count")?.to_le_bytes())?;
    for width in net.architecture() {
        w.write_all(&to_u32(width, "layer width")?.to_le_bytes())?;
    }
    for layer in net.layers() {
        for v in layer.weights.iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_network(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_network(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn read_network<R: Read>(r: R) -> Result<Network> {
    let mut r = FieldReader::new(r);
    r.magic(NETWORK_MAGIC)?;
    r.version(NETWORK_VERSION)?;
    let alpha_at = r.offset;
    let alpha = r.f64("alpha")?;
    let depth_at = r.offset;
    let depth = r.u32("layer count")? as usize;
    if depth == 0 {
        return r.fail(depth_at, "network without layers");
    }
    let mut arch = Vec::with_capacity(depth.min(1 << 10) + 1);
    for _ in 0..=depth {
        let at = r.offset;
        let w = r.u32("layer width")? as usize;
        if w == 0 {
            return r.fail(at, "zero layer width");
        }
        arch.push(w);
    }
    let mut layers = Vec::with_capacity(depth.min(1 << 10));
    let mut bytes = Vec::new();
    for (l, pair) in arch.windows(2).enumerate() {
        let (cols, rows) = (pair[0], pair[1]);
        let mut weights = Vec::new();
        let mut bias = Vec::new();
        r.f64s(&mut weights, rows * cols, &mut bytes, &format!("weights of layer {l}"))?;
        r.f64s(&mut bias, rows, &mut bytes, &format!("bias of layer {l}"))?;
        layers.push(Layer::new(rows, cols, weights, bias)?);
    }
    r.finish()?;
    Network::new(layers, alpha).or_else(|e| r.fail(alpha_at, format!("invalid network: {e}")))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    read_network(open(path.as_ref())?)
}
