//! Binary layer and model files.
//!
//! Layer file (all integers `u32` and floats `f32`, little-endian):
//!
//! ```text
//! "HSDD" version M N grid_rows grid_cols
//! atoms            M×N
//! bins c_max eta_h
//! homeostasis cdf  M×bins
//! assignment       M×(row, col)
//! grid weights     grid_rows×grid_cols×N
//! ```
//!
//! Model file: `"HSDM" version atoms_side grid_side pool n0_s1 n0_s2`,
//! a `u8` homeostasis flag, the config tag as `u32` length + UTF-8, then the
//! S1 and S2 layer files, each prefixed by its `u64` byte length.

use std::path::Path;

use crate::error::{Error, Result};
use crate::hierarchy::{HsdNetwork, NetworkShape, TopoLayer};
use crate::sparse_layer::{Dictionary, HomeostasisState};
use crate::topology::SomGrid;

pub const LAYER_MAGIC: &[u8; 4] = b"HSDD";
pub const MODEL_MAGIC: &[u8; 4] = b"HSDM";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f32s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        let out: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite value".into()));
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

pub fn layer_to_bytes(layer: &TopoLayer) -> Vec<u8> {
    let d = layer.dictionary();
    let h = layer.homeostasis();
    let g = layer.grid();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(LAYER_MAGIC);
    w.u32(FORMAT_VERSION as usize);
    w.u32(d.atom_count());
    w.u32(d.input_dim());
    w.u32(g.rows());
    w.u32(g.cols());
    w.f32s(d.atoms());
    w.u32(h.bins());
    w.f32s(&[h.c_max(), h.eta_h()]);
    w.f32s(h.cdf());
    for &(r, c) in g.assignment() {
        w.u32(r);
        w.u32(c);
    }
    w.f32s(g.weights());
    w.0
}

fn read_layer(r: &mut Reader<'_>) -> Result<TopoLayer> {
    r.magic(LAYER_MAGIC)?;
    let m = r.u32()?;
    let n = r.u32()?;
    let rows = r.u32()?;
    let cols = r.u32()?;
    if m == 0 || n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format("zero layer dimension".into()));
    }
    let atoms = r.f32s(m * n)?;
    let bins = r.u32()?;
    let c_max = r.f32()?;
    let eta_h = r.f32()?;
    let cdf = r.f32s(m * bins)?;
    let mut assignment = Vec::with_capacity(m);
    for _ in 0..m {
        assignment.push((r.u32()?, r.u32()?));
    }
    let weights = r.f32s(rows * cols * n)?;
    let dict = Dictionary::from_flat_unchecked(m, n, atoms);
    let homeo = HomeostasisState::from_parts(m, bins, c_max, eta_h, cdf)?;
    let grid = SomGrid::from_weights(rows, cols, n, weights)?.with_assignment(assignment)?;
    TopoLayer::new(dict, homeo, grid)
}

pub fn layer_from_bytes(bytes: &[u8]) -> Result<TopoLayer> {
    let mut r = Reader::new(bytes);
    let layer = read_layer(&mut r)?;
    r.finish()?;
    Ok(layer)
}

pub fn network_to_bytes(net: &HsdNetwork) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(FORMAT_VERSION as usize);
    w.u32(net.shape.atoms_side);
    w.u32(net.shape.grid_side);
    w.u32(net.shape.pool);
    w.u32(net.n0_s1);
    w.u32(net.n0_s2);
    w.0.push(net.use_homeostasis as u8);
    let tag = net.tag();
    w.u32(tag.len());
    w.0.extend_from_slice(tag.as_bytes());
    for layer in [net.s1(), net.s2()] {
        let bytes = layer_to_bytes(layer);
        w.0.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        w.0.extend_from_slice(&bytes);
    }
    w.0
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<HsdNetwork> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let shape = NetworkShape {
        atoms_side: r.u32()?,
        grid_side: r.u32()?,
        pool: r.u32()?,
    };
    let n0_s1 = r.u32()?;
    let n0_s2 = r.u32()?;
    let use_homeostasis = match r.take(1)?[0] {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad homeostasis flag {v}"))),
    };
    let tag_len = r.u32()?;
    let tag = std::str::from_utf8(r.take(tag_len)?).map_err(|_| Error::Format("tag is not UTF-8".into()))?;
    if tag != shape.tag() {
        return Err(Error::Format(format!("tag {tag} does not match shape {shape}")));
    }
    let mut layers = Vec::with_capacity(2);
    for _ in 0..2 {
        let len = r.u64()?;
        layers.push(layer_from_bytes(r.take(len)?)?);
    }
    r.finish()?;
    let s2 = layers.pop().unwrap();
    let s1 = layers.pop().unwrap();
    let mut net = HsdNetwork::new(shape, n0_s1, n0_s2, s1, s2)?;
    net.use_homeostasis = use_homeostasis;
    Ok(net)
}

pub fn save_network(net: &HsdNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, network_to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<HsdNetwork> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    network_from_bytes(&bytes)
}
