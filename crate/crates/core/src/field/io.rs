//! Grid dumps: little-endian `f64` values (node-major) in a `.bin` file with a
//! JSON sidecar, or a CSV table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Grid, GridField, NodeClass};
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub h: f64,
    pub origin: Point,
    pub dims: [usize; 3],
    pub components: usize,
    pub level: u8,
    pub start: [i64; 3],
    /// Node classes as `(class, run length)` in node order.
    pub mask_runs: Vec<(NodeClass, usize)>,
}

fn runs(mask: &[NodeClass]) -> Vec<(NodeClass, usize)> {
    let mut out: Vec<(NodeClass, usize)> = Vec::new();
    for &c in mask {
        match out.last_mut() {
            Some((k, r)) if *k == c => *r += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<base>.bin` and `<base>.json`; returns both paths.
pub fn write_binary(f: &GridField, base: &Path) -> Result<(PathBuf, PathBuf)> {
    let bin = with_ext(base, ".bin");
    let json = with_ext(base, ".json");
    let mut w = BufWriter::new(File::create(&bin)?);
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let side = Sidecar {
        n: f.grid.n,
        h: f.grid.h(),
        origin: f.grid.origin(),
        dims: f.grid.dims,
        components: f.ncomp,
        level: f.grid.level,
        start: f.grid.start,
        mask_runs: runs(&f.mask),
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(&json)?), &side)?;
    Ok((bin, json))
}

/// Reads a dump given either its sidecar or its base path.
pub fn read_binary(path: &Path) -> Result<GridField> {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let side: Sidecar = serde_json::from_reader(BufReader::new(File::open(with_ext(&base, ".json"))?))?;
    let grid = Grid { n: side.n, level: side.level, start: side.start, dims: side.dims };
    if (grid.h() - side.h).abs() > 0.0 {
        return Err(Error::GridMismatch(format!("sidecar spacing {} does not match level {}", side.h, side.level)));
    }
    let mut mask = Vec::with_capacity(grid.len());
    for (c, r) in &side.mask_runs {
        mask.extend(std::iter::repeat_n(*c, *r));
    }
    if mask.len() != grid.len() {
        return Err(Error::GridMismatch(format!("mask has {} nodes, grid {}", mask.len(), grid.len())));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(with_ext(&base, ".bin"))?).read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * side.components * 8 {
        return Err(Error::GridMismatch(format!("value file has {} bytes, expected {}", bytes.len(), grid.len() * side.components * 8)));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(GridField { grid, ncomp: side.components, values, mask: Arc::new(mask) })
}

/// One row per node: coordinates, class, components.
pub fn write_csv<W: Write>(f: &GridField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = f.grid.n;
    let mut header: Vec<String> = ["x", "y", "z"][..n].iter().map(|s| s.to_string()).collect();
    header.push("class".into());
    header.extend((0..f.ncomp).map(|c| format!("v{c}")));
    w.write_record(&header)?;
    for i in 0..f.grid.len() {
        let p = f.grid.point(i);
        let mut rec: Vec<String> = p[..n].iter().map(|x| format!("{x:.17e}")).collect();
        rec.push(format!("{:?}", f.mask[i]).to_lowercase());
        rec.extend(f.at(i).iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
