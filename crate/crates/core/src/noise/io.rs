//! Ensemble dumps.
//!
//! Binary layout, all little-endian:
//!
//! | field   | type |
//! |---------|------|
//! | d       | u64  |
//! | M       | u64  |
//! | N       | u64  |
//! | horizon | f64  |
//! | seed    | u64  |
//!
//! followed by `N·(M+1)·d` f64 values, row-major over (particle, node, coordinate).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path as FsPath;

use crate::error::{invalid, Result};
use crate::measures::{Ensemble, Path, TimeGrid};

pub fn write_binary<W: Write>(ensemble: &Ensemble, mut w: W) -> Result<()> {
    let grid = ensemble.grid();
    w.write_all(&(ensemble.dim() as u64).to_le_bytes())?;
    w.write_all(&(grid.steps() as u64).to_le_bytes())?;
    w.write_all(&(ensemble.len() as u64).to_le_bytes())?;
    w.write_all(&grid.horizon().to_le_bytes())?;
    w.write_all(&ensemble.seed().to_le_bytes())?;
    for p in ensemble.members() {
        for v in p.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Ensemble> {
    let mut buf = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut buf)?;
        Ok(buf)
    };
    let d = u64::from_le_bytes(next(&mut r)?) as usize;
    let m = u64::from_le_bytes(next(&mut r)?) as usize;
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let horizon = f64::from_le_bytes(next(&mut r)?);
    let seed = u64::from_le_bytes(next(&mut r)?);
    if d == 0 || n == 0 || m == 0 {
        return Err(invalid("ensemble header has a zero dimension"));
    }
    let grid = TimeGrid::new(horizon, m)?;
    let per = (m + 1) * d;
    let mut members = Vec::with_capacity(n);
    let mut bytes = vec![0u8; per * 8];
    for _ in 0..n {
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        members.push(Path::new(grid, d, values)?);
    }
    Ensemble::new(members, seed)
}

pub fn write_binary_file(ensemble: &Ensemble, path: &FsPath) -> Result<()> {
    write_binary(ensemble, BufWriter::new(File::create(path)?))
}

pub fn read_binary_file(path: &FsPath) -> Result<Ensemble> {
    read_binary(BufReader::new(File::open(path)?))
}

/// Long-format CSV: `particle,node,t,x0,..,x{d-1}`.
pub fn write_csv<W: Write>(ensemble: &Ensemble, mut w: W) -> Result<()> {
    let grid = ensemble.grid();
    let d = ensemble.dim();
    write!(w, "particle,node,t")?;
    for j in 0..d {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for (i, p) in ensemble.members().iter().enumerate() {
        for k in 0..grid.nodes() {
            write!(w, "{i},{k},{:?}", grid.time(k))?;
            for v in p.point(k) {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_paths, InitialLaw, NoiseProcess, NoiseSpec};

    #[test]
    fn binary_round_trip_is_exact() {
        let spec = NoiseSpec::new(InitialLaw::Point(vec![0.5, 0.0]), NoiseProcess::Brownian { sigma: 0.3 }).unwrap();
        let e = sample_paths(&spec, TimeGrid::new(2.0, 16).unwrap(), 7, 12).unwrap();
        let mut bytes = Vec::new();
        write_binary(&e, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 40 + 7 * 17 * 2 * 8);
        assert_eq!(read_binary(bytes.as_slice()).unwrap(), e);
        assert!(read_binary(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let spec = NoiseSpec::new(InitialLaw::Point(vec![1.0]), NoiseProcess::Zero).unwrap();
        let e = sample_paths(&spec, TimeGrid::new(1.0, 4).unwrap(), 3, 0).unwrap();
        let mut out = Vec::new();
        write_csv(&e, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        assert!(text.starts_with("particle,node,t,x0\n0,0,0.0,1.0\n"));
    }
}
