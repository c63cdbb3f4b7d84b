//! Binary trajectory dumps.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"CSLTRAJ\0"
//! 8       4     format version (u32, currently 1)
//! 12      4     reserved, zero
//! 16      8     RNG seed (u64)
//! 24      32    SHA-256 of the canonical configuration
//! 56      8     number of trajectories T (u64)
//! 64      8     samples per trajectory N (u64)
//! 72      ...   T blocks, each: t[N], x[N], p[N] as f64
//! ```

use std::io::{self, Read, Write};

use super::langevin::Trajectory;

pub const MAGIC: [u8; 8] = *b"CSLTRAJ\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryHeader {
    pub version: u32,
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub trajectories: u64,
    pub samples: u64,
}

pub fn write_trajectories<W: Write>(
    out: &mut W,
    seed: u64,
    config_hash: [u8; 32],
    trajectories: &[Trajectory],
) -> io::Result<()> {
    let samples = trajectories.first().map_or(0, |t| t.t.len());
    if trajectories
        .iter()
        .any(|t| t.t.len() != samples || t.x.len() != samples || t.p.len() != samples)
    {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "trajectories differ in length"));
    }
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    out.write_all(&config_hash)?;
    out.write_all(&(trajectories.len() as u64).to_le_bytes())?;
    out.write_all(&(samples as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(samples * 24);
    for tr in trajectories {
        buf.clear();
        for column in [&tr.t, &tr.x, &tr.p] {
            for v in column {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_trajectories<R: Read>(r: &mut R) -> io::Result<(TrajectoryHeader, Vec<Trajectory>)> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    if read_array::<8, _>(r)? != MAGIC {
        return Err(bad("not a trajectory file"));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(bad("unsupported trajectory format version"));
    }
    let _reserved = read_array::<4, _>(r)?;
    let header = TrajectoryHeader {
        version,
        seed: u64::from_le_bytes(read_array(r)?),
        config_hash: read_array(r)?,
        trajectories: u64::from_le_bytes(read_array(r)?),
        samples: u64::from_le_bytes(read_array(r)?),
    };
    let n = header.samples as usize;
    let column = |r: &mut R| -> io::Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(read_array(r)?))).collect()
    };
    let mut out = Vec::with_capacity(header.trajectories as usize);
    for _ in 0..header.trajectories {
        let t = column(r)?;
        let x = column(r)?;
        let p = column(r)?;
        out.push(Trajectory { t, x, p });
    }
    Ok((header, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let trs = vec![
            Trajectory {
                t: vec![0.0, 0.5],
                x: vec![1.0, -2.0],
                p: vec![3.0, 4.5],
            },
            Trajectory {
                t: vec![0.0, 0.5],
                x: vec![0.25, f64::MIN_POSITIVE],
                p: vec![-0.0, 1e300],
            },
        ];
        let mut buf = Vec::new();
        write_trajectories(&mut buf, 42, [7u8; 32], &trs).unwrap();
        assert_eq!(buf.len(), 72 + 2 * 3 * 2 * 8);
        assert_eq!(&buf[..8], b"CSLTRAJ\0");
        let (h, back) = read_trajectories(&mut buf.as_slice()).unwrap();
        assert_eq!(h.seed, 42);
        assert_eq!(h.samples, 2);
        assert_eq!(back, trs);
    }

    #[test]
    fn rejects_foreign_bytes() {
        let junk = [0u8; 80];
        assert!(read_trajectories(&mut junk.as_slice()).is_err());
    }
}
