//! Persistent banks of Gaussian draws, shared across many set evaluations.

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;

use super::{dot, kahan, stream, Estimate, STREAMS};
use crate::error::{Error, Result};
use crate::metric::PointSet;

const MAGIC: &[u8; 8] = b"CHNBANK1";

/// `rows` draws of a standard Gaussian vector of length `cols`. Row `d` is
/// the same vector [`super::estimate_g`] uses for draw `d` with this seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBank {
    seed: u64,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleBank {
    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Self {
        let chunks: Vec<Vec<f64>> = (0..STREAMS)
            .into_par_iter()
            .map(|c| {
                let (lo, hi) = (c * rows / STREAMS, (c + 1) * rows / STREAMS);
                let mut rng = stream(seed, c);
                (0..(hi - lo) * cols).map(|_| rng.sample(StandardNormal)).collect()
            })
            .collect();
        SampleBank {
            seed,
            rows,
            cols,
            data: chunks.concat(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.data[d * self.cols..(d + 1) * self.cols]
    }

    /// `⟨t, g_d⟩` for every point and draw.
    pub fn project(&self, set: &PointSet) -> Result<Projections> {
        if set.dim() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: set.dim(),
            });
        }
        let values = (0..set.card())
            .into_par_iter()
            .map(|t| (0..self.rows).map(|d| dot(set.point(t), self.row(d))).collect())
            .collect();
        Ok(Projections {
            values,
            seed: self.seed,
        })
    }

    /// Header (magic, seed, rows, cols) then little-endian `f64` data.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a sample bank file".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let seed = next(r)?;
        let rows = next(r)? as usize;
        let cols = next(r)? as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Parse("sample bank shape overflows".into()))?;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SampleBank { seed, rows, cols, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Values `⟨t, g_d⟩` per point `t` and draw `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projections {
    values: Vec<Vec<f64>>,
    seed: u64,
}

impl Projections {
    pub fn draws(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Per-draw `max_{t ∈ ids} ⟨t, g_d⟩`.
    pub fn sup_draws(&self, ids: &[usize]) -> Vec<f64> {
        (0..self.draws())
            .map(|d| ids.iter().map(|&t| self.values[t][d]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn sup_estimate(&self, ids: &[usize]) -> Estimate {
        Estimate::from_samples(&self.sup_draws(ids), self.seed)
    }

    pub fn sup_mean(&self, ids: &[usize]) -> f64 {
        kahan(self.sup_draws(ids).into_iter()) / self.draws() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_agreement() {
        let bank = SampleBank::gaussian(300, 3, 5);
        let mut buf = Vec::new();
        bank.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 300 * 3 * 8);
        let back = SampleBank::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, bank);
        let set = PointSet::from_rows(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.5]]).unwrap();
        let via_bank = bank.project(&set).unwrap().sup_estimate(&set.ids());
        let direct = super::super::estimate_g(&set, 300, 5).unwrap();
        assert_eq!(via_bank.mean.to_bits(), direct.mean.to_bits());
    }

    #[test]
    fn rejects_garbage() {
        assert!(SampleBank::read_from(&mut &b"nonsense-bytes-here"[..]).is_err());
    }
}
