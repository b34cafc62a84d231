//! Running chains and dumping their trajectories.
//!
//! CSV columns are `iter,eta0,lambda,tau,V`. Row `n` (from 1) holds the state
//! after the `n`-th transition and the `(λ, τ)` drawn inside it.
//!
//! The binary format stores full states: the magic `MGTRAJ01`, then `p`, `q`
//! and the `q` group sizes as little-endian `u64`, then one record of `p+q+1`
//! little-endian `f64` per state.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{transition_step, Step};
use crate::error::{Error, Result};
use crate::model::{ChainState, Model};

pub const BINARY_MAGIC: &[u8; 8] = b"MGTRAJ01";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub eta0: f64,
    pub lambda: f64,
    pub tau: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

/// Runs `n_iter` transitions from `start`, calling `visit(n, step)` after
/// each one. Returns the final state.
pub fn run_chain<R, F>(model: &Model, start: &ChainState, n_iter: usize, rng: &mut R, mut visit: F) -> Result<ChainState>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &Step) -> Result<()>,
{
    let mut state = start.clone();
    for n in 1..=n_iter {
        let step = transition_step(&state, model, rng)?;
        visit(n, &step)?;
        state = step.state;
    }
    Ok(state)
}

/// Runs a chain and collects the CSV records.
pub fn trace<R: Rng + ?Sized>(model: &Model, start: &ChainState, n_iter: usize, rng: &mut R) -> Result<(Vec<TrajectoryRecord>, ChainState)> {
    let mut out = Vec::with_capacity(n_iter);
    let last = run_chain(model, start, n_iter, rng, |n, s| {
        out.push(TrajectoryRecord {
            iter: n,
            eta0: s.state.eta0,
            lambda: s.precisions.lambda,
            tau: s.precisions.tau,
            v: model.drift_v(&s.state),
        });
        Ok(())
    })?;
    Ok((out, last))
}

pub fn write_trajectory_csv<W: Write>(records: &[TrajectoryRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub struct BinaryTrajectoryWriter<W: Write> {
    inner: W,
    dim: usize,
}

impl<W: Write> BinaryTrajectoryWriter<W> {
    pub fn new(mut inner: W, p: usize, group_sizes: &[usize]) -> Result<Self> {
        inner.write_all(BINARY_MAGIC)?;
        inner.write_all(&(p as u64).to_le_bytes())?;
        inner.write_all(&(group_sizes.len() as u64).to_le_bytes())?;
        for &r in group_sizes {
            inner.write_all(&(r as u64).to_le_bytes())?;
        }
        Ok(Self {
            inner,
            dim: p + group_sizes.len() + 1,
        })
    }

    pub fn push(&mut self, state: &ChainState) -> Result<()> {
        if state.dim() != self.dim {
            return Err(Error::Shape(format!("state dimension {} != {}", state.dim(), self.dim)));
        }
        for v in state.to_vec() {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Parsed binary trajectory: `(p, group sizes, states)`.
pub fn read_binary_trajectory<R: Read>(mut reader: R) -> Result<(usize, Vec<usize>, Vec<ChainState>)> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    if buf.len() < 24 || &buf[..8] != BINARY_MAGIC {
        return Err(Error::Format("not a trajectory file".into()));
    }
    let word = |k: usize| u64::from_le_bytes(buf[k..k + 8].try_into().unwrap()) as usize;
    let p = word(8);
    let q = word(16);
    let head = 24 + 8 * q;
    if buf.len() < head {
        return Err(Error::Format("truncated header".into()));
    }
    let sizes = (0..q).map(|i| word(24 + 8 * i)).collect();
    let rec = 8 * (p + q + 1);
    let body = &buf[head..];
    if body.len() % rec != 0 {
        return Err(Error::Format("truncated record".into()));
    }
    let states = body
        .chunks_exact(rec)
        .map(|c| {
            let v: Vec<f64> = c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            ChainState::from_slice(p, q, &v)
        })
        .collect::<Result<_>>()?;
    Ok((p, sizes, states))
}
