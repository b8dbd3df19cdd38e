//! Particle trace files and per-step summaries.
//!
//! Binary layout (little-endian): magic `FSMCTRC1`, then `u64` particle count,
//! width, step count, `f64` initial adjustment. Each step stores a `u8`
//! resampled flag, `f64` ess, `f64` running log estimate, then N log weights,
//! N log adjustments and N `u64` ancestors. The final N×width values follow.

use std::io::{Read, Write};

use super::engine::{ParticleSystem, SmcOutput, StepRecord};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FSMCTRC1";

pub fn write_trace<W: Write>(sys: &ParticleSystem, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    for n in [sys.num_particles, sys.width, sys.steps.len()] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    out.write_all(&sys.log_initial_adjustment.to_le_bytes())?;
    for s in &sys.steps {
        out.write_all(&[s.resampled as u8])?;
        out.write_all(&s.ess.to_le_bytes())?;
        out.write_all(&s.log_z_hat.to_le_bytes())?;
        for w in s.log_weights.iter().chain(&s.log_adjustments) {
            out.write_all(&w.to_le_bytes())?;
        }
        for &a in &s.ancestors {
            out.write_all(&(a as u64).to_le_bytes())?;
        }
    }
    for x in &sys.particles {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const B: usize>(&mut self) -> Result<[u8; B]> {
        let mut buf = [0u8; B];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Parse(format!("truncated trace: {e}")))?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_trace<R: Read>(input: R) -> Result<ParticleSystem> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Parse("not a particle trace".into()));
    }
    let n = r.u64()? as usize;
    let width = r.u64()? as usize;
    let k = r.u64()? as usize;
    let log_initial_adjustment = r.f64()?;
    let mut steps = Vec::with_capacity(k);
    for _ in 0..k {
        let resampled = r.bytes::<1>()?[0] != 0;
        let ess = r.f64()?;
        let log_z_hat = r.f64()?;
        let log_weights = r.f64s(n)?;
        let log_adjustments = r.f64s(n)?;
        let ancestors = (0..n)
            .map(|_| r.u64().map(|a| a as usize))
            .collect::<Result<_>>()?;
        steps.push(StepRecord {
            log_weights,
            log_adjustments,
            ancestors,
            resampled,
            ess,
            log_z_hat,
        });
    }
    let particles = r.f64s(n * width)?;
    Ok(ParticleSystem {
        num_particles: n,
        width,
        log_initial_adjustment,
        steps,
        particles,
    })
}

/// One row per step: `step,ess,log_z_hat,wall_ns`.
pub fn write_summary<W: Write>(out: &SmcOutput, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["step", "ess", "log_z_hat", "wall_ns"])?;
    for (k, s) in out.system.steps.iter().enumerate() {
        let wall = out.wall_ns.get(k).copied().unwrap_or(0);
        csv.write_record([
            (k + 1).to_string(),
            s.ess.to_string(),
            s.log_z_hat.to_string(),
            wall.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
