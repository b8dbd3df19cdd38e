//! Held-out document likelihood for LDA with `θ` integrated out.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{log_mean_exp, log_sum_exp};
use crate::par::{self, Exec};
use crate::rng::{Lane, RngStreams};
use crate::smc::resample::resample_multinomial;

/// Largest `T^M` enumerated by [`exact_heldout_loglik`] by default.
pub const DEFAULT_LDA_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LDAModel {
    pub topics: usize,
    pub vocab: usize,
    /// Row-major `T × W` topic-word probabilities.
    pub phi: Vec<f64>,
    pub alpha: f64,
    pub m_base: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub words: Vec<usize>,
}

fn dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut out = conc
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .map(|g| g.sample(rng))
                .map_err(|e| Error::InvalidArgument(e.to_string()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|x| *x /= s);
    } else {
        // all draws underflowed; put the mass on one coordinate
        let k = rng.random_range(0..out.len());
        out[k] = 1.0;
    }
    Ok(out)
}

impl LDAModel {
    pub fn new(
        topics: usize,
        vocab: usize,
        phi: Vec<f64>,
        alpha: f64,
        m_base: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            topics,
            vocab,
            phi,
            alpha,
            m_base,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidArgument(s));
        if self.topics == 0 || self.vocab == 0 {
            return bad("need at least one topic and one word".into());
        }
        if self.phi.len() != self.topics * self.vocab || self.m_base.len() != self.topics {
            return bad("parameter shapes do not match T and W".into());
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.phi.iter().chain(&self.m_base).any(|&p| !(p >= 0.0)) {
            return bad("probabilities must be non-negative".into());
        }
        for t in 0..self.topics {
            let s: f64 = self.phi_row(t).iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return bad(format!("topic {t} sums to {s}"));
            }
        }
        let s: f64 = self.m_base.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return bad(format!("base measure sums to {s}"));
        }
        Ok(())
    }

    pub fn phi_row(&self, t: usize) -> &[f64] {
        &self.phi[t * self.vocab..(t + 1) * self.vocab]
    }

    #[inline]
    pub fn phi_at(&self, t: usize, w: usize) -> f64 {
        self.phi[t * self.vocab + w]
    }

    /// Topics drawn from a symmetric Dirichlet(`beta`), uniform base measure.
    pub fn synthetic(
        topics: usize,
        vocab: usize,
        alpha: f64,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phi = Vec::with_capacity(topics * vocab);
        for _ in 0..topics {
            let mut row = dirichlet(&vec![beta; vocab], &mut rng)?;
            // renormalize exactly so the row check holds
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            phi.extend(row);
        }
        Self::new(topics, vocab, phi, alpha, vec![1.0 / topics as f64; topics])
    }

    /// Draw a document of `len` words from the generative model.
    pub fn sample_document<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<Document> {
        let conc: Vec<f64> = self.m_base.iter().map(|m| self.alpha * m).collect();
        let theta = dirichlet(&conc, rng)?;
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let t = pick(&theta, rng);
            words.push(pick(self.phi_row(t), rng));
        }
        Ok(Document { words })
    }

    pub fn check_document(&self, doc: &Document) -> Result<()> {
        match doc.words.iter().find(|&&w| w >= self.vocab) {
            Some(&w) => Err(Error::InvalidArgument(format!(
                "word {w} outside vocabulary of {}",
                self.vocab
            ))),
            None => Ok(()),
        }
    }

    /// `Ψ[t, w] (α m_t + n_t)` for each topic; divide by `α + m` for the predictive.
    fn predictive_into(&self, w: usize, counts: &[u32], out: &mut [f64]) {
        for t in 0..self.topics {
            out[t] = self.phi_at(t, w) * (self.alpha * self.m_base[t] + counts[t] as f64);
        }
    }

    /// Read `Ψ` from CSV, one topic per row.
    pub fn from_csv<R: Read>(reader: R, alpha: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut phi = Vec::new();
        let mut topics = 0;
        let mut vocab = None;
        for rec in rdr.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            if *vocab.get_or_insert(row.len()) != row.len() {
                return Err(Error::Parse("ragged topic matrix".into()));
            }
            phi.extend(row);
            topics += 1;
        }
        let vocab = vocab.ok_or_else(|| Error::Parse("empty topic matrix".into()))?;
        Self::new(topics, vocab, phi, alpha, vec![1.0 / topics as f64; topics])
    }
}

fn pick<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Documents from CSV, one per row of word indices.
pub fn read_documents<R: Read>(reader: R) -> Result<Vec<Document>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    rdr.records()
        .map(|rec| {
            let words = rec?
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            Ok(Document { words })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaSmcConfig {
    pub particles: usize,
    pub exec: Exec,
    pub grain: usize,
}

impl LdaSmcConfig {
    pub fn new(particles: usize) -> Self {
        Self {
            particles,
            exec: Exec::Parallel,
            grain: par::DEFAULT_GRAIN,
        }
    }
}

/// Rao-Blackwellized, fully adapted SMC over topic assignments. Each particle
/// carries its topic counts; `log p̂ = Σ_m log mean_i ν_m^i` with
/// `ν_m^i = Σ_t Ψ[t, w_m] (α m_t + n_t^i) / (α + m − 1)`.
pub fn smc_heldout_loglik(
    model: &LDAModel,
    doc: &Document,
    cfg: &LdaSmcConfig,
    seed: u64,
) -> Result<f64> {
    model.check_document(doc)?;
    let n = cfg.particles;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "particle count must be at least 1".into(),
        ));
    }
    let t = model.topics;
    let streams = RngStreams::new(seed);
    let mut counts = vec![0u32; n * t];
    let mut next = counts.clone();
    let mut log_nu = vec![0.0; n];
    let mut log_p = 0.0;
    for (m, &w) in doc.words.iter().enumerate() {
        let denom = (model.alpha + m as f64).ln();
        par::for_each_chunk_with(
            cfg.exec,
            cfg.grain,
            &mut counts,
            t,
            &mut log_nu,
            |_, c, out| {
                let mut pred = vec![0.0; t];
                model.predictive_into(w, c, &mut pred);
                *out = pred.iter().sum::<f64>().ln() - denom;
            },
        );
        log_p += log_mean_exp(&log_nu);
        if m + 1 == doc.words.len() {
            break;
        }
        let mut rng = streams.stream(Lane::Resample, m as u64, 0);
        let anc = resample_multinomial(&log_nu, n, &mut rng)
            .map_err(|_| Error::DegenerateWeights { step: m + 1 })?;
        let src = &counts;
        par::for_each_chunk(cfg.exec, cfg.grain, &mut next, t, |i, row| {
            row.copy_from_slice(&src[anc[i] * t..(anc[i] + 1) * t]);
            let mut pred = vec![0.0; t];
            model.predictive_into(w, row, &mut pred);
            let mut rng = streams.stream(Lane::Propagate, m as u64, i as u64);
            row[pick(&pred, &mut rng)] += 1;
        });
        std::mem::swap(&mut counts, &mut next);
    }
    Ok(log_p)
}

/// Left-to-right sequential estimator: `S` independent samples; before
/// scoring word `m`, each sample resweeps `z_1..z_{m−1}` once by collapsed
/// Gibbs, then draws `z_m`. Returns `Σ_m log mean_s p(w_m | z^s_{<m})`.
pub fn lrs_heldout_loglik(
    model: &LDAModel,
    doc: &Document,
    samples: usize,
    exec: Exec,
    seed: u64,
) -> Result<f64> {
    model.check_document(doc)?;
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    let streams = RngStreams::new(seed);
    let t = model.topics;
    let len = doc.words.len();
    let per_sample: Vec<Vec<f64>> = par::map_indexed(exec, 1, samples, |s| {
        let mut rng = streams.stream(Lane::Gibbs, 0, s as u64);
        let mut z = Vec::with_capacity(len);
        let mut counts = vec![0u32; t];
        let mut pred = vec![0.0; t];
        let mut out = Vec::with_capacity(len);
        for (m, &w) in doc.words.iter().enumerate() {
            for j in 0..m {
                counts[z[j]] -= 1;
                model.predictive_into(doc.words[j], &counts, &mut pred);
                z[j] = pick(&pred, &mut rng);
                counts[z[j]] += 1;
            }
            model.predictive_into(w, &counts, &mut pred);
            let total: f64 = pred.iter().sum();
            out.push(total.ln() - (model.alpha + m as f64).ln());
            let zm = pick(&pred, &mut rng);
            z.push(zm);
            counts[zm] += 1;
        }
        out
    });
    let mut col = vec![0.0; samples];
    let mut log_p = 0.0;
    for m in 0..len {
        for (s, row) in per_sample.iter().enumerate() {
            col[s] = row[m];
        }
        log_p += log_mean_exp(&col);
    }
    Ok(log_p)
}

/// Exact `log p(w_{1:M})` by summing over every assignment, sharing prefixes.
pub fn exact_heldout_loglik(model: &LDAModel, doc: &Document) -> Result<f64> {
    exact_heldout_loglik_capped(model, doc, DEFAULT_LDA_CAP)
}

pub fn exact_heldout_loglik_capped(model: &LDAModel, doc: &Document, cap: u64) -> Result<f64> {
    model.check_document(doc)?;
    let states = (model.topics as f64).powi(doc.words.len() as i32);
    if states > cap as f64 {
        return Err(Error::DomainTooLarge { states, cap });
    }
    fn rec(model: &LDAModel, words: &[usize], m: usize, counts: &mut [u32]) -> f64 {
        if m == words.len() {
            return 0.0;
        }
        let denom = (model.alpha + m as f64).ln();
        let terms: Vec<f64> = (0..model.topics)
            .map(|t| {
                let p =
                    model.phi_at(t, words[m]) * (model.alpha * model.m_base[t] + counts[t] as f64);
                if p == 0.0 {
                    return f64::NEG_INFINITY;
                }
                counts[t] += 1;
                let rest = rec(model, words, m + 1, counts);
                counts[t] -= 1;
                p.ln() - denom + rest
            })
            .collect();
        log_sum_exp(&terms)
    }
    Ok(rec(model, &doc.words, 0, &mut vec![0; model.topics]))
}
