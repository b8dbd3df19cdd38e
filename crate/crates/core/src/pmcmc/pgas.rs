//! Particle Gibbs with ancestor sampling.

use std::sync::Arc;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::pmcmc::ancestor::DependencySets;
use crate::rng::{Lane, RngStreams};
use crate::smc::engine::{run_from, Conditioning, SmcConfig};
use crate::smc::proposal::Proposal;
use crate::smc::resample::{sample_categorical, ResamplingScheme};

/// Conditional-SMC Markov kernel leaving `γ_K / Z` invariant. The reference
/// trajectory occupies the last particle slot.
#[derive(Clone)]
pub struct PgasKernel {
    decomposition: Arc<Decomposition>,
    proposal: Arc<dyn Proposal>,
    deps: DependencySets,
    particles: usize,
    /// With `false` the reference keeps its own lineage (plain particle Gibbs).
    pub ancestor_sampling: bool,
    pub exec: Exec,
    pub grain: usize,
}

impl PgasKernel {
    pub fn new(
        decomposition: Arc<Decomposition>,
        proposal: Arc<dyn Proposal>,
        particles: usize,
    ) -> Result<Self> {
        if particles < 2 {
            return Err(Error::InvalidArgument(format!(
                "PGAS needs at least 2 particles, got {particles}"
            )));
        }
        let deps = DependencySets::compute(&decomposition);
        Ok(Self {
            decomposition,
            proposal,
            deps,
            particles,
            ancestor_sampling: true,
            exec: Exec::Parallel,
            grain: crate::par::DEFAULT_GRAIN,
        })
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn dependency_sets(&self) -> &DependencySets {
        &self.deps
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    /// One kernel application: returns the new trajectory (a full row of
    /// values, context entries copied from `reference`).
    pub fn apply(&self, reference: &[f64], streams: &RngStreams) -> Result<Vec<f64>> {
        let d = &*self.decomposition;
        let width = d.graph().num_variables();
        if reference.len() != width {
            return Err(Error::InvalidArgument("reference width mismatch".into()));
        }
        let mut template = vec![f64::NAN; width];
        for &v in d.context() {
            template[v] = reference[v];
        }
        let cfg = SmcConfig {
            particles: self.particles,
            seed: streams.seed(),
            resampling: ResamplingScheme::Multinomial,
            ess_threshold: None,
            exec: self.exec,
            grain: self.grain,
        };
        let cond = Conditioning {
            reference,
            deps: &self.deps,
            ancestor_sampling: self.ancestor_sampling,
        };
        let out = run_from(d, &*self.proposal, &cfg, &template, streams, Some(&cond))?;
        let sys = out.system;
        let mut rng = streams.stream(Lane::Select, d.len() as u64 + 1, 0);
        let pick = sample_categorical(sys.final_log_weights(), &mut rng)
            .map_err(|_| Error::DegenerateWeights { step: d.len() })?;
        Ok(sys.particle(pick).to_vec())
    }
}

/// Apply [`PgasKernel`] once to `reference`.
pub fn pgas_kernel(
    d: Arc<Decomposition>,
    p: Arc<dyn Proposal>,
    reference: &[f64],
    particles: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    PgasKernel::new(d, p, particles)?.apply(reference, &RngStreams::new(seed))
}
