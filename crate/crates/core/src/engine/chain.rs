//! The Metropolis-Hastings loop over one chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ProposalError};
use crate::graph::Hierarchy;
use crate::measure::MeasureParams;
use crate::proposal::{
    hierarchy_move, merge_split_step, BlockBounds, HierarchyOutcome, MergeSplitConfig,
    MergeSplitRecord, Outcome,
};
use crate::state::PlanState;
use crate::tree::TreeCountCache;

/// Relative weights of the two proposal kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalMix {
    pub merge_split: f64,
    pub hierarchy: f64,
}

impl Default for ProposalMix {
    fn default() -> Self {
        ProposalMix {
            merge_split: 1.0,
            hierarchy: 0.0,
        }
    }
}

impl ProposalMix {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.merge_split) || !ok(self.hierarchy) || self.merge_split + self.hierarchy <= 0.0
        {
            return Err(ConfigError::ProposalWeights);
        }
        Ok(())
    }
}

/// Settings of one chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub steps: u64,
    pub rng_seed: u64,
    /// Stream of the generator; distinct chains sharing a seed use distinct
    /// streams.
    pub stream: u64,
    pub record_every: u64,
    /// Vertex attributes summed per district in every record.
    pub observables: Vec<String>,
    pub mix: ProposalMix,
    /// Required when the mix includes hierarchy moves.
    pub block_bounds: Option<BlockBounds>,
    pub merge_split: MergeSplitConfig,
    /// Keep the full assignment in every `n`-th record.
    pub assignment_every: Option<u64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            steps: 0,
            rng_seed: 0,
            stream: 0,
            record_every: 1,
            observables: Vec::new(),
            mix: ProposalMix::default(),
            block_bounds: None,
            merge_split: MergeSplitConfig::default(),
            assignment_every: None,
        }
    }
}

/// The generator of chain `stream` under `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Observables after a given number of proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Proposals made so far.
    pub step: u64,
    /// Whether the latest proposal was accepted (false for the initial record).
    pub accepted: bool,
    pub populations: Vec<u64>,
    /// Per observable, the per-district sums, in configuration order.
    pub sums: Vec<Vec<f64>>,
    pub split_nodes: usize,
    pub assignment: Option<Vec<usize>>,
}

/// Counters over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub proposals: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub aborted: u64,
    pub hierarchy_proposals: u64,
    pub hierarchy_accepted: u64,
}

/// What one step did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    MergeSplit(MergeSplitRecord),
    Hierarchy(HierarchyOutcome),
}

impl StepKind {
    pub fn accepted(&self) -> bool {
        matches!(
            self,
            StepKind::MergeSplit(MergeSplitRecord {
                outcome: Outcome::Accepted,
                ..
            })
        ) || matches!(self, StepKind::Hierarchy(HierarchyOutcome::Accepted))
    }
}

/// A chain owning its hierarchy, state, generator and count cache.
#[derive(Debug, Clone)]
pub struct Chain {
    pub hierarchy: Hierarchy,
    pub state: PlanState,
    pub params: MeasureParams,
    pub config: ChainConfig,
    pub stats: ChainStats,
    cache: TreeCountCache,
    rng: ChaCha8Rng,
}

impl Chain {
    pub fn new(
        hierarchy: Hierarchy,
        state: PlanState,
        params: MeasureParams,
        config: ChainConfig,
    ) -> Result<Self, ConfigError> {
        params.validate()?;
        config.mix.validate()?;
        if config.mix.hierarchy > 0.0 && config.block_bounds.is_none() {
            return Err(ConfigError::Other(
                "hierarchy moves need block bounds".into(),
            ));
        }
        for name in &config.observables {
            if hierarchy.base().attribute(name).is_none() {
                return Err(ConfigError::Other(format!(
                    "unknown vertex attribute {name:?}"
                )));
            }
        }
        let rng = chain_rng(config.rng_seed, config.stream);
        Ok(Chain {
            hierarchy,
            state,
            params,
            config,
            stats: ChainStats::default(),
            cache: TreeCountCache::new(),
            rng,
        })
    }

    /// Makes one proposal and applies the Metropolis-Hastings decision.
    pub fn step(&mut self) -> Result<StepKind, ProposalError> {
        let mix = self.config.mix;
        let hierarchy_turn = mix.hierarchy > 0.0
            && self.rng.gen::<f64>() * (mix.merge_split + mix.hierarchy) < mix.hierarchy;
        self.stats.proposals += 1;
        let kind = if hierarchy_turn {
            let bounds = self.config.block_bounds.expect("checked in Chain::new");
            let (rec, next) = hierarchy_move(
                &self.hierarchy,
                &mut self.state,
                &self.params,
                bounds,
                &mut self.cache,
                &mut self.rng,
            )?;
            if let Some(next) = next {
                self.hierarchy = next;
            }
            self.stats.hierarchy_proposals += 1;
            StepKind::Hierarchy(rec.outcome)
        } else {
            let rec = merge_split_step(
                &self.hierarchy,
                &mut self.state,
                &self.params,
                &self.config.merge_split,
                &mut self.cache,
                &mut self.rng,
            )?;
            StepKind::MergeSplit(rec)
        };
        match &kind {
            k if k.accepted() => {
                self.stats.accepted += 1;
                if matches!(k, StepKind::Hierarchy(_)) {
                    self.stats.hierarchy_accepted += 1;
                }
            }
            StepKind::MergeSplit(MergeSplitRecord {
                outcome: Outcome::Aborted(_),
                ..
            })
            | StepKind::Hierarchy(HierarchyOutcome::Aborted(_)) => self.stats.aborted += 1,
            _ => self.stats.rejected += 1,
        }
        Ok(kind)
    }

    /// Observables of the current state.
    pub fn record(&self, accepted: bool) -> SampleRecord {
        let p = &self.state.partition;
        let d = p.num_districts();
        let base = self.hierarchy.base();
        let sums = self
            .config
            .observables
            .iter()
            .map(|name| {
                let values = base.attribute(name).expect("checked in Chain::new");
                let mut out = vec![0.0; d];
                for (x, &v) in values.iter().enumerate() {
                    out[p.district_of(x)] += v;
                }
                out
            })
            .collect();
        let top = self.hierarchy.levels();
        let keep = self.config.assignment_every.is_some_and(|n| {
            n > 0 && (self.stats.proposals / self.config.record_every.max(1)).is_multiple_of(n)
        });
        SampleRecord {
            step: self.stats.proposals,
            accepted,
            populations: p.district_pops().to_vec(),
            sums,
            split_nodes: if top == 0 {
                0
            } else {
                p.split_nodes(top).len()
            },
            assignment: keep.then(|| p.assignment().to_vec()),
        }
    }

    /// Runs the configured number of proposals, handing the initial record
    /// and every `record_every`-th record to `sink`.
    pub fn run(
        &mut self,
        mut sink: impl FnMut(&SampleRecord),
    ) -> Result<ChainStats, ProposalError> {
        sink(&self.record(false));
        let every = self.config.record_every.max(1);
        for _ in 0..self.config.steps {
            let kind = self.step()?;
            if self.stats.proposals.is_multiple_of(every) {
                sink(&self.record(kind.accepted()));
            }
        }
        Ok(self.stats)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{seed_plan, SeedConfig};
    use crate::fixtures::grid_with_blocks;

    fn chain(steps: u64, seed: u64) -> Chain {
        let h = grid_with_blocks(4, 4, 2, 2);
        let params = MeasureParams {
            num_districts: 2,
            ..MeasureParams::default()
        };
        let state = seed_plan(
            &h,
            &params,
            &SeedConfig::default(),
            &mut chain_rng(seed, 99),
        )
        .unwrap();
        let config = ChainConfig {
            steps,
            rng_seed: seed,
            record_every: 5,
            assignment_every: Some(1),
            ..ChainConfig::default()
        };
        Chain::new(h, state, params, config).unwrap()
    }

    #[test]
    fn zero_steps_give_the_initial_record() {
        let mut records = Vec::new();
        chain(0, 1).run(|r| records.push(r.clone())).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].step, 0);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let run = |seed| {
            let mut records = Vec::new();
            let stats = chain(200, seed).run(|r| records.push(r.clone())).unwrap();
            (records, stats)
        };
        let (a, sa) = run(4);
        let (b, sb) = run(4);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(a.len(), 41);
        assert_eq!(sa.accepted + sa.rejected + sa.aborted, 200);
    }
}
