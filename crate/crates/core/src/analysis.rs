//! Block-by-block analysis of the four tag streams.
//!
//! Each block is fitted independently in both directions; [`assemble`]
//! then pairs the directions into an [`OffsetSeries`]. A block whose fit
//! fails in either direction is left out of the series and recorded as
//! skipped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::Direction;
use crate::coincidence::{self, CoincidenceFit, HistogramSpec};
use crate::simulator::{Channel, Simulator, TagStream};
use crate::twoway::{self, BlockEstimate, OffsetSeries};
use crate::{Error, Result};

/// Blocks simulated and fitted per batch by [`simulate_and_analyze`].
const BATCH: usize = 64;

/// Both directional fits of one block.
#[derive(Debug)]
pub struct BlockFits {
    pub epoch: u64,
    pub ab: Result<CoincidenceFit>,
    pub ba: Result<CoincidenceFit>,
}

/// A block left out of the offset series, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedBlock {
    pub epoch: u64,
    pub direction: Direction,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub ab: Vec<BlockEstimate>,
    pub ba: Vec<BlockEstimate>,
    pub series: OffsetSeries,
    pub skipped: Vec<SkippedBlock>,
    /// Blocks offered to the analysis.
    pub n_blocks: usize,
}

impl Analysis {
    /// Fraction of blocks missing from the offset series.
    pub fn skipped_fraction(&self) -> f64 {
        if self.n_blocks == 0 {
            return 0.0;
        }
        1.0 - self.series.records.len() as f64 / self.n_blocks as f64
    }
}

/// Fits one block; `tags` is indexed by [`Channel::index`].
pub fn fit_block(epoch: u64, tags: [&[i64]; 4], spec: &HistogramSpec) -> BlockFits {
    let fit = |direction| {
        let (local, remote) = Channel::pair(direction);
        coincidence::block_offset(tags[local.index()], tags[remote.index()], spec)
    };
    BlockFits {
        epoch,
        ab: fit(Direction::AToB),
        ba: fit(Direction::BToA),
    }
}

/// Combines per-block fits into an offset series.
pub fn assemble(blocks: Vec<BlockFits>, block_duration: f64) -> Result<Analysis> {
    let n_blocks = blocks.len();
    let mut ab = Vec::with_capacity(n_blocks);
    let mut ba = Vec::with_capacity(n_blocks);
    let mut skipped = Vec::new();
    for b in blocks {
        match (b.ab, b.ba) {
            (Ok(fa), Ok(fb)) => {
                ab.push(BlockEstimate {
                    epoch: b.epoch,
                    fit: fa,
                });
                ba.push(BlockEstimate {
                    epoch: b.epoch,
                    fit: fb,
                });
            }
            (ra, rb) => {
                for (direction, r) in [(Direction::AToB, ra), (Direction::BToA, rb)] {
                    if let Err(e) = r {
                        skipped.push(SkippedBlock {
                            epoch: b.epoch,
                            direction,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    let series = twoway::combine(&ab, &ba, block_duration)?;
    Ok(Analysis {
        ab,
        ba,
        series,
        skipped,
        n_blocks,
    })
}

/// Fits every block of four in-memory streams.
pub fn analyze(
    streams: &[TagStream; 4],
    spec: &HistogramSpec,
    block_duration: f64,
) -> Result<Analysis> {
    spec.validate()?;
    let n = streams[0].blocks.len();
    for s in &streams[1..] {
        if s.blocks.len() != n {
            return Err(Error::domain(format!(
                "{} has {} blocks but {} has {n}",
                s.channel,
                s.blocks.len(),
                streams[0].channel
            )));
        }
    }
    let fits = (0..n)
        .into_par_iter()
        .map(|k| {
            let epochs: Vec<u64> = streams.iter().map(|s| s.blocks[k].epoch).collect();
            if epochs.iter().any(|&e| e != epochs[0]) {
                return Err(Error::Alignment { epochs });
            }
            let tags = [0, 1, 2, 3].map(|c| streams[c].blocks[k].tags.as_slice());
            Ok(fit_block(epochs[0], tags, spec))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(fits, block_duration)
}

/// Simulates and fits a scenario without keeping the tags, so memory use
/// does not grow with the number of blocks.
pub fn simulate_and_analyze(sim: &Simulator, spec: &HistogramSpec) -> Result<Analysis> {
    spec.validate()?;
    let n = sim.scenario().n_blocks;
    let mut fits = Vec::with_capacity(n);
    for start in (0..n).step_by(BATCH) {
        let batch: Vec<BlockFits> = (start..(start + BATCH).min(n))
            .into_par_iter()
            .map(|k| {
                let block = sim.block(k, false);
                let tags = [0, 1, 2, 3].map(|c| block.tags[c].as_slice());
                fit_block(block.epoch, tags, spec)
            })
            .collect();
        fits.extend(batch);
    }
    assemble(fits, sim.scenario().block_duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(center: f64) -> CoincidenceFit {
        CoincidenceFit {
            center,
            fwhm: 1e-10,
            amplitude: 10.0,
            n_coincidences: 100.0,
            background_level: 0.0,
            center_std_error: 1e-12,
            fit_rms_residual: 0.0,
        }
    }

    #[test]
    fn failed_blocks_are_skipped_in_both_directions() {
        let blocks = vec![
            BlockFits {
                epoch: 0,
                ab: Ok(fit(1.0)),
                ba: Ok(fit(3.0)),
            },
            BlockFits {
                epoch: 5,
                ab: Err(Error::NoPeak {
                    peak: 2,
                    background: 0.2,
                }),
                ba: Ok(fit(3.0)),
            },
            BlockFits {
                epoch: 10,
                ab: Ok(fit(1.0)),
                ba: Ok(fit(5.0)),
            },
        ];
        let a = assemble(blocks, 5.0).unwrap();
        assert_eq!(a.series.records.len(), 2);
        assert_eq!(a.series.records[1].t0, 2.0);
        assert_eq!(a.skipped.len(), 1);
        assert_eq!(a.skipped[0].epoch, 5);
        assert_eq!(a.skipped[0].direction, Direction::AToB);
        assert!((a.skipped_fraction() - 1.0 / 3.0).abs() < 1e-12);
    }
}
