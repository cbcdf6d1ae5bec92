use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Row indices of one mini-batch: row i of every member forms tuple i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleIndices {
    pub sources: Vec<Vec<usize>>,
    pub target: Vec<usize>,
}

/// One mini-batch of B tuples (x^{S_1..S_K}, y^{S_1..S_K}, x^T).
#[derive(Clone, Debug, PartialEq)]
pub struct TupleBatch {
    pub x_sources: Vec<Matrix>,
    /// B×1 columns of 0/1.
    pub y_sources: Vec<Matrix>,
    pub x_target: Matrix,
}

impl TupleBatch {
    pub fn size(&self) -> usize {
        self.x_target.rows()
    }
}

/// Per-epoch pairing of source and target rows.
///
/// Each domain is an independent stream: a fresh permutation, reshuffled and
/// restarted whenever it runs out. An epoch has ceil(largest / B) batches of
/// exactly B tuples.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    pub batches: Vec<TupleIndices>,
}

fn stream_seed(seed: u64, epoch: u64, domain: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ epoch.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ domain.wrapping_add(1).wrapping_mul(0x1656_67B1_9E37_79F9)
}

fn draw_stream(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut perm: Vec<usize> = (0..n).collect();
    while out.len() < count {
        perm.shuffle(rng);
        let take = (count - out.len()).min(n);
        out.extend_from_slice(&perm[..take]);
    }
    out
}

impl BatchPlan {
    /// `source_sizes` are the K source row counts.
    pub fn new(
        source_sizes: &[usize],
        target_size: usize,
        batch_size: usize,
        seed: u64,
        epoch: u64,
    ) -> Result<Self> {
        if batch_size < 1 {
            return Err(Error::Contract("batch size must be at least 1".into()));
        }
        if source_sizes.contains(&0) || target_size == 0 {
            return Err(Error::data("cannot batch an empty domain"));
        }
        let largest = source_sizes
            .iter()
            .copied()
            .chain([target_size])
            .max()
            .unwrap();
        let n_batches = largest.div_ceil(batch_size);
        let total = n_batches * batch_size;

        let mut streams: Vec<Vec<usize>> = source_sizes
            .iter()
            .chain([&target_size])
            .enumerate()
            .map(|(d, &n)| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, epoch, d as u64));
                draw_stream(n, total, &mut rng)
            })
            .collect();
        let target = streams.pop().unwrap();

        let batches = (0..n_batches)
            .map(|b| {
                let span = b * batch_size..(b + 1) * batch_size;
                TupleIndices {
                    sources: streams.iter().map(|s| s[span.clone()].to_vec()).collect(),
                    target: target[span].to_vec(),
                }
            })
            .collect();
        Ok(BatchPlan { batches })
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}
