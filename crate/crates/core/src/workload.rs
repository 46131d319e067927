//! Sender/recipient and amount sampling.
//!
//! Every draw is a pure function of `(seed, draw index)`: draw `i` uses a
//! ChaCha8 generator seeded with `seed` on stream `i`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Amount, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("skewness must be a positive finite number, got {0}")]
    BadSkewness(f64),
    #[error("amount upper bound must be at least 1")]
    BadAmountUpper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SenderMode {
    Uniform,
    Skewed { skewness: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub mode: SenderMode,
    pub tx_count: usize,
    /// `None` means the median channel capacity of the unscaled network.
    pub amount_upper: Option<Amount>,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            mode: SenderMode::Uniform,
            tx_count: 5000,
            amount_upper: None,
            seed: 1,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if let SenderMode::Skewed { skewness } = self.mode {
            if !(skewness.is_finite() && skewness > 0.0) {
                return Err(WorkloadError::BadSkewness(skewness));
            }
        }
        if self.amount_upper == Some(0) {
            return Err(WorkloadError::BadAmountUpper);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payment {
    pub sender: NodeId,
    pub recipient: NodeId,
    pub amount: Amount,
}

pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_pair_uniform<R: Rng + ?Sized>(rng: &mut R, nodes: usize) -> Result<(NodeId, NodeId), WorkloadError> {
    if nodes < 2 {
        return Err(WorkloadError::TooFewNodes(nodes));
    }
    let sender = rng.gen_range(0..nodes);
    Ok((NodeId(sender as u32), uniform_recipient(rng, nodes, sender)))
}

fn uniform_recipient<R: Rng + ?Sized>(rng: &mut R, nodes: usize, sender: usize) -> NodeId {
    let r = rng.gen_range(0..nodes - 1);
    NodeId(if r >= sender { r + 1 } else { r } as u32)
}

/// Sender index `floor(x) mod nodes` with `x ~ Exp(skewness / nodes)`.
pub fn sample_sender_skewed<R: Rng + ?Sized>(
    rng: &mut R,
    nodes: usize,
    skewness: f64,
) -> Result<NodeId, WorkloadError> {
    if nodes < 2 {
        return Err(WorkloadError::TooFewNodes(nodes));
    }
    if !(skewness.is_finite() && skewness > 0.0) {
        return Err(WorkloadError::BadSkewness(skewness));
    }
    let exp = Exp::new(skewness / nodes as f64).map_err(|_| WorkloadError::BadSkewness(skewness))?;
    let x: f64 = exp.sample(rng);
    // `as u64` saturates, so an infinite draw still lands on a valid index.
    let idx = (x.floor() as u64) % nodes as u64;
    Ok(NodeId(idx as u32))
}

pub fn sample_amount<R: Rng + ?Sized>(rng: &mut R, amount_upper: Amount) -> Amount {
    rng.gen_range(1..=amount_upper.max(1))
}

/// The `index`-th payment of the workload over `nodes` nodes.
pub fn payment_at(
    spec: &WorkloadSpec,
    nodes: usize,
    amount_upper: Amount,
    index: u64,
) -> Result<Payment, WorkloadError> {
    let mut rng = draw_rng(spec.seed, index);
    let (sender, recipient) = match spec.mode {
        SenderMode::Uniform => sample_pair_uniform(&mut rng, nodes)?,
        SenderMode::Skewed { skewness } => {
            let s = sample_sender_skewed(&mut rng, nodes, skewness)?;
            (s, uniform_recipient(&mut rng, nodes, s.index()))
        }
    };
    Ok(Payment {
        sender,
        recipient,
        amount: sample_amount(&mut rng, amount_upper),
    })
}

pub fn generate_trace(spec: &WorkloadSpec, nodes: usize, amount_upper: Amount) -> Result<Vec<Payment>, WorkloadError> {
    spec.validate()?;
    if amount_upper == 0 {
        return Err(WorkloadError::BadAmountUpper);
    }
    (0..spec.tx_count as u64)
        .map(|i| payment_at(spec, nodes, amount_upper, i))
        .collect()
}
