//! Mini-batch momentum gradient descent on the margin loss.

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{barrier_loss_with_margin, loss_and_grad, BarrierData, BarrierLossConfig};
use super::net::BarrierNet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub net: BarrierNet,
    /// Margin loss of the returned iterate over the full dataset.
    pub best_loss: f64,
    /// Full-dataset margin loss after each epoch, starting with the initialization.
    pub epoch_losses: Vec<f64>,
}

fn batch_slice<'a>(perm: &'a [usize], i: usize, size: usize, out: &mut Vec<usize>) {
    out.clear();
    let n = perm.len();
    if n == 0 {
        return;
    }
    let start = i * size;
    out.extend((start..start + size.min(n)).map(|k| perm[k % n]));
}

/// Trains from `init` (or a fresh seeded initialization with `hidden` units).
///
/// Each epoch runs `ceil(max_set_size / batch)` steps; every step draws a
/// batch from each of the three sets, cycling the smaller ones. Returns the
/// lowest-loss iterate among the initialization and all epoch ends.
pub fn train_barrier(init: Option<&BarrierNet>, hidden: usize, data: BarrierData<'_>, cfg: &BarrierLossConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.safe.is_empty() {
        return Err(Error::EmptyDataset("safe set"));
    }
    let dim = data.safe[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = match init {
        Some(n) => n.clone(),
        None => BarrierNet::random(dim, hidden, &mut rng),
    };
    super::loss::barrier_loss(&net, data, cfg)?;

    let mut best = net.clone();
    let mut best_loss = barrier_loss_with_margin(&net, data, cfg, cfg.margins());
    let mut epoch_losses = vec![best_loss];
    let mut params = net.params();
    let mut velocity = vec![0.0; params.len()];
    let mut perms = [
        (0..data.safe.len()).collect::<Vec<_>>(),
        (0..data.unsafe_.len()).collect::<Vec<_>>(),
        (0..data.transitions.len()).collect::<Vec<_>>(),
    ];
    let largest = perms.iter().map(Vec::len).max().unwrap_or(0);
    let steps = largest.div_ceil(cfg.batch);
    let (mut bs, mut bu, mut bt) = (Vec::new(), Vec::new(), Vec::new());

    for epoch in 0..cfg.epochs {
        for p in perms.iter_mut() {
            p.shuffle(&mut rng);
        }
        for i in 0..steps {
            batch_slice(&perms[0], i, cfg.batch, &mut bs);
            batch_slice(&perms[1], i, cfg.batch, &mut bu);
            batch_slice(&perms[2], i, cfg.batch, &mut bt);
            let (_, g) = loss_and_grad(&net, data, (&bs, &bu, &bt), cfg, cfg.margins());
            for ((p, v), gk) in params.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                *v = cfg.momentum * *v - cfg.lr * gk;
                *p += *v;
            }
            net.set_params(&params)?;
        }
        let loss = barrier_loss_with_margin(&net, data, cfg, cfg.margins());
        if !loss.is_finite() {
            return Err(Error::NonFinite("barrier training loss"));
        }
        debug!("barrier epoch {epoch}: loss {loss:.6e}");
        epoch_losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best = net.clone();
        }
    }
    Ok(TrainOutcome { net: best, best_loss, epoch_losses })
}
