//! Train, certify, relabel violated cells, retrain.

use log::info;

use crate::barrier::{train_barrier, BarrierData, BarrierLossConfig, BarrierNet};
use crate::certify::{certify_grid, CertReport, CertifyConfig, GridSpec};
use crate::error::{Error, Result};
use crate::sampling::{knn_safe_count, LabeledDataset, Transition};
use crate::vehicle::ClosedLoop;

/// Labels each point safe iff more than `k/2` of its `k` nearest neighbors in
/// `safe ∪ unsafe_` are safe (ties in distance broken safe-first by index).
pub fn relabel_violations(centers: &[Vec<f64>], safe: &[Vec<f64>], unsafe_: &[Vec<f64>], k: usize) -> Result<Vec<(Vec<f64>, bool)>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("k must be odd, got {k}")));
    }
    if centers.is_empty() {
        return Ok(Vec::new());
    }
    if safe.is_empty() && unsafe_.is_empty() {
        return Err(Error::EmptyDataset("labeled set"));
    }
    Ok(centers
        .iter()
        .map(|c| {
            let pts = safe.iter().map(|p| (true, p.as_slice())).chain(unsafe_.iter().map(|p| (false, p.as_slice())));
            let n_safe = knn_safe_count(pts, c, k, None);
            (c.clone(), 2 * n_safe > k)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub max_rounds: usize,
    pub patience: usize,
    pub k: usize,
    pub hidden: usize,
    /// Training schedule for the first round.
    pub initial: BarrierLossConfig,
    /// Training schedule for warm-started later rounds.
    pub retrain: BarrierLossConfig,
    pub certify: CertifyConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_rounds: 60,
            patience: 5,
            k: 5,
            hidden: 256,
            initial: BarrierLossConfig::default(),
            retrain: BarrierLossConfig { epochs: 50, ..BarrierLossConfig::default() },
            certify: CertifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub n_boundary: usize,
    pub n_violated: usize,
    pub epsilon: f64,
    pub n_safe: usize,
    pub n_unsafe: usize,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub net: BarrierNet,
    pub report: CertReport,
    pub best_round: usize,
    pub history: Vec<RoundRecord>,
    pub dataset: LabeledDataset,
}

/// Round data handed to the observer after each certification.
pub struct RoundView<'a> {
    pub record: &'a RoundRecord,
    pub net: &'a BarrierNet,
    pub report: &'a CertReport,
}

/// Runs the adversarial loop on a dataset in the network's input coordinates.
///
/// Stops when a round certifies every boundary cell, when the violated count
/// has not reached a new minimum for `patience` consecutive rounds, or after
/// `max_rounds`. Returns the round with the smallest ε (earliest on ties).
pub fn run_loop(
    sys: &impl ClosedLoop,
    mut dataset: LabeledDataset,
    grid: &GridSpec,
    cfg: &LoopConfig,
    mut observe: impl FnMut(RoundView<'_>) -> Result<()>,
) -> Result<LoopOutcome> {
    if cfg.max_rounds == 0 {
        return Err(Error::Config("loop: max_rounds must be positive".into()));
    }
    let mut net: Option<BarrierNet> = None;
    let mut best: Option<(BarrierNet, CertReport, usize)> = None;
    let mut history = Vec::new();
    let mut min_violated = usize::MAX;
    let mut stale = 0;
    for round in 0..cfg.max_rounds {
        let mut tcfg = if round == 0 { cfg.initial } else { cfg.retrain };
        tcfg.seed = crate::seeds::derive_seed(tcfg.seed, round as u64);
        let data = BarrierData { safe: &dataset.safe, unsafe_: &dataset.unsafe_, transitions: &dataset.transitions };
        let trained = train_barrier(net.as_ref(), cfg.hidden, data, &tcfg)?;
        let report = certify_grid(&trained.net, sys, grid, &cfg.certify)?;
        let record = RoundRecord {
            round,
            n_boundary: report.n_boundary,
            n_violated: report.n_violated,
            epsilon: report.epsilon,
            n_safe: dataset.safe.len(),
            n_unsafe: dataset.unsafe_.len(),
            train_loss: trained.best_loss,
        };
        info!(
            "round {round}: {} boundary cells, {} violated (eps {:.4}), loss {:.3e}",
            record.n_boundary, record.n_violated, record.epsilon, record.train_loss
        );
        observe(RoundView { record: &record, net: &trained.net, report: &report })?;
        history.push(record);
        if best.as_ref().is_none_or(|b| report.epsilon < b.1.epsilon) {
            best = Some((trained.net.clone(), report.clone(), round));
        }
        if report.n_violated < min_violated {
            min_violated = report.n_violated;
            stale = 0;
        } else {
            stale += 1;
        }
        if report.n_violated == 0 || stale >= cfg.patience {
            break;
        }
        let centers: Vec<Vec<f64>> = report.violated_cells().map(|c| c.bbox.center.clone()).collect();
        for (p, safe) in relabel_violations(&centers, &dataset.safe, &dataset.unsafe_, cfg.k)? {
            if dataset.push_labeled(p.clone(), safe) && safe {
                if let Ok(next) = sys.successor(&p) {
                    dataset.transitions.push(Transition { s: p, s_next: next, dt: sys.dt() });
                }
            }
        }
        net = Some(trained.net);
    }
    let (net, report, best_round) = best.expect("at least one round ran");
    Ok(LoopOutcome { net, report, best_round, history, dataset })
}

/// `round,n_boundary,n_violated,epsilon,n_safe,n_unsafe,train_loss`.
pub fn history_csv(history: &[RoundRecord]) -> String {
    let f = crate::io::fmt_f64;
    let mut s = String::from("round,n_boundary,n_violated,epsilon,n_safe,n_unsafe,train_loss\n");
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.round,
            r.n_boundary,
            r.n_violated,
            f(r.epsilon),
            r.n_safe,
            r.n_unsafe,
            f(r.train_loss)
        ));
    }
    s
}
