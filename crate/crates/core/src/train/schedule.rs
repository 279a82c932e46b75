use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// When the embedding table starts receiving updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnfreezePolicy {
    FromStart,
    /// Frozen until validation loss and BLEU-4 stop moving together.
    OnBreakdown,
    Never,
}

impl fmt::Display for UnfreezePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnfreezePolicy::FromStart => "from_start",
            UnfreezePolicy::OnBreakdown => "on_breakdown",
            UnfreezePolicy::Never => "never",
        })
    }
}

impl FromStr for UnfreezePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "from_start" => Ok(UnfreezePolicy::FromStart),
            "on_breakdown" => Ok(UnfreezePolicy::OnBreakdown),
            "never" => Ok(UnfreezePolicy::Never),
            other => Err(Error::Config(format!(
                "unknown unfreeze policy {other:?} (expected from_start, on_breakdown or never)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Continue,
    UnfreezeEmbeddings,
    Stop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Continue => "continue",
            Action::UnfreezeEmbeddings => "unfreeze_embeddings",
            Action::Stop => "stop",
        })
    }
}

/// Effective learning rate of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupRate {
    pub group: String,
    pub rate: f64,
}

/// Summary of one training epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean per-token negative log-likelihood over the epoch's batches.
    pub train_loss: f64,
    /// Teacher-forced per-token loss on the validation split, if any.
    pub val_loss: Option<f64>,
    /// Corpus BLEU-4 of greedy captions on the validation split, if any.
    pub val_bleu4: Option<f64>,
    pub lr_state: Vec<GroupRate>,
    pub action: Action,
}

impl EpochReport {
    /// `epoch,train_loss,val_loss,val_bleu4,action`, with `nan` for
    /// missing validation numbers.
    pub fn log_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("nan".to_owned(), |x| format!("{x:.6}"));
        format!(
            "{},{:.6},{},{},{}",
            self.epoch,
            self.train_loss,
            opt(self.val_loss),
            opt(self.val_bleu4),
            self.action
        )
    }
}

/// Decides what to do after the last report in `history`.
///
/// A breakdown is a validation loss that rose against the previous epoch
/// while BLEU-4 did not fall. Under [`UnfreezePolicy::OnBreakdown`] the
/// first breakdown unfreezes the embeddings. Training stops once BLEU-4 has
/// gone `patience` epochs without a strict improvement on its best value.
pub fn validate_and_schedule(history: &[EpochReport], policy: UnfreezePolicy, patience: usize) -> Action {
    let Some(last) = history.last() else {
        return Action::Continue;
    };
    let (Some(loss), Some(bleu)) = (last.val_loss, last.val_bleu4) else {
        return Action::Continue;
    };
    if policy == UnfreezePolicy::OnBreakdown && history.len() >= 2 {
        let prev = &history[history.len() - 2];
        let already = history[..history.len() - 1]
            .iter()
            .any(|r| r.action == Action::UnfreezeEmbeddings);
        if let (Some(prev_loss), Some(prev_bleu)) = (prev.val_loss, prev.val_bleu4) {
            if !already && loss > prev_loss && bleu >= prev_bleu {
                return Action::UnfreezeEmbeddings;
            }
        }
    }
    let best = best_epoch(history).unwrap_or(history.len() - 1);
    if history.len() - 1 - best >= patience {
        return Action::Stop;
    }
    Action::Continue
}

/// Index of the first report holding the highest BLEU-4.
pub fn best_epoch(history: &[EpochReport]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in history.iter().enumerate() {
        if let Some(b) = r.val_bleu4 {
            if best.is_none_or(|(_, v)| b > v) {
                best = Some((i, b));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(epoch: usize, loss: f64, bleu: f64) -> EpochReport {
        EpochReport {
            epoch,
            train_loss: 1.0,
            val_loss: Some(loss),
            val_bleu4: Some(bleu),
            lr_state: vec![],
            action: Action::Continue,
        }
    }

    fn history(points: &[(f64, f64)]) -> Vec<EpochReport> {
        points.iter().enumerate().map(|(i, &(l, b))| report(i, l, b)).collect()
    }

    #[test]
    fn improving_history_continues() {
        let h = history(&[(3.0, 0.1), (2.5, 0.2), (2.0, 0.3)]);
        assert_eq!(validate_and_schedule(&h, UnfreezePolicy::OnBreakdown, 3), Action::Continue);
    }

    #[test]
    fn first_breakdown_unfreezes() {
        let mut h = history(&[(2.0, 0.2), (2.2, 0.25)]);
        assert_eq!(
            validate_and_schedule(&h, UnfreezePolicy::OnBreakdown, 3),
            Action::UnfreezeEmbeddings
        );
        assert_eq!(validate_and_schedule(&h, UnfreezePolicy::Never, 3), Action::Continue);
        assert_eq!(validate_and_schedule(&h, UnfreezePolicy::FromStart, 3), Action::Continue);
        h[1].action = Action::UnfreezeEmbeddings;
        h.push(report(2, 2.4, 0.3));
        assert_eq!(validate_and_schedule(&h, UnfreezePolicy::OnBreakdown, 3), Action::Continue);
    }

    #[test]
    fn falling_bleu_is_not_a_breakdown() {
        let h = history(&[(2.0, 0.3), (2.2, 0.25)]);
        assert_eq!(validate_and_schedule(&h, UnfreezePolicy::OnBreakdown, 3), Action::Continue);
    }

    #[test]
    fn patience_stops_after_flat_bleu() {
        let h = history(&[(2.0, 0.4), (1.9, 0.4), (1.8, 0.4), (1.7, 0.4)]);
        assert_eq!(validate_and_schedule(&h, UnfreezePolicy::Never, 3), Action::Stop);
        assert_eq!(validate_and_schedule(&h[..3], UnfreezePolicy::Never, 3), Action::Continue);
        assert_eq!(best_epoch(&h), Some(0));
    }

    #[test]
    fn no_validation_never_stops() {
        let mut r = report(0, 1.0, 0.0);
        r.val_loss = None;
        r.val_bleu4 = None;
        assert_eq!(validate_and_schedule(&[r.clone(), r], UnfreezePolicy::OnBreakdown, 0), Action::Continue);
    }

    #[test]
    fn log_line_format() {
        let mut r = report(4, 0.5, 0.25);
        r.action = Action::Stop;
        assert_eq!(r.log_line(), "4,1.000000,0.500000,0.250000,stop");
    }
}
