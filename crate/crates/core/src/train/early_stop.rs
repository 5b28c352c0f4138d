//! Patience-based early stopping on the selection score.

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// An epoch counts as an improvement only if it beats the best score so far
/// by more than `min_delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: Scalar,
    best: Option<Scalar>,
    since: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: Scalar) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: None,
            since: 0,
        }
    }

    pub fn best(&self) -> Option<Scalar> {
        self.best
    }

    /// Epochs since the last improvement.
    pub fn stale_epochs(&self) -> usize {
        self.since
    }

    pub fn update(&mut self, score: Scalar) -> StopDecision {
        match self.best {
            Some(b) if score <= b + self.min_delta => self.since += 1,
            _ => {
                self.best = Some(score);
                self.since = 0;
            }
        }
        if self.since >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_gain_does_not_reset() {
        let mut e = EarlyStopping::new(2, 1e-3);
        assert_eq!(e.update(0.5), StopDecision::Continue);
        assert_eq!(e.update(0.5005), StopDecision::Continue);
        assert_eq!(e.stale_epochs(), 1);
        assert_eq!(e.update(0.5), StopDecision::Stop);
    }

    #[test]
    fn constant_scores_stop_after_patience() {
        let mut e = EarlyStopping::new(10, 1e-3);
        let stop = (0..100)
            .position(|_| e.update(0.3) == StopDecision::Stop)
            .unwrap();
        assert_eq!(stop, 10);
    }

    #[test]
    fn improving_never_stops() {
        let mut e = EarlyStopping::new(1, 1e-3);
        assert!((0..50).all(|i| e.update(i as Scalar * 0.01) == StopDecision::Continue));
    }
}
