//! Patience-based early stopping on validation loss.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    /// This epoch has the lowest loss so far.
    Improved,
    Continue,
    Stop,
}

/// Stops once `patience` consecutive epochs fail to strictly improve on the
/// best loss seen.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if loss >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, loss));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.map(|b| b.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(patience: usize, losses: &[f64]) -> (usize, Option<usize>) {
        let mut es = EarlyStopping::new(patience);
        for (i, &l) in losses.iter().enumerate() {
            if es.observe(i + 1, l) == StopDecision::Stop {
                return (i + 1, es.best_epoch());
            }
        }
        (losses.len(), es.best_epoch())
    }

    #[test]
    fn increasing_losses_stop_after_patience() {
        assert_eq!(run(1, &[1.0, 2.0, 3.0, 4.0]), (2, Some(1)));
        assert_eq!(run(3, &[1.0, 2.0, 3.0, 4.0, 5.0]), (4, Some(1)));
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        assert_eq!(run(2, &[3.0, 2.0, 2.0, 2.0, 1.0]), (4, Some(2)));
    }

    #[test]
    fn improvement_resets_the_counter() {
        assert_eq!(run(2, &[5.0, 6.0, 4.0, 7.0, 3.0, 8.0, 9.0]), (7, Some(5)));
    }
}
