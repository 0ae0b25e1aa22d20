/// Divides the learning rate by `factor` once the monitored loss has gone
/// `patience` consecutive epochs without reaching a new minimum.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    lr: f64,
    factor: f64,
    patience: usize,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        PlateauSchedule { lr, factor, patience, best: f64::INFINITY, stale: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records one epoch's validation loss; returns true if it was a new
    /// minimum.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
            return true;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.lr /= self.factor;
            self.stale = 0;
        }
        false
    }
}
