use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The iteration budget was used up.
    Budget,
    /// The loss decrease stayed below the threshold for `patience` steps.
    Plateau,
    /// The loss became NaN.
    Diverged,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Budget => "budget",
            StopReason::Plateau => "plateau",
            StopReason::Diverged => "diverged",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Continue,
    Stop(StopReason),
}

/// Stops an optimisation once `steps` iterations have run or the loss has
/// improved by less than `decreasing` for `patience` consecutive steps.
#[derive(Clone, Debug, PartialEq)]
pub struct StopOnPlateau {
    pub steps: usize,
    pub patience: usize,
    pub decreasing: f64,
    pub verbose: bool,
    count: usize,
    flat: usize,
    last: Option<f64>,
    stopped: Option<StopReason>,
}

impl StopOnPlateau {
    pub fn new(steps: usize, patience: usize, decreasing: f64) -> Self {
        StopOnPlateau {
            steps,
            patience,
            decreasing,
            verbose: false,
            count: 0,
            flat: 0,
            last: None,
            stopped: None,
        }
    }

    pub fn verbose(mut self, verbose: bool) -> Self {
        self.verbose = verbose;
        self
    }

    /// False once a stop has been issued (or the budget is zero).
    pub fn continual(&self) -> bool {
        self.stopped.is_none() && self.count < self.steps
    }

    pub fn steps_taken(&self) -> usize {
        self.count
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stopped
    }

    /// Records the loss after one optimisation step.
    pub fn step(&mut self, loss: f64) -> Schedule {
        self.count += 1;
        let decision = if loss.is_nan() {
            Schedule::Stop(StopReason::Diverged)
        } else {
            if let Some(prev) = self.last {
                if prev - loss < self.decreasing {
                    self.flat += 1;
                } else {
                    self.flat = 0;
                }
            }
            self.last = Some(loss);
            if self.flat >= self.patience {
                Schedule::Stop(StopReason::Plateau)
            } else if self.count >= self.steps {
                Schedule::Stop(StopReason::Budget)
            } else {
                Schedule::Continue
            }
        };
        if self.verbose {
            log::info!("step {} loss {loss:e} ({decision:?})", self.count);
        }
        if let Schedule::Stop(reason) = decision {
            self.stopped = Some(reason);
        }
        decision
    }
}

/// Free-function form of [`StopOnPlateau::step`].
pub fn scheduler_step(sched: &mut StopOnPlateau, loss: f64) -> Schedule {
    sched.step(loss)
}
