/// Activation block: `batch × steps × width`, row-major. Flat activations have `steps == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    pub batch: usize,
    pub steps: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn new(batch: usize, steps: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), batch * steps * width);
        Self {
            batch,
            steps,
            width,
            data,
        }
    }

    pub fn zeros(batch: usize, steps: usize, width: usize) -> Self {
        Self::new(batch, steps, width, vec![0.0; batch * steps * width])
    }

    /// Rows seen by per-position layers (dense, batch norm).
    pub fn rows(&self) -> usize {
        self.batch * self.steps
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.batch, self.steps, self.width)
    }
}
