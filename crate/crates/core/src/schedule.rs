//! Mini-batch scheduling shared by training and latency accounting.

/// Batch sizes for one epoch over `samples` items: full batches, then the
/// remainder.
pub fn epoch_batch_sizes(samples: usize, batch_size: usize) -> Vec<usize> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut sizes = vec![batch_size; samples / batch_size];
    if !samples.is_multiple_of(batch_size) {
        sizes.push(samples % batch_size);
    }
    sizes
}

/// Two flows advancing batch-by-batch together. The flow with fewer batches
/// wraps around to its first batch until the longer one finishes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockstepSchedule {
    steps: Vec<(usize, usize)>,
}

impl LockstepSchedule {
    pub fn new(samples_i: usize, samples_j: usize, batch_size: usize) -> Self {
        let a = epoch_batch_sizes(samples_i, batch_size);
        let b = epoch_batch_sizes(samples_j, batch_size);
        let len = if a.is_empty() || b.is_empty() {
            0
        } else {
            a.len().max(b.len())
        };
        let steps = (0..len).map(|s| (a[s % a.len()], b[s % b.len()])).collect();
        Self { steps }
    }

    /// Batch sizes `(flow_i, flow_j)` of each step within one epoch.
    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remainder_batch_is_last() {
        assert_eq!(epoch_batch_sizes(10, 4), vec![4, 4, 2]);
        assert_eq!(epoch_batch_sizes(8, 4), vec![4, 4]);
        assert!(epoch_batch_sizes(0, 4).is_empty());
    }

    #[test]
    fn shorter_flow_wraps() {
        let s = LockstepSchedule::new(10, 4, 4);
        assert_eq!(s.steps(), &[(4, 4), (4, 4), (2, 4)]);
        let s = LockstepSchedule::new(3, 9, 2);
        assert_eq!(s.steps(), &[(2, 2), (1, 2), (2, 2), (1, 2), (2, 1)]);
    }
}
