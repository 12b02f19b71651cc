//! Fixtures shared by the benchmarks.

use kinespike::encoding::EventWindow;
use kinespike::numcore::Rng;
use kinespike::{OperatorId, TaskId, NUM_FEATURES};

/// `n` ternary event windows of the default shape with about 30% activity.
pub fn event_windows(n: usize, seed: u64) -> Vec<EventWindow> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| EventWindow {
            x: (0..40 * NUM_FEATURES)
                .map(|_| match rng.below(20) {
                    0..=2 => 1.0,
                    3..=5 => -1.0,
                    _ => 0.0,
                })
                .collect(),
            length: 40,
            width: NUM_FEATURES,
            task: TaskId::ALL[i % 4],
            operator: OperatorId::ALL[(i / 4) % 4],
            log_id: format!("bench{i}"),
            start: 0,
        })
        .collect()
}
