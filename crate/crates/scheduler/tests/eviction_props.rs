//! Property tests for the eviction selectors.

use preempt_protocol::{Priority, TaskLaunchDescriptor, TaskRecord, TaskState};
use preempt_scheduler::{select_victim, EvictionPolicy};
use proptest::prelude::*;

fn record(id: String, progress: f64, resident: u64, swapped: u64) -> TaskRecord {
    TaskRecord {
        task_id: preempt_protocol::TaskId(id.clone()),
        priority: Priority::Low,
        state: TaskState::Running,
        assigned_worker: None,
        progress_fraction: progress,
        submit_time_ms: 0,
        first_launch_time_ms: Some(0),
        suspend_times_ms: vec![],
        resume_times_ms: vec![],
        completion_time_ms: None,
        resident_bytes: resident,
        swapped_bytes: swapped,
        swapped_bytes_peak: swapped,
        attempt_count: 1,
        attempts: vec![],
        descriptor: TaskLaunchDescriptor {
            task_id: preempt_protocol::TaskId(id),
            executable: "x".into(),
            args: vec![],
            input_path: "x".into(),
            input_bytes: 1,
            ballast_bytes: 0,
            progress_interval_tuples: 1,
        },
    }
}

fn arb_candidates() -> impl Strategy<Value = Vec<TaskRecord>> {
    prop::collection::btree_map("[a-z]{1,8}", (0.0f64..=1.0, 0u64..1 << 30, 0u64..1 << 28), 1..8)
        .prop_map(|m| {
            m.into_iter()
                .map(|(id, (p, r, s))| record(id, p, r, s))
                .collect()
        })
}

proptest! {
    /// Scaling every candidate's progress (or footprint) by a positive
    /// constant never changes the winner.
    #[test]
    fn scaling_invariance(cands in arb_candidates(), scale in 1u64..8) {
        let by_progress = select_victim(EvictionPolicy::ClosestToCompletion, &cands).unwrap();
        let scaled: Vec<TaskRecord> = cands
            .iter()
            .cloned()
            .map(|mut c| {
                c.progress_fraction /= scale as f64; // positive scaling
                c
            })
            .collect();
        prop_assert_eq!(
            select_victim(EvictionPolicy::ClosestToCompletion, &scaled).unwrap(),
            by_progress
        );

        let by_footprint = select_victim(EvictionPolicy::SmallestFootprint, &cands).unwrap();
        let scaled: Vec<TaskRecord> = cands
            .iter()
            .cloned()
            .map(|mut c| {
                c.resident_bytes *= scale;
                c.swapped_bytes *= scale;
                c
            })
            .collect();
        prop_assert_eq!(
            select_victim(EvictionPolicy::SmallestFootprint, &scaled).unwrap(),
            by_footprint
        );
    }

    /// The winner is always one of the candidates, and deterministic.
    #[test]
    fn deterministic_member(cands in arb_candidates()) {
        for policy in [EvictionPolicy::ClosestToCompletion, EvictionPolicy::SmallestFootprint] {
            let a = select_victim(policy, &cands).unwrap();
            let b = select_victim(policy, &cands).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(cands.iter().any(|c| c.task_id == a));
        }
    }
}
