use std::time::Duration;

use proptest::prelude::*;
use toolflow::executor::{wait_all, Executor, ResourceConfig, TimelineSample};

/// Greedy list scheduling of equal-length tasks in submission order.
fn list_schedule(durations: &[f64], workers: usize) -> f64 {
    let mut free = vec![0.0f64; workers];
    for d in durations {
        let (i, _) = free
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        free[i] += d;
    }
    free.into_iter().fold(0.0, f64::max)
}

fn sleeper(ms: u64) -> impl FnOnce() -> Result<(), String> + Send + 'static {
    move || {
        std::thread::sleep(Duration::from_millis(ms));
        Ok(())
    }
}

fn check_rows(rows: &[TimelineSample], workers: usize) {
    for w in rows.windows(2) {
        assert!(w[1].t_ms >= w[0].t_ms);
        assert!(w[1].completed >= w[0].completed);
        let total = |s: &TimelineSample| s.pending + s.running + s.completed;
        assert!(total(&w[1]) >= total(&w[0]));
    }
    for r in rows {
        assert_eq!(r.workers_busy, r.running);
        assert!(r.running <= workers);
        assert!(r.workers_busy <= r.workers_total);
    }
}

#[test]
fn makespan_follows_list_scheduling() {
    let exec = Executor::start(ResourceConfig::local(3)).unwrap();
    let handles: Vec<_> = (0..7)
        .map(|i| exec.submit(format!("t{i}"), sleeper(60)).unwrap())
        .collect();
    wait_all(handles);
    let records = exec.records();
    let first = records
        .iter()
        .map(|r| r.submit_ms)
        .fold(f64::INFINITY, f64::min);
    let last = records.iter().filter_map(|r| r.end_ms).fold(0.0, f64::max);
    let expected = list_schedule(&[60.0; 7], 3);
    assert_eq!(expected, 180.0);
    let makespan = last - first;
    assert!(
        (makespan - expected).abs() <= 0.2 * expected,
        "makespan {makespan} vs {expected}"
    );
    check_rows(&exec.timeline(), 3);
}

#[test]
fn batch_allocation_waits_for_queue_delay() {
    let exec = Executor::start(ResourceConfig::simulated_batch(2, 2, 250.0)).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|i| exec.submit(format!("t{i}"), sleeper(20)).unwrap())
        .collect();
    wait_all(handles);
    let records = exec.records();
    let submit0 = records[0].submit_ms;
    for r in &records {
        assert!(r.start_ms.unwrap() - submit0 >= 250.0);
    }
    let rows = exec.timeline();
    assert!(rows
        .iter()
        .filter(|s| s.t_ms < submit0 + 249.0)
        .all(|s| s.workers_total == 0 && s.running == 0));
    check_rows(&rows, 4);
}

#[test]
fn timeline_csv_round_trips() {
    let exec = Executor::start(ResourceConfig::local(2)).unwrap();
    wait_all(
        (0..3)
            .map(|_| exec.submit("t", sleeper(5)).unwrap())
            .collect(),
    );
    let d = tempfile::tempdir().unwrap();
    let path = exec.export_timeline(&d.path().join("t.csv")).unwrap();
    let mut reader = csv::Reader::from_path(path).unwrap();
    let rows: Vec<TimelineSample> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows, exec.timeline());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn timeline_invariants_hold(tasks in 0usize..12, workers in 1u32..5) {
        let exec = Executor::start(ResourceConfig::local(workers)).unwrap();
        let handles: Vec<_> = (0..tasks)
            .map(|i| exec.submit(format!("t{i}"), sleeper(2 + (i as u64 % 3))).unwrap())
            .collect();
        let results = wait_all(handles);
        prop_assert!(results.iter().all(Result::is_ok));
        exec.shutdown();
        let rows = exec.timeline();
        check_rows(&rows, workers as usize);
        let last = rows.last().unwrap();
        prop_assert_eq!(last.completed, tasks);
        prop_assert_eq!(last.pending + last.running, 0);
    }
}
