//! Futures-style parallel task execution on a fixed set of worker slots.
//!
//! Tasks enter a FIFO queue and are handed to the lowest-index idle worker.
//! The local backend has all workers from the start. The simulated batch
//! backend models a pilot-job allocation: no worker exists until
//! `queue_delay_ms` after the first submission, then every
//! `nodes * workers_per_node` worker arrives at once.
//!
//! Every state transition (submit, start, finish, allocation) appends a
//! [`TimelineSample`]; a background sampler adds one every
//! `sample_interval_ms` as well.

use std::collections::VecDeque;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("invalid resource config: {0}")]
    ConfigInvalid(String),
    #[error("executor is shut down")]
    ExecutorShutdown,
    #[error("no timeline samples recorded")]
    NoSamples,
    #[error("timeline export failed: {0}")]
    Filesystem(#[from] std::io::Error),
    #[error("timeline export failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Error value of a task; never raised, always returned positionally.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("task failed: {0}")]
    Failed(String),
    #[error("task panicked: {0}")]
    Panicked(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Local,
    SimulatedBatch,
}

fn default_sample_interval() -> f64 {
    5000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceConfig {
    pub backend: Backend,
    pub nodes: u32,
    pub workers_per_node: u32,
    #[serde(default)]
    pub queue_delay_ms: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval_ms: f64,
}

impl ResourceConfig {
    pub fn local(workers: u32) -> Self {
        Self {
            backend: Backend::Local,
            nodes: 1,
            workers_per_node: workers,
            queue_delay_ms: 0.0,
            sample_interval_ms: default_sample_interval(),
        }
    }

    pub fn simulated_batch(nodes: u32, workers_per_node: u32, queue_delay_ms: f64) -> Self {
        Self {
            backend: Backend::SimulatedBatch,
            nodes,
            workers_per_node,
            queue_delay_ms,
            sample_interval_ms: default_sample_interval(),
        }
    }

    pub fn total_workers(&self) -> usize {
        self.nodes as usize * self.workers_per_node as usize
    }

    pub fn validate(&self) -> Result<(), ExecutorError> {
        let bad = |m: &str| Err(ExecutorError::ConfigInvalid(m.to_string()));
        if self.nodes == 0 {
            return bad("nodes must be positive");
        }
        if self.workers_per_node == 0 {
            return bad("workers_per_node must be positive");
        }
        if !(self.queue_delay_ms >= 0.0 && self.queue_delay_ms.is_finite()) {
            return bad("queue_delay_ms must be a nonnegative number");
        }
        if self.backend == Backend::Local && self.queue_delay_ms > 0.0 {
            return bad("queue_delay_ms applies to the simulated_batch backend only");
        }
        if !(self.sample_interval_ms > 0.0 && self.sample_interval_ms.is_finite()) {
            return bad("sample_interval_ms must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: u64,
    pub label: String,
    pub submit_ms: f64,
    pub start_ms: Option<f64>,
    pub end_ms: Option<f64>,
    pub worker_id: Option<usize>,
    pub status: TaskStatus,
}

impl TaskRecord {
    pub fn duration_ms(&self) -> Option<f64> {
        Some(self.end_ms? - self.start_ms?)
    }
}

/// One row of the executor timeline. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineSample {
    pub t_ms: f64,
    pub pending: usize,
    pub running: usize,
    pub completed: usize,
    pub workers_busy: usize,
    pub workers_total: usize,
}

pub const TIMELINE_HEADER: &str = "t_ms,pending,running,completed,workers_busy,workers_total";

struct Cell<T> {
    value: Mutex<Option<Result<T, TaskError>>>,
    ready: Condvar,
}

/// Resolves exactly once with the task's value or error.
pub struct TaskHandle<T> {
    task_id: u64,
    cell: Arc<Cell<T>>,
}

impl<T> fmt::Debug for TaskHandle<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskHandle")
            .field("task_id", &self.task_id)
            .finish()
    }
}

impl<T> TaskHandle<T> {
    pub fn task_id(&self) -> u64 {
        self.task_id
    }

    pub fn is_done(&self) -> bool {
        self.cell.value.lock().unwrap().is_some()
    }

    pub fn wait(self) -> Result<T, TaskError> {
        let mut slot = self.cell.value.lock().unwrap();
        loop {
            if let Some(v) = slot.take() {
                return v;
            }
            slot = self.cell.ready.wait(slot).unwrap();
        }
    }
}

/// Blocks until every handle resolves; results keep the handles' order.
pub fn wait_all<T>(handles: Vec<TaskHandle<T>>) -> Vec<Result<T, TaskError>> {
    handles.into_iter().map(TaskHandle::wait).collect()
}

struct Outcome {
    ok: bool,
    deliver: Box<dyn FnOnce() + Send>,
}

type Job = Box<dyn FnOnce() -> Outcome + Send>;

struct State {
    pending: VecDeque<u64>,
    jobs: Vec<Option<Job>>,
    records: Vec<TaskRecord>,
    slots: Vec<Option<u64>>,
    allocated: bool,
    allocation_requested: bool,
    shutdown: bool,
    running: usize,
    completed: usize,
    timeline: Vec<TimelineSample>,
}

struct Shared {
    state: Mutex<State>,
    work: Condvar,
    tick: Condvar,
    epoch: Instant,
    workers: usize,
}

impl Shared {
    fn now_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1000.0
    }

    fn sample(&self, st: &mut State) {
        let row = TimelineSample {
            t_ms: self.now_ms(),
            pending: st.pending.len(),
            running: st.running,
            completed: st.completed,
            workers_busy: st.running,
            workers_total: if st.allocated { self.workers } else { 0 },
        };
        st.timeline.push(row);
    }

    /// Hands pending tasks to idle workers, lowest worker index first.
    fn assign(&self, st: &mut State) {
        if !st.allocated {
            return;
        }
        let mut changed = false;
        while !st.pending.is_empty() {
            let Some(worker) = st.slots.iter().position(Option::is_none) else {
                break;
            };
            let id = st.pending.pop_front().expect("nonempty");
            st.slots[worker] = Some(id);
            let now = self.now_ms();
            let rec = &mut st.records[id as usize];
            rec.start_ms = Some(now);
            rec.worker_id = Some(worker);
            rec.status = TaskStatus::Running;
            st.running += 1;
            self.sample(st);
            changed = true;
        }
        if changed {
            self.work.notify_all();
        }
    }

    fn allocate(&self) {
        let mut st = self.state.lock().unwrap();
        st.allocated = true;
        self.sample(&mut st);
        self.assign(&mut st);
        self.work.notify_all();
    }
}

pub struct Executor {
    shared: Arc<Shared>,
    config: ResourceConfig,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl fmt::Debug for Executor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Executor")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Executor {
    pub fn start(config: ResourceConfig) -> Result<Self, ExecutorError> {
        config.validate()?;
        let workers = config.total_workers();
        let allocated = config.backend == Backend::Local;
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                pending: VecDeque::new(),
                jobs: Vec::new(),
                records: Vec::new(),
                slots: vec![None; workers],
                allocated,
                allocation_requested: allocated,
                shutdown: false,
                running: 0,
                completed: 0,
                timeline: Vec::new(),
            }),
            work: Condvar::new(),
            tick: Condvar::new(),
            epoch: Instant::now(),
            workers,
        });
        {
            let mut st = shared.state.lock().unwrap();
            shared.sample(&mut st);
        }
        let mut threads = Vec::with_capacity(workers + 1);
        for w in 0..workers {
            let sh = Arc::clone(&shared);
            threads.push(
                thread::Builder::new()
                    .name(format!("worker-{w}"))
                    .spawn(move || worker_loop(&sh, w))?,
            );
        }
        let sh = Arc::clone(&shared);
        let interval = Duration::from_secs_f64(config.sample_interval_ms / 1000.0);
        threads.push(
            thread::Builder::new()
                .name("timeline-sampler".into())
                .spawn(move || sampler_loop(&sh, interval))?,
        );
        log::debug!(
            "executor started with {workers} workers ({:?})",
            config.backend
        );
        Ok(Self {
            shared,
            config,
            threads: Mutex::new(threads),
        })
    }

    pub fn config(&self) -> &ResourceConfig {
        &self.config
    }

    pub fn total_workers(&self) -> usize {
        self.shared.workers
    }

    /// Milliseconds since the executor started.
    pub fn now_ms(&self) -> f64 {
        self.shared.now_ms()
    }

    /// Queues `task`. The returned handle resolves after the executor has
    /// recorded the task's completion.
    pub fn submit<T, F>(
        &self,
        label: impl Into<String>,
        task: F,
    ) -> Result<TaskHandle<T>, ExecutorError>
    where
        T: Send + 'static,
        F: FnOnce() -> Result<T, String> + Send + 'static,
    {
        let cell = Arc::new(Cell {
            value: Mutex::new(None),
            ready: Condvar::new(),
        });
        let out = Arc::clone(&cell);
        let job: Job = Box::new(move || {
            let result = match catch_unwind(AssertUnwindSafe(task)) {
                Ok(Ok(v)) => Ok(v),
                Ok(Err(e)) => Err(TaskError::Failed(e)),
                Err(payload) => Err(TaskError::Panicked(panic_message(payload.as_ref()))),
            };
            Outcome {
                ok: result.is_ok(),
                deliver: Box::new(move || {
                    *out.value.lock().unwrap() = Some(result);
                    out.ready.notify_all();
                }),
            }
        });

        let mut st = self.lock();
        if st.shutdown {
            return Err(ExecutorError::ExecutorShutdown);
        }
        let id = st.records.len() as u64;
        st.records.push(TaskRecord {
            task_id: id,
            label: label.into(),
            submit_ms: self.shared.now_ms(),
            start_ms: None,
            end_ms: None,
            worker_id: None,
            status: TaskStatus::Pending,
        });
        st.jobs.push(Some(job));
        st.pending.push_back(id);
        self.shared.sample(&mut st);
        if !st.allocation_requested {
            st.allocation_requested = true;
            if !self.request_allocation() {
                st.allocated = true;
                self.shared.sample(&mut st);
            }
        }
        self.shared.assign(&mut st);
        Ok(TaskHandle { task_id: id, cell })
    }

    /// Starts the allocation timer; false if no timer thread could be spawned.
    fn request_allocation(&self) -> bool {
        let delay = Duration::from_secs_f64(self.config.queue_delay_ms / 1000.0);
        let sh = Arc::clone(&self.shared);
        let spawned = thread::Builder::new()
            .name("batch-allocation".into())
            .spawn(move || {
                thread::sleep(delay);
                log::debug!("simulated allocation granted after {delay:?}");
                sh.allocate();
            });
        match spawned {
            Ok(h) => {
                self.threads.lock().unwrap().push(h);
                true
            }
            Err(e) => {
                log::error!("could not spawn allocation timer: {e}; allocating now");
                false
            }
        }
    }

    pub fn records(&self) -> Vec<TaskRecord> {
        self.lock().records.clone()
    }

    pub fn timeline(&self) -> Vec<TimelineSample> {
        self.lock().timeline.clone()
    }

    /// Writes the timeline as CSV with header [`TIMELINE_HEADER`].
    pub fn export_timeline(&self, dest: &Path) -> Result<PathBuf, ExecutorError> {
        let rows = self.timeline();
        if rows.is_empty() {
            return Err(ExecutorError::NoSamples);
        }
        write_timeline(&rows, dest)?;
        Ok(dest.to_path_buf())
    }

    /// Lets queued and running tasks finish, then joins every worker.
    /// Further submissions fail with [`ExecutorError::ExecutorShutdown`].
    pub fn shutdown(&self) {
        {
            let mut st = self.lock();
            if st.shutdown {
                return;
            }
            st.shutdown = true;
            self.shared.work.notify_all();
            self.shared.tick.notify_all();
        }
        let threads: Vec<_> = std::mem::take(&mut *self.threads.lock().unwrap());
        for t in threads {
            let _ = t.join();
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.shared.state.lock().unwrap()
    }
}

impl Drop for Executor {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn write_timeline(rows: &[TimelineSample], dest: &Path) -> Result<(), ExecutorError> {
    let mut w = csv::Writer::from_path(dest)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn worker_loop(sh: &Shared, worker: usize) {
    let mut st = sh.state.lock().unwrap();
    loop {
        if let Some(id) = st.slots[worker] {
            let job = st.jobs[id as usize].take().expect("job assigned once");
            drop(st);
            let outcome = job();
            st = sh.state.lock().unwrap();
            let now = sh.now_ms();
            let rec = &mut st.records[id as usize];
            rec.end_ms = Some(now);
            rec.status = if outcome.ok {
                TaskStatus::Done
            } else {
                TaskStatus::Failed
            };
            st.slots[worker] = None;
            st.running -= 1;
            st.completed += 1;
            sh.sample(&mut st);
            sh.assign(&mut st);
            drop(st);
            (outcome.deliver)();
            st = sh.state.lock().unwrap();
            continue;
        }
        if st.shutdown && st.pending.is_empty() {
            return;
        }
        st = sh.work.wait(st).unwrap();
    }
}

fn sampler_loop(sh: &Shared, interval: Duration) {
    let mut st = sh.state.lock().unwrap();
    let mut next = Instant::now() + interval;
    loop {
        if st.shutdown {
            return;
        }
        let now = Instant::now();
        if now >= next {
            sh.sample(&mut st);
            next += interval;
            continue;
        }
        st = sh.tick.wait_timeout(st, next - now).unwrap().0;
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sleeper(ms: u64) -> impl FnOnce() -> Result<u64, String> + Send + 'static {
        move || {
            thread::sleep(Duration::from_millis(ms));
            Ok(ms)
        }
    }

    #[test]
    fn config_validation() {
        assert!(ResourceConfig::local(4).validate().is_ok());
        let mut c = ResourceConfig::simulated_batch(0, 4, 10.0);
        assert!(matches!(
            Executor::start(c.clone()),
            Err(ExecutorError::ConfigInvalid(_))
        ));
        c.nodes = 25;
        assert_eq!(c.total_workers(), 100);
        let mut l = ResourceConfig::local(1);
        l.sample_interval_ms = 0.0;
        assert!(l.validate().is_err());
    }

    #[test]
    fn local_workers_available_immediately() {
        let ex = Executor::start(ResourceConfig::local(4)).unwrap();
        let first = ex.timeline()[0];
        assert_eq!(first.workers_total, 4);
        assert_eq!(ex.total_workers(), 4);
    }

    #[test]
    fn single_task_resolves_with_value() {
        let ex = Executor::start(ResourceConfig::local(2)).unwrap();
        let h = ex.submit("answer", || Ok::<_, String>(42)).unwrap();
        assert_eq!(h.wait(), Ok(42));
    }

    #[test]
    fn errors_and_panics_are_values() {
        let ex = Executor::start(ResourceConfig::local(2)).unwrap();
        let a = ex.submit("ok", || Ok::<u32, String>(1)).unwrap();
        let b = ex
            .submit("err", || Err::<u32, String>("boom".into()))
            .unwrap();
        let c = ex
            .submit("panic", || -> Result<u32, String> { panic!("kaboom") })
            .unwrap();
        let out = wait_all(vec![a, b, c]);
        assert_eq!(out[0], Ok(1));
        assert_eq!(out[1], Err(TaskError::Failed("boom".into())));
        assert_eq!(out[2], Err(TaskError::Panicked("kaboom".into())));
        let recs = ex.records();
        assert_eq!(recs[1].status, TaskStatus::Failed);
        assert_eq!(recs[0].status, TaskStatus::Done);
    }

    #[test]
    fn wait_all_empty() {
        assert!(wait_all::<()>(Vec::new()).is_empty());
    }

    #[test]
    fn submit_after_shutdown_rejected() {
        let ex = Executor::start(ResourceConfig::local(1)).unwrap();
        ex.shutdown();
        assert!(matches!(
            ex.submit("late", || Ok::<(), String>(())),
            Err(ExecutorError::ExecutorShutdown)
        ));
    }

    #[test]
    fn shutdown_drains_queue() {
        let ex = Executor::start(ResourceConfig::local(1)).unwrap();
        let hs: Vec<_> = (0..3)
            .map(|_| ex.submit("t", sleeper(10)).unwrap())
            .collect();
        ex.shutdown();
        assert!(hs.iter().all(TaskHandle::is_done));
        assert!(ex.records().iter().all(|r| r.status == TaskStatus::Done));
    }

    #[test]
    fn order_preserved_despite_completion_order() {
        let ex = Executor::start(ResourceConfig::local(3)).unwrap();
        let hs: Vec<_> = [60, 10, 30]
            .into_iter()
            .map(|ms| ex.submit("t", sleeper(ms)).unwrap())
            .collect();
        let out: Vec<_> = wait_all(hs).into_iter().map(Result::unwrap).collect();
        assert_eq!(out, vec![60, 10, 30]);
    }

    #[test]
    fn zero_task_timeline_is_flat() {
        let ex = Executor::start(ResourceConfig::local(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = ex.export_timeline(&dir.path().join("t.csv")).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TIMELINE_HEADER));
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(&cols[1..4], &["0", "0", "0"]);
        }
    }

    #[test]
    fn periodic_samples_are_recorded() {
        let mut cfg = ResourceConfig::local(1);
        cfg.sample_interval_ms = 10.0;
        let ex = Executor::start(cfg).unwrap();
        thread::sleep(Duration::from_millis(80));
        assert!(ex.timeline().len() >= 4);
    }
}
