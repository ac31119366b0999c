//! Durable background jobs.
//!
//! Every state change is written to `<root>/jobs/<id>.json` before it becomes
//! visible. On startup, jobs found queued or running are marked failed with a
//! `Restart` error, so a job never silently disappears.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::mpsc;

use crate::store::write_atomic;
use crate::ServiceError;

pub const RESTART_ERROR: &str = "Restart: the service stopped before this job finished";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Explain,
    Evaluate,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Queued, JobState::Failed)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }

    pub fn is_final(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// Non-decreasing, in `[0, 1]`.
    pub progress: f64,
    pub result_ref: Option<String>,
    pub result: Option<Value>,
    pub error: Option<String>,
}

/// What a job produces: the artifact its `result_ref` names plus a JSON
/// summary.
pub type JobOutput = Result<(String, Value), ServiceError>;

type Work = Box<dyn FnOnce(&Progress) -> JobOutput + Send>;

pub struct JobManager {
    dir: PathBuf,
    jobs: Mutex<BTreeMap<String, Job>>,
    next: Mutex<u64>,
    queue: mpsc::Sender<(String, Work)>,
}

/// Lets running work report progress.
pub struct Progress {
    manager: Arc<JobManager>,
    id: String,
}

impl Progress {
    pub fn set(&self, p: f64) {
        let _ = self.manager.update(&self.id, |job| {
            job.progress = job.progress.max(p.clamp(0.0, 1.0));
            Ok(())
        });
    }
}

fn job_number(id: &str) -> Option<u64> {
    id.strip_prefix("job-")?.parse().ok()
}

impl JobManager {
    /// Recovers persisted jobs from `root/jobs` and starts `workers` workers
    /// on the current tokio runtime.
    pub fn start(root: &Path, capacity: usize, workers: usize) -> Result<Arc<Self>, ServiceError> {
        let dir = root.join("jobs");
        std::fs::create_dir_all(&dir)?;
        let mut jobs = BTreeMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let mut job: Job = match std::fs::read(&path).map(|b| serde_json::from_slice(&b)) {
                Ok(Ok(job)) => job,
                _ => {
                    log::warn!("ignoring unreadable job file {}", path.display());
                    continue;
                }
            };
            if !job.state.is_final() {
                job.state = JobState::Failed;
                job.error = Some(RESTART_ERROR.to_string());
                write_atomic(&path, &serde_json::to_vec_pretty(&job)?)?;
            }
            jobs.insert(job.job_id.clone(), job);
        }
        let next = jobs.keys().filter_map(|id| job_number(id)).max().map_or(1, |n| n + 1);
        let (tx, rx) = mpsc::channel::<(String, Work)>(capacity);
        let manager = Arc::new(Self {
            dir,
            jobs: Mutex::new(jobs),
            next: Mutex::new(next),
            queue: tx,
        });
        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        for _ in 0..workers {
            let rx = rx.clone();
            let manager = manager.clone();
            tokio::spawn(async move {
                loop {
                    let Some((id, work)) = rx.lock().await.recv().await else { break };
                    let m = manager.clone();
                    let run = tokio::task::spawn_blocking(move || m.execute(&id, work));
                    if let Err(e) = run.await {
                        log::error!("job worker panicked: {e}");
                    }
                }
            });
        }
        Ok(manager)
    }

    /// Queues `work`, or fails with `QueueFull` when the queue is at capacity.
    pub fn submit(
        self: &Arc<Self>,
        kind: JobKind,
        work: impl FnOnce(&Progress) -> JobOutput + Send + 'static,
    ) -> Result<Job, ServiceError> {
        let permit = self.queue.try_reserve().map_err(|_| ServiceError::QueueFull)?;
        let id = {
            let mut next = self.next.lock().expect("job counter lock");
            let id = format!("job-{:08}", *next);
            *next += 1;
            id
        };
        let job = Job {
            job_id: id.clone(),
            kind,
            state: JobState::Queued,
            progress: 0.0,
            result_ref: None,
            result: None,
            error: None,
        };
        {
            let mut jobs = self.jobs.lock().expect("job table lock");
            self.persist(&job)?;
            jobs.insert(id.clone(), job.clone());
        }
        permit.send((id, Box::new(work)));
        Ok(job)
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().expect("job table lock").get(id).cloned()
    }

    fn persist(&self, job: &Job) -> Result<(), ServiceError> {
        write_atomic(&self.dir.join(format!("{}.json", job.job_id)), &serde_json::to_vec_pretty(job)?)?;
        Ok(())
    }

    /// Applies `f` to a copy, persists it, then publishes it.
    fn update(&self, id: &str, f: impl FnOnce(&mut Job) -> Result<(), ServiceError>) -> Result<(), ServiceError> {
        let mut jobs = self.jobs.lock().expect("job table lock");
        let job = jobs.get_mut(id).ok_or_else(|| ServiceError::UnknownJob(id.to_string()))?;
        let mut next = job.clone();
        f(&mut next)?;
        if next.state != job.state && !job.state.can_become(next.state) {
            return Err(ServiceError::Internal(format!("job {id}: {:?} -> {:?}", job.state, next.state)));
        }
        self.persist(&next)?;
        *job = next;
        Ok(())
    }

    fn execute(self: &Arc<Self>, id: &str, work: Work) {
        let started = self.update(id, |job| {
            job.state = JobState::Running;
            Ok(())
        });
        if let Err(e) = started {
            log::error!("cannot start {id}: {e}");
            return;
        }
        let progress = Progress {
            manager: self.clone(),
            id: id.to_string(),
        };
        let outcome = work(&progress);
        let finished = self.update(id, |job| {
            match outcome {
                Ok((result_ref, result)) => {
                    job.state = JobState::Done;
                    job.progress = 1.0;
                    job.result_ref = Some(result_ref);
                    job.result = Some(result);
                }
                Err(e) => {
                    job.state = JobState::Failed;
                    job.error = Some(e.to_string());
                }
            }
            Ok(())
        });
        if let Err(e) = finished {
            log::error!("cannot finish {id}: {e}");
        }
    }
}
