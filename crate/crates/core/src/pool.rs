//! Persistent pool of fast and slow worker threads.
//!
//! Workers are spawned, and optionally pinned, once when the pool is built.
//! [`AsymPool::broadcast`] runs one closure on every worker and returns when
//! all of them finish. Calls are serialized, so a pool can be shared, but
//! two GEMMs never interleave on it.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use crate::config::{CoreClass, CoreTopology};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerInfo {
    /// Global index; fast workers come first.
    pub index: usize,
    pub class: CoreClass,
    /// Index within the worker's class.
    pub class_index: usize,
}

type Task = dyn Fn(WorkerInfo) + Sync;

struct Job {
    task: *const Task,
    latch: Arc<Latch>,
}

// SAFETY: the pointee is `Sync` and outlives the job because `broadcast`
// blocks until every worker has released it.
unsafe impl Send for Job {}

#[derive(Default)]
struct Latch {
    state: Mutex<(usize, bool)>,
    cv: Condvar,
}

impl Latch {
    fn new(count: usize) -> Self {
        Latch {
            state: Mutex::new((count, false)),
            cv: Condvar::new(),
        }
    }

    fn done(&self, panicked: bool) {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        s.0 -= 1;
        s.1 |= panicked;
        if s.0 == 0 {
            self.cv.notify_all();
        }
    }

    fn wait(&self) -> bool {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while s.0 > 0 {
            s = self.cv.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        s.1
    }
}

struct Worker {
    tx: Option<Sender<Job>>,
    handle: Option<JoinHandle<()>>,
    info: WorkerInfo,
}

pub struct AsymPool {
    workers: Vec<Worker>,
    topology: CoreTopology,
    pinned: Vec<bool>,
    gate: Mutex<()>,
}

impl std::fmt::Debug for AsymPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AsymPool")
            .field("topology", &self.topology)
            .field("pinned", &self.pinned)
            .finish()
    }
}

impl AsymPool {
    pub fn new(topology: CoreTopology) -> Result<Self> {
        topology.validate()?;
        let mut workers = Vec::with_capacity(topology.total_threads());
        let (pin_tx, pin_rx) = channel::<(usize, bool)>();
        let mut index = 0;
        for class in CoreClass::ALL {
            for class_index in 0..topology.threads(class) {
                let info = WorkerInfo {
                    index,
                    class,
                    class_index,
                };
                let core = topology.core_id(class, class_index);
                let (tx, rx) = channel::<Job>();
                let pin_tx = pin_tx.clone();
                let handle = std::thread::Builder::new()
                    .name(format!("agemm-{class}-{class_index}"))
                    .spawn(move || {
                        let pinned = core.is_some_and(pin_current_thread);
                        let _ = pin_tx.send((info.index, pinned));
                        drop(pin_tx);
                        for job in rx {
                            // SAFETY: see `Job`.
                            let task = unsafe { &*job.task };
                            let result = catch_unwind(AssertUnwindSafe(|| task(info)));
                            job.latch.done(result.is_err());
                        }
                    })?;
                workers.push(Worker {
                    tx: Some(tx),
                    handle: Some(handle),
                    info,
                });
                index += 1;
            }
        }
        drop(pin_tx);
        let mut pinned = vec![false; workers.len()];
        for (i, ok) in pin_rx {
            pinned[i] = ok;
        }
        Ok(AsymPool {
            workers,
            topology,
            pinned,
            gate: Mutex::new(()),
        })
    }

    pub fn topology(&self) -> &CoreTopology {
        &self.topology
    }

    pub fn threads(&self) -> usize {
        self.workers.len()
    }

    /// Whether each worker was successfully bound to its requested core.
    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    pub fn workers(&self) -> impl Iterator<Item = WorkerInfo> + '_ {
        self.workers.iter().map(|w| w.info)
    }

    /// Runs `task` once on every worker and waits for all of them.
    ///
    /// # Panics
    /// Re-panics on the caller if any worker panicked.
    pub fn broadcast<F>(&self, task: &F)
    where
        F: Fn(WorkerInfo) + Sync,
    {
        let _gate = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        let latch = Arc::new(Latch::new(self.workers.len()));
        let task: &(dyn Fn(WorkerInfo) + Sync + '_) = task;
        // SAFETY: lifetime erasure only; `latch.wait()` below does not
        // return until every worker is done with the pointer.
        let task: *const Task = unsafe {
            std::mem::transmute::<&(dyn Fn(WorkerInfo) + Sync + '_), &'static Task>(task)
        };
        for w in &self.workers {
            let job = Job {
                task,
                latch: Arc::clone(&latch),
            };
            if w.tx.as_ref().is_some_and(|tx| tx.send(job).is_ok()) {
                continue;
            }
            // worker gone; count it as finished with an error
            latch.done(true);
        }
        if latch.wait() {
            panic!("an agemm worker thread panicked");
        }
    }
}

impl Drop for AsymPool {
    fn drop(&mut self) {
        for w in &mut self.workers {
            w.tx.take();
        }
        for w in &mut self.workers {
            if let Some(h) = w.handle.take() {
                let _ = h.join();
            }
        }
    }
}

/// Binds the calling thread to `core`. Returns false where unsupported or refused.
#[cfg(target_os = "linux")]
pub fn pin_current_thread(core: usize) -> bool {
    // SAFETY: cpu_set_t is plain data; CPU_SET bounds-checks the index
    // against the set size, and pid 0 addresses the calling thread.
    let ok = unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if core >= 8 * std::mem::size_of::<libc::cpu_set_t>() {
            false
        } else {
            libc::CPU_SET(core, &mut set);
            libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
        }
    };
    if !ok {
        log::warn!(
            "could not pin thread to core {core}: {}",
            std::io::Error::last_os_error()
        );
    }
    ok
}

#[cfg(not(target_os = "linux"))]
pub fn pin_current_thread(core: usize) -> bool {
    log::warn!("thread pinning is not supported on this platform (core {core})");
    false
}
