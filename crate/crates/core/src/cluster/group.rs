use std::any::Any;
use std::ops::Add;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use super::trace::{
    all_gather_bytes, ring_all_reduce_bytes, CollectiveKind, CollectiveRecord, CollectiveTrace,
};
use crate::{Error, Result};

/// How worker programs are driven between collectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    /// One worker runs at a time, in rank order, between collectives.
    #[default]
    Sequential,
    /// All workers run freely on their own threads.
    Parallel,
}

impl std::fmt::Display for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheduler::Sequential => "sequential",
            Scheduler::Parallel => "parallel",
        })
    }
}

impl std::str::FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Scheduler::Sequential),
            "parallel" => Ok(Scheduler::Parallel),
            other => Err(Error::Config(format!("unknown scheduler `{other}`"))),
        }
    }
}

/// Values a collective can carry.
pub trait Element: Copy + Send + Sync + 'static {}
impl<T: Copy + Send + Sync + 'static> Element for T {}

/// Values a sum-AllReduce can combine.
pub trait Summable: Element + Add<Output = Self> {}
impl<T: Element + Add<Output = T>> Summable for T {}

/// A fixed-size group of simulated workers sharing a collective trace.
#[derive(Debug)]
pub struct WorkerGroup {
    size: usize,
    scheduler: Scheduler,
    step_counter: u64,
    trace: CollectiveTrace,
}

impl WorkerGroup {
    pub fn new(size: usize) -> Result<Self> {
        Self::with_scheduler(size, Scheduler::Sequential)
    }

    pub fn with_scheduler(size: usize, scheduler: Scheduler) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("worker group needs at least one worker".into()));
        }
        Ok(Self {
            size,
            scheduler,
            step_counter: 0,
            trace: CollectiveTrace::default(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn scheduler(&self) -> Scheduler {
        self.scheduler
    }

    /// Number of collectives completed so far.
    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn trace(&self) -> &CollectiveTrace {
        &self.trace
    }

    /// Runs `program` once per rank with that rank's `state`. Collectives act
    /// as barriers; results are in rank order.
    pub fn run_lockstep<S, R, F>(&mut self, states: Vec<S>, program: F) -> Result<Vec<R>>
    where
        S: Send,
        R: Send,
        F: Fn(&Communicator<'_>, S) -> Result<R> + Sync,
    {
        if states.len() != self.size {
            return Err(Error::Config(format!(
                "{} worker states for a group of {}",
                states.len(),
                self.size
            )));
        }
        let rendezvous = Rendezvous::new(self.size, self.scheduler, self.step_counter);
        let outcomes: Vec<Result<R>> = std::thread::scope(|scope| {
            let handles: Vec<_> = states
                .into_iter()
                .enumerate()
                .map(|(rank, state)| {
                    let rendezvous = &rendezvous;
                    let program = &program;
                    scope.spawn(move || {
                        let comm = Communicator { rank, rendezvous };
                        let mut exit = ExitGuard {
                            rank,
                            rendezvous,
                            errored: true,
                        };
                        let out = rendezvous.wait_turn(rank).and_then(|()| program(&comm, state));
                        exit.errored = out.is_err();
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| match h.join() {
                    Ok(r) => r,
                    Err(panic) => std::panic::resume_unwind(panic),
                })
                .collect()
        });

        let state = rendezvous.into_inner();
        self.step_counter = state.next_seq;
        self.trace.records.extend(state.records);

        let mut results = Vec::with_capacity(self.size);
        let mut first_err: Option<Error> = None;
        for (rank, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) => {
                    // prefer a root cause over a peer-exit report
                    let is_root = rank == state.first_exit_with_error.unwrap_or(usize::MAX);
                    if first_err.is_none() || is_root {
                        first_err = Some(e);
                    }
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(results),
        }
    }

    /// Runs a stateless program on every rank.
    pub fn run<R, F>(&mut self, program: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&Communicator<'_>) -> Result<R> + Sync,
    {
        let states = vec![(); self.size];
        self.run_lockstep(states, |comm, ()| program(comm))
    }

    /// Driver-side AllGather: rank `i` contributes `buffers[i]`; returns what
    /// every rank holds afterwards.
    pub fn all_gather<T: Element>(
        &mut self,
        buffers: Vec<Vec<T>>,
        element_bytes: u64,
        variable_length: bool,
    ) -> Result<Vec<Vec<Vec<T>>>> {
        self.run_lockstep(buffers, |comm, buf| {
            comm.all_gather("all_gather", &buf, element_bytes, variable_length)
        })
    }

    /// Driver-side sum-AllReduce.
    pub fn all_reduce_sum<T: Summable>(
        &mut self,
        arrays: Vec<Vec<T>>,
        element_bytes: u64,
    ) -> Result<Vec<Vec<T>>> {
        self.run_lockstep(arrays, |comm, a| comm.all_reduce_sum("all_reduce", &a, element_bytes))
    }
}

/// A rank's handle to the group's collectives.
pub struct Communicator<'a> {
    rank: usize,
    rendezvous: &'a Rendezvous,
}

impl Communicator<'_> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.rendezvous.size
    }

    /// Tags subsequent collectives of this rank (e.g. with a training step);
    /// ranks must agree on the tag of each collective.
    pub fn set_tag(&self, tag: u64) {
        self.rendezvous.lock().tags[self.rank] = tag;
    }

    /// Every rank receives all buffers in rank order. With `variable_length`
    /// a length word per buffer is exchanged first and charged to the trace;
    /// without it, receivers are assumed to know the sizes already.
    pub fn all_gather<T: Element>(
        &self,
        label: &str,
        local: &[T],
        element_bytes: u64,
        variable_length: bool,
    ) -> Result<Vec<Vec<T>>> {
        let header = Header {
            kind: CollectiveKind::AllGather,
            label: label.to_string(),
            element_bytes,
            variable_length,
        };
        let out = self.rendezvous.collective(
            self.rank,
            header,
            Box::new(local.to_vec()),
            |headers, slots| {
                let buffers = downcast_all::<T>(slots, headers)?;
                let elements: Vec<u64> = buffers.iter().map(|b| b.len() as u64).collect();
                let (sent, received, peak) =
                    all_gather_bytes(&elements, element_bytes, variable_length)?;
                let accounting = Accounting {
                    elements,
                    sent,
                    received,
                    peak,
                };
                Ok((Box::new(buffers) as Box<dyn Any + Send + Sync>, accounting))
            },
        )?;
        Ok(out
            .downcast_ref::<Vec<Vec<T>>>()
            .expect("all_gather result type")
            .clone())
    }

    /// Elementwise sum over ranks, accumulated in rank order `0..G`, with
    /// ring-algorithm byte accounting.
    pub fn all_reduce_sum<T: Summable>(
        &self,
        label: &str,
        local: &[T],
        element_bytes: u64,
    ) -> Result<Vec<T>> {
        let header = Header {
            kind: CollectiveKind::AllReduce,
            label: label.to_string(),
            element_bytes,
            variable_length: false,
        };
        let out = self.rendezvous.collective(
            self.rank,
            header,
            Box::new(local.to_vec()),
            |headers, slots| {
                let arrays = downcast_all::<T>(slots, headers)?;
                let n = arrays[0].len();
                if let Some(bad) = arrays.iter().position(|a| a.len() != n) {
                    return Err(Error::Protocol(format!(
                        "all_reduce `{}`: rank {bad} supplied {} elements, rank 0 supplied {n}",
                        headers[0].label,
                        arrays[bad].len()
                    )));
                }
                let mut sum = arrays[0].clone();
                for a in &arrays[1..] {
                    for (acc, &v) in sum.iter_mut().zip(a) {
                        *acc = *acc + v;
                    }
                }
                let g = arrays.len() as u64;
                let (sent, received, peak) = ring_all_reduce_bytes(g, n as u64, element_bytes)?;
                let accounting = Accounting {
                    elements: vec![n as u64; arrays.len()],
                    sent: vec![sent; arrays.len()],
                    received: vec![received; arrays.len()],
                    peak,
                };
                Ok((Box::new(sum) as Box<dyn Any + Send + Sync>, accounting))
            },
        )?;
        Ok(out.downcast_ref::<Vec<T>>().expect("all_reduce result type").clone())
    }
}

fn downcast_all<T: Element>(
    slots: Vec<Box<dyn Any + Send>>,
    headers: &[Header],
) -> Result<Vec<Vec<T>>> {
    slots
        .into_iter()
        .enumerate()
        .map(|(rank, slot)| {
            slot.downcast::<Vec<T>>().map(|b| *b).map_err(|_| {
                Error::Protocol(format!(
                    "`{}`: rank {rank} supplied a different element type",
                    headers[rank].label
                ))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Header {
    kind: CollectiveKind,
    label: String,
    element_bytes: u64,
    variable_length: bool,
}

struct Accounting {
    elements: Vec<u64>,
    sent: Vec<u64>,
    received: Vec<u64>,
    peak: u64,
}

type Combined = Arc<dyn Any + Send + Sync>;

struct State {
    headers: Vec<Option<(Header, u64)>>,
    slots: Vec<Option<Box<dyn Any + Send>>>,
    tags: Vec<u64>,
    arrived: usize,
    generation: u64,
    result: Option<Combined>,
    exited: Vec<bool>,
    failure: Option<Error>,
    first_exit_with_error: Option<usize>,
    turn: usize,
    next_seq: u64,
    records: Vec<CollectiveRecord>,
}

struct Rendezvous {
    size: usize,
    scheduler: Scheduler,
    state: Mutex<State>,
    cv: Condvar,
}

impl Rendezvous {
    fn new(size: usize, scheduler: Scheduler, first_seq: u64) -> Self {
        Self {
            size,
            scheduler,
            state: Mutex::new(State {
                headers: vec![None; size],
                slots: (0..size).map(|_| None).collect(),
                tags: vec![0; size],
                arrived: 0,
                generation: 0,
                result: None,
                exited: vec![false; size],
                failure: None,
                first_exit_with_error: None,
                turn: 0,
                next_seq: first_seq,
                records: Vec::new(),
            }),
            cv: Condvar::new(),
        }
    }

    fn into_inner(self) -> State {
        self.state.into_inner().unwrap_or_else(|p| p.into_inner())
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn sequential(&self) -> bool {
        self.scheduler == Scheduler::Sequential
    }

    /// Next rank after `after` that may still run, wrapping around.
    fn pass_turn(&self, st: &mut State, after: usize) {
        for step in 1..=self.size {
            let r = (after + step) % self.size;
            if !st.exited[r] && st.headers[r].is_none() {
                st.turn = r;
                return;
            }
        }
    }

    fn wait_turn(&self, rank: usize) -> Result<()> {
        if !self.sequential() {
            return Ok(());
        }
        let mut st = self.lock();
        while st.turn != rank {
            if let Some(e) = &st.failure {
                return Err(e.clone());
            }
            st = self.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
        Ok(())
    }

    /// A waiting collective can never complete once a rank that has not
    /// arrived has exited.
    fn check_deadlock(&self, st: &mut State) {
        if st.failure.is_some() || st.arrived == 0 {
            return;
        }
        if let Some(gone) = (0..self.size).find(|&r| st.exited[r] && st.headers[r].is_none()) {
            let waiting: Vec<usize> = (0..self.size).filter(|&r| st.headers[r].is_some()).collect();
            let label = st
                .headers
                .iter()
                .flatten()
                .next()
                .map(|(h, _)| h.label.clone())
                .unwrap_or_default();
            st.failure = Some(Error::Protocol(format!(
                "rank {gone} exited while ranks {waiting:?} wait at collective `{label}` (#{})",
                st.next_seq
            )));
        }
    }

    fn collective<F>(
        &self,
        rank: usize,
        header: Header,
        payload: Box<dyn Any + Send>,
        combine: F,
    ) -> Result<Combined>
    where
        F: FnOnce(&[Header], Vec<Box<dyn Any + Send>>) -> Result<(Box<dyn Any + Send + Sync>, Accounting)>,
    {
        let mut st = self.lock();
        if let Some(e) = &st.failure {
            return Err(e.clone());
        }
        let tag = st.tags[rank];
        st.headers[rank] = Some((header, tag));
        st.slots[rank] = Some(payload);
        st.arrived += 1;
        let my_generation = st.generation;

        if st.arrived == self.size {
            self.complete(&mut st, combine);
            self.cv.notify_all();
        } else {
            if self.sequential() {
                self.pass_turn(&mut st, rank);
            }
            self.check_deadlock(&mut st);
            self.cv.notify_all();
        }

        loop {
            if let Some(e) = &st.failure {
                return Err(e.clone());
            }
            let done = st.generation != my_generation;
            if done && (!self.sequential() || st.turn == rank) {
                return Ok(st.result.clone().expect("completed collective has a result"));
            }
            st = self.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    fn complete<F>(&self, st: &mut State, combine: F)
    where
        F: FnOnce(&[Header], Vec<Box<dyn Any + Send>>) -> Result<(Box<dyn Any + Send + Sync>, Accounting)>,
    {
        let entries: Vec<(Header, u64)> = st.headers.iter_mut().map(|h| h.take().unwrap()).collect();
        let slots: Vec<Box<dyn Any + Send>> = st.slots.iter_mut().map(|s| s.take().unwrap()).collect();
        st.arrived = 0;

        let (first, first_tag) = &entries[0];
        for (rank, (h, tag)) in entries.iter().enumerate().skip(1) {
            if h != first || tag != first_tag {
                st.failure = Some(Error::Protocol(format!(
                    "collective #{}: rank {rank} called {:?} `{}` (tag {tag}) but rank 0 called {:?} `{}` (tag {first_tag})",
                    st.next_seq, h.kind, h.label, first.kind, first.label
                )));
                return;
            }
        }
        let headers: Vec<Header> = entries.iter().map(|(h, _)| h.clone()).collect();
        match combine(&headers, slots) {
            Ok((value, acc)) => {
                st.records.push(CollectiveRecord {
                    seq: st.next_seq,
                    kind: first.kind,
                    label: first.label.clone(),
                    tag: *first_tag,
                    element_bytes: first.element_bytes,
                    variable_length: first.variable_length,
                    elements: acc.elements,
                    per_worker_sent: acc.sent,
                    per_worker_received: acc.received,
                    peak_resident: acc.peak,
                });
                st.next_seq += 1;
                st.result = Some(Arc::from(value));
                st.generation += 1;
                st.turn = (0..self.size).find(|&r| !st.exited[r]).unwrap_or(0);
            }
            Err(e) => st.failure = Some(e),
        }
    }

    fn exit(&self, rank: usize, errored: bool) {
        let mut st = self.lock();
        st.exited[rank] = true;
        if errored && st.first_exit_with_error.is_none() {
            st.first_exit_with_error = Some(rank);
        }
        if self.sequential() && st.turn == rank {
            self.pass_turn(&mut st, rank);
        }
        self.check_deadlock(&mut st);
        self.cv.notify_all();
    }
}

/// Marks a rank as exited however its program ends, including by panic.
struct ExitGuard<'a> {
    rank: usize,
    rendezvous: &'a Rendezvous,
    errored: bool,
}

impl Drop for ExitGuard<'_> {
    fn drop(&mut self) {
        self.rendezvous.exit(self.rank, self.errored);
    }
}
