use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::{CcsError, Term};

/// Scheduling discipline constraining which task orderings are admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    Free,
    EventLoop,
    Executor { carriers: usize },
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discipline::Free => write!(f, "free"),
            Discipline::EventLoop => write!(f, "event-loop"),
            Discipline::Executor { carriers } => write!(f, "executor({carriers})"),
        }
    }
}

/// Which initial queue orders the event-loop/executor enumerations consider.
#[derive(Debug, Clone)]
pub enum QueueOrders {
    /// Every permutation of the component indices.
    All,
    /// Explicit initial orders, each a permutation of `0..k`.
    Given(Vec<Vec<usize>>),
}

/// The enumerated set of admissible task orderings.
#[derive(Debug, Clone)]
pub struct InterleavingSet {
    pub discipline: Discipline,
    pub sequences: BTreeSet<Vec<String>>,
}

impl InterleavingSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn contains(&self, seq: &[String]) -> bool {
        self.sequences.contains(seq)
    }
}

/// Enumerates every linear extension of the component program orders.
///
/// Recursive terms need `depth` (number of unrollings per binder); passing
/// `None` for a recursive term is an error.
pub fn enumerate_free(term: &Term, depth: Option<usize>) -> Result<InterleavingSet, CcsError> {
    term.check_guarded()?;
    let flat = if term.is_recursive() {
        let d = depth.ok_or(CcsError::UnboundedTerm)?;
        term.unroll(d)
    } else {
        term.clone()
    };
    let mut sequences = BTreeSet::new();
    let mut prefix = Vec::new();
    collect_traces(&flat, &mut prefix, &mut sequences);
    Ok(InterleavingSet {
        discipline: Discipline::Free,
        sequences,
    })
}

fn collect_traces(term: &Term, prefix: &mut Vec<String>, out: &mut BTreeSet<Vec<String>>) {
    let succ = term.steps();
    if succ.is_empty() {
        out.insert(prefix.clone());
        return;
    }
    for (label, next) in succ {
        prefix.push(label);
        collect_traces(&next, prefix, out);
        prefix.pop();
    }
}

/// Runs the single-queue FIFO protocol: tasks execute in queue order and each
/// completed task enqueues its component's successor at the back. One
/// deterministic sequence per initial queue order.
pub fn enumerate_event_loop(
    components: &[Vec<String>],
    orders: &QueueOrders,
) -> Result<InterleavingSet, CcsError> {
    let mut sequences = BTreeSet::new();
    for order in resolve_orders(components.len(), orders)? {
        let mut queue: VecDeque<(usize, usize)> = order
            .iter()
            .copied()
            .filter(|&c| !components[c].is_empty())
            .map(|c| (c, 0))
            .collect();
        let mut seq = Vec::new();
        while let Some((c, i)) = queue.pop_front() {
            seq.push(components[c][i].clone());
            if i + 1 < components[c].len() {
                queue.push_back((c, i + 1));
            }
        }
        sequences.insert(seq);
    }
    Ok(InterleavingSet {
        discipline: Discipline::EventLoop,
        sequences,
    })
}

/// Enumerates the orderings reachable when up to `carriers` workers consume
/// the same FIFO queue. Workers grab queue heads eagerly; any in-flight task
/// may complete next, and completion enqueues the component's successor.
pub fn enumerate_executor(
    components: &[Vec<String>],
    carriers: usize,
    orders: &QueueOrders,
) -> Result<InterleavingSet, CcsError> {
    if carriers < 1 {
        return Err(CcsError::InvalidCarrierCount);
    }
    let mut sequences = BTreeSet::new();
    for order in resolve_orders(components.len(), orders)? {
        let queue: VecDeque<(usize, usize)> = order
            .iter()
            .copied()
            .filter(|&c| !components[c].is_empty())
            .map(|c| (c, 0))
            .collect();
        executor_dfs(
            components,
            carriers,
            queue,
            Vec::new(),
            Vec::new(),
            &mut sequences,
        );
    }
    Ok(InterleavingSet {
        discipline: Discipline::Executor { carriers },
        sequences,
    })
}

fn executor_dfs(
    components: &[Vec<String>],
    carriers: usize,
    mut queue: VecDeque<(usize, usize)>,
    mut running: Vec<(usize, usize)>,
    prefix: Vec<String>,
    out: &mut BTreeSet<Vec<String>>,
) {
    while running.len() < carriers {
        match queue.pop_front() {
            Some(task) => running.push(task),
            None => break,
        }
    }
    if running.is_empty() {
        out.insert(prefix);
        return;
    }
    for slot in 0..running.len() {
        let (c, i) = running[slot];
        let mut next_running = running.clone();
        next_running.remove(slot);
        let mut next_queue = queue.clone();
        if i + 1 < components[c].len() {
            next_queue.push_back((c, i + 1));
        }
        let mut next_prefix = prefix.clone();
        next_prefix.push(components[c][i].clone());
        executor_dfs(components, carriers, next_queue, next_running, next_prefix, out);
    }
}

/// Enumerates a parsed term under the given discipline. Event-loop and
/// executor disciplines consider all initial queue orders and require the
/// term to flatten into parallel sequential components.
pub fn enumerate(
    term: &Term,
    discipline: Discipline,
    depth: Option<usize>,
) -> Result<InterleavingSet, CcsError> {
    match discipline {
        Discipline::Free => enumerate_free(term, depth),
        Discipline::EventLoop => {
            let comps = term.components(depth)?;
            enumerate_event_loop(&comps, &QueueOrders::All)
        }
        Discipline::Executor { carriers } => {
            let comps = term.components(depth)?;
            enumerate_executor(&comps, carriers, &QueueOrders::All)
        }
    }
}

/// Checks whether a projected task sequence is admissible under the
/// discipline. Labels that do not occur in the term are an error rather
/// than a `false`.
pub fn is_admissible(
    term: &Term,
    sequence: &[String],
    discipline: Discipline,
    depth: Option<usize>,
) -> Result<bool, CcsError> {
    let known = term.labels();
    for label in sequence {
        if !known.contains(label) {
            return Err(CcsError::UnknownLabel(label.clone()));
        }
    }
    let set = enumerate(term, discipline, depth)?;
    Ok(set.contains(sequence))
}

fn resolve_orders(k: usize, orders: &QueueOrders) -> Result<Vec<Vec<usize>>, CcsError> {
    match orders {
        QueueOrders::All => Ok(permutations(k)),
        QueueOrders::Given(list) => {
            for order in list {
                let mut seen = vec![false; k];
                let valid = order.len() == k
                    && order.iter().all(|&i| {
                        if i < k && !seen[i] {
                            seen[i] = true;
                            true
                        } else {
                            false
                        }
                    });
                if !valid {
                    return Err(CcsError::InvalidQueueOrder(order.clone()));
                }
            }
            Ok(list.clone())
        }
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..k).collect();
    permute(&mut items, 0, &mut out);
    if out.is_empty() {
        out.push(Vec::new());
    }
    out
}

fn permute(items: &mut Vec<usize>, at: usize, out: &mut Vec<Vec<usize>>) {
    if at == items.len() {
        if !items.is_empty() {
            out.push(items.clone());
        }
        return;
    }
    for i in at..items.len() {
        items.swap(at, i);
        permute(items, at + 1, out);
        items.swap(at, i);
    }
}
