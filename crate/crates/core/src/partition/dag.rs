use crate::error::{Error, Result};

use super::PartitionPlan;

/// Arena location of a part used by a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinRef {
    pub part: u32,
    pub bin: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// Write `out` back to the host (if any), then load `load` into `bin`.
    Swap {
        bin: usize,
        out: Option<u32>,
        load: Option<u32>,
    },
    /// Move the sample pool of kernel `kernel` into a free pool bin.
    PoolCopy { kernel: usize },
    /// Run the updates of kernel `kernel` on the pair `(a, b)`.
    Kernel { kernel: usize, a: BinRef, b: BinRef },
}

/// Tasks of one round in creation order, which is also a topological order.
///
/// A task may start once every `after_start` predecessor has started and
/// every `after_finish` predecessor has finished.
#[derive(Clone, Debug, Default)]
pub struct TaskDag {
    pub tasks: Vec<Task>,
    pub after_start: Vec<Vec<usize>>,
    pub after_finish: Vec<Vec<usize>>,
    pub pool_bins: usize,
}

impl TaskDag {
    fn push(&mut self, task: Task, after_start: Vec<usize>, mut after_finish: Vec<usize>) -> usize {
        after_finish.sort_unstable();
        after_finish.dedup();
        self.tasks.push(task);
        self.after_start.push(after_start);
        self.after_finish.push(after_finish);
        self.tasks.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Number of swap tasks that load a part.
    pub fn load_count(&self) -> usize {
        self.tasks
            .iter()
            .filter(|t| matches!(t, Task::Swap { load: Some(_), .. }))
            .count()
    }

    /// Kahn's algorithm over both edge kinds.
    pub fn is_acyclic(&self) -> bool {
        let n = self.tasks.len();
        let mut indegree = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for t in 0..n {
            for &p in self.after_start[t].iter().chain(&self.after_finish[t]) {
                indegree[t] += 1;
                succ[p].push(t);
            }
        }
        let mut stack: Vec<usize> = (0..n).filter(|&t| indegree[t] == 0).collect();
        let mut seen = 0;
        while let Some(t) = stack.pop() {
            seen += 1;
            for &s in &succ[t] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    stack.push(s);
                }
            }
        }
        seen == n
    }
}

/// Builds the task graph of one round over `order`.
///
/// The arena starts empty. A missing part goes to a free bin, otherwise it
/// evicts the resident part whose next use lies farthest ahead, never one
/// the current kernel needs. The round ends by writing every resident part
/// back. Two consecutive kernels may overlap; pool copies run in kernel
/// order with at most `S` pools in the arena.
pub fn build_dag(order: &[(u32, u32)], plan: &PartitionPlan) -> Result<TaskDag> {
    let p = plan.sub_bins();
    let s = plan.pool_bins();
    if p < 2 {
        return Err(Error::Config("at least 2 submatrix bins are required".into()));
    }
    let k = plan.part_count() as u32;
    if let Some(&(a, b)) = order.iter().find(|&&(a, b)| a >= k || b >= k) {
        return Err(Error::Config(format!("kernel ({a}, {b}) names a part beyond {k}")));
    }

    let mut dag = TaskDag {
        pool_bins: s,
        ..Default::default()
    };
    let mut resident: Vec<Option<u32>> = vec![None; p];
    // per bin: last swap task and kernels that used the current content
    let mut last_swap: Vec<Option<usize>> = vec![None; p];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut kernels: Vec<usize> = Vec::with_capacity(order.len());
    let mut pool_copies: Vec<usize> = Vec::with_capacity(order.len());

    let swap = |dag: &mut TaskDag,
                bin: usize,
                load: Option<u32>,
                resident: &mut Vec<Option<u32>>,
                last_swap: &mut Vec<Option<usize>>,
                users: &mut Vec<Vec<usize>>| {
        let mut deps = std::mem::take(&mut users[bin]);
        deps.extend(last_swap[bin]);
        let t = dag.push(
            Task::Swap {
                bin,
                out: resident[bin],
                load,
            },
            Vec::new(),
            deps,
        );
        resident[bin] = load;
        last_swap[bin] = Some(t);
    };

    for (j, &(a, b)) in order.iter().enumerate() {
        let needed = [a, b];
        for &part in &needed {
            if resident.contains(&Some(part)) {
                continue;
            }
            let bin = match resident.iter().position(Option::is_none) {
                Some(free) => free,
                None => (0..p)
                    .filter(|&bin| !needed.contains(&resident[bin].unwrap()))
                    .max_by_key(|&bin| {
                        let part = resident[bin].unwrap();
                        let next = order[j..]
                            .iter()
                            .position(|&(x, y)| x == part || y == part)
                            .unwrap_or(usize::MAX);
                        (next, std::cmp::Reverse(bin))
                    })
                    .expect("two bins always leave one evictable"),
            };
            swap(&mut dag, bin, Some(part), &mut resident, &mut last_swap, &mut users);
        }

        let mut deps = Vec::new();
        if j >= 1 {
            deps.push(pool_copies[j - 1]);
        }
        // every kernel up to j - s has released its pool bin
        for back in [s, s + 1] {
            if j >= back {
                deps.push(kernels[j - back]);
            }
        }
        let copy = dag.push(Task::PoolCopy { kernel: j }, Vec::new(), deps);
        pool_copies.push(copy);

        let bin_of = |part: u32| resident.iter().position(|&r| r == Some(part)).unwrap();
        let (bin_a, bin_b) = (bin_of(a), bin_of(b));
        let mut deps = vec![copy];
        deps.extend(last_swap[bin_a]);
        deps.extend(last_swap[bin_b]);
        if j >= 2 {
            deps.push(kernels[j - 2]);
        }
        let after_start = if j >= 1 { vec![kernels[j - 1]] } else { Vec::new() };
        let kernel = dag.push(
            Task::Kernel {
                kernel: j,
                a: BinRef { part: a, bin: bin_a },
                b: BinRef { part: b, bin: bin_b },
            },
            after_start,
            deps,
        );
        kernels.push(kernel);
        users[bin_a].push(kernel);
        if bin_b != bin_a {
            users[bin_b].push(kernel);
        }
    }

    for bin in 0..p {
        if resident[bin].is_some() {
            swap(&mut dag, bin, None, &mut resident, &mut last_swap, &mut users);
        }
    }
    Ok(dag)
}
