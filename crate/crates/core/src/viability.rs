//! Viability kernel, viable transitions and time-to-failure on a
//! [`TransitionTable`].

use rayon::prelude::*;
use serde::Serialize;

use crate::dynsys::TransitionTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelResult {
    /// Membership in the viability kernel. The sink is never viable.
    pub viable: Vec<bool>,
    /// `next(s, a)` lies in the kernel, for every source `s`.
    successor_viable: Vec<bool>,
    /// Steps until the failure set is reached under the longest-surviving
    /// controls; `None` on viable states and the sink.
    pub tf: Vec<Option<u32>>,
    /// Largest finite `tf` (0 when no state needs to fall).
    pub tf_max: u32,
    /// Number of kernel sweeps until the fixpoint was stable.
    pub iterations: usize,
    n_controls: usize,
}

impl KernelResult {
    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    /// `(s, a)` belongs to the viable transitions: `s` is viable and so is
    /// its successor.
    #[inline]
    pub fn in_qv(&self, s: usize, a: usize) -> bool {
        self.viable[s] && self.successor_viable[s * self.n_controls + a]
    }

    /// The successor of `(s, a)` is viable, whatever `s` is.
    #[inline]
    pub fn successor_viable(&self, s: usize, a: usize) -> bool {
        self.successor_viable[s * self.n_controls + a]
    }

    pub fn viable_count(&self) -> usize {
        self.viable.iter().filter(|&&v| v).count()
    }

    /// Admissible controls of a viable state.
    pub fn qv_controls(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_controls).filter(move |&a| self.in_qv(s, a))
    }
}

/// Greatest fixpoint of `S -> {s in S : exists a, next(s, a) in S}` started
/// from the non-failure, non-sink states. Sweeps are Jacobi-style: each reads
/// only the previous iterate.
pub fn compute_kernel(tt: &TransitionTable) -> Result<KernelResult> {
    let n = tt.n_states();
    let nc = tt.n_controls();
    let sink = tt.sink();
    let mut current: Vec<bool> = (0..n).map(|s| s != sink && !tt.is_failure(s)).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next: Vec<bool> = (0..n)
            .into_par_iter()
            .map(|s| current[s] && (0..nc).any(|a| current[tt.next(s, a)]))
            .collect();
        let changed = next != current;
        current = next;
        if !changed {
            break;
        }
        if iterations > n {
            return Err(Error::Invariant("kernel sweep did not stabilize".into()));
        }
    }
    let successor_viable: Vec<bool> = (0..n * nc).map(|k| current[tt.next(k / nc, k % nc)]).collect();

    let mut kr = KernelResult {
        viable: current,
        successor_viable,
        tf: Vec::new(),
        tf_max: 0,
        iterations,
        n_controls: nc,
    };
    let (tf, tf_max) = time_to_failure(tt, &kr)?;
    kr.tf = tf;
    kr.tf_max = tf_max;
    Ok(kr)
}

/// Longest time to failure from every unviable state: `tf = 0` on failure
/// states and `1 + max_a tf(next(s, a))` elsewhere, by ascending fixpoint.
pub fn time_to_failure(tt: &TransitionTable, kr: &KernelResult) -> Result<(Vec<Option<u32>>, u32)> {
    let n = tt.n_states();
    let nc = tt.n_controls();
    let sink = tt.sink();
    let mut tf: Vec<Option<u32>> = (0..n)
        .map(|s| if tt.is_failure(s) { Some(0) } else { None })
        .collect();
    let mut pending: Vec<usize> = (0..n)
        .filter(|&s| s != sink && !kr.viable[s] && !tt.is_failure(s))
        .collect();
    while !pending.is_empty() {
        let resolved: Vec<(usize, u32)> = pending
            .par_iter()
            .filter_map(|&s| {
                let mut worst = 0;
                for a in 0..nc {
                    let t = tf[tt.next(s, a)]?;
                    worst = worst.max(t);
                }
                Some((s, worst + 1))
            })
            .collect();
        if resolved.is_empty() {
            return Err(Error::Invariant(format!(
                "{} unviable states never reach the failure set",
                pending.len()
            )));
        }
        for &(s, t) in &resolved {
            tf[s] = Some(t);
        }
        pending.retain(|&s| tf[s].is_none());
    }
    let tf_max = tf.iter().flatten().copied().max().unwrap_or(0);
    Ok((tf, tf_max))
}
