//! Data-parallel helpers with a sequential fallback.
//!
//! Every heavy loop in the crate (corpus generation, log parsing, bootstrap
//! replications, Monte-Carlo power) goes through [`Exec`]. Results are always
//! collected in index order, so output is identical whichever mode runs it.
//! Without the `parallel` feature, [`Exec::Parallel`] runs sequentially.

use crate::hash::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// `(0..n).map(f).collect()`, in order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// `items.iter().map(f).collect()`, in order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Folds `0..n` into an accumulator. `merge` must be commutative and
    /// associative (integer tallies are) for the parallel result to match the
    /// sequential one.
    #[cfg_attr(not(feature = "parallel"), allow(unused_variables))]
    pub fn fold_indexed<A, I, F, M>(self, n: u64, identity: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, u64) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().fold(&identity, &fold).reduce(&identity, &merge)
            }
            _ => (0..n).fold(identity(), fold),
        }
    }
}

/// Independent child seed for shard/replication `index` of a run seeded with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
