//! Priority treatment of inequality groups.
//!
//! Groups are enabled in order. Group `k + 1` joins once every row of groups
//! `0..=k` satisfies `g_i <= tol`. Enabled groups stay enabled, so the set of
//! enforced rows only grows along a trajectory. Equality rows are always
//! enforced.

use thiserror::Error;

use crate::linalg::Vector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PtsError {
    #[error("row {} appears in more than one priority group", .0 + 1)]
    Duplicate(usize),
    #[error("row {} is out of range (problem has {} inequality rows)", .0 + 1, .1)]
    OutOfRange(usize, usize),
    #[error("row {} is not assigned to any priority group", .0 + 1)]
    Missing(usize),
    #[error("priority group {} is empty", .0 + 1)]
    EmptyGroup(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PtsState {
    groups: Vec<Vec<usize>>,
    r: usize,
    /// Number of leading groups enforced.
    enabled: usize,
}

impl PtsState {
    /// `groups` must partition `0..r` (0-based row indices).
    pub fn new(groups: Vec<Vec<usize>>, r: usize) -> Result<Self, PtsError> {
        let mut seen = vec![false; r];
        for (k, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(PtsError::EmptyGroup(k));
            }
            for &i in group {
                if i >= r {
                    return Err(PtsError::OutOfRange(i, r));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(PtsError::Duplicate(i));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(PtsError::Missing(i));
        }
        let mut groups = groups;
        for g in &mut groups {
            g.sort_unstable();
        }
        let enabled = usize::from(!groups.is_empty());
        Ok(PtsState { groups, r, enabled })
    }

    /// One group holding every row: all rows enforced from the start.
    pub fn single(r: usize) -> Self {
        let groups = if r == 0 { Vec::new() } else { vec![(0..r).collect()] };
        PtsState::new(groups, r).expect("a single group partitions the rows")
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn enabled_count(&self) -> usize {
        self.enabled
    }

    pub fn enabled_groups(&self) -> Vec<usize> {
        (0..self.enabled).collect()
    }

    pub fn all_enabled(&self) -> bool {
        self.enabled == self.groups.len()
    }

    pub fn enabled_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.r];
        for group in &self.groups[..self.enabled] {
            for &i in group {
                mask[i] = true;
            }
        }
        mask
    }

    /// Enables further groups while every enabled row satisfies `g_i <= tol`.
    pub fn update(&self, g: &Vector, tol: f64) -> PtsState {
        let mut next = self.clone();
        while next.enabled < next.groups.len() {
            let satisfied = next.groups[..next.enabled].iter().flatten().all(|&i| g[i] <= tol);
            if !satisfied {
                break;
            }
            next.enabled += 1;
        }
        next
    }
}
