//! Incremental commute-time estimates for a node that has just been attached.
//!
//! A walk leaving the new node `i` first moves to one of its neighbours `l` with
//! probability `p_il = w_il / d_i` and then behaves as a walk on the old graph, which
//! is left essentially unchanged by a single insertion. Returning to `i` from `l`
//! costs on average the return time `V_G / d_i` plus the step back. Together these
//! give `c_ij ≈ Σ_l p_il c_lj + V_G / d_i` with only `k` old commute-time lookups.
//!
//! `V_G` is always the volume of the graph *before* insertion, i.e. the volume the
//! old commute-time source was built on.

use crate::graph::Perturbation;
use crate::spectral::CommuteTimes;

/// Directed expected hitting times between existing nodes.
pub trait HittingTimes {
    fn node_count(&self) -> usize;
    fn hitting_time(&self, from: usize, to: usize) -> f64;
}

/// Single-edge estimate: `c_lj + V_G / w_il`.
pub fn ctd_rank1<C: CommuteTimes + ?Sized>(old: &C, l: usize, w_il: f64, j: usize) -> f64 {
    old.commute_time(l, j) + old.volume() / w_il
}

/// Estimate of the commute time between the new node of `p` and existing node `j`.
///
/// Issues exactly `p.rank()` queries against `old`.
pub fn ctd_rankk<C: CommuteTimes + ?Sized>(old: &C, p: &Perturbation, j: usize) -> f64 {
    let d = p.degree();
    let mut sum = 0.0;
    for &(l, w) in p.edges() {
        sum += (w / d) * old.commute_time(l, j);
    }
    sum + old.volume() / d
}

/// Which end of the walk the new node is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Expected steps from the new node to `j`.
    FromNew,
    /// Expected steps from `j` to the new node.
    ToNew,
}

/// Hitting-time estimates for the new node from directed old hitting times.
///
/// `volume` is the pre-insertion graph volume. The two directions add up to
/// `ctd_rankk` plus exactly 2 when both draw on the same old values, one step for
/// the move off `i` and one for the final step back onto it.
pub fn hitting_rankk<H: HittingTimes + ?Sized>(
    old: &H,
    volume: f64,
    p: &Perturbation,
    j: usize,
    direction: Direction,
) -> f64 {
    let d = p.degree();
    let weighted: f64 = p
        .edges()
        .iter()
        .map(|&(l, w)| {
            let h = match direction {
                Direction::FromNew => old.hitting_time(l, j),
                Direction::ToNew => old.hitting_time(j, l),
            };
            (w / d) * h
        })
        .sum();
    match direction {
        Direction::FromNew => 1.0 + weighted,
        Direction::ToNew => weighted + volume / d + 1.0,
    }
}

/// Commute times assembled from directed hitting times, `c_ij = h_ij + h_ji`.
pub struct FromHitting<'a, H: ?Sized> {
    pub hitting: &'a H,
    pub volume: f64,
}

impl<H: HittingTimes + ?Sized> CommuteTimes for FromHitting<'_, H> {
    fn node_count(&self) -> usize {
        self.hitting.node_count()
    }

    fn volume(&self) -> f64 {
        self.volume
    }

    fn commute_time(&self, i: usize, j: usize) -> f64 {
        self.hitting.hitting_time(i, j) + self.hitting.hitting_time(j, i)
    }
}
