//! Reference processor-sharing computations that share no code with the
//! event-driven simulator.
//!
//! The single-server reference tracks the attained service `V(t)` that every
//! resident job has received since the server was last empty. A job arriving
//! at `V0` with work `w` leaves when `V` reaches `V0 + w`, so departures are
//! simply the smallest outstanding thresholds.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Threshold(f64);

impl Eq for Threshold {}

impl Ord for Threshold {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Threshold {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Response times of jobs on one PS server. `jobs` are `(arrival time, work)`
/// pairs sorted by arrival time.
pub fn ps_single_server(capacity: f64, jobs: &[(f64, f64)]) -> Vec<f64> {
    let mut responses = vec![f64::NAN; jobs.len()];
    let mut heap: BinaryHeap<Reverse<(Threshold, usize)>> = BinaryHeap::new();
    let mut now = 0.0;
    let mut attained = 0.0;
    let mut next = 0;
    while next < jobs.len() || !heap.is_empty() {
        let n = heap.len() as f64;
        let departure = heap
            .peek()
            .map(|Reverse((th, _))| now + (th.0 - attained).max(0.0) * n / capacity);
        let arrival = jobs.get(next).map(|j| j.0);
        let take_departure = match (departure, arrival) {
            (Some(d), Some(a)) => d <= a,
            (Some(_), None) => true,
            _ => false,
        };
        if take_departure {
            let Reverse((th, id)) = heap.pop().unwrap();
            now = departure.unwrap();
            attained = th.0;
            responses[id] = now - jobs[id].0;
        } else {
            let (at, work) = jobs[next];
            if n > 0.0 {
                attained += (at - now) * capacity / n;
            }
            now = at;
            heap.push(Reverse((Threshold(attained + work), next)));
            next += 1;
        }
    }
    responses
}

/// No-cloning cluster reference: each request goes to exactly one server and
/// every server is an independent PS queue. Inputs are per request, in
/// arrival order.
pub fn ps_partitioned(capacities: &[f64], arrivals: &[f64], servers: &[usize], works: &[f64]) -> Vec<f64> {
    let mut responses = vec![f64::NAN; arrivals.len()];
    for (s, &cap) in capacities.iter().enumerate() {
        let ids: Vec<usize> = (0..arrivals.len()).filter(|&i| servers[i] == s).collect();
        let jobs: Vec<(f64, f64)> = ids.iter().map(|&i| (arrivals[i], works[i])).collect();
        for (k, r) in ps_single_server(cap, &jobs).into_iter().enumerate() {
            responses[ids[k]] = r;
        }
    }
    responses
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_hand_traces() {
        assert_eq!(ps_single_server(1.0, &[(0.0, 2.0), (1.0, 2.0)]), vec![3.0, 3.0]);
        assert_eq!(ps_single_server(2.0, &[(1.0, 3.0)]), vec![1.5]);
        assert_eq!(
            ps_single_server(1.0, &[(0.0, 3.0), (0.0, 1.0), (1.0, 1.0)]),
            vec![5.0, 2.5, 2.5]
        );
        // idle gap resets nothing that matters
        assert_eq!(ps_single_server(1.0, &[(0.0, 1.0), (5.0, 1.0)]), vec![1.0, 1.0]);
    }

    #[test]
    fn partitioned_runs_servers_independently() {
        let r = ps_partitioned(&[1.0, 2.0], &[0.0, 0.0, 1.0], &[0, 1, 0], &[2.0, 2.0, 2.0]);
        assert_eq!(r, vec![3.0, 1.0, 3.0]);
    }
}
