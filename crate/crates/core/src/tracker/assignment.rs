//! Optimal IoU association between predicted tracks and detections.

use crate::detector::Detection;
use crate::geometry::{iou, BoundingBox};
use crate::num::Real;

/// Result of associating predicted track boxes with fresh detections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    /// (track index, detection index), sorted by track index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_dets: Vec<usize>,
}

/// Assign detections to tracks maximizing total IoU (Hungarian method),
/// then sever any pairing whose IoU falls below `iou_min`.
pub fn associate<F: Real>(
    tracks: &[BoundingBox<F>],
    dets: &[Detection<F>],
    iou_min: F,
) -> Association {
    let (nt, nd) = (tracks.len(), dets.len());
    let n = nt.max(nd);
    if n == 0 {
        return Association { matches: vec![], unmatched_tracks: vec![], unmatched_dets: vec![] };
    }
    // Pad to square with zero-IoU entries; minimize negated IoU.
    let cost: Vec<Vec<F>> = (0..n)
        .map(|t| {
            (0..n)
                .map(|d| {
                    if t < nt && d < nd {
                        -iou(&tracks[t], &dets[d].bbox)
                    } else {
                        F::zero()
                    }
                })
                .collect()
        })
        .collect();
    let row_to_col = hungarian_min(&cost);
    let mut matches = Vec::new();
    let mut unmatched_tracks = Vec::new();
    let mut matched_dets = vec![false; nd];
    for t in 0..nt {
        let d = row_to_col[t];
        if d < nd && iou(&tracks[t], &dets[d].bbox) >= iou_min {
            matches.push((t, d));
            matched_dets[d] = true;
        } else {
            unmatched_tracks.push(t);
        }
    }
    let unmatched_dets = (0..nd).filter(|&d| !matched_dets[d]).collect();
    Association { matches, unmatched_tracks, unmatched_dets }
}

/// Minimum-cost perfect assignment on a square matrix via shortest
/// augmenting paths with potentials (O(n³)). Returns the column chosen for
/// each row.
pub(crate) fn hungarian_min<F: Real>(cost: &[Vec<F>]) -> Vec<usize> {
    let n = cost.len();
    debug_assert!(cost.iter().all(|r| r.len() == n));
    // 1-based potentials over rows (u) and columns (v); p[j] is the row
    // currently assigned to column j, 0 meaning free.
    let mut u = vec![F::zero(); n + 1];
    let mut v = vec![F::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![F::infinity(); n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = F::infinity();
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the recorded path.
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}
