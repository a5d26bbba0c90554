//! Minimum-cost linear assignment (Hungarian method, shortest augmenting
//! paths with potentials) and the IoU gating used by the tracker.

use super::geometry::{iou, BBox};

/// Cost given to pairs that fail the IoU gate. Large enough that the solver
/// only uses such a pair when it cannot be avoided, after which it is
/// discarded.
const GATED_COST: f64 = 1e6;

/// Solves min Σ cost[r][assign[r]] over matchings of size min(rows, cols).
///
/// Returns, per row, the assigned column (`None` only when there are more
/// rows than columns). Costs must be finite.
pub fn solve(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    if cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| cost[r][c]).collect())
            .collect();
        let by_col = solve(&transposed);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }

    // rows <= cols. 1-based arrays; index 0 is the virtual root.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
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
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Result of matching predicted track boxes against detections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// (track index, detection index)
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Optimal matching on cost 1 − IoU; pairs with IoU below `min_iou` are
/// never matched.
pub fn associate(tracks: &[BBox], detections: &[BBox], min_iou: f64) -> Association {
    let cost: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| {
                    let o = iou(t, d);
                    if o >= min_iou && o > 0.0 {
                        1.0 - o
                    } else {
                        GATED_COST
                    }
                })
                .collect()
        })
        .collect();
    let assign = solve(&cost);
    let mut out = Association::default();
    let mut det_used = vec![false; detections.len()];
    for (t, a) in assign.into_iter().enumerate() {
        match a {
            Some(d) if cost[t][d] < GATED_COST => {
                out.matches.push((t, d));
                det_used[d] = true;
            }
            _ => out.unmatched_tracks.push(t),
        }
    }
    out.unmatched_detections = (0..detections.len()).filter(|&d| !det_used[d]).collect();
    out
}
