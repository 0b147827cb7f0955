//! Food-patch identity from ground-truth cow spawn points.
//!
//! Spawn points are clustered by single linkage at distance 2 * radius. The
//! simulator controls spawn placement, so patch identity is exact rather
//! than inferred from eat events.

use serde::Serialize;

use crate::worldgen::{ArenaLayout, Pos};

#[derive(Debug, Clone, Serialize)]
pub struct Patch {
    pub id: usize,
    pub center: (f64, f64),
    pub members: Vec<Pos>,
    /// Acceptance radius for "the agent is in this patch": the configured
    /// radius plus the spread of the member spawn points.
    pub radius: f64,
}

impl Patch {
    pub fn contains(&self, p: Pos) -> bool {
        let dx = f64::from(p.x) - self.center.0;
        let dy = f64::from(p.y) - self.center.1;
        (dx * dx + dy * dy).sqrt() <= self.radius
    }
}

/// Single-linkage clustering of spawn points with linkage distance
/// 2 * radius. Output is canonical: members sorted by (y, x), patches sorted
/// by their first member, so the result is invariant to input order.
pub fn detect_patches(layout: &ArenaLayout, radius: f64) -> Vec<Patch> {
    let points = &layout.cow_spawn_points;
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let linkage = 2.0 * radius;
    for i in 0..n {
        for j in i + 1..n {
            if points[i].dist(points[j]) <= linkage {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::HashMap<usize, Vec<Pos>> = std::collections::HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(points[i]);
    }
    let mut clusters: Vec<Vec<Pos>> = groups.into_values().collect();
    for members in &mut clusters {
        members.sort_by_key(|p| (p.y, p.x));
    }
    clusters.sort_by_key(|m| (m[0].y, m[0].x));
    clusters
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let cx = members.iter().map(|p| f64::from(p.x)).sum::<f64>() / members.len() as f64;
            let cy = members.iter().map(|p| f64::from(p.y)).sum::<f64>() / members.len() as f64;
            let spread = members
                .iter()
                .map(|p| {
                    let dx = f64::from(p.x) - cx;
                    let dy = f64::from(p.y) - cy;
                    (dx * dx + dy * dy).sqrt()
                })
                .fold(0.0f64, f64::max);
            Patch {
                id,
                center: (cx, cy),
                members,
                radius: radius + spread,
            }
        })
        .collect()
}

/// Patch containing `p`, if any (nearest center wins when radii overlap).
pub fn patch_at(patches: &[Patch], p: Pos) -> Option<usize> {
    patches
        .iter()
        .filter(|patch| patch.contains(p))
        .min_by(|a, b| {
            let da = (f64::from(p.x) - a.center.0).hypot(f64::from(p.y) - a.center.1);
            let db = (f64::from(p.x) - b.center.0).hypot(f64::from(p.y) - b.center.1);
            da.partial_cmp(&db).unwrap()
        })
        .map(|patch| patch.id)
}
