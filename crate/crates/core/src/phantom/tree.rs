//! Synthetic bronchial tree geometry.

use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PhantomError;
use crate::region::RegionCode;
use crate::vec3::{self, Vec3};

/// One straight cylindrical airway branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub start: Vec3,
    /// Unit vector along the branch axis.
    pub direction: Vec3,
    pub length: f64,
    pub radius: f64,
    pub generation: u32,
    pub region: Option<RegionCode>,
    pub parent: Option<usize>,
}

impl BranchSpec {
    pub fn end(&self) -> Vec3 {
        vec3::add(self.start, vec3::scale(self.direction, self.length))
    }

    pub fn point_at(&self, t: f64) -> Vec3 {
        vec3::add(self.start, vec3::scale(self.direction, t))
    }

    pub fn is_hilum(&self) -> bool {
        self.generation <= 1
    }
}

/// π·r²·L for one branch.
pub fn analytic_branch_volume(branch: &BranchSpec) -> f64 {
    PI * branch.radius * branch.radius * branch.length
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    /// Breadth-first order: branch 0 is the trachea, generation increases.
    pub branches: Vec<BranchSpec>,
    pub half_angle_deg: f64,
    pub ratio: f64,
}

impl TreeSpec {
    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.branches
            .iter()
            .enumerate()
            .filter(move |(_, b)| b.parent == Some(i))
            .map(|(j, _)| j)
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.children(i).next().is_none()
    }

    pub fn translated(&self, by: Vec3) -> TreeSpec {
        let mut out = self.clone();
        for b in &mut out.branches {
            b.start = vec3::add(b.start, by);
        }
        out
    }

    /// Axis-aligned bounds of all branch cylinders, padded by each radius.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for b in &self.branches {
            for p in [b.start, b.end()] {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a] - b.radius);
                    hi[a] = hi[a].max(p[a] + b.radius);
                }
            }
        }
        (lo, hi)
    }

    /// The lobe a branch serves, when all of its airway lies in one lobe.
    /// Hilum branches and branches feeding several lobes give `None`.
    pub fn lobe_of(&self, i: usize) -> Option<RegionCode> {
        let b = &self.branches[i];
        if b.is_hilum() {
            return None;
        }
        if let Some(r) = b.region {
            return Some(r.lobe());
        }
        let mut lobe = None;
        let mut stack: Vec<usize> = self.children(i).collect();
        if stack.is_empty() {
            return None;
        }
        while let Some(j) = stack.pop() {
            match self.branches[j].region {
                Some(r) => match lobe {
                    None => lobe = Some(r.lobe()),
                    Some(l) if l != r.lobe() => return None,
                    _ => {}
                },
                None => {
                    let kids: Vec<usize> = self.children(j).collect();
                    if kids.is_empty() {
                        return None;
                    }
                    stack.extend(kids);
                }
            }
        }
        lobe
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// Number of generations including the trachea.
    pub depth: u32,
    pub root_radius: f64,
    pub root_length: f64,
    /// Per-generation scale factor for both radius and length.
    pub ratio: f64,
    /// Bifurcation half-angle in degrees.
    pub angle_deg: f64,
    /// Relative angular jitter, 0 for a perfectly regular tree.
    pub jitter: f64,
    pub seed: u64,
    /// Generation whose subtrees are enumerated as segments.
    pub segmental_generation: u32,
    /// Smallest admissible branch radius in mm; generations below it are not grown.
    pub min_radius: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            depth: 5,
            root_radius: 6.0,
            root_length: 40.0,
            ratio: 0.78,
            angle_deg: 35.0,
            jitter: 0.0,
            seed: 0,
            segmental_generation: 3,
            min_radius: 0.0,
        }
    }
}

/// Build a binary bifurcating tree. Branch 0 starts at the origin pointing
/// towards -z; the first child of the trachea heads towards +x and owns the
/// right-lung segment codes.
pub fn generate_tree(p: &TreeParams) -> Result<TreeSpec, PhantomError> {
    if p.depth < 1 {
        return Err(PhantomError::BadParams("depth must be at least 1".into()));
    }
    if !(p.ratio > 0.0 && p.ratio < 1.0) {
        return Err(PhantomError::BadParams(format!("ratio {} not in (0, 1)", p.ratio)));
    }
    if !(p.angle_deg > 0.0 && p.angle_deg < 90.0) {
        return Err(PhantomError::BadParams(format!("angle {} not in (0, 90)", p.angle_deg)));
    }
    if !(p.root_radius > 0.0 && p.root_length > 0.0) {
        return Err(PhantomError::BadParams(
            "root radius and length must be positive".into(),
        ));
    }
    if !(p.jitter >= 0.0) {
        return Err(PhantomError::BadParams("jitter must be non-negative".into()));
    }
    if p.segmental_generation < 2 {
        return Err(PhantomError::BadParams(
            "segmental generation must be at least 2 (generations 0-1 are the hilum)".into(),
        ));
    }
    if p.root_radius < p.min_radius {
        return Err(PhantomError::BadParams(format!(
            "root radius {} is below the {} mm floor",
            p.root_radius, p.min_radius
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut branches = vec![BranchSpec {
        start: [0.0; 3],
        direction: [0.0, 0.0, -1.0],
        length: p.root_length,
        radius: p.root_radius,
        generation: 0,
        region: None,
        parent: None,
    }];
    // bifurcation-plane normal per branch, perpendicular to its direction
    let mut normals: Vec<Vec3> = vec![[0.0, 1.0, 0.0]];

    let mut frontier = vec![0usize];
    for generation in 1..p.depth {
        if p.root_radius * p.ratio.powi(generation as i32) < p.min_radius {
            warn!(
                "generation {generation} would fall below the {} mm radius floor; tree stops at {}",
                p.min_radius,
                generation - 1
            );
            break;
        }
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for &parent in &frontier {
            let pb = branches[parent].clone();
            let n = normals[parent];
            for side in [-1.0f64, 1.0] {
                let jit_angle = if p.jitter > 0.0 {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                };
                let jit_twist = if p.jitter > 0.0 {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                };
                let theta = (p.angle_deg * (1.0 + p.jitter * jit_angle))
                    .clamp(1.0, 89.0)
                    .to_radians();
                let dir = vec3::normalize(vec3::rotate(pb.direction, n, side * theta));
                let mut child_n = vec3::normalize(vec3::cross(dir, n));
                if jit_twist != 0.0 {
                    child_n = vec3::normalize(vec3::rotate(child_n, dir, p.jitter * jit_twist * PI / 6.0));
                }
                branches.push(BranchSpec {
                    start: pb.end(),
                    direction: dir,
                    length: pb.length * p.ratio,
                    radius: pb.radius * p.ratio,
                    generation,
                    region: None,
                    parent: Some(parent),
                });
                normals.push(child_n);
                next.push(branches.len() - 1);
            }
        }
        frontier = next;
    }

    assign_segments(&mut branches, p.segmental_generation);
    Ok(TreeSpec {
        branches,
        half_angle_deg: p.angle_deg,
        ratio: p.ratio,
    })
}

/// Give each subtree rooted at the segmental generation a segment code,
/// right side from R1..R10 and left side from L1-2..L10, spread evenly;
/// deeper generations inherit their ancestor's code.
fn assign_segments(branches: &mut [BranchSpec], seg_gen: u32) {
    let roots: Vec<usize> = (0..branches.len())
        .filter(|&i| branches[i].generation == seg_gen)
        .collect();
    if roots.is_empty() {
        return;
    }
    // breadth-first order puts descendants of the right main bronchus first
    let half = roots.len() / 2;
    for (k, &i) in roots.iter().enumerate() {
        let code = if k < half {
            let codes = &RegionCode::RIGHT_SEGMENTS;
            codes[k * codes.len() / half]
        } else {
            let codes = &RegionCode::LEFT_SEGMENTS;
            codes[(k - half) * codes.len() / (roots.len() - half)]
        };
        branches[i].region = Some(code);
    }
    for i in 0..branches.len() {
        if branches[i].generation > seg_gen {
            let parent = branches[i].parent.expect("non-root branch has a parent");
            branches[i].region = branches[parent].region;
        }
    }
}
