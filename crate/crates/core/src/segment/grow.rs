use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SegmentError;
use crate::grid::{Mask, Volume, NEIGHBORS_26};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowParams {
    pub t_start: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// Largest admissible voxel-count ratio between consecutive thresholds.
    pub explosion_ratio: f64,
}

impl Default for GrowParams {
    fn default() -> Self {
        Self {
            t_start: -950.0,
            t_max: -500.0,
            t_step: 10.0,
            explosion_ratio: 1.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Every threshold up to `t_max` was accepted.
    Exhausted,
    Explosion,
    /// The next threshold reached the volume border.
    Border,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthTrace {
    /// `(threshold, voxels)` for every threshold evaluated, loosest last.
    pub steps: Vec<(f64, usize)>,
    pub chosen_threshold: f64,
    pub stop: StopReason,
    /// Growth was cut short by an explosion or a border contact.
    pub leakage: bool,
}

impl GrowthTrace {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "threshold_hu,voxels")?;
        for (t, n) in &self.steps {
            writeln!(w, "{t},{n}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f32, usize);

impl Eq for Key {}

impl Ord for Key {
    // min-heap on level, then index
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimax path level from `seed` over 26-connectivity: the smallest possible
/// maximum intensity along any path. Voxels at or above `ceiling` are not
/// entered and keep `+inf`.
pub fn minimax_levels(intensity: &Volume<f32>, seed: [usize; 3], ceiling: f64) -> Volume<f32> {
    let g = *intensity.geom();
    let mut level = Volume::filled(g, f32::INFINITY);
    let s = g.index(seed[0], seed[1], seed[2]);
    let mut heap = BinaryHeap::new();
    level.data_mut()[s] = intensity.data()[s];
    heap.push(Key(intensity.data()[s], s));
    while let Some(Key(l, i)) = heap.pop() {
        if l > level.data()[i] {
            continue;
        }
        let c = g.coords(i);
        for &o in &NEIGHBORS_26 {
            let Some(n) = g.offset(c, o) else { continue };
            let j = g.index(n[0], n[1], n[2]);
            let v = intensity.data()[j];
            if (v as f64) >= ceiling {
                continue;
            }
            let nl = l.max(v);
            if nl < level.data()[j] {
                level.data_mut()[j] = nl;
                heap.push(Key(nl, j));
            }
        }
    }
    level
}

/// Sweep thresholds from `t_start` by `t_step` up to `t_max`; the mask at
/// threshold `t` is the 26-connected set of voxels below `t` reachable from
/// the seed. Stops before the first threshold whose volume jumps by more than
/// the explosion ratio or that reaches the volume border.
pub fn region_grow_airway(
    intensity: &Volume<f32>,
    seed: [usize; 3],
    params: &GrowParams,
) -> Result<(Mask, GrowthTrace), SegmentError> {
    let g = *intensity.geom();
    if (0..3).any(|a| seed[a] >= g.dims[a]) {
        return Err(SegmentError::SeedOutOfBounds(seed));
    }
    if !(params.t_start < params.t_max) || !(params.t_step > 0.0) || !(params.explosion_ratio > 1.0) {
        return Err(SegmentError::BadParam(format!("region growing parameters {params:?}")));
    }
    let sv = *intensity.at(seed) as f64;
    if !(sv < params.t_start) {
        return Err(SegmentError::SeedNotAir {
            value: sv,
            limit: params.t_start,
        });
    }
    let level = minimax_levels(intensity, seed, params.t_max);

    let mut sorted: Vec<f32> = level.data().iter().copied().filter(|l| l.is_finite()).collect();
    sorted.sort_by(f32::total_cmp);
    let border_min = level
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| g.is_border(g.coords(*i)))
        .map(|(_, &l)| l)
        .fold(f32::INFINITY, f32::min);

    let mut steps = vec![];
    let mut chosen: Option<usize> = None;
    let mut stop = StopReason::Exhausted;
    let mut k = 0usize;
    loop {
        let t = params.t_start + k as f64 * params.t_step;
        if t > params.t_max + 1e-9 * params.t_step {
            break;
        }
        let count = sorted.partition_point(|&l| (l as f64) < t);
        steps.push((t, count));
        if (border_min as f64) < t {
            stop = StopReason::Border;
            break;
        }
        if k > 0 && count as f64 > params.explosion_ratio * steps[k - 1].1 as f64 {
            stop = StopReason::Explosion;
            break;
        }
        chosen = Some(k);
        k += 1;
    }
    let Some(c) = chosen else {
        return Err(SegmentError::UnboundedLeak);
    };
    let t = steps[c].0;
    let mask = level.map(|&l| (l as f64) < t);
    Ok((
        mask,
        GrowthTrace {
            steps,
            chosen_threshold: t,
            stop,
            leakage: stop != StopReason::Exhausted,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedParams {
    /// Fraction of axial slices, counted from the highest z, that are searched.
    pub top_fraction: f64,
    pub air_hu: f64,
    /// Admissible in-plane area band, as equivalent-circle radii in mm.
    pub min_radius_mm: f64,
    pub max_radius_mm: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        Self {
            top_fraction: 0.1,
            air_hu: -900.0,
            min_radius_mm: 3.0,
            max_radius_mm: 20.0,
        }
    }
}

/// Centroid voxel of the largest air component among the top axial slices
/// whose area fits the band. Components touching the slice edge are skipped.
pub fn find_trachea_seed(intensity: &Volume<f32>, params: &SeedParams) -> Result<[usize; 3], SegmentError> {
    let g = *intensity.geom();
    let [nx, ny, nz] = g.dims;
    let slices = ((nz as f64 * params.top_fraction).ceil() as usize).clamp(1, nz);
    let pixel = g.spacing[0] * g.spacing[1];
    let area_lo = std::f64::consts::PI * params.min_radius_mm.powi(2);
    let area_hi = std::f64::consts::PI * params.max_radius_mm.powi(2);

    // (pixel count, seed voxel)
    let mut best: Option<(usize, [usize; 3])> = None;
    let mut seen = vec![false; nx * ny];
    for z in (nz - slices..nz).rev() {
        seen.iter_mut().for_each(|s| *s = false);
        let base = z * nx * ny;
        let air = |k: usize| (intensity.data()[base + k] as f64) < params.air_hu;
        for start in 0..nx * ny {
            if seen[start] || !air(start) {
                continue;
            }
            let mut pixels = vec![];
            let mut stack = vec![start];
            seen[start] = true;
            let mut edge = false;
            while let Some(k) = stack.pop() {
                pixels.push(k);
                let (x, y) = (k % nx, k / nx);
                edge |= x == 0 || y == 0 || x + 1 == nx || y + 1 == ny;
                for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if xx < 0 || yy < 0 || xx >= nx as isize || yy >= ny as isize {
                        continue;
                    }
                    let kk = yy as usize * nx + xx as usize;
                    if !seen[kk] && air(kk) {
                        seen[kk] = true;
                        stack.push(kk);
                    }
                }
            }
            let area = pixels.len() as f64 * pixel;
            if edge || area < area_lo || area > area_hi {
                continue;
            }
            if best.is_some_and(|(n, _)| n >= pixels.len()) {
                continue;
            }
            let cx = pixels.iter().map(|k| (k % nx) as f64).sum::<f64>() / pixels.len() as f64;
            let cy = pixels.iter().map(|k| (k / nx) as f64).sum::<f64>() / pixels.len() as f64;
            // nearest member pixel to the centroid, so the seed is always air
            let k = *pixels
                .iter()
                .min_by(|&&a, &&b| {
                    let da = ((a % nx) as f64 - cx).powi(2) + ((a / nx) as f64 - cy).powi(2);
                    let db = ((b % nx) as f64 - cx).powi(2) + ((b / nx) as f64 - cy).powi(2);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("component is non-empty");
            best = Some((pixels.len(), [k % nx, k / nx, z]));
        }
    }
    best.map(|(_, s)| s).ok_or(SegmentError::NoSeedCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Geometry;

    /// A vertical tube of air in soft tissue, inside a lung-like shell.
    fn tube() -> Volume<f32> {
        let g = Geometry::unit([16, 16, 16]).unwrap();
        Volume::from_fn(g, |[x, y, z]| {
            let r2 = (x as f64 - 8.0).powi(2) + (y as f64 - 8.0).powi(2);
            if r2 <= 4.0 && (2..14).contains(&z) {
                -1000.0
            } else if r2 <= 12.0 && (1..15).contains(&z) {
                -100.0
            } else if (2..14).contains(&x) && (2..14).contains(&y) && (1..15).contains(&z) {
                -850.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn grows_tube_and_stops_at_wall() {
        let v = tube();
        let (m, trace) = region_grow_airway(
            &v,
            [8, 8, 8],
            &GrowParams {
                t_max: -50.0,
                ..Default::default()
            },
        )
        .unwrap();
        let lumen = v.map(|&x| x == -1000.0);
        assert_eq!(m, lumen);
        assert!(trace.leakage);
        assert!(trace.chosen_threshold <= -100.0);
        for w in trace.steps.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn exhausted_sweep_is_not_leakage() {
        let v = tube();
        let (m, trace) = region_grow_airway(&v, [8, 8, 8], &GrowParams::default()).unwrap();
        assert_eq!(m.count(), v.data().iter().filter(|&&x| x == -1000.0).count());
        assert_eq!(trace.stop, StopReason::Exhausted);
        assert!(!trace.leakage);
        assert_eq!(trace.chosen_threshold, -500.0);
    }

    #[test]
    fn rejects_bad_seed_and_open_volume() {
        let v = tube();
        assert!(matches!(
            region_grow_airway(&v, [0, 0, 0], &GrowParams::default()),
            Err(SegmentError::SeedNotAir { .. })
        ));
        assert!(region_grow_airway(&v, [99, 0, 0], &GrowParams::default()).is_err());
        let open = Volume::filled(*v.geom(), -1000.0f32);
        assert!(matches!(
            region_grow_airway(&open, [3, 3, 3], &GrowParams::default()),
            Err(SegmentError::UnboundedLeak)
        ));
    }

    #[test]
    fn trace_csv() {
        let v = tube();
        let (_, trace) = region_grow_airway(
            &v,
            [8, 8, 8],
            &GrowParams {
                t_max: -930.0,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = vec![];
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("threshold_hu,voxels\n-950,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn seed_in_tube() {
        let v = tube();
        let s = find_trachea_seed(
            &v,
            &SeedParams {
                top_fraction: 0.25,
                min_radius_mm: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(*v.at(s), -1000.0);
        assert!(s[2] >= 12);
        let soft = Volume::filled(*v.geom(), 0.0f32);
        assert!(matches!(
            find_trachea_seed(&soft, &SeedParams::default()),
            Err(SegmentError::NoSeedCandidate)
        ));
    }

    #[test]
    fn larger_candidate_wins() {
        let g = Geometry::unit([30, 20, 4]).unwrap();
        let v = Volume::from_fn(g, |[x, y, _]| {
            let small = (x as f64 - 7.0).powi(2) + (y as f64 - 10.0).powi(2) <= 4.0;
            let big = (x as f64 - 20.0).powi(2) + (y as f64 - 10.0).powi(2) <= 16.0;
            if small || big {
                -1000.0
            } else {
                0.0
            }
        });
        let s = find_trachea_seed(
            &v,
            &SeedParams {
                top_fraction: 1.0,
                min_radius_mm: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!([s[0], s[1]], [20, 10]);
    }
}
