use rayon::prelude::*;

use super::SegmentError;
use crate::grid::{Geometry, Mask, Volume};
use crate::transform::{extract, BBox};

/// Maps a normalized intensity patch to foreground probabilities of the same
/// shape. The patch geometry carries its world position.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, patch: &Volume<f32>) -> Result<Volume<f32>, SegmentError>;
}

pub struct ConstantPredictor(pub f32);

impl Predictor for ConstantPredictor {
    fn name(&self) -> &str {
        "constant"
    }

    fn predict(&self, patch: &Volume<f32>) -> Result<Volume<f32>, SegmentError> {
        Ok(Volume::filled(*patch.geom(), self.0))
    }
}

/// Probability 1 strictly below a normalized-intensity threshold, else 0.
pub struct ThresholdPredictor(pub f32);

impl Predictor for ThresholdPredictor {
    fn name(&self) -> &str {
        "threshold"
    }

    fn predict(&self, patch: &Volume<f32>) -> Result<Volume<f32>, SegmentError> {
        Ok(patch.map(|&v| if v < self.0 { 1.0 } else { 0.0 }))
    }
}

/// Reads the answer from a ground-truth mask by world position.
pub struct OraclePredictor(pub Mask);

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, patch: &Volume<f32>) -> Result<Volume<f32>, SegmentError> {
        let pg = *patch.geom();
        let gg = *self.0.geom();
        Ok(Volume::from_fn(pg, |c| {
            let hit = gg.containing_voxel(pg.center(c)).is_some_and(|v| *self.0.at(v));
            if hit {
                1.0
            } else {
                0.0
            }
        }))
    }
}

/// Window starts along one axis: `0, s, 2s, …` while the window ends before
/// the axis does, then one window flush with the end.
pub fn window_starts(n: usize, w: usize, overlap: f64) -> Result<Vec<usize>, SegmentError> {
    if w == 0 || w > n {
        return Err(SegmentError::WindowTooLarge { window: w, dim: n });
    }
    if !(0.0..=0.9).contains(&overlap) {
        return Err(SegmentError::BadParam(format!("overlap {overlap} not in [0, 0.9]")));
    }
    let stride = ((w as f64 * (1.0 - overlap)).floor() as usize).max(1);
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|&s| s + w < n).collect();
    out.push(n - w);
    Ok(out)
}

/// Window origins in x-fastest order.
pub fn window_origins(dims: [usize; 3], window: [usize; 3], overlap: f64) -> Result<Vec<[usize; 3]>, SegmentError> {
    let sx = window_starts(dims[0], window[0], overlap)?;
    let sy = window_starts(dims[1], window[1], overlap)?;
    let sz = window_starts(dims[2], window[2], overlap)?;
    let mut out = Vec::with_capacity(sx.len() * sy.len() * sz.len());
    for &z in &sz {
        for &y in &sy {
            for &x in &sx {
                out.push([x, y, z]);
            }
        }
    }
    Ok(out)
}

fn check_prediction(patch: &Geometry, pred: &Volume<f32>, name: &str) -> Result<(), SegmentError> {
    if pred.dims() != patch.dims {
        return Err(SegmentError::Predictor(format!(
            "{name} returned dims {:?} for a {:?} patch",
            pred.dims(),
            patch.dims
        )));
    }
    if let Some(v) = pred.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(SegmentError::Predictor(format!("{name} returned probability {v}")));
    }
    Ok(())
}

/// Predict every window (possibly in parallel) and average overlaps with
/// uniform weights, accumulating in the order of `origins`.
pub fn infer_windows(
    volume: &Volume<f32>,
    window: [usize; 3],
    origins: &[[usize; 3]],
    predictor: &dyn Predictor,
) -> Result<Volume<f32>, SegmentError> {
    let g = *volume.geom();
    let bbox_of = |o: &[usize; 3]| BBox {
        lo: *o,
        hi: [o[0] + window[0] - 1, o[1] + window[1] - 1, o[2] + window[2] - 1],
    };
    for o in origins {
        if (0..3).any(|a| o[a] + window[a] > g.dims[a]) {
            return Err(SegmentError::BadParam(format!(
                "window at {o:?} leaves the {:?} volume",
                g.dims
            )));
        }
    }
    let preds: Vec<Volume<f32>> = origins
        .par_iter()
        .map(|o| {
            let patch = extract(volume, &bbox_of(o));
            let pred = predictor.predict(&patch)?;
            check_prediction(patch.geom(), &pred, predictor.name())?;
            Ok(pred)
        })
        .collect::<Result<_, SegmentError>>()?;

    let mut sum = vec![0.0f64; g.len()];
    let mut hits = vec![0u32; g.len()];
    for (o, pred) in origins.iter().zip(&preds) {
        let pg = pred.geom();
        for (k, &p) in pred.data().iter().enumerate() {
            let c = pg.coords(k);
            let i = g.index(o[0] + c[0], o[1] + c[1], o[2] + c[2]);
            sum[i] += p as f64;
            hits[i] += 1;
        }
    }
    let data = sum
        .iter()
        .zip(&hits)
        .map(|(&s, &h)| if h == 0 { 0.0 } else { (s / h as f64) as f32 })
        .collect();
    Ok(Volume::new(g, data)?)
}

pub fn sliding_window_infer(
    volume: &Volume<f32>,
    window: [usize; 3],
    overlap: f64,
    predictor: &dyn Predictor,
) -> Result<Volume<f32>, SegmentError> {
    let origins = window_origins(volume.dims(), window, overlap)?;
    infer_windows(volume, window, &origins, predictor)
}

/// Foreground where `p > threshold`.
pub fn binarize(prob: &Volume<f32>, threshold: f64) -> Mask {
    prob.map(|&p| p as f64 > threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl Predictor for Counting {
        fn name(&self) -> &str {
            "counting"
        }

        fn predict(&self, patch: &Volume<f32>) -> Result<Volume<f32>, SegmentError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Volume::filled(*patch.geom(), 0.25))
        }
    }

    #[test]
    fn stride_arithmetic() {
        assert_eq!(window_starts(10, 4, 0.5).unwrap(), vec![0, 2, 4, 6]);
        assert_eq!(window_starts(10, 10, 0.5).unwrap(), vec![0]);
        assert_eq!(window_starts(10, 3, 0.0).unwrap(), vec![0, 3, 6, 7]);
        assert_eq!(window_starts(128, 96, 0.5).unwrap(), vec![0, 32]);
        assert!(window_starts(4, 5, 0.5).is_err());
        assert!(window_starts(10, 4, 0.95).is_err());
    }

    #[test]
    fn constant_predictor_is_preserved() {
        let g = Geometry::unit([10, 7, 5]).unwrap();
        let v = Volume::from_fn(g, |c| c[0] as f32 * 0.1);
        let out = sliding_window_infer(&v, [4, 3, 5], 0.5, &ConstantPredictor(0.7)).unwrap();
        assert!(out.data().iter().all(|&p| (p - 0.7).abs() < 1e-6));
    }

    #[test]
    fn full_window_is_one_call() {
        let g = Geometry::unit([6, 6, 6]).unwrap();
        let v = Volume::filled(g, 0.0f32);
        let pred = Counting(AtomicUsize::new(0));
        sliding_window_infer(&v, [6, 6, 6], 0.5, &pred).unwrap();
        assert_eq!(pred.0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn oracle_reproduces_mask() {
        let g = Geometry::new([12, 10, 9], [0.7, 0.7, 1.5], [3.0, -2.0, 10.0]).unwrap();
        let gt = Volume::from_fn(g, |c| (c[0] * 7 + c[1] * 3 + c[2]) % 5 == 0);
        let v = Volume::filled(g, 0.0f32);
        let out = sliding_window_infer(&v, [5, 4, 4], 0.5, &OraclePredictor(gt.clone())).unwrap();
        assert_eq!(binarize(&out, 0.5), gt);
    }

    #[test]
    fn binarize_is_strict() {
        let g = Geometry::unit([4, 4, 1]).unwrap();
        assert!(!binarize(&Volume::filled(g, 0.5), 0.5).any());
        assert_eq!(binarize(&Volume::filled(g, 1.0), 0.5).count(), 16);
        let checker = Volume::from_fn(g, |c| if (c[0] + c[1]) % 2 == 0 { 0.8 } else { 0.2 });
        assert_eq!(binarize(&checker, 0.5), checker.map(|&p| p == 0.8));
    }
}
