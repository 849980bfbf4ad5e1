use std::f64::consts::PI;

use super::special::{normal_inverse_cdf, normal_sf};
use super::{Method, StatsError, TestResult};

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Coefficients for the upper half: `a[i]` multiplies `x[n-1-i] - x[i]`.
fn coefficients(n: usize) -> Result<Vec<f64>, StatsError> {
    let half = n / 2;
    if n == 3 {
        return Ok(vec![std::f64::consts::FRAC_1_SQRT_2]);
    }
    let nf = n as f64;
    let m = (1..=half)
        .map(|i| normal_inverse_cdf((i as f64 - 0.375) / (nf + 0.25)).map(|z| -z))
        .collect::<Result<Vec<_>, _>>()?;
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / nf.sqrt();
    let a1 = poly(&C1, rsn) + m[0] / ssumm2;
    let mut a = Vec::with_capacity(half);
    if n > 5 {
        let a2 = poly(&C2, rsn) + m[1] / ssumm2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        a.push(a1);
        a.push(a2);
        a.extend(m[2..].iter().map(|v| v / fac));
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        a.push(a1);
        a.extend(m[1..].iter().map(|v| v / fac));
    }
    Ok(a)
}

/// Shapiro-Wilk W and its p-value (Royston's approximation), 3 ≤ n ≤ 5000.
pub fn shapiro_wilk(x: &[f64]) -> Result<TestResult, StatsError> {
    let n = x.len();
    if n < 3 {
        return Err(StatsError::InsufficientSamples {
            what: "Shapiro-Wilk",
            need: 3,
            got: n,
        });
    }
    if n > 5000 {
        return Err(StatsError::Domain(format!(
            "Shapiro-Wilk supports at most 5000 samples, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Domain("non-finite sample".into()));
    }
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let range = xs[n - 1] - xs[0];
    if range <= 0.0 {
        return Err(StatsError::Degenerate("all samples are equal".into()));
    }
    // scale by the range so large offsets do not swamp the sums
    let xs: Vec<f64> = xs.iter().map(|v| (v - xs[0]) / range).collect();
    let a = coefficients(n)?;
    let num: f64 = a.iter().enumerate().map(|(i, ai)| ai * (xs[n - 1 - i] - xs[i])).sum();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
    let w = (num * num / ss).min(1.0);

    let nf = n as f64;
    let p = if n == 3 {
        let p = 6.0 / PI * (w.sqrt().asin() - 0.75f64.sqrt().asin());
        p.clamp(0.0, 1.0)
    } else if n <= 11 {
        let gamma = poly(&G, nf);
        let y = (1.0 - w).ln();
        if y >= gamma {
            0.0
        } else {
            let y = -(gamma - y).ln();
            let m = poly(&C3, nf);
            let s = poly(&C4, nf).exp();
            normal_sf((y - m) / s)
        }
    } else {
        let ln_n = nf.ln();
        let m = poly(&C5, ln_n);
        let s = poly(&C6, ln_n).exp();
        normal_sf(((1.0 - w).ln() - m) / s)
    };
    Ok(TestResult {
        statistic: w,
        df: None,
        p,
        method: Method::ShapiroWilk,
        degenerate: false,
    })
}
