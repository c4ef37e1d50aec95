//! Image-quality metrics: PSNR, SSIM, and the average-SNR measurement used
//! to calibrate the noise model.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::simulate::volume::Volume;

/// Quantitative evaluation of a reconstruction against its reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub avg_snr_db: Option<f64>,
}

fn check_extents(a: &Volume, b: &Volume) -> Result<()> {
    if a.extents() != b.extents() {
        return Err(CoreError::Shape(format!(
            "metric operands have extents {:?} and {:?}",
            a.extents(),
            b.extents()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all voxels; infinite when the
/// volumes are identical. `max_value` defaults to 1.0 for normalized data.
pub fn psnr(reference: &Volume, estimate: &Volume, max_value: f64) -> Result<f64> {
    check_extents(reference, estimate)?;
    if !(max_value > 0.0) {
        return Err(CoreError::Config("psnr: max_value must be positive".into()));
    }
    let n = reference.numel() as f64;
    let mse: f64 = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / mse).log10())
}

/// Structural similarity with a uniform cubic window (default 8^3), stride
/// 1 over interior-valid positions, averaged uniformly.
/// C1 = (0.01 L)^2 and C2 = (0.03 L)^2 where L is the dynamic range.
pub fn ssim(reference: &Volume, estimate: &Volume, window: usize, dynamic_range: f64) -> Result<f64> {
    check_extents(reference, estimate)?;
    if !(dynamic_range > 0.0) {
        return Err(CoreError::Config("ssim: dynamic range must be positive".into()));
    }
    let [d, h, w] = reference.extents();
    if window == 0 || window > d || window > h || window > w {
        return Err(CoreError::Config(format!(
            "ssim: window {window} does not fit volume {d}x{h}x{w}"
        )));
    }
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let n = (window * window * window) as f64;

    let mut total = 0.0f64;
    let mut count = 0usize;
    for z0 in 0..=d - window {
        for y0 in 0..=h - window {
            for x0 in 0..=w - window {
                let mut sx = 0.0;
                let mut sy = 0.0;
                let mut sxx = 0.0;
                let mut syy = 0.0;
                let mut sxy = 0.0;
                for z in z0..z0 + window {
                    for y in y0..y0 + window {
                        let base = reference.index(z, y, x0);
                        let ra = &reference.data()[base..base + window];
                        let rb = &estimate.data()[base..base + window];
                        for (a, b) in ra.iter().zip(rb) {
                            sx += a;
                            sy += b;
                            sxx += a * a;
                            syy += b * b;
                            sxy += a * b;
                        }
                    }
                }
                let mx = sx / n;
                let my = sy / n;
                let vx = sxx / n - mx * mx;
                let vy = syy / n - my * my;
                let cov = sxy / n - mx * my;
                let val = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += val;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Average SNR in dB: 10 log10 of clean-signal power over the power of the
/// difference between the noisy and clean volumes. Infinite when equal.
pub fn measure_avg_snr(clean: &Volume, noisy: &Volume) -> Result<f64> {
    check_extents(clean, noisy)?;
    let signal: f64 = clean.data().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .data()
        .iter()
        .zip(noisy.data())
        .map(|(c, n)| (n - c) * (n - c))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    if signal == 0.0 {
        return Err(CoreError::Numeric("avg snr: zero-signal reference".into()));
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Full report for a reconstruction; `avg_snr_db` measures the estimate
/// against the reference as if it were a noisy observation of it.
pub fn evaluate(reference: &Volume, estimate: &Volume) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(reference, estimate, 1.0)?,
        ssim: ssim(reference, estimate, 8, 1.0)?,
        avg_snr_db: match measure_avg_snr(reference, estimate) {
            Ok(v) => Some(v),
            Err(_) => None,
        },
    })
}
