//! Discrete PSF kernels from optical parameters.
//!
//! The Born & Wolf scalar diffraction model is evaluated voxel by voxel as
//! the squared modulus of a half-open aperture integral, computed with
//! composite Simpson quadrature on the real and imaginary parts separately.
//! A separable Gaussian PSF stands in for vectorial models in cross-PSF
//! generalization runs, and `smooth_kernel` implements the sigma = 1
//! Gaussian filtering used when inspecting learned kernels.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::simulate::volume::Volume;

/// Optical parameters for Born & Wolf PSF generation.
///
/// `quadrature_points` is the number of composite-Simpson subintervals on
/// the aperture integral; 1024 keeps every voxel of a 31^3 kernel within
/// ~5e-8 relative error of the converged value (the deepest Airy nulls are
/// the binding case).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsfSpec {
    /// Emission wavelength in meters.
    pub wavelength: f64,
    pub numerical_aperture: f64,
    /// Refractive index of the immersion layer.
    pub refractive_index: f64,
    /// Voxel pitch (x, y, z) in meters.
    pub voxel_size: [f64; 3],
    /// Odd kernel extents (kd, kh, kw) in voxels.
    pub kernel_extent: [usize; 3],
    /// Simpson subintervals (even, >= 64).
    pub quadrature_points: usize,
}

impl PsfSpec {
    /// Baseline simulation parameters: lambda 500 nm, NA 1.4, n_i 1.5,
    /// 100 nm isotropic voxels, 31^3 kernel.
    pub fn simulation_default() -> Self {
        PsfSpec {
            wavelength: 500e-9,
            numerical_aperture: 1.4,
            refractive_index: 1.5,
            voxel_size: [100e-9; 3],
            kernel_extent: [31, 31, 31],
            quadrature_points: 1024,
        }
    }

    /// Desk-scale variant: same optics, 9^3 kernel.
    pub fn desk_default() -> Self {
        PsfSpec {
            kernel_extent: [9, 9, 9],
            ..Self::simulation_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(CoreError::Config("psf: wavelength must be positive".into()));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < self.refractive_index) {
            return Err(CoreError::Config(format!(
                "psf: need 0 < NA < n_i, got NA={} n_i={}",
                self.numerical_aperture, self.refractive_index
            )));
        }
        if self.voxel_size.iter().any(|v| !(*v > 0.0)) {
            return Err(CoreError::Config("psf: voxel sizes must be positive".into()));
        }
        if self.kernel_extent.iter().any(|e| e % 2 == 0 || *e == 0) {
            return Err(CoreError::Config(format!(
                "psf: kernel extents must be odd, got {:?}",
                self.kernel_extent
            )));
        }
        if self.quadrature_points < 64 {
            return Err(CoreError::Config(format!(
                "psf: at least 64 quadrature subintervals required, got {}",
                self.quadrature_points
            )));
        }
        if self.quadrature_points % 2 != 0 {
            return Err(CoreError::Config(
                "psf: quadrature subinterval count must be even for Simpson's rule".into(),
            ));
        }
        Ok(())
    }
}

/// Bessel function of the first kind, order zero.
///
/// Power series below |z| = 9, Miller backward recurrence up to 21, Hankel
/// asymptotic expansion beyond. Absolute accuracy is ~1e-13 or better in
/// all branches (the plain asymptotic expansion cannot reach that below
/// z ~ 20, hence the recurrence branch in the middle).
pub fn bessel_j0(z: f64) -> f64 {
    let z = z.abs();
    if z < 9.0 {
        j0_series(z)
    } else if z < 21.0 {
        j0_miller(z)
    } else {
        j0_hankel(z)
    }
}

fn j0_series(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut comp = 0.0f64; // Kahan compensation: the series alternates with large terms near z = 9
    for m in 1..=40 {
        term *= -q / ((m * m) as f64);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if term.abs() < 1e-18 * sum.abs().max(1e-3) {
            break;
        }
    }
    sum
}

fn j0_miller(z: f64) -> f64 {
    // Downward recurrence J_{n-1} = (2n/z) J_n - J_{n+1}, normalized with
    // J_0 + 2 sum_k J_{2k} = 1.
    let nstart = z as usize + 44;
    let mut jp = 0.0f64;
    let mut j = 1e-30f64;
    let mut norm = 0.0f64;
    let mut j0 = 0.0f64;
    for n in (1..=nstart).rev() {
        let jm = (2.0 * n as f64 / z) * j - jp;
        jp = j;
        j = jm;
        let order = n - 1;
        if order % 2 == 0 {
            if order == 0 {
                j0 = j;
                norm += j;
            } else {
                norm += 2.0 * j;
            }
        }
        if j.abs() > 1e250 {
            jp /= 1e250;
            j /= 1e250;
            norm /= 1e250;
        }
    }
    j0 / norm
}

fn j0_hankel(z: f64) -> f64 {
    // J0(z) = sqrt(2/(pi z)) [P cos(chi) - Q sin(chi)], chi = z - pi/4,
    // with a_k = a_{k-1} (2k-1)^2 / (8k); truncated at the smallest term.
    let mut p = 1.0f64;
    let mut q = 0.0f64;
    let mut a = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..=40 {
        let kk = k as f64;
        a *= (2.0 * kk - 1.0) * (2.0 * kk - 1.0) / (8.0 * kk * z);
        if a.abs() >= prev {
            break;
        }
        prev = a.abs();
        // signs per the nu = 0 expansion: P = 1 - a2/z^2 + a4/z^4 - ...,
        // Q = -a1/z + a3/z^3 - ...
        match k % 4 {
            1 => q -= a,
            2 => p -= a,
            3 => q += a,
            _ => p += a,
        }
        if a.abs() < 1e-18 {
            break;
        }
    }
    let chi = z - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Unnormalized Born & Wolf intensity at a physical offset from focus:
/// |int_0^1 J0(k (NA/n_i) rho r_lat) exp(-j k rho^2 r_z (NA/n_i)^2 / 2) rho drho|^2
/// with C = 1, by composite Simpson with `panels` subintervals.
pub fn born_wolf_intensity(
    wavelength: f64,
    numerical_aperture: f64,
    refractive_index: f64,
    r_lat: f64,
    r_z: f64,
    panels: usize,
) -> f64 {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let a = numerical_aperture / refractive_index;
    let alpha = k * a * r_lat;
    let beta = 0.5 * k * a * a * r_z;

    let m = panels;
    let h = 1.0 / m as f64;
    let mut re = 0.0f64;
    let mut im = 0.0f64;
    for i in 0..=m {
        let rho = i as f64 * h;
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let base = bessel_j0(alpha * rho) * rho * w;
        let phase = beta * rho * rho;
        re += base * phase.cos();
        im -= base * phase.sin();
    }
    re *= h / 3.0;
    im *= h / 3.0;
    re * re + im * im
}

/// Discrete Born & Wolf PSF kernel, normalized to unit sum (absorbing the
/// constant C). Exact lattice symmetries (lateral sign/swap for isotropic
/// lateral voxels, axial sign always) hold bit-for-bit because voxels
/// sharing the same (r_lat^2, |r_z|) are computed once.
pub fn born_wolf_psf(spec: &PsfSpec) -> Result<Volume> {
    spec.validate()?;
    let [kd, kh, kw] = spec.kernel_extent;
    let [vx, vy, vz] = spec.voxel_size;
    let (cz, cy, cx) = (kd as i64 / 2, kh as i64 / 2, kw as i64 / 2);

    let mut cache: std::collections::HashMap<(u64, i64), f64> = std::collections::HashMap::new();
    let mut vol = Volume::zeros([kd, kh, kw]);
    for z in 0..kd {
        for y in 0..kh {
            for x in 0..kw {
                let iz = z as i64 - cz;
                let iy = y as i64 - cy;
                let ix = x as i64 - cx;
                let rl2 = (ix as f64 * vx).powi(2) + (iy as f64 * vy).powi(2);
                let key = (rl2.to_bits(), iz.abs());
                let v = *cache.entry(key).or_insert_with(|| {
                    born_wolf_intensity(
                        spec.wavelength,
                        spec.numerical_aperture,
                        spec.refractive_index,
                        rl2.sqrt(),
                        iz.abs() as f64 * vz,
                        spec.quadrature_points,
                    )
                });
                let idx = vol.index(z, y, x);
                vol.data_mut()[idx] = v;
            }
        }
    }
    vol.rescale_sum_to(1.0);
    Ok(vol.with_voxel_size(spec.voxel_size))
}

/// Separable sampled Gaussian kernel with unit sum. Sigmas are in voxels.
pub fn gaussian_psf(sigma: [f64; 3], extent: [usize; 3]) -> Result<Volume> {
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(CoreError::Config("gaussian psf: sigmas must be positive".into()));
    }
    if extent.iter().any(|e| e % 2 == 0 || *e == 0) {
        return Err(CoreError::Config(format!(
            "gaussian psf: extents must be odd, got {:?}",
            extent
        )));
    }
    let axis = |n: usize, s: f64| -> Vec<f64> {
        let c = n as i64 / 2;
        (0..n)
            .map(|i| {
                let d = (i as i64 - c) as f64;
                (-d * d / (2.0 * s * s)).exp()
            })
            .collect()
    };
    let gz = axis(extent[0], sigma[2]);
    let gy = axis(extent[1], sigma[1]);
    let gx = axis(extent[2], sigma[0]);
    let mut vol = Volume::zeros(extent);
    for z in 0..extent[0] {
        for y in 0..extent[1] {
            for x in 0..extent[2] {
                let idx = vol.index(z, y, x);
                vol.data_mut()[idx] = gz[z] * gy[y] * gx[x];
            }
        }
    }
    vol.rescale_sum_to(1.0);
    Ok(vol)
}

/// Gaussian smoothing of a kernel volume (sigma in voxels, same extent).
///
/// Uses normalized convolution near the borders (weights renormalized over
/// the in-domain window) and finally rescales so the total mass equals the
/// input's.
pub fn smooth_kernel(kernel: &Volume, sigma: f64) -> Result<Volume> {
    if !kernel.all_finite() {
        return Err(CoreError::Numeric("smooth_kernel: input has non-finite voxels".into()));
    }
    if !(sigma > 0.0) {
        return Err(CoreError::Config("smooth_kernel: sigma must be positive".into()));
    }
    // 8-sigma support: the truncation tail stays below 1e-14 of the peak,
    // so smoothed kernels agree with exact sampled Gaussians to 1e-10+.
    let r = (8.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i as f64) * (i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let [d, h, w] = kernel.extents();
    let mut out = Volume::zeros([d, h, w]);
    for z in 0..d as i64 {
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for dz in -r..=r {
                    let sz = z + dz;
                    if sz < 0 || sz >= d as i64 {
                        continue;
                    }
                    let tz = taps[(dz + r) as usize];
                    for dy in -r..=r {
                        let sy = y + dy;
                        if sy < 0 || sy >= h as i64 {
                            continue;
                        }
                        let ty = taps[(dy + r) as usize];
                        for dx in -r..=r {
                            let sx = x + dx;
                            if sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            let t = tz * ty * taps[(dx + r) as usize];
                            acc += t * kernel.at(sz as usize, sy as usize, sx as usize);
                            wsum += t;
                        }
                    }
                }
                let idx = out.index(z as usize, y as usize, x as usize);
                out.data_mut()[idx] = acc / wsum;
            }
        }
    }
    out.rescale_sum_to(kernel.sum());
    Ok(match kernel.voxel_size() {
        Some(vs) => out.with_voxel_size(vs),
        None => out,
    })
}

/// Full width at half maximum of the central profile along `axis`
/// (0 = z, 1 = y, 2 = x), in voxels, by linear interpolation.
pub fn fwhm_along_axis(kernel: &Volume, axis: usize) -> f64 {
    let [d, h, w] = kernel.extents();
    let (cz, cy, cx) = (d / 2, h / 2, w / 2);
    let n = kernel.extents()[axis];
    let profile: Vec<f64> = (0..n)
        .map(|i| match axis {
            0 => kernel.at(i, cy, cx),
            1 => kernel.at(cz, i, cx),
            _ => kernel.at(cz, cy, i),
        })
        .collect();
    let peak = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half = peak / 2.0;
    // walk outward from the peak position
    let pmax = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(n / 2);
    let mut left = 0.0;
    for i in (0..pmax).rev() {
        if profile[i] <= half {
            let frac = (half - profile[i]) / (profile[i + 1] - profile[i]);
            left = pmax as f64 - (i as f64 + frac);
            break;
        }
        if i == 0 {
            left = pmax as f64;
        }
    }
    let mut right = 0.0;
    for i in pmax + 1..n {
        if profile[i] <= half {
            let frac = (half - profile[i]) / (profile[i - 1] - profile[i]);
            right = (i as f64 - frac) - pmax as f64;
            break;
        }
        if i == n - 1 {
            right = (n - 1 - pmax) as f64;
        }
    }
    left + right
}

/// Intensity-weighted center of mass in voxel coordinates (z, y, x).
pub fn center_of_mass(v: &Volume) -> [f64; 3] {
    let [d, h, w] = v.extents();
    let mut acc = [0.0f64; 3];
    let mut total = 0.0f64;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let val = v.at(z, y, x);
                acc[0] += val * z as f64;
                acc[1] += val * y as f64;
                acc[2] += val * x as f64;
                total += val;
            }
        }
    }
    if total == 0.0 {
        return [d as f64 / 2.0, h as f64 / 2.0, w as f64 / 2.0];
    }
    [acc[0] / total, acc[1] / total, acc[2] / total]
}

/// Pearson correlation between two same-shape volumes.
pub fn pearson_correlation(a: &Volume, b: &Volume) -> Result<f64> {
    if a.extents() != b.extents() {
        return Err(CoreError::Shape(format!(
            "pearson: extents {:?} vs {:?}",
            a.extents(),
            b.extents()
        )));
    }
    let n = a.numel() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(CoreError::Numeric("pearson: zero-variance volume".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference values computed with 30-digit arithmetic.
    const J0_REFERENCE: &[(f64, f64)] = &[
        (0.0, 1.0),
        (1e-8, 0.99999999999999997),
        (0.5, 0.9384698072408129),
        (1.0, 0.76519768655796655),
        (2.0, 0.22389077914123567),
        (2.404825557695773, -6.1087652597367304e-17),
        (3.5, -0.38012773998726338),
        (5.0, -0.1775967713143383),
        (5.520078110286311, -2.7522649432621831e-17),
        (7.2, 0.29507069140095791),
        (8.9, -0.065253246851244397),
        (9.0, -0.090333611182876134),
        (9.5, -0.19392874768742236),
        (11.0, -0.17119030040719609),
        (13.2, 0.21668592225856408),
        (15.0, -0.014224472826780773),
        (17.7, -0.068780399382134219),
        (19.0, 0.1466294396596512),
        (20.9, 0.053520363066180328),
        (21.0, 0.036579071000862743),
        (24.9, 0.08324596835301549),
        (25.0, 0.096266783275958116),
        (30.0, -0.086367983581040211),
        (47.3, -0.094959345344983001),
        (75.0, 0.034643913805097056),
        (120.0, 0.071823415829156128),
        (350.5, -0.023117741942992128),
        (1000.0, 0.024786686152420175),
    ];

    #[test]
    fn j0_matches_reference_values() {
        for &(z, want) in J0_REFERENCE {
            let got = bessel_j0(z);
            assert!(
                (got - want).abs() < 1e-13,
                "J0({z}) = {got}, want {want}"
            );
        }
    }

    /// Validation against the integral definition
    /// J0(z) = (1/pi) int_0^pi cos(z sin t) dt, on a grid spanning all
    /// three implementation branches. The dense Simpson rule here is
    /// test-only code, independent of the production branches.
    #[test]
    fn j0_matches_integral_definition_on_grid() {
        let integral_j0 = |z: f64| -> f64 {
            let m = 40_000usize;
            let h = std::f64::consts::PI / m as f64;
            let mut s = 0.0;
            for i in 0..=m {
                let t = i as f64 * h;
                let w = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                s += w * (z * t.sin()).cos();
            }
            s * h / 3.0 / std::f64::consts::PI
        };
        let mut z = 0.05f64;
        while z < 40.0 {
            let got = bessel_j0(z);
            let want = integral_j0(z);
            assert!(
                (got - want).abs() < 1e-12,
                "J0({z}) = {got}, integral gives {want}"
            );
            z += 0.73;
        }
    }

    #[test]
    fn center_intensity_is_quarter() {
        // At focus the integrand reduces to rho, so |int_0^1 rho drho|^2 = 0.25,
        // and Simpson is exact for polynomials.
        let v = born_wolf_intensity(500e-9, 1.4, 1.5, 0.0, 0.0, 256);
        assert!((v - 0.25).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn born_wolf_kernel_is_normalized_nonnegative_and_symmetric() {
        let spec = PsfSpec {
            kernel_extent: [9, 9, 9],
            quadrature_points: 256,
            ..PsfSpec::simulation_default()
        };
        let k = born_wolf_psf(&spec).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-12);
        assert!(k.min() >= 0.0);
        let [d, h, w] = k.extents();
        let (cz, cy, cx) = (d / 2, h / 2, w / 2);
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let v = k.at(z, y, x);
                    // lateral sign flips
                    assert_eq!(v, k.at(z, 2 * cy - y, 2 * cx - x));
                    // lateral swap
                    let sy = cy as i64 + (x as i64 - cx as i64);
                    let sx = cx as i64 + (y as i64 - cy as i64);
                    assert_eq!(v, k.at(z, sy as usize, sx as usize));
                    // axial sign flip
                    assert_eq!(v, k.at(2 * cz - z, y, x));
                }
            }
        }
    }

    #[test]
    fn born_wolf_center_dominates_lateral_plane() {
        let spec = PsfSpec {
            kernel_extent: [9, 9, 9],
            quadrature_points: 256,
            ..PsfSpec::simulation_default()
        };
        let k = born_wolf_psf(&spec).unwrap();
        let [d, h, w] = k.extents();
        let c = k.at(d / 2, h / 2, w / 2);
        for y in 0..h {
            for x in 0..w {
                assert!(k.at(d / 2, y, x) <= c);
            }
        }
    }

    /// Voxel at lattice offset (2, 0, 0) against a 16x-finer midpoint
    /// Riemann oracle (independent quadrature rule, test-only).
    #[test]
    fn born_wolf_off_axis_matches_riemann_oracle() {
        let (lam, na, ni) = (500e-9, 1.4, 1.5);
        let r_lat = 2.0 * 100e-9;
        let panels = 1024usize;
        let mine = born_wolf_intensity(lam, na, ni, r_lat, 0.0, panels);

        let n = 16 * panels;
        let k = 2.0 * std::f64::consts::PI / lam;
        let alpha = k * (na / ni) * r_lat;
        let mut re = 0.0f64;
        for i in 0..n {
            let rho = (i as f64 + 0.5) / n as f64;
            re += bessel_j0(alpha * rho) * rho;
        }
        re /= n as f64;
        let oracle = re * re; // r_z = 0: imaginary part vanishes
        assert!(
            ((mine - oracle) / oracle).abs() < 1e-6,
            "mine {mine} oracle {oracle}"
        );
    }

    #[test]
    fn doubling_quadrature_changes_no_voxel_much() {
        let spec = PsfSpec {
            kernel_extent: [9, 9, 9],
            ..PsfSpec::simulation_default()
        };
        let a = born_wolf_psf(&spec).unwrap();
        let spec2 = PsfSpec {
            quadrature_points: spec.quadrature_points * 2,
            ..spec
        };
        let b = born_wolf_psf(&spec2).unwrap();
        let max_change = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_change < 1e-8, "max voxel change {max_change}");
    }

    #[test]
    fn born_wolf_kernel_is_axially_elongated() {
        let k = born_wolf_psf(&PsfSpec {
            kernel_extent: [31, 31, 31],
            quadrature_points: 256,
            ..PsfSpec::simulation_default()
        })
        .unwrap();
        let fz = fwhm_along_axis(&k, 0);
        let fx = fwhm_along_axis(&k, 2);
        assert!(fz > fx, "axial FWHM {fz} should exceed lateral {fx}");
    }

    #[test]
    fn gaussian_small_sigma_is_delta() {
        let k = gaussian_psf([0.05; 3], [5, 5, 5]).unwrap();
        assert!(k.at(2, 2, 2) > 1.0 - 1e-9);
    }

    #[test]
    fn gaussian_is_normalized_with_closed_form_ratio() {
        let sx = 1.3;
        let k = gaussian_psf([sx, 0.9, 1.1], [9, 9, 9]).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-12);
        let ratio = k.at(4, 4, 5) / k.at(4, 4, 4);
        let want = (-1.0 / (2.0 * sx * sx)).exp();
        assert!((ratio - want).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rejects_even_extent() {
        assert!(gaussian_psf([1.0; 3], [4, 5, 5]).is_err());
    }

    #[test]
    fn smoothing_constant_field_is_identity() {
        let v = Volume::full([7, 7, 7], 0.3);
        let s = smooth_kernel(&v, 1.0).unwrap();
        for (a, b) in v.data().iter().zip(s.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_preserves_mass() {
        let mut v = Volume::zeros([9, 9, 9]);
        for (i, d) in v.data_mut().iter_mut().enumerate() {
            *d = ((i * 37) % 11) as f64 / 11.0;
        }
        let before = v.sum();
        let s = smooth_kernel(&v, 1.0).unwrap();
        assert!((s.sum() - before).abs() < 1e-12);
    }

    #[test]
    fn smoothing_delta_gives_sampled_gaussian() {
        let v = Volume::delta([25, 25, 25]);
        let s = smooth_kernel(&v, 1.0).unwrap();
        let g = gaussian_psf([1.0; 3], [25, 25, 25]).unwrap();
        // compare interior voxels (smoothing window fully inside the domain)
        for z in 8..17 {
            for y in 8..17 {
                for x in 8..17 {
                    assert!(
                        (s.at(z, y, x) - g.at(z, y, x)).abs() < 1e-10,
                        "at ({z},{y},{x}): {} vs {}",
                        s.at(z, y, x),
                        g.at(z, y, x)
                    );
                }
            }
        }
    }

    #[test]
    fn psf_spec_validation() {
        let mut s = PsfSpec::desk_default();
        s.kernel_extent = [8, 9, 9];
        assert!(born_wolf_psf(&s).is_err());
        let mut s = PsfSpec::desk_default();
        s.quadrature_points = 32;
        assert!(born_wolf_psf(&s).is_err());
        let mut s = PsfSpec::desk_default();
        s.numerical_aperture = 1.6; // exceeds n_i
        assert!(born_wolf_psf(&s).is_err());
    }
}
