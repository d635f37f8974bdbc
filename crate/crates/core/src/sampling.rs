//! Low-discrepancy sample points on dilated spheres.
//!
//! A bl-homogeneous function is determined, in each limit, by its values on
//! a single homogeneous sphere. The plan here pushes a fixed set of unit
//! directions through the 0-limit and the infinity-limit dilations over a
//! range of radii, which is the numerical surrogate used for every sampled
//! sign condition in the crate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    acc
}

/// Unit directions in `dim` dimensions: the signed coordinate axes followed by
/// Halton points mapped through the inverse normal CDF and normalized.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(
        dim >= 1 && dim <= PRIMES.len(),
        "unsupported dimension {dim}"
    );
    let mut out = Vec::with_capacity(count + 2 * dim);
    for k in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[k] = s;
            out.push(v);
        }
    }
    if dim == 1 {
        return out;
    }
    let normal = Normal::standard();
    let mut index = 1u64;
    while out.len() < count + 2 * dim {
        let v: Vec<f64> = (0..dim)
            .map(|k| {
                normal.inverse_cdf(radical_inverse(index, PRIMES[k]).clamp(1e-12, 1.0 - 1e-12))
            })
            .collect();
        index += 1;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// Directions times dilation radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub directions: usize,
    /// Base-10 exponents of the dilation radii.
    pub log10_radii: Vec<f64>,
}

impl Default for SamplingPlan {
    /// 2000 directions on 13 radii `10^-3, 10^-2.5, ..., 10^3`.
    fn default() -> Self {
        Self {
            directions: 2000,
            log10_radii: (0..13).map(|k| -3.0 + 0.5 * k as f64).collect(),
        }
    }
}

/// One sample: the point and the index of its radius in the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub z: Vec<f64>,
    pub radius_index: usize,
}

impl SamplingPlan {
    pub fn coarse(directions: usize) -> Self {
        Self {
            directions,
            ..Self::default()
        }
    }

    /// All points `Delta_rho^{w} dir` for each weight family `w`.
    pub fn points(&self, families: &[&[f64]]) -> Vec<SamplePoint> {
        let dim = families.first().map_or(0, |w| w.len());
        let dirs = unit_directions(dim, self.directions);
        let mut out = Vec::with_capacity(dirs.len() * self.log10_radii.len() * families.len());
        for weights in families {
            debug_assert_eq!(weights.len(), dim);
            for (ri, lr) in self.log10_radii.iter().enumerate() {
                let rho = 10f64.powf(*lr);
                for d in &dirs {
                    let z = d
                        .iter()
                        .zip(weights.iter())
                        .map(|(x, w)| rho.powf(*w) * x)
                        .collect();
                    out.push(SamplePoint {
                        z,
                        radius_index: ri,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_unit() {
        for dim in 1..=4 {
            let d = unit_directions(dim, 200);
            for v in &d {
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn directions_cover_both_hemispheres() {
        let d = unit_directions(3, 1000);
        for k in 0..3 {
            assert!(d.iter().any(|v| v[k] > 0.9));
            assert!(d.iter().any(|v| v[k] < -0.9));
        }
    }

    #[test]
    fn plan_size() {
        let plan = SamplingPlan::default();
        let w0 = [3.0, 2.0, 1.0];
        let winf = [0.6, 0.8, 1.0];
        let pts = plan.points(&[&w0, &winf]);
        assert_eq!(pts.len(), 2 * 13 * (2000 + 6));
    }
}
