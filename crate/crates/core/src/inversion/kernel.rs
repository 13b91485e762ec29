//! Band-limited smoothing kernels (compactly supported Fourier transform).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `K* = 1_[-1,1]`, `K(y) = sin(y)/(πy)`.
    #[default]
    Sinc,
    /// Sinc with unit band in cycles: `K(y) = sin(2πy)/(πy)`, `K* = 1_[-2π,2π]`.
    /// Same shape as `Sinc` at bandwidth `h/2π`.
    SincCycles,
    /// `K*` equal to 1 on `[-a, a]`, linear down to 0 at `±1`.
    FlatTopTrapezoid { a: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Sinc | Kernel::SincCycles => Ok(()),
            Kernel::FlatTopTrapezoid { a } if a > 0.0 && a < 1.0 => Ok(()),
            Kernel::FlatTopTrapezoid { a } => Err(Error::Config(format!("trapezoid flat half-width must lie in (0, 1), got {a}"))),
        }
    }

    /// Half-width of the support of `K*`.
    pub fn support(&self) -> f64 {
        match self {
            Kernel::SincCycles => 2.0 * PI,
            _ => 1.0,
        }
    }

    /// Fourier transform `K*(ν) = ∫ e^{iνy} K(y) dy`.
    pub fn fourier(&self, nu: f64) -> f64 {
        let v = nu.abs();
        match *self {
            Kernel::Sinc => {
                if v <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::SincCycles => {
                if v <= 2.0 * PI {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::FlatTopTrapezoid { a } => {
                if v <= a {
                    1.0
                } else if v < 1.0 {
                    (1.0 - v) / (1.0 - a)
                } else {
                    0.0
                }
            }
        }
    }

    /// Spatial kernel `K(y)`.
    pub fn spatial(&self, y: f64) -> f64 {
        match *self {
            Kernel::Sinc => {
                if y.abs() < 1e-8 {
                    1.0 / PI
                } else {
                    y.sin() / (PI * y)
                }
            }
            Kernel::SincCycles => {
                if y.abs() < 1e-8 {
                    2.0
                } else {
                    (2.0 * PI * y).sin() / (PI * y)
                }
            }
            Kernel::FlatTopTrapezoid { a } => {
                if y.abs() < 1e-3 {
                    let y2 = y * y;
                    let series = 0.5 * (1.0 - a * a) - (1.0 - a.powi(4)) * y2 / 24.0 + (1.0 - a.powi(6)) * y2 * y2 / 720.0;
                    series / (PI * (1.0 - a))
                } else {
                    ((a * y).cos() - y.cos()) / (PI * (1.0 - a) * y * y)
                }
            }
        }
    }

    /// Order `l` in `|1 - K*(ν)| ≤ C |ν|^l / (1 + |ν|)^l`; both kernels are flat
    /// near the origin, so any order holds.
    pub fn order(&self) -> u32 {
        u32::MAX
    }
}

pub fn kernel_fourier(k: Kernel, nu: f64) -> f64 {
    k.fourier(nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::simpson;

    #[test]
    fn fourier_values() {
        assert_eq!(kernel_fourier(Kernel::Sinc, 0.0), 1.0);
        assert_eq!(kernel_fourier(Kernel::FlatTopTrapezoid { a: 0.5 }, 0.75), 0.5);
        assert_eq!(kernel_fourier(Kernel::Sinc, 2.0), 0.0);
        assert_eq!(kernel_fourier(Kernel::FlatTopTrapezoid { a: 0.5 }, -2.0), 0.0);
        assert_eq!(kernel_fourier(Kernel::SincCycles, 6.28), 1.0);
        assert_eq!(kernel_fourier(Kernel::SincCycles, 6.29), 0.0);
    }

    #[test]
    fn spatial_is_inverse_transform() {
        for k in [Kernel::Sinc, Kernel::SincCycles, Kernel::FlatTopTrapezoid { a: 0.3 }] {
            let w = k.support();
            for y in [0.0, 1e-4, 0.7, 3.0, 11.0] {
                // K(y) = (1/2π) ∫ K*(ν) e^{-iνy} dν over the support
                let direct = simpson(|nu| k.fourier(nu) * (nu * y).cos(), -w, w, 20_000) / (2.0 * PI);
                assert!((k.spatial(y) - direct).abs() < 1e-9, "{k:?} y={y}");
            }
        }
    }

    #[test]
    fn trapezoid_integrates_to_one() {
        let k = Kernel::FlatTopTrapezoid { a: 0.5 };
        let total = simpson(|y| k.spatial(y), -4000.0, 4000.0, 800_000);
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn rejects_bad_flat_width() {
        assert!(Kernel::FlatTopTrapezoid { a: 1.0 }.validate().is_err());
    }
}
