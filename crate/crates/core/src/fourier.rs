//! Exponential sums `F_j = Σ_k w_k exp(-i ω_j t_k)` on a uniform frequency grid
//! `ω_j = start + j·step`, for arbitrary real positions `t_k`.
//!
//! Positions are snapped to a lattice of spacing `δ = 2π/(N·step)`; the
//! lattice part is handled by one FFT and the sub-cell offset by a Taylor
//! series in `ω_j (t_k - m_k δ)`, truncated once the remainder drops below
//! 1e-16 relative to `Σ|w_k|`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const TAYLOR_TOL: f64 = 1e-16;

/// Precomputed lattice assignment for one set of positions and one grid.
pub struct UniformFrequencySum {
    start: f64,
    step: f64,
    count: usize,
    n_fft: usize,
    half_delta: f64,
    bins: Vec<usize>,
    offsets: Vec<f64>,
    phases: Vec<Complex64>,
    order: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UniformFrequencySum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UniformFrequencySum")
            .field("start", &self.start)
            .field("step", &self.step)
            .field("count", &self.count)
            .field("n_fft", &self.n_fft)
            .field("order", &self.order)
            .finish()
    }
}

impl UniformFrequencySum {
    pub fn new(positions: &[f64], start: f64, step: f64, count: usize) -> Self {
        assert!(step > 0.0 && count >= 1);
        let max_abs = start.abs().max((start + step * (count - 1) as f64).abs());
        // keep |ω| δ/2 ≤ π/2 so the Taylor series converges quickly
        let needed = ((2.0 * max_abs / step).ceil() as usize).max(count).max(2);
        let n_fft = needed.next_power_of_two();
        let delta = 2.0 * std::f64::consts::PI / (n_fft as f64 * step);
        let half_delta = 0.5 * delta;
        let mut bins = Vec::with_capacity(positions.len());
        let mut offsets = Vec::with_capacity(positions.len());
        let mut phases = Vec::with_capacity(positions.len());
        for &t in positions {
            let m = (t / delta).round();
            let lattice = m * delta;
            bins.push((m as i64).rem_euclid(n_fft as i64) as usize);
            offsets.push((t - lattice) / half_delta);
            phases.push(Complex64::from_polar(1.0, -start * lattice));
        }
        let rho = max_abs * half_delta;
        let mut order = 0;
        let mut term = rho;
        while term > TAYLOR_TOL && order < 80 {
            order += 1;
            term *= rho / (order + 1) as f64;
        }
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self { start, step, count, n_fft, half_delta, bins, offsets, phases, order, fft }
    }

    pub fn frequency(&self, j: usize) -> f64 {
        self.start + self.step * j as f64
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn taylor_order(&self) -> usize {
        self.order
    }

    /// Evaluates the sum for the given weights (same order as the positions).
    pub fn eval(&self, weights: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(weights.len(), self.bins.len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.count];
        let mut coeff: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); self.count];
        let mut power: Vec<Complex64> = weights.iter().zip(&self.phases).map(|(w, ph)| w * ph).collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for p in 0..=self.order {
            if p > 0 {
                for (pw, u) in power.iter_mut().zip(&self.offsets) {
                    *pw *= *u;
                }
                for (j, c) in coeff.iter_mut().enumerate() {
                    let z = Complex64::new(0.0, -self.frequency(j) * self.half_delta);
                    *c *= z / p as f64;
                }
            }
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for (pw, &m) in power.iter().zip(&self.bins) {
                buf[m] += pw;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (j, o) in out.iter_mut().enumerate() {
                *o += coeff[j] * buf[j % self.n_fft];
            }
        }
        out
    }
}
