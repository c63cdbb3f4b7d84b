//! Welch periodogram: Hann-windowed segments with 50 % overlap.
//!
//! Normalisation is double-sided in angular frequency, P(ω) = dt/(N·U)·|Σ w x e^{−iωt}|²
//! with U the mean squared window, so that ∫ P dω/2π over (−π/dt, π/dt)
//! returns the variance of the input.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub struct Welch {
    segment: usize,
    dt: f64,
    window: Vec<f64>,
    norm: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Welch {
    pub fn new(segment: usize, dt: f64) -> Self {
        assert!(segment >= 4, "Welch segment must hold at least 4 samples");
        let window: Vec<f64> = (0..segment)
            .map(|i| {
                let s = (PI * i as f64 / segment as f64).sin();
                s * s
            })
            .collect();
        let u = window.iter().map(|w| w * w).sum::<f64>() / segment as f64;
        let fft = FftPlanner::new().plan_fft_forward(segment);
        Self {
            segment,
            dt,
            window,
            norm: dt / (segment as f64 * u),
            fft,
        }
    }

    pub fn segment(&self) -> usize {
        self.segment
    }

    /// Non-negative angular frequencies of the output bins, 0 ..= Nyquist.
    pub fn omegas(&self) -> Vec<f64> {
        let dw = 2.0 * PI / (self.segment as f64 * self.dt);
        (0..=self.segment / 2).map(|k| k as f64 * dw).collect()
    }

    /// Sum of segment periodograms and the number of segments used.
    pub fn accumulate(&self, x: &[f64]) -> (Vec<f64>, usize) {
        let n = self.segment;
        let step = n / 2;
        let mut acc = vec![0.0; n / 2 + 1];
        let mut count = 0;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut start = 0;
        while start + n <= x.len() {
            for (b, (xi, wi)) in buf.iter_mut().zip(x[start..start + n].iter().zip(&self.window)) {
                *b = Complex::new(xi * wi, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr() * self.norm;
            }
            count += 1;
            start += step;
        }
        (acc, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn white_noise_level_and_parseval() {
        let dt = 1e-3;
        let sigma2: f64 = 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1 << 18)
            .map(|_| sigma2.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let w = Welch::new(1024, dt);
        let (acc, count) = w.accumulate(&x);
        let psd: Vec<f64> = acc.iter().map(|a| a / count as f64).collect();
        // White noise of variance σ² sampled at dt has double-sided level σ²·dt.
        let mid = &psd[50..450];
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!((mean / (sigma2 * dt) - 1.0).abs() < 0.02, "{mean}");
        let dw = 2.0 * PI / (1024.0 * dt);
        let integral: f64 = psd[1..512].iter().sum::<f64>() * 2.0 * dw / (2.0 * PI)
            + (psd[0] + psd[512]) * dw / (2.0 * PI);
        assert!((integral / sigma2 - 1.0).abs() < 0.02, "{integral}");
    }

    #[test]
    fn sinusoid_lands_in_its_bin() {
        let dt = 1e-2;
        let n = 256;
        let k = 20;
        let omega = 2.0 * PI * k as f64 / (n as f64 * dt);
        let x: Vec<f64> = (0..4096).map(|i| (omega * i as f64 * dt).cos()).collect();
        let w = Welch::new(n, dt);
        let (acc, _) = w.accumulate(&x);
        let peak = acc
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, k);
        assert!((w.omegas()[k] - omega).abs() < 1e-9);
    }
}
