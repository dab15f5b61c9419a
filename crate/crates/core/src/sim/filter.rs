//! Second-order Butterworth low-pass, one state per channel.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[derive(Clone, Debug)]
pub struct LowPass {
    b: [f64; 3],
    a: [f64; 2],
    z1: Vec<f64>,
    z2: Vec<f64>,
    primed: bool,
}

impl LowPass {
    /// Bilinear-transform design; panics unless `0 < cutoff < sample_rate / 2`.
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64, channels: usize) -> Self {
        assert!(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0, "cutoff must lie below Nyquist");
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let q = FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            z1: vec![0.0; channels],
            z2: vec![0.0; channels],
            primed: false,
        }
    }

    /// Magnitude response at `f_hz`.
    pub fn gain(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / sample_rate_hz;
        let z = nalgebra::Complex::from_polar(1.0, -w);
        let num = self.b[0] + self.b[1] * z + self.b[2] * z * z;
        let den = 1.0 + self.a[0] * z + self.a[1] * z * z;
        (num / den).norm()
    }

    /// Filters one sample per channel. The first call starts the filter in
    /// steady state at that sample.
    pub fn apply(&mut self, x: &mut [f64]) {
        assert_eq!(x.len(), self.z1.len(), "one sample per channel");
        if !self.primed {
            for (i, &u) in x.iter().enumerate() {
                self.z1[i] = (1.0 - self.b[0]) * u;
                self.z2[i] = (self.b[2] - self.a[1]) * u;
            }
            self.primed = true;
        }
        for (i, u) in x.iter_mut().enumerate() {
            let y = self.b[0] * *u + self.z1[i];
            self.z1[i] = self.b[1] * *u - self.a[0] * y + self.z2[i];
            self.z2[i] = self.b[2] * *u - self.a[1] * y;
            *u = y;
        }
    }
}
