use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::BandSpec;
use crate::error::{AmdetError, Result};

const MIN_FRAME_LEN: usize = 8;

/// Ideal band-pass by FFT bin masking for a fixed frame length.
///
/// A bin at `|f|` is kept iff `lo ≤ |f| < hi`; bands whose upper edge exceeds
/// Nyquist are capped there.
pub struct BandDecomposer {
    len: usize,
    sample_rate_hz: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for BandDecomposer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BandDecomposer")
            .field("len", &self.len)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .finish()
    }
}

impl BandDecomposer {
    pub fn new(len: usize, sample_rate_hz: f64) -> Result<Self> {
        if len < MIN_FRAME_LEN {
            return Err(AmdetError::invalid(
                "frame",
                format!("length {len} below the minimum of {MIN_FRAME_LEN}"),
            ));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(AmdetError::invalid("sample_rate_hz", "must be positive"));
        }
        let mut planner = FftPlanner::new();
        Ok(BandDecomposer {
            len,
            sample_rate_hz,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    fn check_band(&self, band: &BandSpec) -> Result<()> {
        band.validate()?;
        if band.lo_hz >= self.nyquist_hz() {
            return Err(AmdetError::BandAboveNyquist {
                name: band.name.clone(),
                lo_hz: band.lo_hz,
                hi_hz: band.hi_hz,
                nyquist_hz: self.nyquist_hz(),
            });
        }
        Ok(())
    }

    fn bin_hz(&self, k: usize) -> f64 {
        k.min(self.len - k) as f64 * self.sample_rate_hz / self.len as f64
    }

    /// One time-domain component per band.
    pub fn decompose(&self, frame: &[f64], bands: &[BandSpec]) -> Result<Vec<Vec<f64>>> {
        if frame.len() != self.len {
            return Err(AmdetError::shape("band frame", self.len, frame.len()));
        }
        for b in bands {
            self.check_band(b)?;
        }
        let mut spectrum: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut spectrum);

        let scale = 1.0 / self.len as f64;
        let mut out = Vec::with_capacity(bands.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for b in bands {
            let hi = b.hi_hz.min(self.nyquist_hz());
            for (k, (dst, src)) in buf.iter_mut().zip(&spectrum).enumerate() {
                let f = self.bin_hz(k);
                *dst = if f >= b.lo_hz && f < hi {
                    *src
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.inverse.process(&mut buf);
            out.push(buf.iter().map(|c| c.re * scale).collect());
        }
        Ok(out)
    }
}

/// Band-limited copy of `frame`; convenience wrapper planning a fresh FFT.
pub fn band_component(frame: &[f64], band: &BandSpec, sample_rate_hz: f64) -> Result<Vec<f64>> {
    let d = BandDecomposer::new(frame.len(), sample_rate_hz)?;
    Ok(d.decompose(frame, std::slice::from_ref(band))?.remove(0))
}
