//! Convolution, activation, and resampling primitives with hand-derived
//! gradients.
//!
//! Everything here is plain f64 on CHW tensors: 3×3 convolutions (stride 1
//! or 2, zero padding 1), SiLU, and nearest-neighbour 2× upsampling. Each
//! primitive exposes an explicit backward pass; layer shapes are small
//! enough that every gradient can be cross-checked against central finite
//! differences in the tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::FeatureTensor;

/// A 3×3 convolution with zero padding 1 and stride 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    /// Weights, laid out [out_ch][in_ch][ky][kx].
    pub w: Vec<f64>,
    /// One bias per output channel.
    pub b: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_ch: usize, out_ch: usize, stride: usize) -> Self {
        assert!(stride == 1 || stride == 2, "stride must be 1 or 2");
        Self {
            in_ch,
            out_ch,
            stride,
            w: vec![0.0; out_ch * in_ch * 9],
            b: vec![0.0; out_ch],
        }
    }

    /// He-style normal init scaled by `gain` (gain 1 ≈ variance-preserving).
    pub fn init(in_ch: usize, out_ch: usize, stride: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(in_ch, out_ch, stride);
        let std = gain * (2.0 / (in_ch as f64 * 9.0)).sqrt();
        for w in &mut layer.w {
            let z: f64 = StandardNormal.sample(rng);
            *w = std * z;
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Output spatial size for an input extent `n`.
    pub fn out_dim(&self, n: usize) -> usize {
        (n - 1) / self.stride + 1
    }

    pub fn forward(&self, x: &FeatureTensor) -> FeatureTensor {
        assert_eq!(x.channels(), self.in_ch, "conv input channel mismatch");
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = (self.out_dim(h), self.out_dim(w));
        let mut out = FeatureTensor::zeros(self.out_ch, oh, ow);
        let s = self.stride;
        for oc in 0..self.out_ch {
            let plane = &mut out.values_mut()[oc * oh * ow..(oc + 1) * oh * ow];
            plane.fill(self.b[oc]);
            for ic in 0..self.in_ch {
                let xplane = x.channel(ic);
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = self.w[((oc * self.in_ch + ic) * 3 + ky) * 3 + kx];
                        let (lo, hi) = ox_range(kx, w, ow, s);
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &xplane[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                // ix = ox + kx − 1; contiguous in ox.
                                let base = kx as isize - 1;
                                for ox in lo..hi {
                                    orow[ox] += wv * xrow[(ox as isize + base) as usize];
                                }
                            } else {
                                for ox in lo..hi {
                                    orow[ox] += wv * xrow[ox * 2 + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients into `gw`/`gb` and returns the
    /// gradient with respect to the input. `x` must be the forward input.
    pub fn backward(
        &self,
        x: &FeatureTensor,
        gout: &FeatureTensor,
        gw: &mut [f64],
        gb: &mut [f64],
    ) -> FeatureTensor {
        assert_eq!(gout.channels(), self.out_ch);
        assert_eq!(gw.len(), self.w.len());
        assert_eq!(gb.len(), self.b.len());
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = (gout.height(), gout.width());
        let s = self.stride;
        let mut gin = FeatureTensor::zeros(self.in_ch, h, w);
        for oc in 0..self.out_ch {
            let gplane = gout.channel(oc);
            gb[oc] += gplane.iter().sum::<f64>();
            for ic in 0..self.in_ch {
                let xplane = x.channel(ic);
                let ginplane = &mut gin.values_mut()[ic * h * w..(ic + 1) * h * w];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let widx = ((oc * self.in_ch + ic) * 3 + ky) * 3 + kx;
                        let wv = self.w[widx];
                        let mut wgrad = 0.0;
                        let (lo, hi) = ox_range(kx, w, ow, s);
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &xplane[iy as usize * w..(iy as usize + 1) * w];
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            let gin_row =
                                &mut ginplane[iy as usize * w..(iy as usize + 1) * w];
                            if s == 1 {
                                let base = kx as isize - 1;
                                for ox in lo..hi {
                                    let ix = (ox as isize + base) as usize;
                                    wgrad += grow[ox] * xrow[ix];
                                    gin_row[ix] += wv * grow[ox];
                                }
                            } else {
                                for ox in lo..hi {
                                    let ix = ox * 2 + kx - 1;
                                    wgrad += grow[ox] * xrow[ix];
                                    gin_row[ix] += wv * grow[ox];
                                }
                            }
                        }
                        gw[widx] += wgrad;
                    }
                }
            }
        }
        gin
    }
}

/// Valid output-x range such that ix = ox·stride + kx − 1 stays inside
/// [0, w).
fn ox_range(kx: usize, w: usize, ow: usize, stride: usize) -> (usize, usize) {
    let lo = if kx == 0 { 1usize.div_ceil(stride) } else { 0 };
    // Largest ox with ox·stride + kx − 1 ≤ w − 1, i.e. ox ≤ (w − kx)/stride.
    let hi = ((w - kx) / stride + 1).min(ow);
    (lo.min(hi), hi)
}

/// SiLU (swish): x·σ(x), applied in place.
pub fn silu_in_place(values: &mut [f64]) {
    for v in values {
        *v /= 1.0 + (-*v).exp();
    }
}

/// Multiplies `grad` by the SiLU derivative evaluated at the pre-activation
/// values `pre`: σ(z)·(1 + z·(1 − σ(z))).
pub fn silu_backward(pre: &[f64], grad: &mut [f64]) {
    debug_assert_eq!(pre.len(), grad.len());
    for (g, &z) in grad.iter_mut().zip(pre) {
        let sig = 1.0 / (1.0 + (-z).exp());
        *g *= sig * (1.0 + z * (1.0 - sig));
    }
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2x(x: &FeatureTensor) -> FeatureTensor {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let mut out = FeatureTensor::zeros(c, h * 2, w * 2);
    {
        let ov = out.values_mut();
        for ch in 0..c {
            let xplane = x.channel(ch);
            let oplane = &mut ov[ch * 4 * h * w..(ch + 1) * 4 * h * w];
            for y in 0..2 * h {
                let xrow = &xplane[(y / 2) * w..(y / 2 + 1) * w];
                let orow = &mut oplane[y * 2 * w..(y + 1) * 2 * w];
                for x_ in 0..2 * w {
                    orow[x_] = xrow[x_ / 2];
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`]: sums each 2×2 block of the incoming gradient.
pub fn upsample2x_backward(gout: &FeatureTensor) -> FeatureTensor {
    let (c, oh, ow) = (gout.channels(), gout.height(), gout.width());
    assert!(oh % 2 == 0 && ow % 2 == 0, "gradient extent must be even");
    let (h, w) = (oh / 2, ow / 2);
    let mut gin = FeatureTensor::zeros(c, h, w);
    {
        let gv = gin.values_mut();
        for ch in 0..c {
            let gplane = gout.channel(ch);
            let iplane = &mut gv[ch * h * w..(ch + 1) * h * w];
            for y in 0..oh {
                let grow = &gplane[y * ow..(y + 1) * ow];
                let irow = &mut iplane[(y / 2) * w..(y / 2 + 1) * w];
                for x_ in 0..ow {
                    irow[x_ / 2] += grow[x_];
                }
            }
        }
    }
    gin
}

/// Four constant planes embedding the timestep: sin/cos at two frequencies
/// chosen so t ∈ 1..=100 maps injectively.
pub fn time_planes(t: usize, height: usize, width: usize) -> FeatureTensor {
    let tf = t as f64;
    let phases = [
        (tf * 0.25).sin(),
        (tf * 0.25).cos(),
        (tf * 0.03125).sin(),
        (tf * 0.03125).cos(),
    ];
    let mut out = FeatureTensor::zeros(4, height, width);
    let plane = height * width;
    let values = out.values_mut();
    for (c, &p) in phases.iter().enumerate() {
        values[c * plane..(c + 1) * plane].fill(p);
    }
    out
}
