use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{matmul, Buffer, Param, Scalar, Tensor};

/// A differentiable stage. `forward` runs in training mode and caches what
/// `backward` needs; `infer` is the cache-free evaluation path.
pub trait Layer<T: Scalar>: Send + Sync {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T>;
    fn infer(&self, x: &Tensor<T>) -> Tensor<T>;
    /// Evaluation path in which normalization layers use the statistics of
    /// `x` itself instead of their running estimates. Meant for inputs that
    /// never change, where the batch statistics are exact.
    fn infer_batch_stats(&self, x: &Tensor<T>) -> Tensor<T> {
        self.infer(x)
    }
    /// Consumes the cached forward state, accumulates parameter gradients and
    /// returns the gradient with respect to the layer input.
    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T>;

    fn params<'a>(&'a self, _out: &mut Vec<&'a Param<T>>) {}
    fn params_mut<'a>(&'a mut self, _out: &mut Vec<&'a mut Param<T>>) {}
    fn buffers<'a>(&'a self, _out: &mut Vec<&'a Buffer<T>>) {}
    fn buffers_mut<'a>(&'a mut self, _out: &mut Vec<&'a mut Buffer<T>>) {}

    /// One-line description used in layer tables.
    fn describe(&self) -> String;
}

pub(crate) fn kaiming<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let len = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..len).map(|_| T::from_f64(normal.sample(rng))).collect(),
    )
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// 2-D convolution with bias, lowered to a single matrix product over the
/// whole batch.
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<ConvCache<T>>,
}

struct ConvCache<T> {
    cols: Vec<T>,
    in_shape: [usize; 4],
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        Conv2d {
            cin,
            cout,
            kernel,
            stride,
            pad,
            weight: Param::new(
                format!("{name}.weight"),
                kaiming(&[cout, cin, kernel, kernel], fan_in, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            cache: None,
        }
    }

    pub fn parameter_count(cin: usize, cout: usize, kernel: usize) -> usize {
        cout * cin * kernel * kernel + cout
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out(h, self.kernel, self.stride, self.pad),
            conv_out(w, self.kernel, self.stride, self.pad),
        )
    }

    fn im2col(&self, x: &Tensor<T>) -> Vec<T> {
        let [b, c, h, w] = dims4(x);
        let (oh, ow) = self.out_hw(h, w);
        let k = self.kernel;
        let p = oh * ow;
        let bp = b * p;
        let mut cols = vec![T::ZERO; c * k * k * bp];
        let xd = x.data();
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let row_data = &mut cols[row * bp..(row + 1) * bp];
                    for bi in 0..b {
                        let plane = &xd[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                        let dst = &mut row_data[bi * p..(bi + 1) * p];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            for (ox, d) in drow.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    *d = src[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[T], in_shape: [usize; 4]) -> Tensor<T> {
        let [b, c, h, w] = in_shape;
        let (oh, ow) = self.out_hw(h, w);
        let k = self.kernel;
        let p = oh * ow;
        let bp = b * p;
        let mut dx = Tensor::zeros(&in_shape);
        let dxd = dx.data_mut();
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let row_data = &dcols[row * bp..(row + 1) * bp];
                    for bi in 0..b {
                        let plane = &mut dxd[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                        let src = &row_data[bi * p..(bi + 1) * p];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    dst[ix as usize] += src[oy * ow + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn compute(&self, x: &Tensor<T>, cols: &[T]) -> Tensor<T> {
        let [b, _, h, w] = dims4(x);
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let kk = self.cin * self.kernel * self.kernel;
        let mut out_cm = vec![T::ZERO; self.cout * b * p];
        matmul(
            self.cout,
            kk,
            b * p,
            self.weight.value.data(),
            false,
            cols,
            false,
            &mut out_cm,
            false,
        );
        let mut out = Tensor::zeros(&[b, self.cout, oh, ow]);
        let od = out.data_mut();
        let bias = self.bias.value.data();
        for co in 0..self.cout {
            for bi in 0..b {
                let src = &out_cm[co * b * p + bi * p..co * b * p + (bi + 1) * p];
                let dst = &mut od[(bi * self.cout + co) * p..(bi * self.cout + co + 1) * p];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *s + bias[co];
                }
            }
        }
        out
    }

    fn check_input(&self, x: &Tensor<T>) {
        assert_eq!(x.shape().len(), 4, "conv input must be NCHW");
        assert_eq!(x.dim(1), self.cin, "conv input channels");
    }
}

fn dims4<T: Scalar>(x: &Tensor<T>) -> [usize; 4] {
    let s = x.shape();
    [s[0], s[1], s[2], s[3]]
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.check_input(x);
        let cols = self.im2col(x);
        let out = self.compute(x, &cols);
        self.cache = Some(ConvCache {
            cols,
            in_shape: dims4(x),
        });
        out
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.check_input(x);
        let cols = self.im2col(x);
        self.compute(x, &cols)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.take().expect("conv backward without forward");
        let [b, cout, oh, ow] = dims4(grad);
        let p = oh * ow;
        let bp = b * p;
        let kk = self.cin * self.kernel * self.kernel;

        let mut g_cm = vec![T::ZERO; cout * bp];
        let gd = grad.data();
        for bi in 0..b {
            for co in 0..cout {
                g_cm[co * bp + bi * p..co * bp + (bi + 1) * p]
                    .copy_from_slice(&gd[(bi * cout + co) * p..(bi * cout + co + 1) * p]);
            }
        }
        let bgrad = self.bias.grad.data_mut();
        for co in 0..cout {
            let mut s = 0.0;
            for v in &g_cm[co * bp..(co + 1) * bp] {
                s += v.to_f64();
            }
            bgrad[co] += T::from_f64(s);
        }
        matmul(
            cout,
            bp,
            kk,
            &g_cm,
            false,
            &cache.cols,
            true,
            self.weight.grad.data_mut(),
            true,
        );
        let mut dcols = cache.cols;
        matmul(
            kk,
            cout,
            bp,
            self.weight.value.data(),
            true,
            &g_cm,
            false,
            &mut dcols,
            false,
        );
        self.col2im(&dcols, cache.in_shape)
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }

    fn describe(&self) -> String {
        format!(
            "conv {k}x{k} {}->{} stride {} pad {}",
            self.cin,
            self.cout,
            self.stride,
            self.pad,
            k = self.kernel
        )
    }
}

/// Batch normalization over (batch, height, width) per channel.
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<NormCache>,
}

struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: [usize; 4],
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: Param::new(format!("{name}.weight"), Tensor::full(&[channels], T::ONE)),
            beta: Param::new(format!("{name}.bias"), Tensor::zeros(&[channels])),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: Tensor::zeros(&[channels]),
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: Tensor::full(&[channels], T::ONE),
            },
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn parameter_count(channels: usize) -> usize {
        2 * channels
    }

    fn apply_stats(&self, x: &Tensor<T>, mean: &[f64], var: &[f64]) -> Tensor<T> {
        let [b, c, h, w] = dims4(x);
        assert_eq!(c, self.channels, "batch-norm channels");
        let p = h * w;
        let mut out = Tensor::zeros(x.shape());
        let xd = x.data();
        let od = out.data_mut();
        for ci in 0..c {
            let istd = 1.0 / (var[ci] + self.eps).sqrt();
            let scale = self.gamma.value.data()[ci].to_f64() * istd;
            let shift = self.beta.value.data()[ci].to_f64() - mean[ci] * scale;
            for bi in 0..b {
                for idx in (bi * c + ci) * p..(bi * c + ci + 1) * p {
                    od[idx] = T::from_f64(xd[idx].to_f64() * scale + shift);
                }
            }
        }
        out
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let [b, c, h, w] = dims4(x);
        assert_eq!(c, self.channels, "batch-norm channels");
        let p = h * w;
        let count = (b * p) as f64;
        let xd = x.data();
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; c];
        for ci in 0..c {
            let mut sum = 0.0;
            for bi in 0..b {
                for v in &xd[(bi * c + ci) * p..(bi * c + ci + 1) * p] {
                    sum += v.to_f64();
                }
            }
            let mean = sum / count;
            let mut sq = 0.0;
            for bi in 0..b {
                for v in &xd[(bi * c + ci) * p..(bi * c + ci + 1) * p] {
                    let d = v.to_f64() - mean;
                    sq += d * d;
                }
            }
            let var = sq / count;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = istd;
            let g = self.gamma.value.data()[ci].to_f64();
            let be = self.beta.value.data()[ci].to_f64();
            let od = out.data_mut();
            for bi in 0..b {
                let range = (bi * c + ci) * p..(bi * c + ci + 1) * p;
                for idx in range {
                    let xh = (xd[idx].to_f64() - mean) * istd;
                    xhat[idx] = xh;
                    od[idx] = T::from_f64(g * xh + be);
                }
            }
            let unbiased = if count > 1.0 {
                sq / (count - 1.0)
            } else {
                var
            };
            let m = self.momentum;
            let rm = &mut self.running_mean.value.data_mut()[ci];
            *rm = T::from_f64((1.0 - m) * rm.to_f64() + m * mean);
            let rv = &mut self.running_var.value.data_mut()[ci];
            *rv = T::from_f64((1.0 - m) * rv.to_f64() + m * unbiased);
        }
        self.cache = Some(NormCache {
            xhat,
            inv_std,
            shape: [b, c, h, w],
        });
        out
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mean: Vec<f64> = self.running_mean.value.data().iter().map(|v| v.to_f64()).collect();
        let var: Vec<f64> = self.running_var.value.data().iter().map(|v| v.to_f64()).collect();
        self.apply_stats(x, &mean, &var)
    }

    fn infer_batch_stats(&self, x: &Tensor<T>) -> Tensor<T> {
        let [b, c, h, w] = dims4(x);
        let p = h * w;
        let count = (b * p) as f64;
        let xd = x.data();
        let channel = |ci: usize| (0..b).flat_map(move |bi| (bi * c + ci) * p..(bi * c + ci + 1) * p);
        let mean: Vec<f64> = (0..c)
            .map(|ci| channel(ci).map(|i| xd[i].to_f64()).sum::<f64>() / count)
            .collect();
        let var: Vec<f64> = (0..c)
            .map(|ci| channel(ci).map(|i| (xd[i].to_f64() - mean[ci]).powi(2)).sum::<f64>() / count)
            .collect();
        self.apply_stats(x, &mean, &var)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.take().expect("batch-norm backward without forward");
        let [b, c, h, w] = cache.shape;
        let p = h * w;
        let count = (b * p) as f64;
        let gd = grad.data();
        let mut dx = Tensor::zeros(&cache.shape);
        let dxd = dx.data_mut();
        for ci in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for bi in 0..b {
                for idx in (bi * c + ci) * p..(bi * c + ci + 1) * p {
                    let g = gd[idx].to_f64();
                    sum_g += g;
                    sum_gx += g * cache.xhat[idx];
                }
            }
            self.gamma.grad.data_mut()[ci] += T::from_f64(sum_gx);
            self.beta.grad.data_mut()[ci] += T::from_f64(sum_g);
            let scale = self.gamma.value.data()[ci].to_f64() * cache.inv_std[ci] / count;
            for bi in 0..b {
                for idx in (bi * c + ci) * p..(bi * c + ci + 1) * p {
                    let g = gd[idx].to_f64();
                    dxd[idx] =
                        T::from_f64(scale * (count * g - sum_g - cache.xhat[idx] * sum_gx));
                }
            }
        }
        dx
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }

    fn buffers<'a>(&'a self, out: &mut Vec<&'a Buffer<T>>) {
        out.push(&self.running_mean);
        out.push(&self.running_var);
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Buffer<T>>) {
        out.push(&mut self.running_mean);
        out.push(&mut self.running_var);
    }

    fn describe(&self) -> String {
        format!("batchnorm {}", self.channels)
    }
}

/// 2×2 max-pool with stride 2; odd trailing rows/columns are dropped.
#[derive(Default)]
pub struct MaxPool2d {
    argmax: Option<(Vec<usize>, [usize; 4])>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn out_size(h: usize, w: usize) -> (usize, usize) {
        (h / 2, w / 2)
    }
}

/// Max over each output window; ties resolve to the first element in
/// row-major order.
fn pool_windows<T: Scalar>(
    x: &Tensor<T>,
    oh: usize,
    ow: usize,
    window: impl Fn(usize, usize) -> ([usize; 2], [usize; 2]),
) -> (Tensor<T>, Vec<usize>) {
    let [b, c, h, w] = dims4(x);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut arg = vec![0usize; b * c * oh * ow];
    let xd = x.data();
    let od = out.data_mut();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let ([y0, y1], [x0, x1]) = window(oy, ox);
                let mut best = base + y0 * w + x0;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let idx = base + iy * w + ix;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                od[o] = xd[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

fn scatter<T: Scalar>(grad: &Tensor<T>, arg: &[usize], in_shape: [usize; 4]) -> Tensor<T> {
    let mut dx = Tensor::zeros(&in_shape);
    let dxd = dx.data_mut();
    for (g, &i) in grad.data().iter().zip(arg) {
        dxd[i] += *g;
    }
    dx
}

impl<T: Scalar> Layer<T> for MaxPool2d {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let (out, arg) = self.run(x);
        self.argmax = Some((arg, dims4(x)));
        out
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.run(x).0
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let (arg, shape) = self.argmax.take().expect("pool backward without forward");
        scatter(grad, &arg, shape)
    }

    fn describe(&self) -> String {
        "maxpool 2x2".into()
    }
}

impl MaxPool2d {
    fn run<T: Scalar>(&self, x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
        let [_, _, h, w] = dims4(x);
        let (oh, ow) = Self::out_size(h, w);
        assert!(oh > 0 && ow > 0, "max-pool input {h}x{w} too small");
        pool_windows(x, oh, ow, |oy, ox| {
            ([2 * oy, 2 * oy + 2], [2 * ox, 2 * ox + 2])
        })
    }
}

/// Adaptive max-pool to a fixed output size; window `i` of an axis of length
/// `L` covers `[floor(i·L/out), ceil((i+1)·L/out))`.
pub struct AdaptiveMaxPool2d {
    pub out_h: usize,
    pub out_w: usize,
    argmax: Option<(Vec<usize>, [usize; 4])>,
}

impl AdaptiveMaxPool2d {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        AdaptiveMaxPool2d {
            out_h,
            out_w,
            argmax: None,
        }
    }

    fn run<T: Scalar>(&self, x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
        let [_, _, h, w] = dims4(x);
        let (oh, ow) = (self.out_h, self.out_w);
        let span = |i: usize, len: usize, out: usize| [i * len / out, ((i + 1) * len).div_ceil(out)];
        pool_windows(x, oh, ow, |oy, ox| (span(oy, h, oh), span(ox, w, ow)))
    }
}

impl<T: Scalar> Layer<T> for AdaptiveMaxPool2d {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let (out, arg) = self.run(x);
        self.argmax = Some((arg, dims4(x)));
        out
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.run(x).0
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let (arg, shape) = self.argmax.take().expect("pool backward without forward");
        scatter(grad, &arg, shape)
    }

    fn describe(&self) -> String {
        format!("adaptive maxpool {}x{}", self.out_h, self.out_w)
    }
}

/// Fully connected layer on `(batch, features)`.
pub struct Linear<T> {
    pub fin: usize,
    pub fout: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, fin: usize, fout: usize, rng: &mut impl Rng) -> Self {
        Linear {
            fin,
            fout,
            weight: Param::new(format!("{name}.weight"), kaiming(&[fout, fin], fin, rng)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[fout])),
            input: None,
        }
    }

    pub fn parameter_count(fin: usize, fout: usize) -> usize {
        fin * fout + fout
    }

    fn compute(&self, x: &Tensor<T>) -> Tensor<T> {
        let b = x.dim(0);
        assert_eq!(x.len(), b * self.fin, "linear input features");
        let mut out = Tensor::zeros(&[b, self.fout]);
        for row in out.data_mut().chunks_exact_mut(self.fout) {
            row.copy_from_slice(self.bias.value.data());
        }
        matmul(
            b,
            self.fin,
            self.fout,
            x.data(),
            false,
            self.weight.value.data(),
            true,
            out.data_mut(),
            true,
        );
        out
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let out = self.compute(x);
        self.input = Some(x.clone());
        out
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.compute(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("linear backward without forward");
        let b = x.dim(0);
        matmul(
            self.fout,
            b,
            self.fin,
            grad.data(),
            true,
            x.data(),
            false,
            self.weight.grad.data_mut(),
            true,
        );
        let bg = self.bias.grad.data_mut();
        for row in grad.data().chunks_exact(self.fout) {
            for (acc, g) in bg.iter_mut().zip(row) {
                *acc += *g;
            }
        }
        let mut dx = Tensor::zeros(&[b, self.fin]);
        matmul(
            b,
            self.fout,
            self.fin,
            grad.data(),
            false,
            self.weight.value.data(),
            false,
            dx.data_mut(),
            false,
        );
        dx.reshape(x.shape())
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }

    fn describe(&self) -> String {
        format!("linear {}->{}", self.fin, self.fout)
    }
}

#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Relu {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.mask = Some(x.data().iter().map(|v| *v > T::ZERO).collect());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| if v > T::ZERO { v } else { T::ZERO })
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mask = self.mask.take().expect("relu backward without forward");
        let data = grad
            .data()
            .iter()
            .zip(&mask)
            .map(|(g, m)| if *m { *g } else { T::ZERO })
            .collect();
        Tensor::from_vec(grad.shape(), data)
    }

    fn describe(&self) -> String {
        "relu".into()
    }
}

/// `ln(1 + eˣ)`, evaluated as `max(x, 0) + ln(1 + e^{-|x|})` so it cannot
/// overflow. Where the exact value underflows it is held at the smallest
/// positive normal, keeping the output strictly positive.
pub fn softplus<T: Scalar>(x: T) -> T {
    let relu = if x > T::ZERO { x } else { T::ZERO };
    let y = relu + (-x.abs()).exp().ln_1p();
    if y > T::MIN_POSITIVE {
        y
    } else {
        T::MIN_POSITIVE
    }
}

/// Derivative of softplus, the logistic sigmoid.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

#[derive(Default)]
pub struct Softplus {
    input: Option<Vec<f64>>,
}

impl Softplus {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Softplus {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.data().iter().map(|v| v.to_f64()).collect());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.map(softplus)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let input = self.input.take().expect("softplus backward without forward");
        let data = grad
            .data()
            .iter()
            .zip(&input)
            .map(|(g, x)| *g * T::from_f64(sigmoid(*x)))
            .collect();
        Tensor::from_vec(grad.shape(), data)
    }

    fn describe(&self) -> String {
        "softplus".into()
    }
}

/// `(batch, ...)` → `(batch, features)`.
#[derive(Default)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Flatten {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let b = x.dim(0);
        x.clone().reshape(&[b, x.len() / b])
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let shape = self.shape.take().expect("flatten backward without forward");
        grad.clone().reshape(&shape)
    }

    fn describe(&self) -> String {
        "flatten".into()
    }
}
