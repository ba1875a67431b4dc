use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{res_blocks, side_convs, vgg_convs, Activation, Backbone, InputRepr, ModelSpec};
use crate::error::{Error, Result};
use crate::nn::{
    conv_unit, AdaptiveMaxPool2d, Buffer, Conv2d, Flatten, Layer, Linear, MaxPool2d, Param,
    ResidualBlock, Scalar, Sequential, Softplus, Relu, Tensor,
};

/// Lifts `(batch, n)` measurements to `(batch, n, numz, numr)` feature blocks.
pub struct PixelAffine<T> {
    pub numz: usize,
    pub numr: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> PixelAffine<T> {
    pub fn new(name: &str, numz: usize, numr: usize) -> Self {
        PixelAffine {
            numz,
            numr,
            weight: Param::new(format!("{name}.weight"), Tensor::full(&[numz, numr], T::ONE)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[numz, numr])),
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for PixelAffine<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let (b, n) = (x.dim(0), x.dim(1));
        let p = self.numz * self.numr;
        let w = self.weight.value.data();
        let bias = self.bias.value.data();
        let mut out = Tensor::zeros(&[b, n, self.numz, self.numr]);
        for (plane, xv) in out.data_mut().chunks_exact_mut(p).zip(x.data()) {
            for ((o, wv), bv) in plane.iter_mut().zip(w).zip(bias) {
                *o = *xv * *wv + *bv;
            }
        }
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("input backward without forward");
        let p = self.numz * self.numr;
        let mut dx = Tensor::zeros(x.shape());
        let w = self.weight.value.data().to_vec();
        for ((plane, xv), dxv) in grad
            .data()
            .chunks_exact(p)
            .zip(x.data())
            .zip(dx.data_mut())
        {
            let wg = self.weight.grad.data_mut();
            for (k, g) in plane.iter().enumerate() {
                wg[k] += *g * *xv;
            }
            let bg = self.bias.grad.data_mut();
            for (k, g) in plane.iter().enumerate() {
                bg[k] += *g;
            }
            *dxv = plane.iter().zip(&w).map(|(g, wv)| *g * *wv).sum();
        }
        dx
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
        format!("pixel affine {}x{}", self.numz, self.numr)
    }
}

/// Broadcasts each measurement onto a constant `(numz, numr)` plane.
pub struct Broadcast {
    pub numz: usize,
    pub numr: usize,
}

impl<T: Scalar> Layer<T> for Broadcast {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        broadcast_planes(x, self.numz, self.numr)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let p = self.numz * self.numr;
        let sums: Vec<T> = grad.data().chunks_exact(p).map(|c| c.iter().copied().sum()).collect();
        let b = grad.dim(0);
        let n = grad.dim(1);
        Tensor::from_vec(&[b, n], sums)
    }

    fn describe(&self) -> String {
        "broadcast".into()
    }
}

/// Plane `i` of sample `b` is filled with `x[b, i]`.
pub fn broadcast_planes<T: Scalar>(x: &Tensor<T>, numz: usize, numr: usize) -> Tensor<T> {
    let (b, n) = (x.dim(0), x.dim(1));
    let p = numz * numr;
    let mut out = Tensor::zeros(&[b, n, numz, numr]);
    for (plane, xv) in out.data_mut().chunks_exact_mut(p).zip(x.data()) {
        plane.fill(*xv);
    }
    out
}

/// Element-wise product of backbone features `(batch, c, h, w)` with the
/// physical-information features `(c, h, w)`, broadcast over the batch.
pub fn fuse<T: Scalar>(features: &Tensor<T>, pi: &Tensor<T>) -> Result<Tensor<T>> {
    let per_sample = pi.len();
    if features.shape().len() < 2 || features.len() != features.dim(0) * per_sample {
        return Err(Error::shape(
            format!("(batch, {:?})", pi.shape()),
            format!("{:?}", features.shape()),
        ));
    }
    let mut out = features.clone();
    for chunk in out.data_mut().chunks_exact_mut(per_sample) {
        for (o, p) in chunk.iter_mut().zip(pi.data()) {
            *o *= *p;
        }
    }
    Ok(out)
}

/// One of the four surrogate variants with its trainable state.
pub struct Model<T: Scalar> {
    spec: ModelSpec,
    input: Sequential<T>,
    backbone: Sequential<T>,
    side: Option<Sequential<T>>,
    head: Sequential<T>,
    fuse_cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Model<T> {
    /// Builds the model with Kaiming-normal weights drawn from `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.n;
        let bn = spec.batch_norm;

        let mut input = Sequential::new();
        match spec.input_repr {
            InputRepr::PixelAffine => input.push(PixelAffine::new("input", spec.numz, spec.numr)),
            InputRepr::Conv3x3 => {
                input.push(Broadcast {
                    numz: spec.numz,
                    numr: spec.numr,
                });
                input.push(Conv2d::new("input.conv", n, n, 3, 1, 1, &mut rng));
            }
        }

        let mut backbone = Sequential::new();
        match spec.backbone {
            Backbone::Vgg => {
                for (i, (stage, cin, cout)) in vgg_convs(n).into_iter().enumerate() {
                    conv_unit(&mut backbone, &format!("backbone.{i}.{stage}"), cin, cout, bn, &mut rng);
                    if i == 1 || i == 4 {
                        backbone.push(MaxPool2d::new());
                    }
                }
                backbone.push(AdaptiveMaxPool2d::new(3, 3));
            }
            Backbone::Res => {
                for (i, (stage, cin, cout, stride)) in res_blocks(n).into_iter().enumerate() {
                    backbone.push(ResidualBlock::new(
                        &format!("backbone.{i}.{stage}"),
                        cin,
                        cout,
                        stride,
                        bn,
                        &mut rng,
                    ));
                }
                if spec.use_pi {
                    backbone.push(AdaptiveMaxPool2d::new(3, 3));
                }
            }
        }

        let side = spec.use_pi.then(|| {
            let mut side = Sequential::new();
            for (i, (stage, cin, cout)) in side_convs(n).into_iter().enumerate() {
                conv_unit(&mut side, &format!("side.{i}.{stage}"), cin, cout, bn, &mut rng);
                if i == 1 || i == 3 {
                    side.push(MaxPool2d::new());
                }
            }
            side.push(AdaptiveMaxPool2d::new(3, 3));
            side
        });

        let cells = spec.cells();
        let mut head = Sequential::new();
        head.push(Flatten::new());
        head.push(Linear::new("head.fc1", spec.head_inputs(), cells, &mut rng));
        push_activation(&mut head, spec.final_activation);
        head.push(Linear::new("head.fc2", cells, cells, &mut rng));
        push_activation(&mut head, spec.final_activation);

        Ok(Model {
            spec,
            input,
            backbone,
            side,
            head,
            fuse_cache: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        self.input.params(&mut out);
        self.backbone.params(&mut out);
        if let Some(s) = &self.side {
            s.params(&mut out);
        }
        self.head.params(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        self.input.params_mut(&mut out);
        self.backbone.params_mut(&mut out);
        if let Some(s) = &mut self.side {
            s.params_mut(&mut out);
        }
        self.head.params_mut(&mut out);
        out
    }

    pub fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut out = Vec::new();
        self.input.buffers(&mut out);
        self.backbone.buffers(&mut out);
        if let Some(s) = &self.side {
            s.buffers(&mut out);
        }
        self.head.buffers(&mut out);
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut out = Vec::new();
        self.input.buffers_mut(&mut out);
        self.backbone.buffers_mut(&mut out);
        if let Some(s) = &mut self.side {
            s.buffers_mut(&mut out);
        }
        self.head.buffers_mut(&mut out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// `Σ w²` over every trainable parameter.
    pub fn sum_squares(&self) -> f64 {
        self.params().iter().map(|p| p.value.sum_squares()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// Sets every trainable parameter to zero.
    pub fn zero_parameters(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.value.fill(T::ZERO));
    }

    /// Lifted input block `(batch, n, numz, numr)` for measurements `(batch, n)`.
    pub fn input_repr(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_x(x)?;
        Ok(self.input.infer(x))
    }

    fn check_x(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() != 2 || x.dim(1) != self.spec.n {
            return Err(Error::shape(
                format!("(batch, {})", self.spec.n),
                format!("{:?}", x.shape()),
            ));
        }
        Ok(())
    }

    fn check_block(&self, block: &Tensor<T>) -> Result<Tensor<T>> {
        let s = &self.spec;
        if block.len() != s.n * s.cells() {
            return Err(Error::shape(
                format!("({}, {}, {})", s.n, s.numz, s.numr),
                format!("{:?}", block.shape()),
            ));
        }
        Ok(block.clone().reshape(&[1, s.n, s.numz, s.numr]))
    }

    /// Runs the side chain on the contribution-matrix block `(n, numz, numr)`,
    /// giving `(8n, 3, 3)` features. The block is the only input the side
    /// chain ever sees, so its normalization layers use the block's own
    /// statistics, exactly as during training.
    pub fn pi_features(&self, cmatrix_block: &Tensor<T>) -> Result<Tensor<T>> {
        let side = self.side.as_ref().ok_or_else(|| {
            Error::InvalidSpec(format!("{} has no physical-information side chain", self.spec.name()))
        })?;
        let block = self.check_block(cmatrix_block)?;
        Ok(drop_batch(side.infer_batch_stats(&block)))
    }

    /// Backbone features before fusion, `(batch, 8n, h, w)`.
    pub fn backbone_features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_x(x)?;
        Ok(self.backbone.infer(&self.input.infer(x)))
    }

    /// Inference: predicted fields `(batch, numz·numr)`. `pi_features` comes
    /// from [`pi_features`](Self::pi_features) and is required iff the model
    /// uses physical information.
    pub fn predict(&self, x: &Tensor<T>, pi_features: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        self.check_x(x)?;
        let features = self.backbone.infer(&self.input.infer(x));
        let features = match (self.spec.use_pi, pi_features) {
            (true, Some(pi)) => {
                let expected = self.spec.feature_channels() * 9;
                if pi.len() != expected {
                    return Err(Error::shape(
                        format!("({}, 3, 3)", self.spec.feature_channels()),
                        format!("{:?}", pi.shape()),
                    ));
                }
                fuse(&features, pi)?
            }
            (true, None) => return Err(Error::MissingPi),
            (false, _) => features,
        };
        Ok(self.head.infer(&features))
    }

    /// Training-mode forward pass; the side chain runs on `cmatrix_block`
    /// so its weights receive gradients in [`backward`](Self::backward).
    pub fn forward(&mut self, x: &Tensor<T>, cmatrix_block: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        self.check_x(x)?;
        let pi = match (self.spec.use_pi, cmatrix_block) {
            (true, Some(block)) => {
                let block = self.check_block(block)?;
                let side = self.side.as_mut().expect("use_pi implies side chain");
                Some(drop_batch(side.forward(&block)))
            }
            (true, None) => return Err(Error::MissingPi),
            (false, _) => None,
        };
        let h = self.input.forward(x);
        let features = self.backbone.forward(&h);
        let features = match pi {
            Some(pi) => {
                let fused = fuse(&features, &pi)?;
                self.fuse_cache = Some((features, pi));
                fused
            }
            None => features,
        };
        Ok(self.head.forward(&features))
    }

    /// Accumulates parameter gradients for `grad = ∂loss/∂output`.
    pub fn backward(&mut self, grad: &Tensor<T>) {
        let g = self.head.backward(grad);
        let g = match self.fuse_cache.take() {
            Some((features, pi)) => {
                let per = pi.len();
                let g_features = fuse(&g, &pi).expect("shapes fixed by forward");
                let mut g_pi = Tensor::zeros(&[1, pi.dim(0), pi.dim(1), pi.dim(2)]);
                for (gc, fc) in g.data().chunks_exact(per).zip(features.data().chunks_exact(per)) {
                    for ((acc, gv), fv) in g_pi.data_mut().iter_mut().zip(gc).zip(fc) {
                        *acc += *gv * *fv;
                    }
                }
                self.side
                    .as_mut()
                    .expect("fusion implies side chain")
                    .backward(&g_pi);
                g_features
            }
            None => g,
        };
        let g = self.backbone.backward(&g);
        self.input.backward(&g);
    }

    /// Human-readable layer chain for each stage.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("input".to_string(), self.input.describe()),
            ("backbone".to_string(), self.backbone.describe()),
        ];
        if let Some(s) = &self.side {
            out.push(("side".to_string(), s.describe()));
        }
        out.push(("head".to_string(), self.head.describe()));
        out
    }
}

fn drop_batch<T: Scalar>(t: Tensor<T>) -> Tensor<T> {
    let shape = t.shape()[1..].to_vec();
    t.reshape(&shape)
}

fn push_activation<T: Scalar>(seq: &mut Sequential<T>, act: Activation) {
    match act {
        Activation::Relu => seq.push(Relu::new()),
        Activation::Softplus => seq.push(Softplus::new()),
    }
}
