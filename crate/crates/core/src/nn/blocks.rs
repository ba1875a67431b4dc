use rand::Rng;

use super::layers::{BatchNorm2d, Conv2d, Layer, Relu};
use super::tensor::{Buffer, Param, Scalar, Tensor};

/// Ordered chain of layers.
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Default for Sequential<T> {
    fn default() -> Self {
        Sequential { layers: Vec::new() }
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h);
        }
        h
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h);
        }
        h
    }

    fn infer_batch_stats(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer_batch_stats(&h);
        }
        h
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        self.layers.iter().for_each(|l| l.params(out));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        self.layers.iter_mut().for_each(|l| l.params_mut(out));
    }

    fn buffers<'a>(&'a self, out: &mut Vec<&'a Buffer<T>>) {
        self.layers.iter().for_each(|l| l.buffers(out));
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Buffer<T>>) {
        self.layers.iter_mut().for_each(|l| l.buffers_mut(out));
    }

    fn describe(&self) -> String {
        self.layers
            .iter()
            .map(|l| l.describe())
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

/// Convolution, optional batch norm, ReLU.
pub fn conv_unit<T: Scalar>(
    seq: &mut Sequential<T>,
    name: &str,
    cin: usize,
    cout: usize,
    batch_norm: bool,
    rng: &mut impl Rng,
) {
    seq.push(Conv2d::new(&format!("{name}.conv"), cin, cout, 3, 1, 1, rng));
    if batch_norm {
        seq.push(BatchNorm2d::new(&format!("{name}.bn"), cout));
    }
    seq.push(Relu::new());
}

/// Basic residual block: `relu(bn(conv(relu(bn(conv(x))))) + shortcut(x))`.
///
/// With `stride > 1` or a channel change the shortcut is a strided 1×1
/// projection (plus batch norm when enabled); otherwise it is the identity.
pub struct ResidualBlock<T> {
    main: Sequential<T>,
    shortcut: Option<Sequential<T>>,
    mask: Option<Vec<bool>>,
    cin: usize,
    cout: usize,
    stride: usize,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        batch_norm: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let mut main = Sequential::new();
        main.push(Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, stride, 1, rng));
        if batch_norm {
            main.push(BatchNorm2d::new(&format!("{name}.bn1"), cout));
        }
        main.push(Relu::new());
        main.push(Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, 1, 1, rng));
        if batch_norm {
            main.push(BatchNorm2d::new(&format!("{name}.bn2"), cout));
        }
        let shortcut = (stride != 1 || cin != cout).then(|| {
            let mut s = Sequential::new();
            s.push(Conv2d::new(&format!("{name}.proj"), cin, cout, 1, stride, 0, rng));
            if batch_norm {
                s.push(BatchNorm2d::new(&format!("{name}.proj_bn"), cout));
            }
            s
        });
        ResidualBlock {
            main,
            shortcut,
            mask: None,
            cin,
            cout,
            stride,
        }
    }

    pub fn parameter_count(cin: usize, cout: usize, stride: usize, batch_norm: bool) -> usize {
        let bn = |c| if batch_norm { BatchNorm2d::<f32>::parameter_count(c) } else { 0 };
        let mut total = Conv2d::<f32>::parameter_count(cin, cout, 3)
            + bn(cout)
            + Conv2d::<f32>::parameter_count(cout, cout, 3)
            + bn(cout);
        if stride != 1 || cin != cout {
            total += Conv2d::<f32>::parameter_count(cin, cout, 1) + bn(cout);
        }
        total
    }

    fn combine(main: Tensor<T>, skip: &Tensor<T>) -> Tensor<T> {
        let data = main
            .data()
            .iter()
            .zip(skip.data())
            .map(|(a, b)| {
                let s = *a + *b;
                if s > T::ZERO {
                    s
                } else {
                    T::ZERO
                }
            })
            .collect();
        Tensor::from_vec(main.shape(), data)
    }
}

impl<T: Scalar> Layer<T> for ResidualBlock<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let main = self.main.forward(x);
        let out = match &mut self.shortcut {
            Some(s) => {
                let skip = s.forward(x);
                Self::combine(main, &skip)
            }
            None => Self::combine(main, x),
        };
        self.mask = Some(out.data().iter().map(|v| *v > T::ZERO).collect());
        out
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let main = self.main.infer(x);
        match &self.shortcut {
            Some(s) => Self::combine(main, &s.infer(x)),
            None => Self::combine(main, x),
        }
    }

    fn infer_batch_stats(&self, x: &Tensor<T>) -> Tensor<T> {
        let main = self.main.infer_batch_stats(x);
        match &self.shortcut {
            Some(s) => Self::combine(main, &s.infer_batch_stats(x)),
            None => Self::combine(main, x),
        }
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mask = self.mask.take().expect("residual backward without forward");
        let g = Tensor::from_vec(
            grad.shape(),
            grad.data()
                .iter()
                .zip(&mask)
                .map(|(g, m)| if *m { *g } else { T::ZERO })
                .collect(),
        );
        let mut dx = self.main.backward(&g);
        let dskip = match &mut self.shortcut {
            Some(s) => s.backward(&g),
            None => g,
        };
        for (a, b) in dx.data_mut().iter_mut().zip(dskip.data()) {
            *a += *b;
        }
        dx
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        self.main.params(out);
        if let Some(s) = &self.shortcut {
            s.params(out);
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        self.main.params_mut(out);
        if let Some(s) = &mut self.shortcut {
            s.params_mut(out);
        }
    }

    fn buffers<'a>(&'a self, out: &mut Vec<&'a Buffer<T>>) {
        self.main.buffers(out);
        if let Some(s) = &self.shortcut {
            s.buffers(out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Buffer<T>>) {
        self.main.buffers_mut(out);
        if let Some(s) = &mut self.shortcut {
            s.buffers_mut(out);
        }
    }

    fn describe(&self) -> String {
        format!(
            "residual {}->{} stride {}{}",
            self.cin,
            self.cout,
            self.stride,
            if self.shortcut.is_some() { " (projection)" } else { "" }
        )
    }
}
