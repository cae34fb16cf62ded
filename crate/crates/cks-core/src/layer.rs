//! A conv2d layer binding the three operators into forward/backward
//! propagation, with finite-difference gradient verification and a small
//! teacher-student training loop.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::ConvGeometry;
use crate::ops::{
    deconv_common_unit_stride, deconv_route, dispatch_conv, dispatch_dilated, ks_deconv,
    ks_deconv_v2, ks_split, DeconvRoute, DispatchPolicy, KernelSplit,
};
use crate::oracle::{naive_conv2d, naive_deconv2d, naive_dilated_conv2d};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;
use crate::util::sqrt;

/// Which operator family the layer runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Brute-force oracles; the referee configuration.
    Reference,
    /// Zero-skipping operators behind the dispatch policy.
    ZeroSkip,
}

/// One convolutional layer: weights, geometry, and the cached state
/// backward propagation needs.
#[derive(Debug, Clone)]
pub struct Conv2dLayer<S: Scalar> {
    geometry: ConvGeometry,
    weights: Tensor4<S>,
    backend: Backend,
    policy: DispatchPolicy,
    cached_input: Option<Tensor4<S>>,
    // built on first strided backward, reused until the weights change
    cached_split: Option<KernelSplit<S>>,
}

impl<S: Scalar> Conv2dLayer<S> {
    pub fn new(geometry: ConvGeometry, weights: Tensor4<S>, backend: Backend) -> Result<Self> {
        if weights.dims() != geometry.filter_dims() {
            return Err(Error::Shape(format!(
                "weights {:?} do not match geometry {:?}",
                weights.dims(),
                geometry.filter_dims()
            )));
        }
        Ok(Conv2dLayer {
            geometry,
            weights,
            backend,
            policy: DispatchPolicy::default(),
            cached_input: None,
            cached_split: None,
        })
    }

    /// Fan-in scaled uniform initialization: `[-k, k]` with
    /// `k = (F_H * F_W * I_C)^(-1/2)`.
    pub fn with_seeded_weights(geometry: ConvGeometry, backend: Backend, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut layer = Conv2dLayer {
            geometry,
            weights: Tensor4::zeros(geometry.filter_dims()),
            backend,
            policy: DispatchPolicy::default(),
            cached_input: None,
            cached_split: None,
        };
        let k = 1.0 / sqrt((geometry.fh() * geometry.fw() * geometry.ic()) as f64);
        layer.weights.fill_uniform(&mut rng, -k, k);
        layer
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geometry
    }

    pub fn weights(&self) -> &Tensor4<S> {
        &self.weights
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn set_weights(&mut self, weights: Tensor4<S>) -> Result<()> {
        if weights.dims() != self.geometry.filter_dims() {
            return Err(Error::Shape(format!(
                "weights {:?} do not match geometry {:?}",
                weights.dims(),
                self.geometry.filter_dims()
            )));
        }
        self.weights = weights;
        self.cached_split = None;
        Ok(())
    }

    /// Gradient-descent update `w -= lr * dw`, invalidating the split cache.
    pub fn apply_grad(&mut self, dw: &Tensor4<S>, lr: S) -> Result<()> {
        if dw.dims() != self.geometry.filter_dims() {
            return Err(Error::Shape(format!(
                "gradient {:?} does not match geometry {:?}",
                dw.dims(),
                self.geometry.filter_dims()
            )));
        }
        for (w, g) in self.weights.data_mut().iter_mut().zip(dw.data()) {
            *w -= lr * *g;
        }
        self.cached_split = None;
        Ok(())
    }

    /// Forward pass without caching; does not enable backward.
    pub fn output(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        let (y, _) = match self.backend {
            Backend::Reference => naive_conv2d(x, &self.weights, &self.geometry)?,
            Backend::ZeroSkip => dispatch_conv(x, &self.weights, &self.geometry, &self.policy)?,
        };
        Ok(y)
    }

    /// Forward pass; caches the input for backward.
    pub fn forward(&mut self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        self.geometry.check_input(x)?;
        let y = self.output(x)?;
        self.cached_input = Some(x.clone());
        Ok(y)
    }

    /// Backward pass from the output gradient: returns the input gradient
    /// and the filter gradient for the cached forward input.
    pub fn backward(&mut self, dy: &Tensor4<S>) -> Result<(Tensor4<S>, Tensor4<S>)> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or(Error::State("backward called before forward"))?;
        self.geometry.check_output(dy)?;
        match self.backend {
            Backend::Reference => {
                let (dx, _) = naive_deconv2d(dy, &self.weights, &self.geometry)?;
                let (dw, _) = naive_dilated_conv2d(x, dy, &self.geometry)?;
                Ok((dx, dw))
            }
            Backend::ZeroSkip => {
                let dx = match deconv_route(&self.geometry, &self.policy) {
                    DeconvRoute::CommonUnitStride => {
                        deconv_common_unit_stride(dy, &self.weights, &self.geometry)?.0
                    }
                    route => {
                        if self.cached_split.is_none() {
                            self.cached_split = Some(ks_split(&self.weights, &self.geometry)?);
                        }
                        let ks = self.cached_split.as_ref().unwrap();
                        match route {
                            DeconvRoute::KernelSplitTrimmed => {
                                ks_deconv_v2(dy, ks, &self.geometry)?.0
                            }
                            _ => ks_deconv(dy, ks, &self.geometry)?.0,
                        }
                    }
                };
                let x = self.cached_input.as_ref().unwrap();
                let (dw, _) = dispatch_dilated(x, dy, &self.geometry, &self.policy)?;
                Ok((dx, dw))
            }
        }
    }
}

/// Scalar loss over a 64-bit layer output, with its gradient.
pub trait LossFn {
    fn value(&self, y: &Tensor4<f64>) -> f64;
    fn grad(&self, y: &Tensor4<f64>) -> Tensor4<f64>;
}

/// `L = 0.5 * sum(y^2)`; the gradient is `y` itself.
pub struct SquaredError;

impl LossFn for SquaredError {
    fn value(&self, y: &Tensor4<f64>) -> f64 {
        0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
    }

    fn grad(&self, y: &Tensor4<f64>) -> Tensor4<f64> {
        y.clone()
    }
}

/// Mean squared error against a fixed target.
pub struct MseLoss {
    pub target: Tensor4<f64>,
}

impl LossFn for MseLoss {
    fn value(&self, y: &Tensor4<f64>) -> f64 {
        let m = y.len() as f64;
        y.data()
            .iter()
            .zip(self.target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / m
    }

    fn grad(&self, y: &Tensor4<f64>) -> Tensor4<f64> {
        let m = y.len() as f64;
        let mut g = y.clone();
        for (gv, tv) in g.data_mut().iter_mut().zip(self.target.data()) {
            *gv = 2.0 * (*gv - tv) / m;
        }
        g
    }
}

/// Central finite-difference gradients of `loss(layer(x))` with respect
/// to every entry of `x` and of the weights. The layer's weights are
/// restored before returning.
pub fn fd_gradients(
    layer: &mut Conv2dLayer<f64>,
    x: &Tensor4<f64>,
    loss: &dyn LossFn,
    eps: f64,
) -> Result<(Tensor4<f64>, Tensor4<f64>)> {
    let mut fd_x = Tensor4::zeros(x.dims());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let v = x.data()[i];
        probe.data_mut()[i] = v + eps;
        let up = loss.value(&layer.output(&probe)?);
        probe.data_mut()[i] = v - eps;
        let down = loss.value(&layer.output(&probe)?);
        probe.data_mut()[i] = v;
        fd_x.data_mut()[i] = (up - down) / (2.0 * eps);
    }

    let saved = layer.weights().clone();
    let mut fd_w = Tensor4::zeros(saved.dims());
    for i in 0..saved.len() {
        let v = saved.data()[i];
        let mut w = saved.clone();
        w.data_mut()[i] = v + eps;
        layer.set_weights(w)?;
        let up = loss.value(&layer.output(x)?);
        let mut w = saved.clone();
        w.data_mut()[i] = v - eps;
        layer.set_weights(w)?;
        let down = loss.value(&layer.output(x)?);
        fd_w.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    layer.set_weights(saved)?;
    Ok((fd_x, fd_w))
}

/// Relative discrepancy between two gradient values, measured against a
/// unit scale so structurally zero entries do not blow up the ratio.
pub fn grad_rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / (fd.abs().max(analytic.abs())).max(1.0)
}

/// Compares the layer's analytic gradients against central finite
/// differences of `loss` and returns the maximum relative discrepancy
/// over every entry of `x` and of the weights. 64-bit only.
pub fn grad_check(
    layer: &mut Conv2dLayer<f64>,
    x: &Tensor4<f64>,
    loss: &dyn LossFn,
    eps: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Parameter(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let y = layer.forward(x)?;
    let dy = loss.grad(&y);
    let (dx, dw) = layer.backward(&dy)?;
    let (fd_x, fd_w) = fd_gradients(layer, x, loss, eps)?;

    let mut worst = 0.0f64;
    for (fd, an) in fd_x.data().iter().zip(dx.data()) {
        worst = worst.max(grad_rel_err(*fd, *an));
    }
    for (fd, an) in fd_w.data().iter().zip(dw.data()) {
        worst = worst.max(grad_rel_err(*fd, *an));
    }
    Ok(worst)
}

/// Configuration of the synthetic teacher-student training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    /// Loss is recorded every this many steps (step 0 included).
    pub record_every: usize,
    pub lr: f64,
    pub backend: Backend,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            steps: 500,
            record_every: 10,
            lr: 1.0,
            backend: Backend::ZeroSkip,
        }
    }
}

/// The fixed two-layer network of the smoke run. The second layer has
/// stride 2 so the split-kernel deconvolution and the leaping dilated
/// convolution are both exercised during backward propagation.
fn smoke_geometries() -> Result<(ConvGeometry, ConvGeometry)> {
    use crate::geometry::GeometrySpec;
    let g1 = GeometrySpec {
        n: 4,
        ih: 8,
        iw: 8,
        ic: 2,
        oc: 4,
        fh: 3,
        fw: 3,
        sh: 1,
        sw: 1,
        ph: 1,
        pw: 1,
    }
    .infer()?;
    let g2 = GeometrySpec {
        n: 4,
        ih: 8,
        iw: 8,
        ic: 4,
        oc: 3,
        fh: 3,
        fw: 3,
        sh: 2,
        sw: 2,
        ph: 1,
        pw: 1,
    }
    .infer()?;
    Ok((g1, g2))
}

/// Trains a two-conv-layer student to match a frozen teacher of the same
/// architecture on one fixed seeded batch, by plain full-batch gradient
/// descent. Returns `(step, loss)` pairs recorded every
/// `config.record_every` steps, starting with the untrained loss at
/// step 0.
pub fn smoke_train(config: &TrainConfig) -> Result<Vec<(usize, f64)>> {
    let (g1, g2) = smoke_geometries()?;
    let mut rng = SplitMix64::new(config.seed);

    // teacher, student, then data, all from one seeded stream
    let teacher1 = Conv2dLayer::<f64>::with_seeded_weights(g1, config.backend, rng.next_u64());
    let teacher2 = Conv2dLayer::<f64>::with_seeded_weights(g2, config.backend, rng.next_u64());
    let mut student1 = Conv2dLayer::<f64>::with_seeded_weights(g1, config.backend, rng.next_u64());
    let mut student2 = Conv2dLayer::<f64>::with_seeded_weights(g2, config.backend, rng.next_u64());
    let mut x = Tensor4::zeros(g1.input_dims());
    x.fill_uniform(&mut rng, -1.0, 1.0);

    let target = teacher2.output(&teacher1.output(&x)?)?;
    let loss_fn = MseLoss { target };

    let mut trace = Vec::new();
    for step in 0..=config.steps {
        let h = student1.forward(&x)?;
        let y = student2.forward(&h)?;
        let loss = loss_fn.value(&y);
        if !loss.is_finite() {
            return Err(Error::Training(format!("loss diverged at step {step}")));
        }
        if step % config.record_every == 0 {
            trace.push((step, loss));
        }
        if step == config.steps {
            break;
        }
        let dy = loss_fn.grad(&y);
        let (dh, dw2) = student2.backward(&dy)?;
        let (_, dw1) = student1.backward(&dh)?;
        student2.apply_grad(&dw2, config.lr)?;
        student1.apply_grad(&dw1, config.lr)?;
    }
    Ok(trace)
}
