//! Layer implementations: convolution, instance norm, activations, nearest
//! upsampling, and residual blocks.
//!
//! Every layer caches what its backward pass needs during forward. Backward
//! may be called several times after one forward (the discriminator
//! real/fake pattern relies on it); gradients accumulate into `Param.grad`.

use super::{Param, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Padding applied around conv inputs. Reflection mirrors without
/// repeating the edge sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Reflect,
}

/// 2D convolution with odd square kernels, stride 1 or 2, and same-style
/// padding of (k-1)/2. Stride 2 requires even spatial dims and halves them.
///
/// Convs that feed an instance norm are built without bias: the norm's
/// mean subtraction cancels it exactly, leaving a dead parameter.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub weight: Param,
    pub bias: Option<Param>,
    cache_input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        Self::build(in_ch, out_ch, kernel, stride, padding, true)
    }

    pub fn new_no_bias(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        Self::build(in_ch, out_ch, kernel, stride, padding, false)
    }

    fn build(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: Padding, bias: bool) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::Config(format!("conv kernel must be odd, got {kernel}")));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::Config(format!("conv stride must be 1 or 2, got {stride}")));
        }
        Ok(Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            weight: Param::new(Tensor::zeros(&[out_ch, in_ch, kernel, kernel])),
            bias: bias.then(|| Param::new(Tensor::zeros(&[out_ch]))),
            cache_input: None,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&mut self, rng: &mut SplitMix64) {
        let k2 = self.kernel * self.kernel;
        let fan_in = self.in_ch * k2;
        let fan_out = self.out_ch * k2;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in self.weight.value.data_mut() {
            *w = rng.uniform(-bound, bound);
        }
        if let Some(bias) = &mut self.bias {
            bias.value.data_mut().fill(0.0);
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let pad = (self.kernel - 1) / 2;
        if self.padding == Padding::Reflect && pad >= h.min(w).max(1) {
            return Err(Error::Config(format!(
                "reflection padding {pad} too large for {h}x{w} input"
            )));
        }
        match self.stride {
            1 => Ok((h, w)),
            2 => {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::Config(format!(
                        "stride-2 conv requires even spatial dims, got {h}x{w}"
                    )));
                }
                Ok((h / 2, w / 2))
            }
            _ => unreachable!(),
        }
    }

    pub fn out_shape(&self, in_shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (c, h, w) = in_shape;
        if c != self.in_ch {
            return Err(Error::ShapeMismatch {
                expected: vec![self.in_ch],
                got: vec![c],
            });
        }
        let (oh, ow) = self.out_hw(h, w)?;
        Ok((self.out_ch, oh, ow))
    }

    /// Index map from padded coordinates to source coordinates; `None`
    /// marks zero-padding cells.
    fn pad_map(&self, len: usize) -> Vec<Option<usize>> {
        let pad = (self.kernel - 1) / 2;
        (0..len + 2 * pad)
            .map(|q| {
                let i = q as isize - pad as isize;
                match self.padding {
                    Padding::Zero => {
                        if i < 0 || i >= len as isize {
                            None
                        } else {
                            Some(i as usize)
                        }
                    }
                    Padding::Reflect => {
                        let m = if i < 0 {
                            -i
                        } else if i >= len as isize {
                            2 * (len as isize - 1) - i
                        } else {
                            i
                        };
                        Some(m as usize)
                    }
                }
            })
            .collect()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = shape4(x)?;
        let (oc, oh, ow) = self.out_shape((c, h, w))?;
        let mut out = Tensor::zeros(&[n, oc, oh, ow]);

        let k = self.kernel;
        let s = self.stride;
        let hp = h + k - 1;
        let wp = w + k - 1;
        let row_map = self.pad_map(h);
        let col_map = self.pad_map(w);
        let mut padded = vec![0.0; c * hp * wp];

        let weight = self.weight.value.data();
        let bias = self.bias.as_ref().map(|b| b.value.data());
        let xdata = x.data();
        let odata = out.data_mut();

        for ni in 0..n {
            for ci in 0..c {
                let src = &xdata[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                let dst = &mut padded[ci * hp * wp..(ci + 1) * hp * wp];
                fill_padded_plane(src, w, wp, &row_map, &col_map, dst);
            }
            for co in 0..oc {
                let oplane = &mut odata[(ni * oc + co) * oh * ow..(ni * oc + co + 1) * oh * ow];
                oplane.fill(bias.map_or(0.0, |b| b[co]));
                for ci in 0..c {
                    let plane = &padded[ci * hp * wp..(ci + 1) * hp * wp];
                    for kh in 0..k {
                        for kw in 0..k {
                            let wv = weight[((co * c + ci) * k + kh) * k + kw];
                            for orow in 0..oh {
                                let prow = &plane[(orow * s + kh) * wp + kw..];
                                let out_row = &mut oplane[orow * ow..(orow + 1) * ow];
                                if s == 1 {
                                    for (o, p) in out_row.iter_mut().zip(prow.iter()) {
                                        *o += wv * p;
                                    }
                                } else {
                                    for (ocol, o) in out_row.iter_mut().enumerate() {
                                        *o += wv * prow[ocol * s];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        out.ensure_finite("conv forward")?;
        self.cache_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let x = self.cache_input.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let [n, c, h, w] = shape4(x)?;
        let (oc, oh, ow) = self.out_shape((c, h, w))?;
        if gout.shape() != [n, oc, oh, ow] {
            return Err(Error::ShapeMismatch {
                expected: vec![n, oc, oh, ow],
                got: gout.shape().to_vec(),
            });
        }

        let k = self.kernel;
        let s = self.stride;
        let hp = h + k - 1;
        let wp = w + k - 1;
        let row_map = self.pad_map(h);
        let col_map = self.pad_map(w);

        let mut gin = Tensor::zeros(&[n, c, h, w]);
        let mut padded = vec![0.0; c * hp * wp];
        let mut gpadded = vec![0.0; c * hp * wp];

        let weight = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let mut gb = self.bias.as_mut().map(|b| b.grad.data_mut());
        let xdata = x.data();
        let gdata = gout.data();
        let gindata = gin.data_mut();

        for ni in 0..n {
            for ci in 0..c {
                let src = &xdata[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                let dst = &mut padded[ci * hp * wp..(ci + 1) * hp * wp];
                fill_padded_plane(src, w, wp, &row_map, &col_map, dst);
            }
            gpadded.fill(0.0);

            for co in 0..oc {
                let gplane = &gdata[(ni * oc + co) * oh * ow..(ni * oc + co + 1) * oh * ow];
                if let Some(gb) = gb.as_deref_mut() {
                    gb[co] += gplane.iter().sum::<f64>();
                }
                for ci in 0..c {
                    let plane = &padded[ci * hp * wp..(ci + 1) * hp * wp];
                    let gpplane = &mut gpadded[ci * hp * wp..(ci + 1) * hp * wp];
                    for kh in 0..k {
                        for kw in 0..k {
                            let widx = ((co * c + ci) * k + kh) * k + kw;
                            let wv = weight[widx];
                            let mut wgrad = 0.0;
                            for orow in 0..oh {
                                let base = (orow * s + kh) * wp + kw;
                                let grow = &gplane[orow * ow..(orow + 1) * ow];
                                for (ocol, &g) in grow.iter().enumerate() {
                                    let pidx = base + ocol * s;
                                    wgrad += g * plane[pidx];
                                    gpplane[pidx] += wv * g;
                                }
                            }
                            gw[widx] += wgrad;
                        }
                    }
                }
            }

            // Fold padded gradients back onto the input (reflection shares
            // cells, so accumulate).
            for ci in 0..c {
                let gpplane = &gpadded[ci * hp * wp..(ci + 1) * hp * wp];
                let gplane = &mut gindata[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                for (qr, &mr) in row_map.iter().enumerate() {
                    let Some(sr) = mr else { continue };
                    for (qc, &mc) in col_map.iter().enumerate() {
                        let Some(sc) = mc else { continue };
                        gplane[sr * w + sc] += gpplane[qr * wp + qc];
                    }
                }
            }
        }

        gin.ensure_finite("conv backward")?;
        Ok(gin)
    }
}

/// Per-(sample, channel) normalization to zero mean and unit variance.
/// Non-affine; epsilon 1e-8.
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    cache: Option<NormCache>,
}

#[derive(Debug, Clone)]
struct NormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

const NORM_EPS: f64 = 1e-8;

impl InstanceNorm {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = shape4(x)?;
        let plane = h * w;
        let mut out = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(n * c);
        for i in 0..n * c {
            let src = &x.data()[i * plane..(i + 1) * plane];
            let mean = src.iter().sum::<f64>() / plane as f64;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
            let istd = 1.0 / (var + NORM_EPS).sqrt();
            inv_std.push(istd);
            let dst = &mut out.data_mut()[i * plane..(i + 1) * plane];
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = (s - mean) * istd;
            }
        }
        out.ensure_finite("instance norm forward")?;
        self.cache = Some(NormCache { normalized: out.clone(), inv_std });
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::BackwardBeforeForward)?;
        cache.normalized.same_shape(gout)?;
        let [n, c, h, w] = shape4(gout)?;
        let plane = h * w;
        let mut gin = Tensor::zeros(gout.shape());
        for i in 0..n * c {
            let xhat = &cache.normalized.data()[i * plane..(i + 1) * plane];
            let g = &gout.data()[i * plane..(i + 1) * plane];
            let istd = cache.inv_std[i];
            let mean_g = g.iter().sum::<f64>() / plane as f64;
            let mean_gx = g.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / plane as f64;
            let dst = &mut gin.data_mut()[i * plane..(i + 1) * plane];
            for j in 0..plane {
                dst[j] = istd * (g[j] - mean_g - xhat[j] * mean_gx);
            }
        }
        gin.ensure_finite("instance norm backward")?;
        Ok(gin)
    }
}

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActKind {
    Relu,
    /// Negative-side slope.
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct Activation {
    pub kind: ActKind,
    cache: Option<Tensor>,
}

impl Activation {
    pub fn new(kind: ActKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut out = x.clone();
        match self.kind {
            ActKind::Relu => {
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                self.cache = Some(x.clone());
            }
            ActKind::LeakyRelu(alpha) => {
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v *= alpha;
                    }
                }
                self.cache = Some(x.clone());
            }
            ActKind::Tanh => {
                for v in out.data_mut() {
                    *v = v.tanh();
                }
                // tanh' = 1 - y^2: cache the output.
                self.cache = Some(out.clone());
            }
            ActKind::Sigmoid => {
                for v in out.data_mut() {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
                self.cache = Some(out.clone());
            }
        }
        out.ensure_finite("activation forward")?;
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::BackwardBeforeForward)?;
        cache.same_shape(gout)?;
        let mut gin = gout.clone();
        match self.kind {
            ActKind::Relu => {
                for (g, &x) in gin.data_mut().iter_mut().zip(cache.data()) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            ActKind::LeakyRelu(alpha) => {
                for (g, &x) in gin.data_mut().iter_mut().zip(cache.data()) {
                    if x <= 0.0 {
                        *g *= alpha;
                    }
                }
            }
            ActKind::Tanh => {
                for (g, &y) in gin.data_mut().iter_mut().zip(cache.data()) {
                    *g *= 1.0 - y * y;
                }
            }
            ActKind::Sigmoid => {
                for (g, &y) in gin.data_mut().iter_mut().zip(cache.data()) {
                    *g *= y * (1.0 - y);
                }
            }
        }
        gin.ensure_finite("activation backward")?;
        Ok(gin)
    }
}

/// Nearest-neighbor 2x spatial upsampling.
#[derive(Debug, Clone)]
pub struct Upsample2x {
    cache_shape: Option<Vec<usize>>,
}

impl Upsample2x {
    pub fn new() -> Self {
        Self { cache_shape: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = shape4(x)?;
        let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        let ow = 2 * w;
        for i in 0..n * c {
            let src = &x.data()[i * h * w..(i + 1) * h * w];
            let dst = &mut out.data_mut()[i * 4 * h * w..(i + 1) * 4 * h * w];
            for row in 0..h {
                for col in 0..w {
                    let v = src[row * w + col];
                    let base = 2 * row * ow + 2 * col;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + ow] = v;
                    dst[base + ow + 1] = v;
                }
            }
        }
        self.cache_shape = Some(x.shape().to_vec());
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let shape = self.cache_shape.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let [n, c, h, w] = [shape[0], shape[1], shape[2], shape[3]];
        if gout.shape() != [n, c, 2 * h, 2 * w] {
            return Err(Error::ShapeMismatch {
                expected: vec![n, c, 2 * h, 2 * w],
                got: gout.shape().to_vec(),
            });
        }
        let mut gin = Tensor::zeros(shape);
        let ow = 2 * w;
        for i in 0..n * c {
            let src = &gout.data()[i * 4 * h * w..(i + 1) * 4 * h * w];
            let dst = &mut gin.data_mut()[i * h * w..(i + 1) * h * w];
            for row in 0..h {
                for col in 0..w {
                    let base = 2 * row * ow + 2 * col;
                    dst[row * w + col] = src[base] + src[base + 1] + src[base + ow] + src[base + ow + 1];
                }
            }
        }
        Ok(gin)
    }
}

/// Skip connection around an inner layer stack: y = x + f(x). The inner
/// stack must preserve shape.
#[derive(Debug, Clone)]
pub struct Residual {
    pub inner: Vec<Layer>,
}

impl Residual {
    pub fn new(inner: Vec<Layer>) -> Self {
        Self { inner }
    }

    pub fn out_shape(&self, in_shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let mut shape = in_shape;
        for layer in &self.inner {
            shape = layer.out_shape(shape)?;
        }
        if shape != in_shape {
            return Err(Error::Config(format!(
                "residual branch must preserve shape: {in_shape:?} -> {shape:?}"
            )));
        }
        Ok(in_shape)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        for layer in &mut self.inner {
            y = layer.forward(&y)?;
        }
        x.same_shape(&y)?;
        for (o, &i) in y.data_mut().iter_mut().zip(x.data()) {
            *o += i;
        }
        Ok(y)
    }

    pub fn backward(&mut self, gout: &Tensor) -> Result<Tensor> {
        let mut g = gout.clone();
        for layer in self.inner.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        for (a, &b) in g.data_mut().iter_mut().zip(gout.data()) {
            *a += b;
        }
        Ok(g)
    }
}

/// One network layer.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    InstanceNorm(InstanceNorm),
    Activation(Activation),
    Upsample2x(Upsample2x),
    Residual(Residual),
}

impl Layer {
    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Layer> {
        Ok(Layer::Conv(Conv2d::new(in_ch, out_ch, kernel, stride, padding)?))
    }

    /// Conv without bias, for positions directly followed by instance norm.
    pub fn conv_no_bias(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Layer> {
        Ok(Layer::Conv(Conv2d::new_no_bias(in_ch, out_ch, kernel, stride, padding)?))
    }

    pub fn instance_norm() -> Layer {
        Layer::InstanceNorm(InstanceNorm::new())
    }

    pub fn relu() -> Layer {
        Layer::Activation(Activation::new(ActKind::Relu))
    }

    pub fn leaky_relu(alpha: f64) -> Layer {
        Layer::Activation(Activation::new(ActKind::LeakyRelu(alpha)))
    }

    pub fn tanh() -> Layer {
        Layer::Activation(Activation::new(ActKind::Tanh))
    }

    pub fn sigmoid() -> Layer {
        Layer::Activation(Activation::new(ActKind::Sigmoid))
    }

    pub fn upsample2x() -> Layer {
        Layer::Upsample2x(Upsample2x::new())
    }

    pub fn residual(inner: Vec<Layer>) -> Layer {
        Layer::Residual(Residual::new(inner))
    }

    pub fn out_shape(&self, in_shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        match self {
            Layer::Conv(c) => c.out_shape(in_shape),
            Layer::InstanceNorm(_) | Layer::Activation(_) => Ok(in_shape),
            Layer::Upsample2x(_) => Ok((in_shape.0, 2 * in_shape.1, 2 * in_shape.2)),
            Layer::Residual(r) => r.out_shape(in_shape),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::InstanceNorm(n) => n.forward(x),
            Layer::Activation(a) => a.forward(x),
            Layer::Upsample2x(u) => u.forward(x),
            Layer::Residual(r) => r.forward(x),
        }
    }

    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(c) => c.backward(g),
            Layer::InstanceNorm(n) => n.backward(g),
            Layer::Activation(a) => a.backward(g),
            Layer::Upsample2x(u) => u.backward(g),
            Layer::Residual(r) => r.backward(g),
        }
    }

    pub fn visit_params<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a Param)) {
        match self {
            Layer::Conv(c) => {
                f(format!("{prefix}.weight"), &c.weight);
                if let Some(bias) = &c.bias {
                    f(format!("{prefix}.bias"), bias);
                }
            }
            Layer::Residual(r) => {
                for (i, layer) in r.inner.iter().enumerate() {
                    layer.visit_params(&format!("{prefix}.b{i}"), f);
                }
            }
            _ => {}
        }
    }

    pub fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut Param)) {
        match self {
            Layer::Conv(c) => {
                f(format!("{prefix}.weight"), &mut c.weight);
                if let Some(bias) = &mut c.bias {
                    f(format!("{prefix}.bias"), bias);
                }
            }
            Layer::Residual(r) => {
                for (i, layer) in r.inner.iter_mut().enumerate() {
                    layer.visit_params_mut(&format!("{prefix}.b{i}"), f);
                }
            }
            _ => {}
        }
    }

    pub fn init(&mut self, rng: &mut SplitMix64) {
        match self {
            Layer::Conv(c) => c.init(rng),
            Layer::Residual(r) => {
                for layer in &mut r.inner {
                    layer.init(rng);
                }
            }
            _ => {}
        }
    }
}

fn fill_padded_plane(
    src: &[f64],
    w: usize,
    wp: usize,
    row_map: &[Option<usize>],
    col_map: &[Option<usize>],
    dst: &mut [f64],
) {
    for (qr, &mr) in row_map.iter().enumerate() {
        let drow = &mut dst[qr * wp..(qr + 1) * wp];
        match mr {
            None => drow.fill(0.0),
            Some(sr) => {
                let srow = &src[sr * w..(sr + 1) * w];
                for (qc, &mc) in col_map.iter().enumerate() {
                    drow[qc] = match mc {
                        None => 0.0,
                        Some(sc) => srow[sc],
                    };
                }
            }
        }
    }
}

pub(super) fn shape4(t: &Tensor) -> Result<[usize; 4]> {
    match t.shape() {
        [n, c, h, w] => Ok([*n, *c, *h, *w]),
        other => Err(Error::ShapeMismatch { expected: vec![0, 0, 0, 0], got: other.to_vec() }),
    }
}
