//! One-hidden-layer sigmoid network trained by full-batch backpropagation
//! with momentum until the mean squared error reaches a goal.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::plot;
use crate::raster::write_atomic;
use crate::scalar::Scalar;

#[inline]
fn sigmoid<T: Scalar>(t: T) -> T {
    T::one() / (T::one() + (-t).exp())
}

/// Input, hidden and output widths.
pub type LayerSizes = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: LayerSizes,
    /// `hidden × input`, row-major.
    w1: Vec<T>,
    b1: Vec<T>,
    /// `output × hidden`, row-major.
    w2: Vec<T>,
    b2: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Network with every weight and bias set to zero.
    pub fn zeros(sizes: LayerSizes) -> Result<Self> {
        check_sizes(sizes)?;
        let [i, h, o] = sizes;
        Ok(Self {
            sizes,
            w1: vec![T::zero(); h * i],
            b1: vec![T::zero(); h],
            w2: vec![T::zero(); o * h],
            b2: vec![T::zero(); o],
        })
    }

    pub fn sizes(&self) -> LayerSizes {
        self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.sizes[1]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[2]
    }

    pub fn w1(&self) -> &[T] {
        &self.w1
    }

    pub fn w2(&self) -> &[T] {
        &self.w2
    }

    pub fn b1(&self) -> &[T] {
        &self.b1
    }

    pub fn b2(&self) -> &[T] {
        &self.b2
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters in the order `w1, b1, w2, b2`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    /// Rebuilds a network from [`Mlp::to_flat`] output.
    pub fn from_flat(sizes: LayerSizes, flat: &[T]) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if flat.len() != net.param_count() {
            return Err(Error::DimensionMismatch {
                expected: net.param_count(),
                actual: flat.len(),
            });
        }
        net.set_flat(flat);
        Ok(net)
    }

    fn set_flat(&mut self, flat: &[T]) {
        let mut rest = flat;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Hidden and output activations.
    fn activations(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let [i, h, o] = self.sizes;
        let hidden: Vec<T> = (0..h)
            .map(|r| {
                let row = &self.w1[r * i..(r + 1) * i];
                sigmoid(row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + self.b1[r])
            })
            .collect();
        let out = (0..o)
            .map(|r| {
                let row = &self.w2[r * h..(r + 1) * h];
                sigmoid(row.iter().zip(&hidden).map(|(&w, &v)| w * v).sum::<T>() + self.b2[r])
            })
            .collect();
        (hidden, out)
    }
}

fn check_sizes(sizes: LayerSizes) -> Result<()> {
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes must all be positive, got {sizes:?}"
        )));
    }
    Ok(())
}

/// Weights uniform in `±1/√fan_in`, biases zero.
pub fn mlp_init<T: Scalar>(sizes: LayerSizes, seed: u64) -> Result<Mlp<T>> {
    let mut net = Mlp::zeros(sizes)?;
    let mut rng = crate::synth::rng(seed);
    let r1 = 1.0 / (sizes[0] as f64).sqrt();
    let r2 = 1.0 / (sizes[1] as f64).sqrt();
    for w in net.w1.iter_mut() {
        *w = T::lit(rng.random_range(-r1..=r1));
    }
    for w in net.w2.iter_mut() {
        *w = T::lit(rng.random_range(-r2..=r2));
    }
    Ok(net)
}

pub fn forward<T: Scalar>(net: &Mlp<T>, x: &FeatureVector<T>) -> Result<FeatureVector<T>> {
    if x.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: x.dim(),
        });
    }
    Ok(FeatureVector::new(net.activations(&x.values).1))
}

fn check_batch<T: Scalar>(
    net: &Mlp<T>,
    inputs: &[FeatureVector<T>],
    targets: &[FeatureVector<T>],
) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            actual: targets.len(),
        });
    }
    for x in inputs {
        if x.dim() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim(),
                actual: x.dim(),
            });
        }
    }
    for t in targets {
        if t.dim() != net.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: net.output_dim(),
                actual: t.dim(),
            });
        }
    }
    Ok(())
}

/// Mean over samples and output units of `(y − t)²`.
pub fn mse<T: Scalar>(
    net: &Mlp<T>,
    inputs: &[FeatureVector<T>],
    targets: &[FeatureVector<T>],
) -> Result<T> {
    check_batch(net, inputs, targets)?;
    if inputs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let total: T = inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| {
            let (_, y) = net.activations(&x.values);
            y.iter().zip(&t.values).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>()
        })
        .sum();
    Ok(total / T::from_usize_lossy(inputs.len() * net.output_dim()))
}

/// Gradient of [`mse`] with respect to every parameter, flattened in the
/// order of [`Mlp::to_flat`].
pub fn gradient<T: Scalar>(
    net: &Mlp<T>,
    inputs: &[FeatureVector<T>],
    targets: &[FeatureVector<T>],
) -> Result<Vec<T>> {
    check_batch(net, inputs, targets)?;
    if inputs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let [ni, nh, no] = net.sizes;
    let mut g = Mlp::zeros(net.sizes)?;
    let scale = T::lit(2.0) / T::from_usize_lossy(inputs.len() * no);
    let mut delta_h = vec![T::zero(); nh];
    for (x, t) in inputs.iter().zip(targets) {
        let (h, y) = net.activations(&x.values);
        delta_h.iter_mut().for_each(|d| *d = T::zero());
        for k in 0..no {
            let d = scale * (y[k] - t.values[k]) * y[k] * (T::one() - y[k]);
            g.b2[k] = g.b2[k] + d;
            for j in 0..nh {
                g.w2[k * nh + j] = g.w2[k * nh + j] + d * h[j];
                delta_h[j] = delta_h[j] + d * net.w2[k * nh + j];
            }
        }
        for j in 0..nh {
            let d = delta_h[j] * h[j] * (T::one() - h[j]);
            g.b1[j] = g.b1[j] + d;
            for (i, &xi) in x.values.iter().enumerate().take(ni) {
                g.w1[j * ni + i] = g.w1[j * ni + i] + d * xi;
            }
        }
    }
    Ok(g.to_flat())
}

/// Momentum buffer, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> Velocity<T> {
    pub fn zeros_for(net: &Mlp<T>) -> Self {
        Self {
            values: vec![T::zero(); net.param_count()],
        }
    }
}

/// One full-batch update: `v ← momentum·v − lr·∇`, `θ ← θ + v`.
pub fn backprop_step<T: Scalar>(
    net: &mut Mlp<T>,
    inputs: &[FeatureVector<T>],
    targets: &[FeatureVector<T>],
    learning_rate: T,
    momentum: T,
    velocity: &mut Velocity<T>,
) -> Result<()> {
    let grad = gradient(net, inputs, targets)?;
    if velocity.values.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            expected: grad.len(),
            actual: velocity.values.len(),
        });
    }
    for ((p, v), &gi) in net.params_mut().zip(velocity.values.iter_mut()).zip(&grad) {
        *v = momentum * *v - learning_rate * gi;
        *p = *p + *v;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Training stops once the batch MSE is at or below this.
    pub error_goal: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Seeds weight initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            error_goal: 1e-3,
            learning_rate: 0.5,
            momentum: 0.9,
            max_epochs: 50_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.error_goal > 0.0) {
            return Err(Error::InvalidArgument("error goal must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GoalReached,
    MaxEpochs,
}

/// Batch MSE at the start of each epoch, before that epoch's update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurve {
    pub mse: Vec<f64>,
    pub stop_reason: StopReason,
}

impl TrainingCurve {
    pub fn epochs(&self) -> usize {
        self.mse.len()
    }

    pub fn final_mse(&self) -> f64 {
        *self.mse.last().expect("nonempty curve")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mse\n");
        for (i, &m) in self.mse.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, plot::sig9(m)));
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .mse
            .iter()
            .enumerate()
            .map(|(i, &m)| ((i + 1) as f64, m.max(1e-300).log10()))
            .collect();
        plot::svg_polyline("training curve: log10(mse) vs epoch", &pts)
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        write_atomic(csv_path, self.to_csv().as_bytes())?;
        write_atomic(&csv_path.with_extension("svg"), self.to_svg().as_bytes())
    }
}

/// Trains `net` in place until the goal or the epoch budget is reached.
/// The returned network is the one whose MSE is the curve's last entry.
pub fn train<T: Scalar>(
    net: &mut Mlp<T>,
    inputs: &[FeatureVector<T>],
    targets: &[FeatureVector<T>],
    config: &TrainConfig,
) -> Result<TrainingCurve> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    check_batch(net, inputs, targets)?;
    let mut velocity = Velocity::zeros_for(net);
    let (lr, mom) = (T::lit(config.learning_rate), T::lit(config.momentum));
    let mut curve = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 1..=config.max_epochs {
        let e = mse(net, inputs, targets)?.as_f64();
        curve.push(e);
        if e <= config.error_goal {
            stop_reason = StopReason::GoalReached;
            break;
        }
        if !e.is_finite() || epoch == config.max_epochs {
            break;
        }
        backprop_step(net, inputs, targets, lr, mom, &mut velocity)?;
    }
    Ok(TrainingCurve {
        mse: curve,
        stop_reason,
    })
}

/// One-hot targets over `classes` outputs.
pub fn one_hot<T: Scalar>(class: usize, classes: usize) -> FeatureVector<T> {
    let mut v = FeatureVector::zeros(classes);
    v.values[class] = T::one();
    v
}

/// Index of the largest output; ties go to the lowest index.
pub fn argmax<T: Scalar>(v: &FeatureVector<T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.values.iter().enumerate() {
        if x > v.values[best] {
            best = i;
        }
    }
    best
}
