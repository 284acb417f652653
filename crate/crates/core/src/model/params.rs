use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::pooled_len;
use super::Scalar;
use crate::config::SpottingConfig;

/// Weight matrix (`fan_in x fan_out`) and bias row (`1 x fan_out`).
///
/// Temporal convolutions use the same storage: a width-`k` kernel over
/// `cin` channels is a `(k * cin) x cout` matrix applied to unfolded frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub w: Array2<T>,
    pub b: Array2<T>,
}

impl<T: Scalar> Affine<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Affine {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array2::zeros((1, fan_out)),
        }
    }

    fn uniform<R: Rng>(fan_in: usize, fan_out: usize, limit: f64, rng: &mut R) -> Self {
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || T::cast(rng.gen_range(-limit..limit)));
        Affine {
            w,
            b: Array2::zeros((1, fan_out)),
        }
    }

    /// He-uniform, for layers followed by a rectifier.
    fn he<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self::uniform(fan_in, fan_out, (6.0 / fan_in as f64).sqrt(), rng)
    }

    /// Glorot-uniform, for layers feeding a sigmoid or softmax.
    fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self::uniform(fan_in, fan_out, (6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
    }
}

/// Layer sizes implied by a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub chunk_frames: usize,
    pub feature_dim: usize,
    pub mlp_hidden: usize,
    pub mlp_out: usize,
    pub pyramid_kernels: [usize; 4],
    pub pyramid_channels: [usize; 4],
    pub num_classes: usize,
    pub class_features: usize,
    pub spot_channels: [usize; 2],
    pub num_predictions: usize,
}

impl Layout {
    pub fn new(cfg: &SpottingConfig) -> Self {
        Layout {
            chunk_frames: cfg.chunk_frames,
            feature_dim: cfg.model.feature_dim,
            mlp_hidden: cfg.model.mlp_hidden,
            mlp_out: cfg.model.mlp_out,
            pyramid_kernels: cfg.pyramid_kernels(),
            pyramid_channels: cfg.model.pyramid_channels,
            num_classes: cfg.num_classes,
            class_features: cfg.class_features,
            spot_channels: cfg.model.spot_channels,
            num_predictions: cfg.num_predictions,
        }
    }

    /// Channels entering the final temporal convolution: MLP output plus
    /// every pyramid branch.
    pub fn concat_channels(&self) -> usize {
        self.mlp_out + self.pyramid_channels.iter().sum::<usize>()
    }

    /// `C * f`.
    pub fn class_channels(&self) -> usize {
        self.num_classes * self.class_features
    }

    /// Frames left after the three stride-2 poolings of the spotting head.
    pub fn pooled_frames(&self) -> [usize; 3] {
        let p1 = pooled_len(self.chunk_frames);
        let p2 = pooled_len(p1);
        [p1, p2, pooled_len(p2)]
    }

    /// Size of the flattened spotting features: last pooled length times
    /// the second head convolution's channels.
    pub fn flat_features(&self) -> usize {
        self.pooled_frames()[2] * self.spot_channels[1]
    }
}

/// Every trainable tensor of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub mlp1: Affine<T>,
    pub mlp2: Affine<T>,
    pub pyramid: Vec<Affine<T>>,
    pub tcnn: Affine<T>,
    /// Per-channel scale and shift after frame standardization.
    pub seg_gamma: Array2<T>,
    pub seg_beta: Array2<T>,
    pub spot1: Affine<T>,
    pub spot2: Affine<T>,
    /// Confidence and location logits, `2 * N_pred` outputs.
    pub head_loc: Affine<T>,
    /// Class logits, `C * N_pred` outputs.
    pub head_cls: Affine<T>,
    pub(crate) layout: Layout,
    pub(crate) generation: u64,
}

impl<T: Scalar> ModelParams<T> {
    /// Seeded initialization.
    pub fn init(cfg: &SpottingConfig, seed: u64) -> Self {
        let layout = Layout::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = &layout;
        let mlp1 = Affine::he(l.feature_dim, l.mlp_hidden, &mut rng);
        let mlp2 = Affine::he(l.mlp_hidden, l.mlp_out, &mut rng);
        let pyramid = l
            .pyramid_kernels
            .iter()
            .zip(&l.pyramid_channels)
            .map(|(&k, &c)| Affine::he(k * l.mlp_out, c, &mut rng))
            .collect();
        let tcnn = Affine::glorot(3 * l.concat_channels(), l.class_channels(), &mut rng);
        let spot_in = l.class_channels() + l.num_classes;
        let spot1 = Affine::he(3 * spot_in, l.spot_channels[0], &mut rng);
        let spot2 = Affine::he(3 * l.spot_channels[0], l.spot_channels[1], &mut rng);
        let head_loc = Affine::glorot(l.flat_features(), 2 * l.num_predictions, &mut rng);
        let head_cls = Affine::glorot(l.flat_features(), l.num_classes * l.num_predictions, &mut rng);
        ModelParams {
            mlp1,
            mlp2,
            pyramid,
            tcnn,
            seg_gamma: Array2::ones((1, l.class_channels())),
            seg_beta: Array2::zeros((1, l.class_channels())),
            spot1,
            spot2,
            head_loc,
            head_cls,
            layout,
            generation: 0,
        }
    }

    /// Same shapes, all zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let l = &self.layout;
        ModelParams {
            mlp1: Affine::zeros(l.feature_dim, l.mlp_hidden),
            mlp2: Affine::zeros(l.mlp_hidden, l.mlp_out),
            pyramid: self.pyramid.iter().map(|p| Affine::zeros(p.w.nrows(), p.w.ncols())).collect(),
            tcnn: Affine::zeros(self.tcnn.w.nrows(), self.tcnn.w.ncols()),
            seg_gamma: Array2::zeros(self.seg_gamma.dim()),
            seg_beta: Array2::zeros(self.seg_beta.dim()),
            spot1: Affine::zeros(self.spot1.w.nrows(), self.spot1.w.ncols()),
            spot2: Affine::zeros(self.spot2.w.nrows(), self.spot2.w.ncols()),
            head_loc: Affine::zeros(self.head_loc.w.nrows(), self.head_loc.w.ncols()),
            head_cls: Affine::zeros(self.head_cls.w.nrows(), self.head_cls.w.ncols()),
            layout: self.layout.clone(),
            generation: 0,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Bumped by every mutable access; forward traces remember it.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Tensor names in declaration order.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["mlp1.w", "mlp1.b", "mlp2.w", "mlp2.b"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for i in 0..self.pyramid.len() {
            names.push(format!("pyramid{i}.w"));
            names.push(format!("pyramid{i}.b"));
        }
        names.extend(
            [
                "tcnn.w", "tcnn.b", "seg.gamma", "seg.beta", "spot1.w", "spot1.b", "spot2.w", "spot2.b",
                "head_loc.w", "head_loc.b", "head_cls.w", "head_cls.b",
            ]
            .map(String::from),
        );
        names
    }

    /// Tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Array2<T>> {
        let mut out = vec![&self.mlp1.w, &self.mlp1.b, &self.mlp2.w, &self.mlp2.b];
        for p in &self.pyramid {
            out.push(&p.w);
            out.push(&p.b);
        }
        out.extend([
            &self.tcnn.w,
            &self.tcnn.b,
            &self.seg_gamma,
            &self.seg_beta,
            &self.spot1.w,
            &self.spot1.b,
            &self.spot2.w,
            &self.spot2.b,
            &self.head_loc.w,
            &self.head_loc.b,
            &self.head_cls.w,
            &self.head_cls.b,
        ]);
        out
    }

    /// Mutable tensors in declaration order; invalidates outstanding traces.
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        self.generation += 1;
        let mut out = vec![&mut self.mlp1.w, &mut self.mlp1.b, &mut self.mlp2.w, &mut self.mlp2.b];
        for p in &mut self.pyramid {
            out.push(&mut p.w);
            out.push(&mut p.b);
        }
        out.extend([
            &mut self.tcnn.w,
            &mut self.tcnn.b,
            &mut self.seg_gamma,
            &mut self.seg_beta,
            &mut self.spot1.w,
            &mut self.spot1.b,
            &mut self.spot2.w,
            &mut self.spot2.b,
            &mut self.head_loc.w,
            &mut self.head_loc.b,
            &mut self.head_cls.w,
            &mut self.head_cls.b,
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Element type conversion (e.g. `f32` weights promoted to `f64`).
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |a: &Array2<T>| a.mapv(|v| U::cast(v.as_f64()));
        let aff = |a: &Affine<T>| Affine { w: conv(&a.w), b: conv(&a.b) };
        ModelParams {
            mlp1: aff(&self.mlp1),
            mlp2: aff(&self.mlp2),
            pyramid: self.pyramid.iter().map(aff).collect(),
            tcnn: aff(&self.tcnn),
            seg_gamma: conv(&self.seg_gamma),
            seg_beta: conv(&self.seg_beta),
            spot1: aff(&self.spot1),
            spot2: aff(&self.spot2),
            head_loc: aff(&self.head_loc),
            head_cls: aff(&self.head_cls),
            layout: self.layout.clone(),
            generation: 0,
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams<T>, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }
}
