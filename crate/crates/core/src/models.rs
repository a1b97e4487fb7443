//! The four networks: feature extractor `F`, task classifier `C`, domain
//! classifier `D`, and target classifier `T`.
//!
//! `F` exists once in a [`NetworkBundle`] and every path (task, domain,
//! pseudo-label, target) runs through that single copy.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::numeric::{NumericError, Tape, Tensor, Var};

/// Probability clamp applied to the domain classifier output.
pub const DOMAIN_EPS: f64 = 1e-7;

const MAGIC: &[u8; 4] = b"DAF1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid dimension {name} = {value}")]
    Dimension { name: &'static str, value: usize },
    #[error("bad bundle magic {0:?}")]
    Magic([u8; 4]),
    #[error("bundle i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Multi-layer perceptron parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Parameter handles and output produced by recording an [`Mlp`] on a tape.
#[derive(Debug)]
pub struct TapedMlp {
    pub params: Vec<Var>,
    pub output: Var,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]` with one activation per layer.
    fn init(sizes: &[usize], activations: &[Activation], rng: &mut ChaCha8Rng) -> Self {
        debug_assert_eq!(sizes.len(), activations.len() + 1);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("std > 0");
                let data = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
                Layer {
                    weight: Tensor::new(fan_in, fan_out, data).expect("finite samples"),
                    bias: Tensor::zeros(1, fan_out),
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, ModelError> {
        for pair in layers.windows(2) {
            if pair[0].weight.cols() != pair[1].weight.rows() {
                return Err(NumericError::Shape {
                    op: "mlp",
                    left: pair[0].weight.shape(),
                    right: pair[1].weight.shape(),
                }
                .into());
            }
        }
        for l in &layers {
            if l.bias.shape() != (1, l.weight.cols()) {
                return Err(NumericError::Shape {
                    op: "mlp_bias",
                    left: l.weight.shape(),
                    right: l.bias.shape(),
                }
                .into());
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    /// Parameters in layer order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Pre-head output without recording gradients.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NumericError> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = h.matmul(&layer.weight)?.add_rowvec(&layer.bias)?;
            if layer.activation == Activation::Relu {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Registers every parameter as a tape leaf, in [`Mlp::params`] order.
    /// `replace` substitutes an existing variable for one parameter, which
    /// lets gradient checks probe a single parameter tensor.
    pub fn tape_params(&self, tape: &mut Tape, replace: Option<(usize, Var)>) -> Vec<Var> {
        self.params()
            .into_iter()
            .enumerate()
            .map(|(i, p)| match replace {
                Some((j, v)) if i == j => v,
                _ => tape.leaf(p.clone()),
            })
            .collect()
    }

    /// Records the forward pass using already-registered parameter leaves.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        x: Var,
        params: Vec<Var>,
    ) -> Result<TapedMlp, NumericError> {
        debug_assert_eq!(params.len(), self.layers.len() * 2);
        let mut h = x;
        for (layer, wb) in self.layers.iter().zip(params.chunks(2)) {
            h = tape.matmul(h, wb[0])?;
            h = tape.add_rowvec(h, wb[1])?;
            if layer.activation == Activation::Relu {
                h = tape.relu(h);
            }
        }
        Ok(TapedMlp { params, output: h })
    }

    /// Records the forward pass, registering every parameter as a leaf.
    pub fn forward_tape(&self, tape: &mut Tape, x: Var) -> Result<TapedMlp, NumericError> {
        let params = self.tape_params(tape, None);
        self.forward_with(tape, x, params)
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NumericError> {
        if x.cols() != self.input_dim() {
            return Err(NumericError::Shape {
                op: "mlp_input",
                left: x.shape(),
                right: (self.input_dim(), self.output_dim()),
            });
        }
        Ok(())
    }
}

/// Layer widths of a bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BundleDims {
    pub input_dim: usize,
    pub feat_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl Default for BundleDims {
    fn default() -> Self {
        Self {
            input_dim: 2,
            feat_dim: 32,
            hidden: 64,
            num_classes: 2,
        }
    }
}

/// Selects one of the four networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Net {
    Features,
    Task,
    Domain,
    Target,
}

impl Net {
    pub const ALL: [Net; 4] = [Net::Features, Net::Task, Net::Domain, Net::Target];
}

/// `F`, `C`, `D`, and `T` with their shared dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBundle {
    dims: BundleDims,
    pub features: Mlp,
    pub task: Mlp,
    pub domain: Mlp,
    pub target: Mlp,
}

fn layout(dims: BundleDims, net: Net) -> (Vec<usize>, Vec<Activation>) {
    let BundleDims {
        input_dim,
        feat_dim,
        hidden,
        num_classes,
    } = dims;
    use Activation::*;
    match net {
        Net::Features => (vec![input_dim, hidden, hidden, feat_dim], vec![Relu, Relu, Relu]),
        Net::Task | Net::Target => (vec![feat_dim, hidden, num_classes], vec![Relu, Identity]),
        Net::Domain => (vec![feat_dim, hidden, 1], vec![Relu, Identity]),
    }
}

impl NetworkBundle {
    /// Weights ~ N(0, 2/fan_in), biases zero. Deterministic in `seed`.
    pub fn init(dims: BundleDims, seed: u64) -> Result<Self, ModelError> {
        for (name, value) in [
            ("input_dim", dims.input_dim),
            ("feat_dim", dims.feat_dim),
            ("hidden", dims.hidden),
            ("num_classes", dims.num_classes),
        ] {
            if value == 0 {
                return Err(ModelError::Dimension { name, value });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |net| {
            let (sizes, acts) = layout(dims, net);
            Mlp::init(&sizes, &acts, &mut rng)
        };
        Ok(Self {
            features: make(Net::Features),
            task: make(Net::Task),
            domain: make(Net::Domain),
            target: make(Net::Target),
            dims,
        })
    }

    pub fn dims(&self) -> BundleDims {
        self.dims
    }

    pub fn net(&self, net: Net) -> &Mlp {
        match net {
            Net::Features => &self.features,
            Net::Task => &self.task,
            Net::Domain => &self.domain,
            Net::Target => &self.target,
        }
    }

    pub fn net_mut(&mut self, net: Net) -> &mut Mlp {
        match net {
            Net::Features => &mut self.features,
            Net::Task => &mut self.task,
            Net::Domain => &mut self.domain,
            Net::Target => &mut self.target,
        }
    }

    pub fn param_count(&self) -> usize {
        Net::ALL.iter().map(|&n| self.net(n).param_count()).sum()
    }

    /// Writes the `DAF1` format: magic, four little-endian `u32` dims
    /// (input, feature, hidden, classes), then every parameter as a
    /// little-endian `f64` in the order F, C, D, T, each layer weight then
    /// bias.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        w.write_all(MAGIC)?;
        for d in [
            self.dims.input_dim,
            self.dims.feat_dim,
            self.dims.hidden,
            self.dims.num_classes,
        ] {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for net in Net::ALL {
            for p in self.net(net).params() {
                for &v in p.data() {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Magic(magic));
        }
        let mut dim = || -> Result<usize, ModelError> { Ok(r.read_u32::<LittleEndian>()? as usize) };
        let dims = BundleDims {
            input_dim: dim()?,
            feat_dim: dim()?,
            hidden: dim()?,
            num_classes: dim()?,
        };
        let mut bundle = Self::init(dims, 0)?;
        for net in Net::ALL {
            for p in bundle.net_mut(net).params_mut() {
                let (rows, cols) = p.shape();
                let mut data = vec![0.0; rows * cols];
                r.read_f64_into::<LittleEndian>(&mut data)?;
                *p = Tensor::new(rows, cols, data)?;
            }
        }
        Ok(bundle)
    }
}

/// `F(x)`.
pub fn forward_features(features: &Mlp, x: &Tensor) -> Result<Tensor, NumericError> {
    features.check_input(x)?;
    features.forward(x)
}

/// Log-probabilities from the task classifier.
pub fn forward_task(task: &Mlp, features: &Tensor) -> Result<Tensor, NumericError> {
    task.check_input(features)?;
    Ok(task.forward(features)?.log_softmax())
}

/// Log-probabilities from the target classifier; same contract as
/// [`forward_task`].
pub fn forward_target(target: &Mlp, features: &Tensor) -> Result<Tensor, NumericError> {
    forward_task(target, features)
}

/// Probability that each feature row came from the target domain, clamped to
/// `[DOMAIN_EPS, 1 - DOMAIN_EPS]`.
pub fn forward_domain(domain: &Mlp, features: &Tensor) -> Result<Tensor, NumericError> {
    domain.check_input(features)?;
    Ok(domain
        .forward(features)?
        .sigmoid()
        .clamp(DOMAIN_EPS, 1.0 - DOMAIN_EPS))
}

/// Taped counterparts of the forward functions.
pub mod taped {
    use super::*;

    pub fn features(tape: &mut Tape, net: &Mlp, x: Var) -> Result<TapedMlp, NumericError> {
        net.check_input(tape.value(x))?;
        net.forward_tape(tape, x)
    }

    /// Log-softmax head (task or target classifier).
    pub fn classifier(tape: &mut Tape, net: &Mlp, feats: Var) -> Result<TapedMlp, NumericError> {
        net.check_input(tape.value(feats))?;
        let mut out = net.forward_tape(tape, feats)?;
        out.output = tape.log_softmax(out.output);
        Ok(out)
    }

    /// Clamped sigmoid head.
    pub fn domain(tape: &mut Tape, net: &Mlp, feats: Var) -> Result<TapedMlp, NumericError> {
        net.check_input(tape.value(feats))?;
        let mut out = net.forward_tape(tape, feats)?;
        let p = tape.sigmoid(out.output);
        out.output = tape.clamp(p, DOMAIN_EPS, 1.0 - DOMAIN_EPS);
        Ok(out)
    }
}
