//! The layered CNN `θ⁽ᵏ⁾ ∘ … ∘ θ⁽¹⁾` with `θ(x)_c = σ(Σ_m λ_{m,c} ⋆ x_m + b_c)`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{convolve_window, Filter, Tap};
use crate::error::{Error, Result};
use crate::grid::{FeatureStack, Grid};

/// Pointwise (or, for softmax, per-pixel across channels) nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Nonlinearity {
    Identity,
    Relu,
    /// `1 / (1 + e^{−4Lx})`, Lipschitz constant `L`.
    Sigmoid(f64),
    Softmax,
}

impl Nonlinearity {
    /// Applies a pointwise nonlinearity. Softmax is not pointwise and is
    /// handled by the layer.
    fn scalar(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity | Nonlinearity::Softmax => x,
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Sigmoid(l) => 1.0 / (1.0 + (-4.0 * l * x).exp()),
        }
    }

    pub fn lipschitz(self) -> f64 {
        match self {
            Nonlinearity::Identity | Nonlinearity::Relu | Nonlinearity::Softmax => 1.0,
            Nonlinearity::Sigmoid(l) => l,
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Identity => f.write_str("identity"),
            Nonlinearity::Relu => f.write_str("relu"),
            Nonlinearity::Sigmoid(l) => write!(f, "sigmoid:{l}"),
            Nonlinearity::Softmax => f.write_str("softmax"),
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Nonlinearity::Identity),
            "relu" => Ok(Nonlinearity::Relu),
            "sigmoid" => Ok(Nonlinearity::Sigmoid(1.0)),
            "softmax" => Ok(Nonlinearity::Softmax),
            _ => match s.strip_prefix("sigmoid:").map(str::parse::<f64>) {
                Some(Ok(l)) if l > 0.0 && l.is_finite() => Ok(Nonlinearity::Sigmoid(l)),
                _ => Err(Error::Parse(format!("unknown nonlinearity `{s}`"))),
            },
        }
    }
}

impl TryFrom<String> for Nonlinearity {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Nonlinearity> for String {
    fn from(n: Nonlinearity) -> String {
        n.to_string()
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    kernels: Vec<Vec<Filter>>,
    biases: Vec<f64>,
    nonlinearity: Nonlinearity,
    taps: Vec<Vec<Vec<Tap>>>,
    reach: usize,
}

impl ConvLayer {
    /// `kernels[m][c]` maps input channel `m` to output channel `c`.
    pub fn new(kernels: Vec<Vec<Filter>>, biases: Vec<f64>, nonlinearity: Nonlinearity) -> Result<Self> {
        let inputs = kernels.len();
        if inputs == 0 {
            return Err(Error::invalid("layer needs at least one input channel"));
        }
        let outputs = kernels[0].len();
        if outputs == 0 {
            return Err(Error::invalid("layer needs at least one output channel"));
        }
        if let Some(row) = kernels.iter().find(|row| row.len() != outputs) {
            return Err(Error::ChannelMismatch {
                expected: outputs,
                got: row.len(),
            });
        }
        if biases.len() != outputs {
            return Err(Error::ChannelMismatch {
                expected: outputs,
                got: biases.len(),
            });
        }
        if let Some(b) = biases.iter().find(|b| !b.is_finite()) {
            return Err(Error::invalid(format!("bias {b} is not finite")));
        }
        let h = kernels[0][0].spacing();
        for k in kernels.iter().flatten() {
            if (k.spacing() - h).abs() > 1e-12 * h {
                return Err(Error::GeometryMismatch(format!(
                    "kernels in one layer use spacings {h} and {}",
                    k.spacing()
                )));
            }
        }
        let taps: Vec<Vec<Vec<Tap>>> = kernels
            .iter()
            .map(|row| row.iter().map(Filter::taps).collect())
            .collect();
        let reach = kernels.iter().flatten().map(Filter::reach).max().unwrap_or(0);
        Ok(ConvLayer {
            kernels,
            biases,
            nonlinearity,
            taps,
            reach,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.len()
    }

    pub fn out_channels(&self) -> usize {
        self.biases.len()
    }

    pub fn kernel(&self, m: usize, c: usize) -> &Filter {
        &self.kernels[m][c]
    }

    pub fn kernels(&self) -> &[Vec<Filter>] {
        &self.kernels
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn spacing(&self) -> f64 {
        self.kernels[0][0].spacing()
    }

    /// Same layer with every kernel passed through `f`.
    pub fn map_kernels(&self, f: impl Fn(&Filter) -> Result<Filter>) -> Result<ConvLayer> {
        let kernels = self
            .kernels
            .iter()
            .map(|row| row.iter().map(&f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        ConvLayer::new(kernels, self.biases.clone(), self.nonlinearity)
    }

    pub fn forward(&self, x: &FeatureStack) -> Result<FeatureStack> {
        let n = x.geometry().n();
        self.forward_window(x, 0..n, 0..n, None)
    }

    /// Evaluates the layer on output rows × cols only (other samples are 0).
    /// `only` restricts the output to one channel unless softmax needs all.
    pub(crate) fn forward_window(
        &self,
        x: &FeatureStack,
        rows: Range<usize>,
        cols: Range<usize>,
        only: Option<usize>,
    ) -> Result<FeatureStack> {
        if x.channel_count() != self.in_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels(),
                got: x.channel_count(),
            });
        }
        let h = x.geometry().spacing();
        if (h - self.spacing()).abs() > 1e-12 * h {
            return Err(Error::GeometryMismatch(format!(
                "feature spacing {h} vs kernel spacing {}",
                self.spacing()
            )));
        }
        let n = x.geometry().n();
        let wanted: Vec<usize> = match only {
            Some(c) if self.nonlinearity != Nonlinearity::Softmax => vec![c],
            _ => (0..self.out_channels()).collect(),
        };
        let mut pre = Vec::with_capacity(wanted.len());
        for &c in &wanted {
            let mut acc: Option<Grid> = None;
            for (m, input) in x.channels().iter().enumerate() {
                let part = convolve_window(input, &self.taps[m][c], rows.clone(), cols.clone());
                acc = Some(match acc {
                    None => part,
                    Some(mut a) => {
                        for (s, p) in a.data_mut().iter_mut().zip(part.data()) {
                            *s += p;
                        }
                        a
                    }
                });
            }
            let mut g = acc.expect("at least one input channel");
            let b = self.biases[c];
            for r in rows.clone() {
                for v in &mut g.data_mut()[r * n + cols.start..r * n + cols.end] {
                    *v = self.nonlinearity.scalar(*v + b);
                }
            }
            pre.push(g);
        }
        if self.nonlinearity == Nonlinearity::Softmax {
            softmax_window(&mut pre, n, &rows, &cols);
        }
        if let Some(c) = only {
            if wanted.len() > 1 {
                let g = pre.swap_remove(c);
                return Ok(FeatureStack::single(g));
            }
        }
        FeatureStack::new(pre)
    }
}

fn softmax_window(ch: &mut [Grid], n: usize, rows: &Range<usize>, cols: &Range<usize>) {
    let mut e = vec![0.0; ch.len()];
    for r in rows.clone() {
        for c in cols.clone() {
            let k = r * n + c;
            let max = ch.iter().map(|g| g.data()[k]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (ei, g) in e.iter_mut().zip(ch.iter()) {
                *ei = (g.data()[k] - max).exp();
                sum += *ei;
            }
            for (ei, g) in e.iter().zip(ch.iter_mut()) {
                g.data_mut()[k] = ei / sum;
            }
        }
    }
}

/// A validated stack of layers taking one input channel.
#[derive(Clone, Debug)]
pub struct CnnModel {
    layers: Vec<ConvLayer>,
}

impl CnnModel {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        let mut channels = 1;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_channels() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    got: layer.in_channels(),
                });
            }
            if layer.nonlinearity == Nonlinearity::Softmax && i + 1 != layers.len() {
                return Err(Error::invalid(format!(
                    "softmax is only allowed in the final layer, found in layer {}",
                    i + 1
                )));
            }
            channels = layer.out_channels();
        }
        if let Some(first) = layers.first() {
            let h = first.spacing();
            if let Some(l) = layers.iter().find(|l| (l.spacing() - h).abs() > 1e-12 * h) {
                return Err(Error::GeometryMismatch(format!(
                    "layers use spacings {h} and {}",
                    l.spacing()
                )));
            }
        }
        Ok(CnnModel { layers })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn channels_at(&self, depth: usize) -> usize {
        if depth == 0 {
            1
        } else {
            self.layers[depth - 1].out_channels()
        }
    }

    pub fn spacing(&self) -> Option<f64> {
        self.layers.first().map(ConvLayer::spacing)
    }

    pub fn map_kernels(&self, f: impl Fn(&Filter) -> Result<Filter>) -> Result<CnnModel> {
        let layers = self
            .layers
            .iter()
            .map(|l| l.map_kernels(&f))
            .collect::<Result<Vec<_>>>()?;
        CnnModel::new(layers)
    }

    /// Per-channel receptive radii at `depth`:
    /// `r_c⁽ⁱ⁾ = max_m [r_m⁽ⁱ⁻¹⁾ + r(λ_{m,c})]`, `r⁽⁰⁾ = 0`.
    pub fn channel_receptive_radii(&self, depth: usize) -> Result<Vec<f64>> {
        if depth > self.depth() {
            return Err(Error::invalid(format!(
                "depth {depth} exceeds model depth {}",
                self.depth()
            )));
        }
        let mut r = vec![0.0];
        for layer in &self.layers[..depth] {
            r = (0..layer.out_channels())
                .map(|c| {
                    (0..layer.in_channels())
                        .map(|m| r[m] + layer.kernels[m][c].support_radius())
                        .fold(0.0, f64::max)
                })
                .collect();
        }
        Ok(r)
    }

    pub fn receptive_radius(&self, depth: usize) -> Result<f64> {
        Ok(self
            .channel_receptive_radii(depth)?
            .into_iter()
            .fold(0.0, f64::max))
    }

    pub fn forward(&self, f: &Grid) -> Result<FeatureStack> {
        self.forward_to(f, self.depth())
    }

    /// `Λ⁽ᵈᵉᵖᵗʰ⁾f`.
    pub fn forward_to(&self, f: &Grid, depth: usize) -> Result<FeatureStack> {
        if depth > self.depth() {
            return Err(Error::invalid(format!(
                "depth {depth} exceeds model depth {}",
                self.depth()
            )));
        }
        let mut x = FeatureStack::single(f.clone());
        for layer in &self.layers[..depth] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// `[Λ⁽⁰⁾f, Λ⁽¹⁾f, …, Λ⁽ᵏ⁾f]`.
    pub fn forward_trace(&self, f: &Grid) -> Result<Vec<FeatureStack>> {
        let mut out = vec![FeatureStack::single(f.clone())];
        for layer in &self.layers {
            let next = layer.forward(out.last().expect("non-empty"))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Channel `channel` of `Λ⁽ᵈᵉᵖᵗʰ⁾f` at one lattice sample, computed on
    /// the shrinking window that the sample depends on. Equals the same
    /// sample of [`CnnModel::forward`].
    pub fn evaluate_at(&self, f: &Grid, depth: usize, channel: usize, row: usize, col: usize) -> Result<f64> {
        if depth > self.depth() {
            return Err(Error::invalid(format!(
                "depth {depth} exceeds model depth {}",
                self.depth()
            )));
        }
        if channel >= self.channels_at(depth) {
            return Err(Error::ChannelMismatch {
                expected: self.channels_at(depth),
                got: channel + 1,
            });
        }
        let n = f.n();
        if row >= n || col >= n {
            return Err(Error::invalid(format!("sample ({row}, {col}) outside {n}×{n} grid")));
        }
        if depth == 0 {
            return Ok(f.get(row, col));
        }
        // widths[i] = half-width of the window needed at the output of layer i.
        let mut widths = vec![0usize; depth + 1];
        for i in (1..depth).rev() {
            widths[i] = widths[i + 1] + self.layers[i].reach;
        }
        let window = |w: usize, p: usize| p.saturating_sub(w)..(p + w + 1).min(n);
        let mut x = FeatureStack::single(f.clone());
        for (i, layer) in self.layers[..depth].iter().enumerate() {
            let w = widths[i + 1];
            let only = if i + 1 == depth { Some(channel) } else { None };
            x = layer.forward_window(&x, window(w, row), window(w, col), only)?;
        }
        Ok(x.channel(0).get(row, col))
    }
}
