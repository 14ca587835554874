use num_traits::Float;
use rand::Rng;

/// Fully connected ReLU network with a linear output layer.
///
/// Parameters are one flat vector: for each layer the weight matrix
/// (row-major, `out x in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `layers[0]` is the input; `layers[l]` the post-ReLU output of layer `l`.
    layers: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.layers.last().expect("non-empty trace")
    }
}

/// Dot product over four interleaved partial sums so the loop vectorizes.
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            lanes[k] = lanes[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

pub(crate) fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Float> Mlp<T> {
    /// All parameters zero.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need input and output widths");
        Mlp { sizes: sizes.to_vec(), params: vec![T::zero(); param_count(sizes)] }
    }

    /// Weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut at = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                let u: f64 = rng.random_range(-bound..bound);
                net.params[at] = T::from(u).unwrap();
                at += 1;
            }
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == param_count(sizes))
            .then(|| Mlp { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        self.forward_trace(input).layers.pop().unwrap()
    }

    pub fn forward_trace(&self, input: &[T]) -> Trace<T> {
        assert_eq!(input.len(), self.sizes[0], "input width");
        let n_layers = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(input.to_vec());
        let mut at = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[at..at + n_in * n_out];
            let b = &self.params[at + n_in * n_out..at + n_in * n_out + n_out];
            at += n_in * n_out + n_out;
            let x = &layers[l];
            let mut y = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let mut acc = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
                if l + 1 < n_layers && acc < T::zero() {
                    acc = T::zero();
                }
                y.push(acc);
            }
            layers.push(y);
        }
        Trace { layers }
    }

    /// Accumulates into `grad` the parameter gradient given the gradient of
    /// the loss with respect to the output.
    pub fn backward(&self, trace: &Trace<T>, d_out: &[T], grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut at = 0;
        for l in 0..n_layers {
            offsets.push(at);
            at += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let at = offsets[l];
            let x = &trace.layers[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                let g = &mut grad[at + o * n_in..at + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = *gi + d * *xi;
                }
                grad[at + n_in * n_out + o] = grad[at + n_in * n_out + o] + d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[at..at + n_in * n_out];
            let mut prev = vec![T::zero(); n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p = *p + d * *wi;
                }
            }
            // ReLU derivative of the hidden layer feeding this one
            for (p, h) in prev.iter_mut().zip(x) {
                if *h <= T::zero() {
                    *p = T::zero();
                }
            }
            delta = prev;
        }
    }
}
