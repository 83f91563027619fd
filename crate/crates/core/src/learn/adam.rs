use super::{DenseNet, Gradients, LearnError, Scalar};

/// Bias-corrected Adam over a network's flat parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub step: u64,
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(num_params: usize, lr: F) -> Self {
        AdamState {
            lr,
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            eps: F::from_f64(1e-8),
            step: 0,
            m: vec![F::zero(); num_params],
            v: vec![F::zero(); num_params],
        }
    }

    pub fn for_net(net: &DenseNet<F>, lr: F) -> Self {
        Self::new(net.num_params(), lr)
    }

    /// One update of `params` (flat) with `grads` (flat).
    pub fn step_slice(&mut self, params: &mut [F], grads: &[F]) -> Result<(), LearnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(LearnError::Shape(format!(
                "adam holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let (c1, c2) = self.corrections();
        for i in 0..params.len() {
            self.update_one(i, &mut params[i], grads[i], c1, c2);
        }
        Ok(())
    }

    pub fn step(&mut self, net: &mut DenseNet<F>, grads: &Gradients<F>) -> Result<(), LearnError> {
        net.check_grads(grads)?;
        if self.m.len() != net.num_params() {
            return Err(LearnError::Shape(format!(
                "adam holds {} moments, network has {} parameters",
                self.m.len(),
                net.num_params()
            )));
        }
        self.step += 1;
        let (c1, c2) = self.corrections();
        let grad_slices = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| [w.as_slice().expect("standard layout"), b.as_slice().expect("standard layout")]);
        let mut offset = 0;
        for (p, g) in net.param_slices_mut().into_iter().zip(grad_slices) {
            for (k, (pi, &gi)) in p.iter_mut().zip(g).enumerate() {
                self.update_one(offset + k, pi, gi, c1, c2);
            }
            offset += p.len();
        }
        Ok(())
    }

    fn corrections(&self) -> (F, F) {
        let t = self.step as i32;
        (F::one() - self.beta1.powi(t), F::one() - self.beta2.powi(t))
    }

    #[inline]
    fn update_one(&mut self, i: usize, p: &mut F, g: F, c1: F, c2: F) {
        let one = F::one();
        self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
        self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
        let m_hat = self.m[i] / c1;
        let v_hat = self.v[i] / c2;
        *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::learn::Head;

    #[test]
    fn first_step_closed_form() {
        let mut adam = AdamState::<f64>::new(1, 0.001);
        let mut p = [0.5];
        adam.step_slice(&mut p, &[1.0]).unwrap();
        let expected = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - 0.5 - expected).abs() < 1e-15);
        assert!((expected + 0.000999999).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::<f32>::new(3, 0.001);
        let mut p = [1.0, -2.0, 3.0];
        adam.step_slice(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut adam = AdamState::<f32>::new(3, 0.001);
        assert!(adam.step_slice(&mut [0.0; 2], &[0.0; 2]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = DenseNet::<f32>::new(&[2, 2], Head::Value, &mut rng);
        let g = Gradients::zeros_like(&net);
        assert!(adam.step(&mut net, &g).is_err());
    }

    #[test]
    fn net_step_matches_flat_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = DenseNet::<f64>::new(&[3, 4, 2], Head::Policy, &mut rng);
        let mut grads = Gradients::zeros_like(&net);
        for (i, g) in grads.weights.iter_mut().flat_map(|w| w.iter_mut()).enumerate() {
            *g = (i as f64 * 0.37).sin();
        }
        let mut flat = net.to_flat();
        let mut a = AdamState::for_net(&net, 0.01);
        let mut b = a.clone();
        for _ in 0..3 {
            a.step(&mut net, &grads).unwrap();
            b.step_slice(&mut flat, &grads.flat()).unwrap();
        }
        assert_eq!(net.to_flat(), flat);
        assert_eq!(a, b);
    }
}
