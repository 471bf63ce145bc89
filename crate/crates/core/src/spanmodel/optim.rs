use super::Params;

pub const DEFAULT_LR: f64 = 1e-3;

/// Adam with bias correction, applied densely to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Params,
    pub v: Params,
}

impl Adam {
    pub fn new(shape: &Params, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shape.zeros_like(),
            v: shape.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut Params, grad: &Params) {
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }

    /// Pad the embedding moments with zeros up to `rows` rows.
    pub(crate) fn grow_embeddings(&mut self, d: usize, rows: usize) {
        self.m.e.resize(rows * d, 0.0);
        self.v.e.resize(rows * d, 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = Params::zeros(2, 2, 1);
        let mut g = p.zeros_like();
        g.b_start = vec![3.0, -0.5];
        let mut opt = Adam::new(&p, 0.01);
        opt.update(&mut p, &g);
        // With bias correction the first update is lr * g / (|g| + eps).
        assert!((p.b_start[0] + 0.01).abs() < 1e-9);
        assert!((p.b_start[1] - 0.01).abs() < 1e-9);
        assert_eq!(p.e, vec![0.0; 4]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn matches_a_scalar_reference() {
        let mut p = Params::zeros(1, 1, 1);
        p.b_stop = vec![1.0];
        let mut opt = Adam::new(&p, 0.1);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=20 {
            let gx = 2.0 * x;
            let mut g = p.zeros_like();
            g.b_stop = vec![2.0 * p.b_stop[0]];
            opt.update(&mut p, &g);
            m = 0.9 * m + 0.1 * gx;
            v = 0.999 * v + 0.001 * gx * gx;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((p.b_stop[0] - x).abs() < 1e-12);
        }
    }
}
