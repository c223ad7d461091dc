//! Smoothed ℓ_q penalty (0 < q < 1) and its gradient.
//!
//! ‖w‖_q = (‖w‖₂ + ‖ε‖₂)^{q/2}, where ε is a fixed smoothing offset vector.
//! The w-gradient has a 0/0 form at the origin; it is defined as the zero
//! vector there, the symmetric limit.

use crate::error::{Error, Result};
use crate::vector::Vector;

#[derive(Clone, Debug)]
pub struct LqConfig {
    q: f64,
    eps: Vector,
}

impl LqConfig {
    pub fn new(q: f64, eps: Vector) -> Result<Self> {
        if !(0.0 < q && q < 1.0) {
            return Err(Error::invalid(format!("q must lie in (0,1), got {q}")));
        }
        Ok(Self { q, eps })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn eps(&self) -> &Vector {
        &self.eps
    }
}

pub fn lq_penalty(w: &Vector, cfg: &LqConfig) -> f64 {
    (w.norm() + cfg.eps.norm()).powf(cfg.q / 2.0)
}

pub fn lq_penalty_grad(w: &Vector, cfg: &LqConfig) -> Vector {
    let wn = w.norm();
    if wn == 0.0 {
        return Vector::zeros(w.dim());
    }
    let s = (cfg.q / 2.0) * (wn + cfg.eps.norm()).powf(cfg.q / 2.0 - 1.0) / wn;
    w.scale(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fd_grad;

    fn unit_eps(dim: usize) -> Vector {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        Vector::from_slice(&e)
    }

    #[test]
    fn zero_w_keeps_only_smoothing_term() {
        let cfg = LqConfig::new(0.5, unit_eps(3)).unwrap();
        let w = Vector::zeros(3);
        assert!((lq_penalty(&w, &cfg) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn known_value_at_norm_three() {
        // ‖w‖₂ = 3, ‖ε‖₂ = 1, q = 0.5 → 4^{1/4} = √2
        let cfg = LqConfig::new(0.5, unit_eps(2)).unwrap();
        let w = Vector::from_slice(&[3.0, 0.0]);
        assert!((lq_penalty(&w, &cfg) - 2.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gradient_at_origin_is_zero() {
        let cfg = LqConfig::new(0.7, unit_eps(4)).unwrap();
        let g = lq_penalty_grad(&Vector::zeros(4), &cfg);
        assert_eq!(g, Vector::zeros(4));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = LqConfig::new(0.5, unit_eps(3)).unwrap();
        let w = Vector::from_slice(&[1.2, -0.7, 2.1]);
        let g = lq_penalty_grad(&w, &cfg);
        let fd = fd_grad(|v| lq_penalty(v, &cfg), &w, 1e-6);
        assert!((&g - &fd).norm_inf() < 1e-8);
    }

    #[test]
    fn rejects_q_outside_open_interval() {
        assert!(LqConfig::new(0.0, unit_eps(1)).is_err());
        assert!(LqConfig::new(1.0, unit_eps(1)).is_err());
    }
}
