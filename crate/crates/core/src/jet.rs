use std::ops::{Add, Mul, Neg, Sub};

/// A scalar together with its total time derivatives up to a truncation order.
///
/// `coeffs[k]` is the `k`-th derivative itself (not the Taylor coefficient
/// `f^(k) / k!`), so products use the Leibniz rule. Binary operations
/// truncate to the smaller of the two orders.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeJet {
    coeffs: Vec<f64>,
}

impl DerivativeJet {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet carries at least its value");
        Self { coeffs }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        Self { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self::constant(0.0, order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `k`-th derivative; panics past the truncation order.
    pub fn derivative_coeff(&self, k: usize) -> f64 {
        self.coeffs[k]
    }

    /// The jet of `d/dt` of the carried quantity; loses one order.
    pub fn differentiate(&self) -> Option<Self> {
        if self.coeffs.len() < 2 {
            return None;
        }
        Some(Self {
            coeffs: self.coeffs[1..].to_vec(),
        })
    }

    pub fn truncate(&self, order: usize) -> Self {
        let len = (order + 1).min(self.coeffs.len());
        Self {
            coeffs: self.coeffs[..len].to_vec(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn offset(&self, shift: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += shift;
        Self { coeffs }
    }

    pub fn powi(&self, p: u32) -> Self {
        let mut result = Self::constant(1.0, self.order());
        let mut base = self.clone();
        let mut p = p;
        while p > 0 {
            if p & 1 == 1 {
                result = &result * &base;
            }
            p >>= 1;
            if p > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// `f^p` for a positive value `f`; `None` otherwise.
    pub fn powf(&self, p: f64) -> Option<Self> {
        let a = self.to_taylor();
        if !(a[0] > 0.0) {
            return None;
        }
        // f g' = p f' g, matched coefficient by coefficient
        let mut g = vec![0.0; a.len()];
        g[0] = a[0].powf(p);
        for k in 1..a.len() {
            let acc: f64 = (1..=k)
                .map(|j| (p * j as f64 - (k - j) as f64) * a[j] * g[k - j])
                .sum();
            g[k] = acc / (k as f64 * a[0]);
        }
        Some(Self::from_taylor(g))
    }

    fn to_taylor(&self) -> Vec<f64> {
        let mut fact = 1.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k > 0 {
                    fact *= k as f64;
                }
                c / fact
            })
            .collect()
    }

    fn from_taylor(taylor: Vec<f64>) -> Self {
        let mut fact = 1.0;
        let coeffs = taylor
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                if k > 0 {
                    fact *= k as f64;
                }
                c * fact
            })
            .collect();
        Self { coeffs }
    }
}

impl Add for &DerivativeJet {
    type Output = DerivativeJet;
    fn add(self, rhs: &DerivativeJet) -> DerivativeJet {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        DerivativeJet { coeffs }
    }
}

impl Sub for &DerivativeJet {
    type Output = DerivativeJet;
    fn sub(self, rhs: &DerivativeJet) -> DerivativeJet {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        DerivativeJet { coeffs }
    }
}

impl Neg for &DerivativeJet {
    type Output = DerivativeJet;
    fn neg(self) -> DerivativeJet {
        self.scale(-1.0)
    }
}

impl Mul for &DerivativeJet {
    type Output = DerivativeJet;
    fn mul(self, rhs: &DerivativeJet) -> DerivativeJet {
        let order = self.order().min(rhs.order());
        let coeffs = (0..=order)
            .map(|k| {
                let mut binom = 1.0;
                let mut acc = 0.0;
                for j in 0..=k {
                    acc += binom * self.coeffs[j] * rhs.coeffs[k - j];
                    binom = binom * (k - j) as f64 / (j + 1) as f64;
                }
                acc
            })
            .collect();
        DerivativeJet { coeffs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_follows_leibniz() {
        // f = t^2, g = t^3 at t = 2: (fg) = t^5
        let t: f64 = 2.0;
        let f = DerivativeJet::new(vec![t * t, 2.0 * t, 2.0, 0.0]);
        let g = DerivativeJet::new(vec![t.powi(3), 3.0 * t * t, 6.0 * t, 6.0]);
        let p = &f * &g;
        assert_relative_eq!(p.coeffs()[0], t.powi(5));
        assert_relative_eq!(p.coeffs()[1], 5.0 * t.powi(4));
        assert_relative_eq!(p.coeffs()[2], 20.0 * t.powi(3));
        assert_relative_eq!(p.coeffs()[3], 60.0 * t * t);
    }

    #[test]
    fn mixed_order_truncates_to_minimum() {
        let a = DerivativeJet::new(vec![1.0, 2.0, 3.0]);
        let b = DerivativeJet::new(vec![4.0, 5.0]);
        assert_eq!((&a + &b).order(), 1);
        assert_eq!((&a * &b).order(), 1);
        assert_eq!((&a - &b).coeffs(), &[-3.0, -3.0]);
    }

    #[test]
    fn differentiate_shifts() {
        let a = DerivativeJet::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(a.differentiate().unwrap().coeffs(), &[2.0, 3.0]);
        assert!(DerivativeJet::constant(1.0, 0).differentiate().is_none());
        assert_eq!(a.truncate(0).coeffs(), &[1.0]);
    }

    #[test]
    fn powers_of_polynomials() {
        // f = 1 + t at t = 0 (derivatives 1, 1, 0, 0)
        let f = DerivativeJet::new(vec![1.0, 1.0, 0.0, 0.0]);
        // (1 + t)^-1/2: derivatives 1, -1/2, 3/4, -15/8
        let g = f.powf(-0.5).unwrap();
        assert_relative_eq!(g.coeffs()[1], -0.5, epsilon = 1e-15);
        assert_relative_eq!(g.coeffs()[2], 0.75, epsilon = 1e-15);
        assert_relative_eq!(g.coeffs()[3], -1.875, epsilon = 1e-14);
        let cube = f.powi(3);
        assert_eq!(cube.coeffs(), &[1.0, 3.0, 6.0, 6.0]);
        assert_eq!(f.powf(3.0).unwrap().coeffs(), cube.coeffs());
        assert!(f.offset(-2.0).powf(0.5).is_none());
    }

    #[test]
    fn square_and_multiply_powers() {
        let f = DerivativeJet::new(vec![1.5, -0.5, 0.25]);
        let naive = (1..7).fold(f.clone(), |acc, _| &acc * &f);
        for (a, b) in f.powi(7).coeffs().iter().zip(naive.coeffs()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        assert_eq!(f.powi(0).coeffs(), &[1.0, 0.0, 0.0]);
    }
}
