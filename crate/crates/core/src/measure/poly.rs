use serde::{Deserialize, Serialize};

/// Real polynomial, coefficients in increasing degree.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn identity() -> Self {
        Poly(vec![0.0, 1.0])
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * k).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) + other.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly::default();
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// `y ↦ p(a·y + b)`.
    pub fn compose_affine(&self, a: f64, b: f64) -> Poly {
        let lin = Poly(vec![b, a]);
        self.0
            .iter()
            .rev()
            .fold(Poly::default(), |acc, &c| acc.mul(&lin).add(&Poly::constant(c)))
    }

    pub fn antiderivative(&self) -> Poly {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.push(0.0);
        out.extend(self.0.iter().enumerate().map(|(i, c)| c / (i + 1) as f64));
        Poly(out)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let p = self.antiderivative();
        p.eval(b) - p.eval(a)
    }

    pub fn approx_eq(&self, other: &Poly) -> bool {
        let n = self.0.len().max(other.0.len());
        (0..n).all(|i| {
            let a = *self.0.get(i).unwrap_or(&0.0);
            let b = *other.0.get(i).unwrap_or(&0.0);
            (a - b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1e-300)
        })
    }
}
