use nalgebra::DMatrix;

use super::offspring::{CountLaw, FiniteOffspring, SlackOffspring};
use crate::error::{invalid, Error, Result};

/// Multi-type Galton–Watson process in continuous time.
///
/// A type-`i` particle branches at rate `β_i` into `N` children whose types
/// are drawn iid from row `i` of the displacement matrix `D`. The count law
/// of `N` depends on the parent type only.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTypeGW {
    beta: Vec<f64>,
    laws: Vec<CountLaw>,
    displacement: Vec<Vec<f64>>,
}

impl MultiTypeGW {
    pub fn new(beta: Vec<f64>, laws: Vec<CountLaw>, displacement: Vec<Vec<f64>>) -> Result<Self> {
        let n = beta.len();
        if n == 0 || laws.len() != n || displacement.len() != n {
            return Err(invalid("types", "beta, laws and displacement need one entry per type"));
        }
        if beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(invalid("beta", "rates must be positive and finite"));
        }
        for row in &displacement {
            if row.len() != n || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(invalid("displacement", "rows must be non-negative with one entry per type"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(invalid("displacement", format!("row sums to {s}, not 1")));
            }
        }
        Ok(MultiTypeGW {
            beta,
            laws,
            displacement,
        })
    }

    pub fn single_type(beta: f64, law: CountLaw) -> Result<Self> {
        Self::new(vec![beta], vec![law], vec![vec![1.0]])
    }

    pub fn slack_single(beta: f64, law: SlackOffspring) -> Result<Self> {
        Self::single_type(beta, CountLaw::Slack(law))
    }

    pub fn binary_single(beta: f64) -> Self {
        Self::single_type(beta, CountLaw::Finite(FiniteOffspring::binary())).unwrap()
    }

    pub fn n_types(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn laws(&self) -> &[CountLaw] {
        &self.laws
    }

    pub fn displacement(&self) -> &[Vec<f64>] {
        &self.displacement
    }

    pub fn means(&self) -> Vec<f64> {
        self.laws.iter().map(CountLaw::mean).collect()
    }

    /// `(D g)_i`, the mean of `g` over one child's type.
    pub fn displace(&self, g: &[f64]) -> Vec<f64> {
        self.displacement
            .iter()
            .map(|row| row.iter().zip(g).map(|(p, v)| p * v).sum())
            .collect()
    }

    /// `L_ij = β_i (m_i D_ij − δ_ij)`.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.n_types();
        DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            self.beta[i] * (self.laws[i].mean() * self.displacement[i][j] - d)
        })
    }

    /// `G[g]_i = β_i (h_i((Dg)_i) − g_i)`.
    pub fn eval_g(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_unit(g, self.n_types())?;
        let s = self.displace(g);
        Ok((0..self.n_types())
            .map(|i| self.beta[i] * (self.laws[i].pgf(s[i]) - g[i]))
            .collect())
    }

    /// `A[g]_i = β_i E_i[∏(1 − g(x_k)) − 1 + Σ g(x_k)]`.
    pub fn eval_a(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_unit(g, self.n_types())?;
        let mut out = vec![0.0; self.n_types()];
        self.eval_a_into(g, &mut out);
        Ok(out)
    }

    pub(crate) fn eval_a_into(&self, g: &[f64], out: &mut [f64]) {
        for (i, row) in self.displacement.iter().enumerate() {
            let s: f64 = row.iter().zip(g).map(|(p, v)| p * v).sum();
            out[i] = self.beta[i] * self.laws[i].excess(s.clamp(0.0, 1.0));
        }
    }
}

pub(crate) fn check_unit(g: &[f64], n: usize) -> Result<()> {
    if g.len() != n {
        return Err(Error::Domain(format!("function has {} entries for {n} types", g.len())));
    }
    if let Some(v) = g.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::Domain(format!("value {v} escapes [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regvar::TailIndex;

    fn swap() -> MultiTypeGW {
        let one = CountLaw::Finite(FiniteOffspring::new(vec![0.0, 1.0]).unwrap());
        MultiTypeGW::new(
            vec![1.0, 1.0],
            vec![one.clone(), one],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn swap_generator() {
        let l = swap().generator();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
    }

    #[test]
    fn g_examples() {
        let bin = MultiTypeGW::binary_single(1.0);
        assert_eq!(bin.eval_g(&[1.0]).unwrap(), vec![0.0]);
        let s = 0.3;
        let v = bin.eval_g(&[s]).unwrap()[0];
        assert!((v - 0.5 * (1.0 - s) * (1.0 - s)).abs() < 1e-15);

        let law = SlackOffspring::new(TailIndex::new(0.5).unwrap(), 0.4).unwrap();
        let gw = MultiTypeGW::slack_single(2.0, law).unwrap();
        let v = gw.eval_g(&[s]).unwrap()[0];
        assert!((v - 2.0 * 0.4 * (1.0 - s).powf(1.5)).abs() < 1e-14);
    }

    #[test]
    fn a_examples() {
        let bin = MultiTypeGW::binary_single(1.0);
        assert_eq!(bin.eval_a(&[0.0]).unwrap(), vec![0.0]);
        // p_0 = p_2 = 1/2 gives s^2/2; N ≡ 2 would give s^2.
        let v = bin.eval_a(&[0.3]).unwrap()[0];
        assert!((v - 0.045).abs() < 1e-15);
        let two = MultiTypeGW::single_type(1.0, CountLaw::Finite(FiniteOffspring::new(vec![0.0, 0.0, 1.0]).unwrap()))
            .unwrap();
        assert!((two.eval_a(&[0.3]).unwrap()[0] - 0.09).abs() < 1e-15);
        assert!(bin.eval_a(&[1.2]).is_err());
    }
}
