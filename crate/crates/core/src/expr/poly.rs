use std::collections::BTreeMap;

/// Sparse polynomial in `nvars` real variables; exponent vector to coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.push(vec![0; nvars], c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.push(e, 1.0);
        p
    }

    fn push(&mut self, exps: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let v = *self.terms.entry(exps.clone()).and_modify(|v| *v += c).or_insert(c);
        if v == 0.0 {
            self.terms.remove(&exps);
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.push(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.push(e.clone(), c * k);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.push(e, ca * cb);
            }
        }
        out
    }

    pub fn partial(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                out.push(d, c * e[i] as f64);
            }
        }
        out
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(vars)
                    .fold(*c, |acc, (k, v)| if *k == 0 { acc } else { acc * v.powi(*k as i32) })
            })
            .sum()
    }

    /// Constant term and linear coefficients when the degree is at most one.
    pub fn as_affine(&self) -> Option<(f64, Vec<f64>)> {
        if self.degree() > 1 {
            return None;
        }
        let mut c0 = 0.0;
        let mut lin = vec![0.0; self.nvars];
        for (e, c) in &self.terms {
            match e.iter().position(|k| *k == 1) {
                Some(i) => lin[i] = *c,
                None => c0 = *c,
            }
        }
        Some((c0, lin))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_partial() {
        // (t + x)(t - x) = t^2 - x^2
        let t = Polynomial::var(2, 0);
        let x = Polynomial::var(2, 1);
        let p = t.add(&x).mul(&t.sub(&x));
        assert_eq!(p.degree(), 2);
        assert_eq!(p.eval(&[3.0, 2.0]), 5.0);
        assert_eq!(p.partial(1).eval(&[3.0, 2.0]), -4.0);
        assert!(p.as_affine().is_none());
    }

    #[test]
    fn cancellation_removes_terms() {
        let x = Polynomial::var(1, 0);
        assert!(x.sub(&x).is_zero());
        let (c0, lin) = x.scale(2.0).add(&Polynomial::constant(1, 3.0)).as_affine().unwrap();
        assert_eq!((c0, lin), (3.0, vec![2.0]));
    }
}
