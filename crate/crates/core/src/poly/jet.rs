use super::bundle::PolyBundle;
use super::PolyError;

/// Truncated Taylor series of a scalar quantity in `n` seed variables,
/// degrees `0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    order: usize,
    series: PolyBundle,
}

impl Jet {
    pub fn constant(n: usize, order: usize, value: f64) -> Result<Self, PolyError> {
        let mut series = PolyBundle::zeros(n, 0, order)?;
        series.term_mut(0).coeffs_mut()[0] = value;
        Ok(Self { order, series })
    }

    /// `value + dz_i`: the seed for input `i` expanded about `value`.
    pub fn variable(n: usize, order: usize, i: usize, value: f64) -> Result<Self, PolyError> {
        let mut jet = Self::constant(n, order, value)?;
        if order >= 1 {
            jet.series.add_scaled(&PolyBundle::variable(n, i)?, 1.0)?;
        }
        Ok(jet)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.series.n()
    }

    pub fn value(&self) -> f64 {
        self.series.term(0).map_or(0.0, |t| t.coeffs()[0])
    }

    pub fn series(&self) -> &PolyBundle {
        &self.series
    }

    pub fn into_series(self) -> PolyBundle {
        self.series
    }

    fn lift(&self, series: PolyBundle) -> Jet {
        Jet {
            order: self.order,
            series,
        }
    }

    fn check(&self, other: &Jet) -> Result<(), PolyError> {
        if self.n() != other.n() || self.order != other.order {
            return Err(PolyError::DimensionMismatch {
                expected: self.n(),
                found: other.n(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, PolyError> {
        self.check(other)?;
        Ok(self.lift(self.series.add(&other.series)?))
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, PolyError> {
        self.check(other)?;
        Ok(self.lift(self.series.sub(&other.series)?))
    }

    pub fn mul(&self, other: &Jet) -> Result<Jet, PolyError> {
        self.check(other)?;
        Ok(self.lift(self.series.mul_trunc(&other.series, self.order)?))
    }

    pub fn scale(&self, s: f64) -> Jet {
        self.lift(self.series.scaled(s))
    }

    pub fn add_const(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.series.term_mut(0).coeffs_mut()[0] += c;
        out
    }

    /// The series without its constant term.
    fn deviation(&self) -> PolyBundle {
        self.series.truncate(1, self.order)
    }

    /// `sum_k coeffs[k] * h^k` for a deviation `h` with no constant term.
    fn power_series(&self, h: &PolyBundle, coeffs: &[f64]) -> Result<PolyBundle, PolyError> {
        let n = self.n();
        let mut out = PolyBundle::zeros(n, 0, self.order)?;
        let mut pow = PolyBundle::constant(n, 1.0)?;
        for (k, &c) in coeffs.iter().enumerate().take(self.order + 1) {
            if k > 0 {
                pow = pow.mul_trunc(h, self.order)?;
            }
            if c != 0.0 {
                out.add_scaled(&pow, c)?;
            }
        }
        Ok(out)
    }

    fn sin_cos_series(&self) -> Result<(PolyBundle, PolyBundle), PolyError> {
        let h = self.deviation();
        let mut sin_c = vec![0.0; self.order + 1];
        let mut cos_c = vec![0.0; self.order + 1];
        let mut fact = 1.0;
        for k in 0..=self.order {
            if k > 0 {
                fact *= k as f64;
            }
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                cos_c[k] = sign / fact;
            } else {
                sin_c[k] = sign / fact;
            }
        }
        Ok((self.power_series(&h, &sin_c)?, self.power_series(&h, &cos_c)?))
    }

    pub fn sin(&self) -> Result<Jet, PolyError> {
        let a = self.value();
        let (sh, ch) = self.sin_cos_series()?;
        // sin(a + h) = sin a cos h + cos a sin h
        let mut out = ch.scaled(a.sin());
        out.add_scaled(&sh, a.cos())?;
        Ok(self.lift(out))
    }

    pub fn cos(&self) -> Result<Jet, PolyError> {
        let a = self.value();
        let (sh, ch) = self.sin_cos_series()?;
        // cos(a + h) = cos a cos h - sin a sin h
        let mut out = ch.scaled(a.cos());
        out.add_scaled(&sh, -a.sin())?;
        Ok(self.lift(out))
    }

    pub fn recip(&self) -> Result<Jet, PolyError> {
        let b0 = self.value();
        if b0 == 0.0 {
            return Err(PolyError::DivisionByZeroConstant);
        }
        // 1/(b0 + h) = (1/b0) sum_k (-h/b0)^k
        let h = self.deviation().scaled(-1.0 / b0);
        let coeffs = vec![1.0 / b0; self.order + 1];
        Ok(self.lift(self.power_series(&h, &coeffs)?))
    }

    pub fn div(&self, other: &Jet) -> Result<Jet, PolyError> {
        self.mul(&other.recip()?)
    }
}
