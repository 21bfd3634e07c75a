//! Correctly rounded floating-point summation (Shewchuk's algorithm, the
//! same one behind Python's `math.fsum`).
//!
//! [`Expansion`] keeps a list of non-overlapping partials whose exact sum is
//! the running total; [`Expansion::value`] rounds that exact total once.

/// Exact running sum of `f64` values.
#[derive(Debug, Clone, Default)]
pub struct Expansion {
    partials: Vec<f64>,
}

impl Expansion {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `x` exactly.
    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Adds the exact product `a·b` (split by a fused multiply-add).
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        if e != 0.0 {
            self.add(e);
        }
    }

    pub fn add_expansion(&mut self, other: &Expansion) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    /// The exact sum rounded to nearest, ties to even.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // half-way case: the rest of the partials decide the direction
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

/// Correctly rounded sum of a slice.
pub fn fsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut e = Expansion::new();
    for v in values {
        e.add(v);
    }
    e.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_is_exact() {
        assert_eq!(fsum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(fsum([0.1; 10]), 1.0);
        assert_eq!(fsum([1.0, 1e-16, 1e-16]), 1.0000000000000002);
    }

    #[test]
    fn half_way_rounds_to_even() {
        // 1 + 2^-53 is a tie; the tiny extra term pushes it up
        let u = 2f64.powi(-53);
        assert_eq!(fsum([1.0, u]), 1.0);
        assert_eq!(fsum([1.0, u, 1e-300]), 1.0 + 2.0 * u);
        assert_eq!(fsum([1.0, u, -1e-300]), 1.0);
    }

    #[test]
    fn products_are_exact() {
        let a = 0.1;
        let b = 3.0;
        let mut e = Expansion::new();
        e.add_product(a, b);
        e.add_product(-a, b);
        assert_eq!(e.value(), 0.0);
        let mut e = Expansion::new();
        e.add_product(1.0 + f64::EPSILON, 1.0 + f64::EPSILON);
        e.add(-1.0);
        e.add(-2.0 * f64::EPSILON);
        assert_eq!(e.value(), f64::EPSILON * f64::EPSILON);
    }
}
