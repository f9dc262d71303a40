//! Log-Student-t activation `φ(t) = ½ log(1 + t²)`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

#[inline(always)]
pub fn phi(t: f64) -> f64 {
    0.5 * t.mul_add(t, 1.0).ln()
}

#[inline(always)]
pub fn phi_d1(t: f64) -> f64 {
    t / t.mul_add(t, 1.0)
}

#[inline(always)]
pub fn phi_d2(t: f64) -> f64 {
    let s = t.mul_add(t, 1.0);
    (1.0 - t * t) / (s * s)
}

pub fn activation(t: f64, order: Order) -> f64 {
    match order {
        Order::Value => phi(t),
        Order::First => phi_d1(t),
        Order::Second => phi_d2(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_at_zero_and_one() {
        assert_eq!(activation(0.0, Order::Value), 0.0);
        assert_eq!(activation(0.0, Order::First), 0.0);
        assert_eq!(activation(0.0, Order::Second), 1.0);
        assert!((activation(1.0, Order::Value) - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(activation(1.0, Order::First), 0.5);
        assert_eq!(activation(1.0, Order::Second), 0.0);
    }

    #[test]
    fn central_differences() {
        let eps = 1e-4;
        for i in -20..=20 {
            let t = i as f64 / 10.0;
            let fd1 = (phi(t + eps) - phi(t - eps)) / (2.0 * eps);
            assert!((phi_d1(t) - fd1).abs() < 1e-6, "t = {t}");
            let fd2 = (phi_d1(t + eps) - phi_d1(t - eps)) / (2.0 * eps);
            assert!((phi_d2(t) - fd2).abs() < 1e-6, "t = {t}");
        }
    }
}
