use super::{InnerValues, Level, ManifoldQuery, PlainForm, RdtEstimate, Variant};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;
use crate::special::{erf, FRAC_1_SQRT_2PI};

/// Plain-level expectation `f_q(c, r)` of the non-squared objective.
pub fn f_q_plain(c: f64, r: f64, form: PlainForm, quad: &QuadratureSpec) -> Result<f64> {
    if !(r >= 0.0) || r > c.sqrt() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("r = {r} outside [0, sqrt(c)] for c = {c}")));
    }
    let x = (c - r * r).max(0.0).sqrt();
    let k = match form {
        PlainForm::Exact => 4.0,
        PlainForm::Printed => 2.0,
    };
    let integrand = |g: f64| {
        let a = g * g * x;
        if r == 0.0 {
            return (1.0 + c) - 2.0 * a;
        }
        let b = g * r;
        let cc = -g * x / r;
        (1.0 + c) + 2.0 * a * erf(cc / std::f64::consts::SQRT_2)
            - k * b * (-0.5 * cc * cc).exp() * FRAC_1_SQRT_2PI
    };
    Ok(2.0 * quad.integrate_half(integrand))
}

/// Plain estimate `max(sqrt(alpha f_q) - r, 0)^2`.
pub fn phi_plain(alpha: f64, c: f64, x: f64, form: PlainForm, quad: &QuadratureSpec) -> Result<RdtEstimate> {
    let query = ManifoldQuery::new(alpha, c, x, Variant::NonSquared, Level::Plain)?;
    let r = query.r;
    let phi = |q: &QuadratureSpec| -> Result<f64> {
        let f = f_q_plain(c, r, form, q)?;
        Ok(((alpha * f.max(0.0)).sqrt() - r).max(0.0).powi(2))
    };
    let value = phi(quad)?;
    let coarse = phi(&quad.halved())?;
    Ok(RdtEstimate {
        query,
        value,
        inner: InnerValues::default(),
        quadrature_error: (value - coarse).abs(),
        converged: true,
        cubic_check: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_forms_at_r_one() {
        let q = QuadratureSpec::default();
        let printed = f_q_plain(1.0, 1.0, PlainForm::Printed, &q).unwrap();
        assert!((printed - (2.0 - 2.0 / PI)).abs() < 1e-8);
        let exact = f_q_plain(1.0, 1.0, PlainForm::Exact, &q).unwrap();
        assert!((exact - (2.0 - 4.0 / PI)).abs() < 1e-8);
    }

    #[test]
    fn vanishes_at_r_zero() {
        let q = QuadratureSpec::default();
        for form in [PlainForm::Exact, PlainForm::Printed] {
            assert!(f_q_plain(1.0, 0.0, form, &q).unwrap().abs() < 1e-12);
            let e = phi_plain(1.4, 1.0, 1.0, form, &q).unwrap();
            assert!(e.value.abs() < 1e-12);
        }
    }

    #[test]
    fn printed_value_at_x_zero() {
        let q = QuadratureSpec::default();
        let e = phi_plain(1.4, 1.0, 0.0, PlainForm::Printed, &q).unwrap();
        let want = ((1.4 * (2.0 - 2.0 / PI)).sqrt() - 1.0).powi(2);
        assert!((e.value - want).abs() < 1e-9);
        assert!((e.value - 0.1456).abs() < 1e-4);
    }

    #[test]
    fn degenerate_alpha() {
        let q = QuadratureSpec::default();
        assert_eq!(phi_plain(0.0, 1.0, 0.3, PlainForm::Exact, &q).unwrap().value, 0.0);
    }

    #[test]
    fn domain_error() {
        let q = QuadratureSpec::default();
        assert!(f_q_plain(1.0, 1.5, PlainForm::Exact, &q).is_err());
    }
}
