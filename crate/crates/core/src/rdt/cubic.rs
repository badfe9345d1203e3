use std::f64::consts::PI;

/// Real roots of the depressed cubic `z^3 + p z + q = 0`.
///
/// Cardano's formula when the discriminant `q^2/4 + p^3/27` is positive,
/// otherwise the trigonometric form, which stays real where Cardano needs
/// complex cube roots. Each root gets two Newton polishing steps.
pub fn cubic_real_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let scale = q * q / 4.0 + (p * p * p / 27.0).abs();
    let mut roots = if p < 0.0 && disc <= 1e-14 * scale {
        let rr = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * rr)).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3)
            .map(|k| rr * (theta - 2.0 * PI * k as f64 / 3.0).cos())
            .collect::<Vec<_>>()
    } else {
        let h = -q / 2.0;
        let s = h + h.signum() * disc.max(0.0).sqrt();
        let u = s.cbrt();
        let root = if u == 0.0 { 0.0 } else { u - p / (3.0 * u) };
        vec![root]
    };
    for z in roots.iter_mut() {
        for _ in 0..2 {
            let f = *z * *z * *z + p * *z + q;
            let d = 3.0 * *z * *z + p;
            if d != 0.0 && f != 0.0 {
                let step = f / d;
                if step.is_finite() {
                    *z -= step;
                }
            }
        }
    }
    roots
}

/// Nonnegative real roots of `z^3 + p z + q`, together with `0`.
pub fn cubic_candidates(p: f64, q: f64) -> Vec<f64> {
    let mut out: Vec<f64> = cubic_real_roots(p, q).into_iter().filter(|z| *z > 0.0).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    out.push(0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_cube() {
        let c = cubic_candidates(0.0, -2.0);
        assert_eq!(c.len(), 2);
        assert!((c[0] - 2f64.cbrt()).abs() < 1e-15);
        assert_eq!(c[1], 0.0);
    }

    #[test]
    fn double_root() {
        let c = cubic_candidates(-3.0, 2.0);
        assert_eq!(c.len(), 2, "{c:?}");
        assert!((c[0] - 1.0).abs() < 1e-7);
        let all = cubic_real_roots(-3.0, 2.0);
        assert!(all.iter().any(|z| (z + 2.0).abs() < 1e-12));
    }

    #[test]
    fn zero_polynomial() {
        assert_eq!(cubic_candidates(0.0, 0.0), vec![0.0]);
    }

    #[test]
    fn three_real_roots() {
        // (z - 1)(z - 2)(z + 3) = z^3 - 7z + 6
        let mut r = cubic_real_roots(-7.0, 6.0);
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
