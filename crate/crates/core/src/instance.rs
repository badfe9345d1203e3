//! Gaussian phase-retrieval instances and global-sign-aware metrics.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// A generated problem: `y = (A x_true)^2` componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub stream: RngStream,
    pub a: Array2<f64>,
    pub x_true: Array1<f64>,
    pub y: Array1<f64>,
}

/// Number of measurements for a given ratio: `round(alpha * n)`.
pub fn measurement_count(n: usize, alpha: f64) -> usize {
    (alpha * n as f64).round() as usize
}

pub fn generate_instance(n: usize, alpha: f64, stream: RngStream) -> Result<Instance> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let m = measurement_count(n, alpha);
    if m == 0 {
        return Err(invalid(format!("alpha {alpha} gives no measurements at n={n}")));
    }
    let mut rng = stream.rng();
    let a = Array2::from_shape_simple_fn((m, n), || rng.sample::<f64, _>(StandardNormal));
    let mut x_true = Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
    let norm = x_true.dot(&x_true).sqrt();
    x_true /= norm;
    let y = a.dot(&x_true).mapv(|v| v * v);
    Ok(Instance {
        n,
        m,
        alpha,
        stream,
        a,
        x_true,
        y,
    })
}

pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Cosine of the angle between `u` and `v`.
pub fn overlap(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(invalid(format!("length mismatch {} vs {}", u.len(), v.len())));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(invalid("overlap of a zero vector"));
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Distance to the true signal modulo the global sign.
pub fn sign_distance(x: ArrayView1<f64>, x_true: ArrayView1<f64>) -> f64 {
    let (mut dm, mut dp) = (0.0, 0.0);
    for (a, b) in x.iter().zip(x_true.iter()) {
        dm += (a - b) * (a - b);
        dp += (a + b) * (a + b);
    }
    dm.min(dp).sqrt()
}

pub fn success_check(x: ArrayView1<f64>, x_true: ArrayView1<f64>, eps: f64) -> Result<bool> {
    if x.len() != x_true.len() {
        return Err(invalid(format!(
            "length mismatch {} vs {}",
            x.len(),
            x_true.len()
        )));
    }
    Ok(sign_distance(x, x_true) <= eps)
}

impl Instance {
    /// Largest componentwise gap between stored `y` and `(A x_true)^2`.
    pub fn reconstruction_gap(&self) -> f64 {
        self.a
            .dot(&self.x_true)
            .iter()
            .zip(self.y.iter())
            .map(|(ax, y)| (ax * ax - y).abs())
            .fold(0.0, f64::max)
    }

    /// Writes a plain-text container: a `key=value` header, then `A` row-major,
    /// `x_true` and `y`, one number per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# prlab-instance v1").unwrap();
        writeln!(s, "n={}", self.n).unwrap();
        writeln!(s, "m={}", self.m).unwrap();
        writeln!(s, "alpha={:?}", self.alpha).unwrap();
        writeln!(s, "base_seed={}", self.stream.base_seed).unwrap();
        writeln!(s, "stream_id={}", self.stream.stream_id).unwrap();
        w.write_all(s.as_bytes())?;
        for section in [
            ("A", self.a.as_slice().expect("standard layout")),
            ("x_true", self.x_true.as_slice().unwrap()),
            ("y", self.y.as_slice().unwrap()),
        ] {
            writeln!(w, "[{}]", section.0)?;
            for v in section.1 {
                writeln!(w, "{v:?}")?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Instance> {
        let bad = |msg: &str| Error::InvalidArgument(format!("instance file: {msg}"));
        let mut header = std::collections::HashMap::new();
        let mut sections: Vec<(String, Vec<f64>)> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push((name.to_string(), Vec::new()));
            } else if let Some((_, vals)) = sections.last_mut() {
                vals.push(line.parse().map_err(|_| bad("bad number"))?);
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.to_string(), v.to_string());
            } else {
                return Err(bad("unexpected line"));
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| bad(&format!("missing {k}")));
        let n: usize = get("n")?.parse().map_err(|_| bad("n"))?;
        let m: usize = get("m")?.parse().map_err(|_| bad("m"))?;
        let alpha: f64 = get("alpha")?.parse().map_err(|_| bad("alpha"))?;
        let base_seed: u64 = get("base_seed")?.parse().map_err(|_| bad("base_seed"))?;
        let stream_id: u64 = get("stream_id")?.parse().map_err(|_| bad("stream_id"))?;
        let mut take = |name: &str, len: usize| -> Result<Vec<f64>> {
            let pos = sections
                .iter()
                .position(|(s, _)| s == name)
                .ok_or_else(|| bad(&format!("missing section {name}")))?;
            let v = std::mem::take(&mut sections[pos].1);
            if v.len() != len {
                return Err(bad(&format!("section {name} has wrong length")));
            }
            Ok(v)
        };
        let a = Array2::from_shape_vec((m, n), take("A", m * n)?).map_err(|_| bad("shape"))?;
        let x_true = Array1::from(take("x_true", n)?);
        let y = Array1::from(take("y", m)?);
        Ok(Instance {
            n,
            m,
            alpha,
            stream: RngStream::new(base_seed, stream_id),
            a,
            x_true,
            y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn small_instance_shape() {
        let inst = generate_instance(4, 2.0, RngStream::new(1, 0)).unwrap();
        assert_eq!(inst.m, 8);
        assert_eq!(inst.y.len(), 8);
        assert!(inst.y.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn default_protocol_size() {
        let inst = generate_instance(300, 1.6, RngStream::new(5, 0)).unwrap();
        assert_eq!(inst.m, 480);
        assert!((norm(inst.x_true.view()) - 1.0).abs() < 1e-12);
        assert!(inst.reconstruction_gap() < 1e-10);
    }

    #[test]
    fn deterministic() {
        let a = generate_instance(10, 1.5, RngStream::new(9, 2)).unwrap();
        let b = generate_instance(10, 1.5, RngStream::new(9, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_instance(1, 2.0, RngStream::new(0, 0)).is_err());
        assert!(generate_instance(4, 0.0, RngStream::new(0, 0)).is_err());
        assert!(generate_instance(4, -1.0, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn overlap_basics() {
        let u = array![1.0, 2.0, -0.5];
        assert!((overlap(u.view(), u.view()).unwrap() - 1.0).abs() < 1e-15);
        let neg = -&u;
        assert!((overlap(u.view(), neg.view()).unwrap() + 1.0).abs() < 1e-15);
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(overlap(e1.view(), e2.view()).unwrap(), 0.0);
        let z = array![0.0, 0.0];
        assert!(overlap(e1.view(), z.view()).is_err());
    }

    #[test]
    fn success_modulo_sign() {
        let inst = generate_instance(5, 2.0, RngStream::new(3, 0)).unwrap();
        let x = inst.x_true.view();
        assert!(success_check(x, x, 1e-5).unwrap());
        let neg = -&inst.x_true;
        assert!(success_check(neg.view(), x, 1e-5).unwrap());
        let zero = Array1::zeros(5);
        assert!(!success_check(zero.view(), x, 1e-5).unwrap());
    }

    #[test]
    fn text_round_trip() {
        let inst = generate_instance(6, 1.5, RngStream::new(4, 8)).unwrap();
        let mut buf = Vec::new();
        inst.write_text(&mut buf).unwrap();
        let back = Instance::read_text(buf.as_slice()).unwrap();
        assert_eq!(inst, back);
    }
}
