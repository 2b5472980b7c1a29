//! Symmetric unimodal smoothing kernels.
//!
//! A [`Kernel`] is both the estimated peak shape and the matched filter used
//! for smoothing. Weights are stored for offsets `-h..=h` with `h = (len-1)/2`.

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    weights: Vec<f64>,
}

impl Kernel {
    /// Validate weights that are already unit-sum.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate(&weights)?;
        Ok(Kernel { weights })
    }

    /// Scale nonnegative weights to unit sum, then validate.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidKernel("weights sum to zero".into()));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Self::new(weights)
    }

    /// Discretised Gaussian truncated at +-4 sigma.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let half = (4.0 * sigma).ceil() as i64;
        let w = (-half..=half)
            .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        Self::normalized(w)
    }

    /// A heavy-tailed peak shape windowed by a quartic biweight of `len`
    /// points. Stands in for an estimated shape when none is available.
    pub fn reference_shape(len: usize) -> Result<Self> {
        let b = quartic_biweight(len)?;
        let h = (len / 2) as f64;
        let scale = 50.0;
        let w = b
            .iter()
            .enumerate()
            .map(|(i, bw)| {
                let t = i as f64 - h;
                bw * (1.0 + t * t / (3.0 * scale * scale)).powi(-2)
            })
            .collect();
        Self::normalized(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(len - 1) / 2`
    pub fn half_width(&self) -> usize {
        self.weights.len() / 2
    }

    /// w(0), the height of an isolated single-count local maximum.
    pub fn mode_value(&self) -> f64 {
        self.weights[self.half_width()]
    }

    /// Weight at a signed offset from the centre; zero outside the support.
    pub fn at(&self, offset: i64) -> f64 {
        let idx = offset + self.half_width() as i64;
        if idx < 0 || idx >= self.weights.len() as i64 {
            0.0
        } else {
            self.weights[idx as usize]
        }
    }

    /// SHA-256 over the little-endian bit patterns of the weights.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            h.update(w.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Two columns, `offset<TAB>weight`, with a `#` header.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#offset\tweight")?;
        let h = self.half_width() as i64;
        for (i, x) in self.weights.iter().enumerate() {
            writeln!(w, "{}\t{x}", i as i64 - h)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<(i64, f64)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut f = line.split('\t');
            let (Some(o), Some(x)) = (f.next(), f.next()) else {
                return Err(Error::parse(i + 1, "expected offset and weight"));
            };
            let o: i64 = o.parse().map_err(|_| Error::parse(i + 1, "bad offset"))?;
            let x: f64 = x.parse().map_err(|_| Error::parse(i + 1, "bad weight"))?;
            rows.push((o, x));
        }
        let n = rows.len() as i64;
        let h = (n - 1) / 2;
        for (k, (o, _)) in rows.iter().enumerate() {
            if *o != k as i64 - h {
                return Err(Error::InvalidKernel(format!(
                    "offsets must run contiguously from {} to {h}",
                    -h
                )));
            }
        }
        Kernel::new(rows.into_iter().map(|r| r.1).collect())
    }
}

fn validate(w: &[f64]) -> Result<()> {
    let n = w.len();
    if n == 0 || n % 2 == 0 {
        return Err(Error::InvalidKernel(format!("length must be odd, got {n}")));
    }
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidKernel("weights must be finite and nonnegative".into()));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidKernel(format!("weights sum to {sum}, expected 1")));
    }
    for i in 0..n / 2 {
        if w[i] != w[n - 1 - i] {
            return Err(Error::InvalidKernel(format!("asymmetric at offset {}", n / 2 - i)));
        }
    }
    let h = n / 2;
    for i in h..n - 1 {
        if w[i + 1] > w[i] {
            return Err(Error::InvalidKernel(format!(
                "not unimodal: weight rises at offset {}",
                i + 1 - h
            )));
        }
    }
    if w[h] <= 0.0 {
        return Err(Error::InvalidKernel("zero mode".into()));
    }
    Ok(())
}

/// Quartic biweight `(1 - (2t/(W-1))^2)^2` on `|t| <= (W-1)/2`.
pub fn quartic_biweight(width: usize) -> Result<Vec<f64>> {
    if width < 3 || width % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "biweight width must be odd and >= 3, got {width}"
        )));
    }
    let half = (width / 2) as i64;
    Ok((-half..=half)
        .map(|t| {
            let z = t as f64 / half as f64;
            let a = 1.0 - z * z;
            a * a
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biweight_closed_form() {
        assert_eq!(quartic_biweight(3).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(
            quartic_biweight(5).unwrap(),
            vec![0.0, 9.0 / 16.0, 1.0, 9.0 / 16.0, 0.0]
        );
        for w in [7, 101, 801] {
            let b = quartic_biweight(w).unwrap();
            assert_eq!(b[0], 0.0);
            assert_eq!(b[w - 1], 0.0);
            assert_eq!(b[w / 2], 1.0);
        }
        assert!(quartic_biweight(4).is_err());
        assert!(quartic_biweight(1).is_err());
        assert!(quartic_biweight(0).is_err());
    }

    #[test]
    fn gaussian_prelim() {
        let k = Kernel::gaussian(50.0).unwrap();
        assert_eq!(k.len(), 401);
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(k.mode_value() > k.at(1));
    }

    #[test]
    fn rejects_bad_kernels() {
        assert!(Kernel::new(vec![0.5, 0.5]).is_err());
        assert!(Kernel::new(vec![0.2, 0.5, 0.3]).is_err());
        assert!(Kernel::new(vec![0.3, 0.3, 0.3]).is_err());
        assert!(Kernel::normalized(vec![0.3, 0.1, 0.2, 0.1, 0.3]).is_err());
        assert!(Kernel::normalized(vec![0.0, 0.0, 0.0]).is_err());
        assert!(Kernel::normalized(vec![1.0, 2.0, 1.0]).is_ok());
    }

    #[test]
    fn tsv_round_trip_preserves_fingerprint() {
        let k = Kernel::reference_shape(801).unwrap();
        let mut buf = Vec::new();
        k.write_tsv(&mut buf).unwrap();
        let back = Kernel::read_tsv(&buf[..]).unwrap();
        assert_eq!(back.fingerprint(), k.fingerprint());
        assert_eq!(k.at(-400), 0.0);
        assert_eq!(k.at(500), 0.0);
    }
}
