//! Heat and wave kernel signatures.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::spectral::SpectralBasis;
use crate::{Error, Result};

/// Eigenvalues below this are treated as the constant mode.
const ZERO_EIGENVALUE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptorKind {
    Hks,
    Wks,
}

/// Per-vertex descriptor values, one column per time or energy sample.
#[derive(Clone, Debug)]
pub struct DescriptorField {
    pub values: DMatrix<f64>,
    pub kind: DescriptorKind,
    /// Time samples (HKS) or log-energy samples (WKS).
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorParams {
    pub hks_samples: usize,
    pub wks_samples: usize,
    /// WKS bandwidth in units of the energy step.
    pub wks_sigma_steps: f64,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            hks_samples: 16,
            wks_samples: 32,
            wks_sigma_steps: 7.0,
        }
    }
}

/// `n` log-spaced HKS times in `[4 ln 10 / λ_max, 4 ln 10 / λ_2]`.
pub fn default_hks_times(basis: &SpectralBasis, n: usize) -> Result<Vec<f64>> {
    let (lo, hi) = positive_range(basis)?;
    let c = 4.0 * 10f64.ln();
    Ok(log_space(c / hi, c / lo, n))
}

/// `n` uniform log-energies over `[ln λ_2, ln λ_max]` with the bandwidth.
pub fn default_wks_energies(basis: &SpectralBasis, n: usize, sigma_steps: f64) -> Result<(Vec<f64>, f64)> {
    let (lo, hi) = positive_range(basis)?;
    let (e0, e1) = (lo.ln(), hi.ln());
    let energies = lin_space(e0, e1, n);
    let step = if n > 1 { (e1 - e0) / (n - 1) as f64 } else { 0.0 };
    // A single distinct eigenvalue gives no energy range to span.
    let sigma = if step > 1e-12 { sigma_steps * step } else { 1.0 };
    Ok((energies, sigma))
}

fn positive_range(basis: &SpectralBasis) -> Result<(f64, f64)> {
    let mut pos = basis.eigenvalues.iter().copied().filter(|&l| l > ZERO_EIGENVALUE);
    let lo = pos
        .next()
        .ok_or_else(|| Error::InvalidArgument("basis has no positive eigenvalue".into()))?;
    let hi = basis.eigenvalues.iter().copied().fold(lo, f64::max);
    Ok((lo, hi))
}

fn lin_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    lin_space(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}

/// Heat kernel signature `Σ_j exp(−λ_j t) φ_j(x)²` before normalisation.
pub fn hks_raw(basis: &SpectralBasis, times: &[f64]) -> Result<DescriptorField> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no HKS time samples".into()));
    }
    if let Some(t) = times.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument(format!("HKS time {t} must be positive")));
    }
    let sq = basis.phi.map(|v| v * v);
    let weights = DMatrix::from_fn(basis.size(), times.len(), |j, c| {
        (-basis.eigenvalues[j].max(0.0) * times[c]).exp()
    });
    Ok(DescriptorField {
        values: sq * weights,
        kind: DescriptorKind::Hks,
        params: times.to_vec(),
    })
}

/// Normalised heat kernel signature.
pub fn hks(basis: &SpectralBasis, times: &[f64]) -> Result<DescriptorField> {
    normalize_descriptors(&hks_raw(basis, times)?, &basis.mass)
}

/// Wave kernel signature at log-energies `energies` with bandwidth `sigma`.
///
/// Each value is a convex combination of `φ_j(x)²` over the eigenpairs with
/// `λ_j ≥ 1e-8`.
pub fn wks(basis: &SpectralBasis, energies: &[f64], sigma: f64) -> Result<DescriptorField> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("WKS sigma {sigma} must be positive")));
    }
    let keep: Vec<usize> = (0..basis.size())
        .filter(|&j| basis.eigenvalues[j] >= ZERO_EIGENVALUE)
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("all eigenvalues are below the WKS threshold".into()));
    }
    let mut weights = DMatrix::from_fn(keep.len(), energies.len(), |r, c| {
        let d = energies[c] - basis.eigenvalues[keep[r]].ln();
        (-d * d / (2.0 * sigma * sigma)).exp()
    });
    for mut col in weights.column_iter_mut() {
        let s: f64 = col.sum();
        if s > 0.0 {
            col /= s;
        } else {
            // Every weight underflowed: energy far outside the spectrum.
            col.fill(0.0);
        }
    }
    let sq = DMatrix::from_fn(basis.num_vertices(), keep.len(), |x, r| basis.phi[(x, keep[r])].powi(2));
    Ok(DescriptorField {
        values: sq * weights,
        kind: DescriptorKind::Wks,
        params: energies.to_vec(),
    })
}

/// Scales every column to unit mass-weighted norm `Σ_x mass(x) v(x)² = 1`.
pub fn normalize_descriptors(field: &DescriptorField, mass: &[f64]) -> Result<DescriptorField> {
    if mass.len() != field.values.nrows() {
        return Err(Error::Dimension(format!(
            "{} masses for {} descriptor rows",
            mass.len(),
            field.values.nrows()
        )));
    }
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite descriptor value".into()));
    }
    let mut values = field.values.clone();
    for (c, mut col) in values.column_iter_mut().enumerate() {
        let norm = col.iter().zip(mass).map(|(v, m)| m * v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numerical(format!("descriptor column {c} is zero")));
        }
        col /= norm;
    }
    Ok(DescriptorField {
        values,
        kind: field.kind,
        params: field.params.clone(),
    })
}

/// Normalised HKS and WKS with default sampling, concatenated column-wise.
pub fn default_descriptors(basis: &SpectralBasis, params: &DescriptorParams) -> Result<DMatrix<f64>> {
    let times = default_hks_times(basis, params.hks_samples)?;
    let (energies, sigma) = default_wks_energies(basis, params.wks_samples, params.wks_sigma_steps)?;
    let h = hks(basis, &times)?;
    let w = normalize_descriptors(&wks(basis, &energies, sigma)?, &basis.mass)?;
    let m = basis.num_vertices();
    let mut out = DMatrix::zeros(m, h.values.ncols() + w.values.ncols());
    out.columns_mut(0, h.values.ncols()).copy_from(&h.values);
    out.columns_mut(h.values.ncols(), w.values.ncols()).copy_from(&w.values);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::shape_basis;
    use crate::synth;

    fn blob_basis() -> SpectralBasis {
        shape_basis(&synth::bumpy_sphere(8, 10, 0.25, 21), 20, None).unwrap()
    }

    #[test]
    fn hks_at_zero_time_is_sum_of_squares() {
        let basis = blob_basis();
        // t must be positive; the smallest representable one acts as t = 0.
        let f = hks_raw(&basis, &[f64::MIN_POSITIVE]).unwrap();
        for x in 0..basis.num_vertices() {
            let expect: f64 = basis.phi.row(x).iter().map(|v| v * v).sum();
            assert!((f.values[(x, 0)] - expect).abs() < 1e-14 * expect.max(1.0));
        }
    }

    #[test]
    fn hks_rejects_non_positive_time() {
        let basis = blob_basis();
        assert!(hks(&basis, &[1.0, 0.0]).is_err());
        assert!(hks(&basis, &[-1.0]).is_err());
    }

    #[test]
    fn hks_decreases_in_time() {
        let basis = blob_basis();
        let times = default_hks_times(&basis, 16).unwrap();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        let f = hks_raw(&basis, &times).unwrap();
        for row in f.values.row_iter() {
            for w in row.iter().collect::<Vec<_>>().windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn hks_long_time_limit_is_constant() {
        let basis = blob_basis();
        let t = 1e3 / basis.eigenvalues[1];
        let f = hks_raw(&basis, &[t]).unwrap();
        let phi0_sq = basis.phi[(0, 0)].powi(2);
        for x in 0..basis.num_vertices() {
            assert!((f.values[(x, 0)] - phi0_sq).abs() < 1e-6);
        }
    }

    #[test]
    fn wks_is_convex_combination() {
        let basis = blob_basis();
        let (e, sigma) = default_wks_energies(&basis, 32, 7.0).unwrap();
        let f = wks(&basis, &e, sigma).unwrap();
        for x in 0..basis.num_vertices() {
            let sq: Vec<f64> = (1..basis.size()).map(|j| basis.phi[(x, j)].powi(2)).collect();
            let lo = sq.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = sq.iter().copied().fold(0.0, f64::max);
            for c in 0..e.len() {
                let v = f.values[(x, c)];
                assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn wks_single_eigenpair_is_its_square() {
        let basis = blob_basis().truncated(2);
        let f = wks(&basis, &[0.3, -1.0], 0.5).unwrap();
        for x in 0..basis.num_vertices() {
            let expect = basis.phi[(x, 1)].powi(2);
            assert_eq!(f.values[(x, 0)], expect);
            assert_eq!(f.values[(x, 1)], expect);
        }
    }

    #[test]
    fn wks_needs_a_positive_eigenvalue() {
        let basis = blob_basis().truncated(1);
        assert!(wks(&basis, &[0.0], 1.0).is_err());
    }

    #[test]
    fn wks_invariant_under_degenerate_rotation() {
        let basis = shape_basis(&synth::regular_icosahedron(), 4, None).unwrap();
        // Rotate φ_2..φ_4, which share one eigenvalue.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let r = synth::random_rotation(&mut rng);
        let mut rotated = basis.clone();
        let block = basis.phi.columns(1, 3) * r.matrix();
        rotated.phi.columns_mut(1, 3).copy_from(&block);
        let ev = basis.eigenvalues[2];
        rotated.eigenvalues[1..].iter_mut().for_each(|l| *l = ev);
        let mut flat = basis.clone();
        flat.eigenvalues[1..].iter_mut().for_each(|l| *l = ev);
        for e in [ev.ln() - 1.0, ev.ln(), ev.ln() + 0.5] {
            let a = wks(&flat, &[e], 0.7).unwrap();
            let b = wks(&rotated, &[e], 0.7).unwrap();
            assert!((a.values - b.values).amax() < 1e-8);
        }
    }

    #[test]
    fn normalisation_properties() {
        let basis = blob_basis();
        let times = default_hks_times(&basis, 4).unwrap();
        let raw = hks_raw(&basis, &times).unwrap();
        let once = normalize_descriptors(&raw, &basis.mass).unwrap();
        let twice = normalize_descriptors(&once, &basis.mass).unwrap();
        assert!((&once.values - &twice.values).amax() < 1e-12);

        let mut scaled = raw.clone();
        scaled.values *= 7.0;
        let s = normalize_descriptors(&scaled, &basis.mass).unwrap();
        assert!((&s.values - &once.values).amax() < 1e-12);

        let area: f64 = basis.mass.iter().sum();
        let mut constant = raw.clone();
        constant.values.fill(3.5);
        let c = normalize_descriptors(&constant, &basis.mass).unwrap();
        for v in c.values.iter() {
            assert!((v - 1.0 / area.sqrt()).abs() < 1e-12);
        }

        let mut zero = raw;
        zero.values.column_mut(1).fill(0.0);
        assert!(normalize_descriptors(&zero, &basis.mass).is_err());
    }

    #[test]
    fn descriptors_are_intrinsic() {
        let s = synth::bumpy_sphere(7, 9, 0.25, 13);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let moved = s
            .transformed(&synth::random_rotation(&mut rng), &nalgebra::Vector3::new(-4.0, 1.0, 0.5))
            .unwrap();
        let p = DescriptorParams::default();
        let a = default_descriptors(&shape_basis(&s, 12, None).unwrap(), &p).unwrap();
        let b = default_descriptors(&shape_basis(&moved, 12, None).unwrap(), &p).unwrap();
        assert!((a - b).amax() < 1e-8);
    }

    #[test]
    fn descriptors_are_deterministic() {
        let basis = blob_basis();
        let p = DescriptorParams::default();
        let a = default_descriptors(&basis, &p).unwrap();
        let b = default_descriptors(&basis, &p).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
