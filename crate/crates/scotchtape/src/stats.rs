use anyhow::{bail, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        bail!("t-test needs at least two samples per group");
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        return Ok(TTest { t: if ma == mb { 0.0 } else { f64::INFINITY }, df: na + nb - 2.0, p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)?;
    let p = 2.0 * dist.sf(t.abs());
    Ok(TTest { t, df, p })
}

/// Chi-square goodness of fit of integer samples to `Poisson(c)`.
///
/// Cells are `0, 1, ...` with the upper tail pooled, and adjacent cells
/// merged left to right until each expected count is at least 5.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn poisson_chi_square(samples: &[usize], c: f64) -> Result<(f64, usize, f64)> {
    if samples.is_empty() || !(c > 0.0) {
        bail!("need samples and a positive mean");
    }
    let n = samples.len() as f64;
    let top = *samples.iter().max().unwrap();
    let mut observed = vec![0.0; top + 2];
    for &s in samples {
        observed[s] += 1.0;
    }
    let mut pmf = Vec::with_capacity(top + 2);
    let mut p = (-c).exp();
    let mut cum = 0.0;
    for d in 0..=top {
        if d > 0 {
            p *= c / d as f64;
        }
        pmf.push(p);
        cum += p;
    }
    pmf.push((1.0 - cum).max(0.0));
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (obs, prob) in observed.iter().zip(&pmf) {
        o += obs;
        e += prob * n;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += o;
        last.1 += e;
    }
    if cells.len() < 3 {
        bail!("too few cells with expected count >= 5");
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    // One parameter (the mean) is fixed, not fitted.
    let dof = cells.len() - 1;
    let p = ChiSquared::new(dof as f64)?.sf(stat);
    Ok((stat, dof, p))
}
