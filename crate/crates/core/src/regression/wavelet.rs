//! Periodized Haar transforms on the equispaced grid `t_i = i/n`.
//!
//! `φ_{−1,0} = 1` on `[0, 1)` and `ψ_{jk}(t) = 2^{j/2} ψ(2^j t − k)` with
//! `ψ = 1` on `[0, ½)` and `−1` on `[½, 1)`. Intervals are left-closed.

use std::fmt;
use std::str::FromStr;

use crate::error::{bail, PcoError, Result};
use crate::sequence::{len_for_top_level, level_len, level_range};

/// Supported wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletBasis {
    Haar,
}

impl fmt::Display for WaveletBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("haar")
    }
}

impl FromStr for WaveletBasis {
    type Err = PcoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haar" => Ok(WaveletBasis::Haar),
            other if other.starts_with("daubechies") || other.starts_with("db") => {
                bail!(Unsupported, "periodized Daubechies bases are not available; use haar")
            }
            _ => bail!(Config, "unknown basis {s:?}"),
        }
    }
}

/// `φ_{jk}(t)` for the Haar system (`j = −1` is the father function).
pub fn haar_eval(j: i32, k: usize, t: f64) -> f64 {
    let t = t.rem_euclid(1.0);
    if j < 0 {
        return 1.0;
    }
    let scale = (j as f64).exp2();
    let u = scale * t - k as f64;
    if !(0.0..1.0).contains(&u) {
        0.0
    } else if u < 0.5 {
        scale.sqrt()
    } else {
        -scale.sqrt()
    }
}

/// Sample indices `i` with `φ_{jk}(t_i) ≠ 0`, i.e. the block `M_{jk}`.
pub fn support_indices(j: i32, k: usize, n: usize) -> std::ops::Range<usize> {
    if j < 0 {
        return 0..n;
    }
    let block = n >> j;
    k * block..(k + 1) * block
}

fn check_levels(n: usize, top: i32) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        bail!(Geometry, "sample size {n} is not a power of two >= 2");
    }
    if top < 0 || len_for_top_level(top) > n {
        bail!(Geometry, "top level {top} needs 2^(J+1) <= n = {n}");
    }
    Ok(())
}

/// `(1/n) Σ_i x_i φ_{jk}(t_i)` for all `(j, k)` with `j ≤ top`, by an O(n)
/// pyramid of block sums.
pub fn haar_forward(x: &[f64], top: i32) -> Result<Vec<f64>> {
    let n = x.len();
    check_levels(n, top)?;
    let nn = len_for_top_level(top);
    // Sums over the 2^{J+1} finest blocks.
    let block = n / nn;
    let mut sums: Vec<f64> = x.chunks(block).map(|c| c.iter().sum()).collect();
    let mut out = vec![0.0; nn];
    let inv_n = 1.0 / n as f64;
    for j in (0..=top).rev() {
        let scale = (j as f64 / 2.0).exp2() * inv_n;
        let range = level_range(j);
        let mut parent = Vec::with_capacity(level_len(j));
        for (k, pair) in sums.chunks(2).enumerate() {
            out[range.start + k] = scale * (pair[0] - pair[1]);
            parent.push(pair[0] + pair[1]);
        }
        sums = parent;
    }
    out[0] = sums[0] * inv_n;
    Ok(out)
}

/// Direct `O(n·N)` evaluation of the same coefficients (reference).
pub fn haar_forward_direct(x: &[f64], top: i32) -> Result<Vec<f64>> {
    let n = x.len();
    check_levels(n, top)?;
    let nn = len_for_top_level(top);
    let mut out = vec![0.0; nn];
    for (flat, o) in out.iter_mut().enumerate() {
        let idx = crate::sequence::DyadicIndex::from_flat(flat);
        let s: f64 = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| xi * haar_eval(idx.j, idx.k, i as f64 / n as f64))
            .sum();
        *o = s / n as f64;
    }
    Ok(out)
}

/// `Σ θ_{jk} φ_{jk}(g/G)` on `G = grid_size` points; `G ≥ N`, both powers of two.
pub fn haar_reconstruct(theta: &[f64], grid_size: usize) -> Result<Vec<f64>> {
    let nn = theta.len();
    let top = crate::sequence::top_level_for_len(nn)
        .filter(|_| nn >= 2)
        .ok_or_else(|| PcoError::Geometry(format!("coefficient count {nn} is not a power of two >= 2")))?;
    if grid_size < nn || !grid_size.is_power_of_two() {
        bail!(Geometry, "grid size {grid_size} must be a power of two >= N = {nn}");
    }
    let mut vals = vec![theta[0]];
    for j in 0..=top {
        let scale = (j as f64 / 2.0).exp2();
        let coeffs = &theta[level_range(j)];
        vals = vals
            .iter()
            .zip(coeffs)
            .flat_map(|(&v, &c)| [v + scale * c, v - scale * c])
            .collect();
    }
    let rep = grid_size / nn;
    Ok(vals.iter().flat_map(|&v| std::iter::repeat_n(v, rep)).collect())
}
