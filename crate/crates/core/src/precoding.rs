//! Zero-forcing precoding on stacked composite channel estimates.

use num_complex::Complex64;

use crate::channel::{CMat, CVec};
use crate::error::{Error, Result};

/// Largest accepted ratio between the extreme singular values of the
/// composite-estimate matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Unit-norm precoding vectors, one column per subgroup.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    w: CMat,
}

impl PrecoderSet {
    pub fn matrix(&self) -> &CMat {
        &self.w
    }

    pub fn groups(&self) -> usize {
        self.w.ncols()
    }

    pub fn column(&self, g: usize) -> CVec {
        self.w.column(g).into_owned()
    }
}

/// ZF precoders `w_g = v_g / ||v_g||` where `V = C (C^H C)^{-1}`.
///
/// With the thin QR factorization `C = Q R`, `V = Q R^{-H}`, which avoids
/// forming the Gram matrix.
pub fn zf_precoders(c_hat: &CMat) -> Result<PrecoderSet> {
    let (m, g) = c_hat.shape();
    if g == 0 {
        return Err(Error::InvalidInput("no composite estimates to precode".into()));
    }
    if c_hat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("composite channel estimates"));
    }
    if g > m {
        return Err(Error::RankDeficient {
            groups: g,
            antennas: m,
            condition: f64::INFINITY,
        });
    }

    let qr = c_hat.clone().qr();
    let q = qr.q();
    let r = qr.r();

    let sv = r.singular_values();
    let (lo, hi) = sv
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient {
            groups: g,
            antennas: m,
            condition,
        });
    }

    let r_inv = r
        .solve_upper_triangular(&CMat::identity(g, g))
        .ok_or(Error::RankDeficient {
            groups: g,
            antennas: m,
            condition,
        })?;
    let mut w = q * r_inv.adjoint();
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        col /= Complex64::new(norm, 0.0);
    }
    Ok(PrecoderSet { w })
}
