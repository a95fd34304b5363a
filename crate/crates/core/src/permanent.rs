//! Matrix permanents by Ryser's inclusion-exclusion formula.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAX_PERMANENT_SIZE: usize = 12;

/// `perm(A) = (-1)^n sum_{S} (-1)^{|S|} prod_i sum_{j in S} a_ij`, walking the
/// column subsets in Gray-code order so each step updates the row sums by a
/// single column.
pub fn permanent(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "permanent of a non-square {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if n > MAX_PERMANENT_SIZE {
        return Err(Error::SizeTooLarge { size: n, max: MAX_PERMANENT_SIZE });
    }
    Ok(ryser(a))
}

fn ryser(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    match n {
        0 => return 1.0,
        1 => return a[(0, 0)],
        2 => return a[(0, 0)] * a[(1, 1)] + a[(0, 1)] * a[(1, 0)],
        _ => {}
    }
    let mut row_sums = vec![0.0; n];
    let mut total = 0.0;
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let next = k ^ (k >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let sign = if next & (1 << flipped) != 0 { 1.0 } else { -1.0 };
        for (i, s) in row_sums.iter_mut().enumerate() {
            *s += sign * a[(i, flipped)];
        }
        gray = next;
        let prod: f64 = row_sums.iter().product();
        if next.count_ones() % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
    }
    if n % 2 == 1 {
        -total
    } else {
        total
    }
}
