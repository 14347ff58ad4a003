use nalgebra::DMatrix;

const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Definiteness {
    Positive,
    SemiPositive,
    Indefinite,
}

/// Classifies a symmetric matrix by an unpivoted LDLᵀ sweep. Pivots within
/// `PIVOT_TOL` (scaled by the largest diagonal) count as zero; a zero pivot
/// with a nonzero remaining column is indefinite.
pub(crate) fn definiteness(m: &DMatrix<f64>) -> Definiteness {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1.0_f64, f64::max);
    let tol = PIVOT_TOL * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut d = vec![0.0; n];
    let mut semi = false;
    for k in 0..n {
        let mut dk = m[(k, k)];
        for j in 0..k {
            dk -= l[(k, j)] * l[(k, j)] * d[j];
        }
        if dk < -tol {
            return Definiteness::Indefinite;
        }
        if dk <= tol {
            semi = true;
            for i in k + 1..n {
                let mut v = m[(i, k)];
                for j in 0..k {
                    v -= l[(i, j)] * l[(k, j)] * d[j];
                }
                if v.abs() > 1e-8 * scale {
                    return Definiteness::Indefinite;
                }
            }
            d[k] = 0.0;
            continue;
        }
        d[k] = dk;
        l[(k, k)] = 1.0;
        for i in k + 1..n {
            let mut v = m[(i, k)];
            for j in 0..k {
                v -= l[(i, j)] * l[(k, j)] * d[j];
            }
            l[(i, k)] = v / dk;
        }
    }
    if semi {
        Definiteness::SemiPositive
    } else {
        Definiteness::Positive
    }
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return false;
            }
        }
    }
    true
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_small_matrices() {
        let pd = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(definiteness(&pd), Definiteness::Positive);
        let psd = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(definiteness(&psd), Definiteness::SemiPositive);
        let ind = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(definiteness(&ind), Definiteness::Indefinite);
        let zero_pivot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(definiteness(&zero_pivot), Definiteness::Indefinite);
    }
}
