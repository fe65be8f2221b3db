//! Dense two-phase primal simplex for small equality-form programs, generic
//! over the scalar so the same code runs in f64 and in exact rationals.
//!
//! Problem shape: maximize c^T x subject to A x = b, x >= 0, with b >= 0.
//! Bland's smallest-index rule picks both the entering and the leaving
//! variable, which rules out cycling; artificials never re-enter the basis.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub(crate) trait Scalar:
    Clone
    + PartialOrd
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn abs_val(&self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn abs_val(&self) -> f64 {
        self.abs()
    }
}

impl Scalar for BigRational {
    fn zero() -> BigRational {
        Zero::zero()
    }
    fn one() -> BigRational {
        One::one()
    }
    fn abs_val(&self) -> BigRational {
        Signed::abs(self)
    }
}

/// Exact rational with value round(x * 2^bits) / 2^bits.
pub(crate) fn dyadic(x: f64, bits: u32) -> BigRational {
    let scale = (1u64 << bits) as f64;
    BigRational::new(
        BigInt::from((x * scale).round() as i128),
        BigInt::from(1i128 << bits),
    )
}

pub(crate) struct LpSolution<T> {
    pub objective: T,
    pub x: Vec<T>,
    /// Row-ordered basic column indices at the optimum.
    pub basis: Vec<usize>,
}

struct Tableau<T> {
    // Rows of width n + m + 1; the last column is the right-hand side.
    rows: Vec<Vec<T>>,
    cost: Vec<T>,
    obj: T,
    basis: Vec<usize>,
    n: usize,
}

impl<T: Scalar> Tableau<T> {
    fn rhs_col(&self) -> usize {
        self.cost.len()
    }

    /// Restore zero reduced costs on the basic columns after a cost reset.
    fn canonicalize(&mut self) {
        let rhs = self.rhs_col();
        for r in 0..self.rows.len() {
            let f = self.cost[self.basis[r]].clone();
            if f != T::zero() {
                for k in 0..rhs {
                    self.cost[k] = self.cost[k].clone() - f.clone() * self.rows[r][k].clone();
                }
                self.obj = self.obj.clone() + f * self.rows[r][rhs].clone();
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let rhs = self.rhs_col();
        let p = self.rows[r][j].clone();
        for k in 0..=rhs {
            self.rows[r][k] = self.rows[r][k].clone() / p.clone();
        }
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][j].clone();
            if f != T::zero() {
                for k in 0..=rhs {
                    self.rows[i][k] = self.rows[i][k].clone() - f.clone() * self.rows[r][k].clone();
                }
            }
        }
        let f = self.cost[j].clone();
        if f != T::zero() {
            self.obj = self.obj.clone() + f.clone() * self.rows[r][rhs].clone();
            for k in 0..rhs {
                self.cost[k] = self.cost[k].clone() - f.clone() * self.rows[r][k].clone();
            }
        }
        self.basis[r] = j;
    }

    /// Run Bland iterations to optimality. Entering columns are restricted
    /// to the original variables (artificials never re-enter).
    fn optimize(&mut self, eps: &T) -> Result<()> {
        let rhs = self.rhs_col();
        // Bland terminates; the cap only guards against arithmetic bugs.
        for _ in 0..1_000_000 {
            let Some(j) = (0..self.n).find(|&j| self.cost[j] > *eps) else {
                return Ok(());
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows.len() {
                if self.rows[i][j] > *eps {
                    let ratio = self.rows[i][rhs].clone() / self.rows[i][j].clone();
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, j),
                None => return Err(Error::Internal("unbounded linear program".into())),
            }
        }
        Err(Error::Internal("simplex iteration cap exceeded".into()))
    }
}

/// Maximize c^T x subject to a x = b, x >= 0. Requires b >= 0 entrywise.
/// `eps` is the pivot/optimality tolerance; pass zero for exact scalars.
pub(crate) fn maximize<T: Scalar>(
    a: &[Vec<T>],
    b: &[T],
    c: &[T],
    eps: &T,
) -> Result<LpSolution<T>> {
    let m = a.len();
    let n = c.len();
    debug_assert_eq!(b.len(), m);
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert!(b.iter().all(|v| *v >= T::zero()));

    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = Vec::with_capacity(n + m + 1);
        row.extend(a[i].iter().cloned());
        for k in 0..m {
            row.push(if k == i { T::one() } else { T::zero() });
        }
        row.push(b[i].clone());
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        cost: vec![T::zero(); n + m],
        obj: T::zero(),
        basis: (n..n + m).collect(),
        n,
    };

    // Phase 1: maximize minus the sum of artificials; feasible iff it is 0.
    for j in n..n + m {
        t.cost[j] = T::zero() - T::one();
    }
    t.canonicalize();
    t.optimize(eps)?;
    if t.obj < T::zero() - eps.clone() {
        return Err(Error::Infeasible);
    }
    for r in 0..m {
        if t.basis[r] >= n {
            // Basic artificial at value 0; swap a real column in, if any.
            match (0..n).find(|&j| t.rows[r][j].abs_val() > *eps) {
                Some(j) => t.pivot(r, j),
                None => return Err(Error::Internal("redundant constraint row".into())),
            }
        }
    }

    // Phase 2 on the actual objective; canonicalize rebuilds the reduced
    // costs and leaves obj = c_B^T x_B for the phase-1 basis.
    t.cost = vec![T::zero(); n + m];
    t.cost[..n].clone_from_slice(c);
    t.obj = T::zero();
    t.canonicalize();
    t.optimize(eps)?;

    let rhs = t.rhs_col();
    let mut x = vec![T::zero(); n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rows[r][rhs].clone();
        }
    }
    Ok(LpSolution {
        objective: t.obj.clone(),
        x,
        basis: t.basis.clone(),
    })
}

/// Solve mat * y = rhs by Gaussian elimination with partial pivoting.
pub(crate) fn solve_linear<T: Scalar>(
    mut mat: Vec<Vec<T>>,
    mut rhs: Vec<T>,
    eps: &T,
) -> Result<Vec<T>> {
    let n = mat.len();
    debug_assert!(mat.iter().all(|row| row.len() == n));
    debug_assert_eq!(rhs.len(), n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                mat[i][col]
                    .abs_val()
                    .partial_cmp(&mat[j][col].abs_val())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if mat[piv][col].abs_val() <= *eps {
            return Err(Error::Internal("singular linear system".into()));
        }
        mat.swap(col, piv);
        rhs.swap(col, piv);
        for i in col + 1..n {
            let f = mat[i][col].clone() / mat[col][col].clone();
            if f != T::zero() {
                for k in col..n {
                    mat[i][k] = mat[i][k].clone() - f.clone() * mat[col][k].clone();
                }
                rhs[i] = rhs[i].clone() - f * rhs[col].clone();
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = rhs[i].clone();
        for k in i + 1..n {
            acc = acc - mat[i][k].clone() * y[k].clone();
        }
        y[i] = acc / mat[i][i].clone();
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn test_unique_vertex() {
        // max 2x + y, x + y = 1, x - y = 0 -> x = y = 1/2, objective 3/2.
        let a = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let b = vec![1.0, 0.0];
        let c = vec![2.0, 1.0];
        let s = maximize(&a, &b, &c, &1e-9).unwrap();
        assert!((s.objective - 1.5).abs() < 1e-12);
        assert!((s.x[0] - 0.5).abs() < 1e-12);
        assert!((s.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn test_infeasible_system() {
        let a = vec![vec![1.0], vec![1.0]];
        let b = vec![1.0, 2.0];
        let c = vec![0.0];
        assert!(matches!(maximize(&a, &b, &c, &1e-9), Err(Error::Infeasible)));
    }

    #[test]
    fn test_exact_rational_optimum() {
        let a = vec![vec![rat(1, 1), rat(1, 1)], vec![rat(1, 1), rat(-1, 1)]];
        let b = vec![rat(1, 1), rat(0, 1)];
        let c = vec![rat(2, 1), rat(1, 1)];
        let s = maximize(&a, &b, &c, &rat(0, 1)).unwrap();
        assert_eq!(s.objective, rat(3, 2));
        assert_eq!(s.x, vec![rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn test_covering_lp_prefers_heavy_pairs() {
        // Columns: {1},{2},{3},{1,2},{1,3},{2,3}; row i sums the columns
        // containing i to 1. Pair weights 10 beat singleton weights 1:
        // optimum is all pairs at 1/2, objective 15.
        let cols: [u32; 6] = [0b001, 0b010, 0b100, 0b011, 0b101, 0b110];
        let a: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                cols.iter()
                    .map(|&s| if s >> i & 1 == 1 { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let b = vec![1.0; 3];
        let c = vec![1.0, 1.0, 1.0, 10.0, 10.0, 10.0];
        let s = maximize(&a, &b, &c, &1e-9).unwrap();
        assert!((s.objective - 15.0).abs() < 1e-9);
        for j in 3..6 {
            assert!((s.x[j] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn test_solve_linear_2x2() {
        let mat = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let rhs = vec![5.0, 10.0];
        let y = solve_linear(mat, rhs, &1e-12).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!((y[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn test_solve_linear_singular() {
        let mat = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let rhs = vec![1.0, 2.0];
        assert!(solve_linear(mat, rhs, &1e-12).is_err());
    }

    #[test]
    fn test_degenerate_rhs_terminates() {
        // One redundant-looking direction with a zero right-hand side keeps
        // the ratio test degenerate; Bland must still terminate.
        let a = vec![
            vec![1.0, 1.0, 1.0, 0.0],
            vec![1.0, -1.0, 0.0, 1.0],
            vec![0.0, 2.0, 1.0, 1.0],
        ];
        let b = vec![1.0, 0.0, 1.0];
        let c = vec![3.0, 1.0, 0.0, 0.0];
        let s = maximize(&a, &b, &c, &1e-9).unwrap();
        assert!(s.objective > 0.0);
        let residual: f64 = (0..3)
            .map(|i| {
                let lhs: f64 = (0..4).map(|j| a[i][j] * s.x[j]).sum();
                (lhs - b[i]).abs()
            })
            .sum();
        assert!(residual < 1e-9);
    }
}
