use crate::error::Result;
use crate::field::Field;
use crate::report::Report;
use crate::scalar::{mean_std_unbiased, Scalar};
use crate::scoring::{GaussianField, REFERENCE_SIGMA_FLOOR};

/// Raw-ensemble Gaussian: per-cell member mean and unbiased member standard
/// deviation, the latter floored at 1e-6 mm.
pub fn predict_members_baseline<T: Scalar>(report: &Report<T>) -> Result<GaussianField<T>> {
    let (rows, cols) = (report.rows(), report.cols());
    let n = rows * cols;
    let floor = T::lit(REFERENCE_SIGMA_FLOOR);
    let mut mu = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut cell = Vec::with_capacity(report.members.len());
    for i in 0..n {
        cell.clear();
        cell.extend(report.members.iter().map(|m| m.as_slice()[i]));
        let (m, s) = mean_std_unbiased(&cell);
        mu.push(m);
        sigma.push(s.max(floor));
    }
    GaussianField::new(Field::from_vec(rows, cols, mu)?, Field::from_vec(rows, cols, sigma)?)
}
