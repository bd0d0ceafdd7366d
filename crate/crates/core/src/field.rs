//! Evaluable fields over the state space.
//!
//! Everything the toolkit manipulates — drift terms, input matrices,
//! annihilators, target structure matrices, shaped-energy evaluators — is
//! one of three shapes: a scalar, vector, or matrix function of a state
//! vector. Fields are cheap to clone (shared closures) and safe to call
//! from multiple threads.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense state/coordinate vector.
pub type State = DVector<f64>;
/// Dense row-major-constructible matrix.
pub type Mat = DMatrix<f64>;

macro_rules! field_type {
    ($name:ident, $out:ty, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone)]
        pub struct $name(Arc<dyn Fn(&State) -> Result<$out> + Send + Sync>);

        impl $name {
            /// Wraps a fallible evaluator.
            pub fn new(f: impl Fn(&State) -> Result<$out> + Send + Sync + 'static) -> Self {
                Self(Arc::new(f))
            }

            /// Wraps an infallible evaluator.
            pub fn from_fn(f: impl Fn(&State) -> $out + Send + Sync + 'static) -> Self {
                Self(Arc::new(move |x| Ok(f(x))))
            }

            pub fn eval(&self, x: &State) -> Result<$out> {
                (self.0)(x)
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(stringify!($name))
            }
        }
    };
}

field_type!(ScalarField, f64, "A map from states to reals.");
field_type!(VectorField, State, "A map from states to vectors.");
field_type!(MatrixField, Mat, "A map from states to matrices.");

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        Self::from_fn(move |_| value)
    }
}

impl VectorField {
    pub fn constant(value: State) -> Self {
        Self::from_fn(move |_| value.clone())
    }

    /// Evaluation plus a finiteness check; `what` names the field in errors.
    pub fn eval_finite(&self, x: &State, what: &str) -> Result<State> {
        let v = self.eval(x)?;
        if v.iter().any(|e| !e.is_finite()) {
            return Err(Error::numerical(format!("{what} produced a non-finite entry")));
        }
        Ok(v)
    }
}

impl MatrixField {
    pub fn constant(value: Mat) -> Self {
        Self::from_fn(move |_| value.clone())
    }

    /// Column `i` of the matrix field, as a vector field.
    pub fn column(&self, i: usize) -> VectorField {
        let f = self.clone();
        VectorField::new(move |x| {
            let m = f.eval(x)?;
            if i >= m.ncols() {
                return Err(Error::contract(format!(
                    "column index {i} out of range for {}x{} matrix field",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m.column(i).into_owned())
        })
    }

    /// Row `i` of the matrix field, transposed into a vector field.
    pub fn row_as_vector(&self, i: usize) -> VectorField {
        let f = self.clone();
        VectorField::new(move |x| {
            let m = f.eval(x)?;
            if i >= m.nrows() {
                return Err(Error::contract(format!(
                    "row index {i} out of range for {}x{} matrix field",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m.row(i).transpose())
        })
    }
}

/// Stacks two vectors into one.
pub fn stack(top: &State, bottom: &State) -> State {
    let mut out = State::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_and_row_extraction() {
        let m = MatrixField::constant(Mat::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]));
        let x = State::zeros(3);
        assert_eq!(m.column(1).eval(&x).unwrap(), State::from_vec(vec![2., 5.]));
        assert_eq!(
            m.row_as_vector(1).eval(&x).unwrap(),
            State::from_vec(vec![4., 5., 6.])
        );
        assert!(m.column(3).eval(&x).is_err());
    }

    #[test]
    fn stack_orders_entries() {
        let a = State::from_vec(vec![1., 2.]);
        let b = State::from_vec(vec![3.]);
        assert_eq!(stack(&a, &b), State::from_vec(vec![1., 2., 3.]));
    }
}
