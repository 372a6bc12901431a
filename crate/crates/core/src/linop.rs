//! Matrix-free linear operator abstraction.
//!
//! Every Hessian-like object in the crate is only available through its action
//! on vectors. Thin column blocks are processed column by column, in parallel,
//! which mirrors the "one batched matvec" cost model of the sketching step.

use rayon::prelude::*;

use crate::error::check_len;
use crate::{Matrix, Result, Vector};

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &Vector) -> Result<Vector>;

    /// Applies the operator to every column of `block`. Columns are
    /// independent and are evaluated in parallel; the result does not depend
    /// on scheduling.
    fn apply_block(&self, block: &Matrix) -> Result<Matrix> {
        check_len("apply_block rows", self.dim(), block.nrows())?;
        let cols: Vec<Vector> = (0..block.ncols())
            .into_par_iter()
            .map(|j| self.apply(&block.column(j).into_owned()))
            .collect::<Result<_>>()?;
        if cols.is_empty() {
            return Ok(Matrix::zeros(self.dim(), 0));
        }
        Ok(Matrix::from_columns(&cols))
    }
}

/// Dense symmetric (or general) matrix exposed through the operator interface.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub Matrix);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        check_len("dense apply", self.0.ncols(), x.len())?;
        Ok(&self.0 * x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        check_len("identity apply", self.0, x.len())?;
        Ok(x.clone())
    }
}

/// `I + inner`.
pub struct ShiftedIdentity<'a, Op: LinearOperator + ?Sized>(pub &'a Op);

impl<Op: LinearOperator + ?Sized> LinearOperator for ShiftedIdentity<'_, Op> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        Ok(self.0.apply(x)? + x)
    }
}

/// Assembles the dense matrix of an operator by applying it to unit vectors.
pub fn assemble_dense<Op: LinearOperator + ?Sized>(op: &Op) -> Result<Matrix> {
    op.apply_block(&Matrix::identity(op.dim(), op.dim()))
}
