//! Bit-reproducible, correctly-rounded preconditioned BiCGStab and
//! pipelined BiCGStab for sparse linear systems.
//!
//! The reproducible code paths are built bottom-up: error-free
//! transformations ([`eft`]), floating-point expansions and a long
//! fixed-point accumulator ([`accum`]), reproducible distributed dot
//! products and norms over a virtual multi-rank world ([`reduction`]),
//! deterministic fma-based kernels ([`kernels`]), and the two solver
//! variants ([`solvers`]). Results in the `Fpe` and `ExBlas` modes are
//! bit-identical for any rank count and any reduction order.

pub mod accum;
pub mod eft;
pub mod hexfloat;
pub mod kernels;
pub mod reduction;
pub mod solvers;
pub mod sparsemat;

pub use accum::{Fpe, SuperAcc};
pub use eft::{fma_op, twoprod, twosum, EftPair};
pub use hexfloat::format_hex;
pub use kernels::{axpy, axpy2like, axpylike, ewmul, scale, spmv, spmv_local};
pub use reduction::{
    allreduce, dot_global, dot_global_multi, dot_local, norm2, split_allreduce_begin,
    DotMode, DotValues, PendingReduction, ReductionPlan,
};
pub use solvers::{
    build_rhs, pbicgstab, pipelined_pbicgstab, solve, JacobiPrecond, SolveReport,
    SolverConfig, SolverError, SolverVariant,
};
pub use sparsemat::{
    allgather, gen_band, gen_poisson27, parse_matrix_market, partition_rows,
    write_matrix_market, CsrMatrix, MatrixError, RankWorld, RowPartition,
};
