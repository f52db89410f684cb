//! Reproducible distributed dot product and norm: local accumulation,
//! global reduction over accumulators across virtual ranks, and local
//! rounding. The combine order is a function of the reduction plan alone,
//! never of scheduling, and in the exact modes it does not matter at all.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accum::{
    fpe_accumulate_product, fpe_accumulate_product_spill, AccumError, Fpe, SuperAcc,
};
use crate::eft::fma_op;
use crate::sparsemat::RankWorld;

/// Accumulation mode for dot products and reductions. `Fpe` and `ExBlas`
/// are bit-reproducible for any rank count and reduction order; `Naive` is
/// the order-sensitive baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DotMode {
    Naive,
    Fpe,
    ExBlas,
}

impl DotMode {
    pub fn parse(s: &str) -> Option<DotMode> {
        match s {
            "naive" => Some(DotMode::Naive),
            "fpe" => Some(DotMode::Fpe),
            "exblas" => Some(DotMode::ExBlas),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DotMode::Naive => "naive",
            DotMode::Fpe => "fpe",
            DotMode::ExBlas => "exblas",
        }
    }
}

/// Policy for building the binary combination tree over rank indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionPlan {
    /// `((r0 + r1) + r2) + ...`
    LeftFold,
    /// Recursive halving.
    Balanced,
    /// Random binary tree drawn from the seed.
    Random(u64),
}

impl ReductionPlan {
    pub fn name(&self) -> String {
        match self {
            ReductionPlan::LeftFold => "leftfold".into(),
            ReductionPlan::Balanced => "balanced".into(),
            ReductionPlan::Random(s) => format!("random:{s}"),
        }
    }

    /// Explicit combination tree visiting every rank exactly once as a leaf.
    pub fn build_tree(&self, ranks: usize) -> ReduceTree {
        assert!(ranks >= 1);
        match self {
            ReductionPlan::LeftFold => {
                let mut t = ReduceTree::Leaf(0);
                for k in 1..ranks {
                    t = ReduceTree::Branch(Box::new(t), Box::new(ReduceTree::Leaf(k)));
                }
                t
            }
            ReductionPlan::Balanced => balanced(0, ranks),
            ReductionPlan::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut nodes: Vec<ReduceTree> =
                    (0..ranks).map(ReduceTree::Leaf).collect();
                while nodes.len() > 1 {
                    let i = rng.gen_range(0..nodes.len());
                    let a = nodes.swap_remove(i);
                    let j = rng.gen_range(0..nodes.len());
                    let b = nodes.swap_remove(j);
                    nodes.push(ReduceTree::Branch(Box::new(a), Box::new(b)));
                }
                nodes.pop().unwrap()
            }
        }
    }
}

fn balanced(lo: usize, len: usize) -> ReduceTree {
    if len == 1 {
        ReduceTree::Leaf(lo)
    } else {
        let half = len / 2;
        ReduceTree::Branch(
            Box::new(balanced(lo, half)),
            Box::new(balanced(lo + half, len - half)),
        )
    }
}

#[derive(Debug, Clone)]
pub enum ReduceTree {
    Leaf(usize),
    Branch(Box<ReduceTree>, Box<ReduceTree>),
}

impl ReduceTree {
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            ReduceTree::Leaf(k) => out.push(*k),
            ReduceTree::Branch(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }
}

/// One rank's local accumulator, shaped by the mode.
#[derive(Debug, Clone)]
pub enum DotAcc {
    Naive(f64),
    Fpe { hi: Fpe, lo: Fpe },
    ExBlas { hi: Fpe, lo: Fpe, spill: SuperAcc },
}

impl DotAcc {
    fn empty(mode: DotMode) -> DotAcc {
        match mode {
            DotMode::Naive => DotAcc::Naive(0.0),
            DotMode::Fpe => DotAcc::Fpe { hi: Fpe::default(), lo: Fpe::default() },
            DotMode::ExBlas => DotAcc::ExBlas {
                hi: Fpe::default(),
                lo: Fpe::default(),
                spill: SuperAcc::new(),
            },
        }
    }

    /// Combine `other` into `self`: plain addition for naive, twosum-based
    /// merge for the expansions, digit-wise integer addition for the long
    /// accumulators (with expansion residues spilling exactly).
    fn combine(&mut self, other: DotAcc) {
        match (self, other) {
            (DotAcc::Naive(a), DotAcc::Naive(b)) => *a += b,
            (DotAcc::Fpe { hi, lo }, DotAcc::Fpe { hi: oh, lo: ol }) => {
                hi.merge(&oh);
                lo.merge(&ol);
            }
            (
                DotAcc::ExBlas { hi, lo, spill },
                DotAcc::ExBlas { hi: oh, lo: ol, spill: os },
            ) => {
                spill.add(&os);
                hi.merge_with_spill(&oh, spill);
                lo.merge_with_spill(&ol, spill);
            }
            _ => panic!("mixed accumulator modes in one reduction"),
        }
    }

    /// Correctly rounded binary64 of the accumulated value (for naive, just
    /// the running sum). `Err` reports an expansion overflow; no silently
    /// wrong value is ever returned.
    fn round(&self) -> Result<f64, AccumError> {
        match self {
            DotAcc::Naive(v) => Ok(*v),
            DotAcc::Fpe { hi, lo } => {
                // Both expansions reduced globally; merged only here, at
                // rounding time.
                let mut merged = hi.clone();
                merged.merge(lo);
                merged.round_nearsum()
            }
            DotAcc::ExBlas { hi, lo, spill } => {
                let mut total = spill.clone();
                hi.flush_to_superacc(&mut total);
                lo.flush_to_superacc(&mut total);
                Ok(total.round())
            }
        }
    }
}

/// Local dot product over one rank's slices.
pub fn dot_local(x: &[f64], y: &[f64], mode: DotMode) -> DotAcc {
    assert_eq!(x.len(), y.len(), "dot product needs equal slice lengths");
    let mut acc = DotAcc::empty(mode);
    match &mut acc {
        DotAcc::Naive(v) => {
            for (&a, &b) in x.iter().zip(y) {
                *v = fma_op(a, b, *v);
            }
        }
        DotAcc::Fpe { hi, lo } => {
            for (&a, &b) in x.iter().zip(y) {
                fpe_accumulate_product(hi, lo, a, b);
            }
        }
        DotAcc::ExBlas { hi, lo, spill } => {
            for (&a, &b) in x.iter().zip(y) {
                fpe_accumulate_product_spill(hi, lo, spill, a, b);
            }
        }
    }
    acc
}

/// Combine one accumulator per rank along the plan's tree, then round.
/// Every rank rounds the same combined state locally, so the returned
/// value is the one replicated on all ranks.
pub fn allreduce(world: &RankWorld, locals: Vec<DotAcc>) -> Result<f64, AccumError> {
    assert_eq!(locals.len(), world.ranks());
    reduce_tree(&world.plan.build_tree(world.ranks()), locals)?.round()
}

fn reduce_tree(tree: &ReduceTree, locals: Vec<DotAcc>) -> Result<DotAcc, AccumError> {
    let mut slots: Vec<Option<DotAcc>> = locals.into_iter().map(Some).collect();
    fn eval(tree: &ReduceTree, slots: &mut Vec<Option<DotAcc>>) -> DotAcc {
        match tree {
            ReduceTree::Leaf(k) => slots[*k].take().expect("rank visited twice"),
            ReduceTree::Branch(a, b) => {
                let mut l = eval(a, slots);
                let r = eval(b, slots);
                l.combine(r);
                l
            }
        }
    }
    Ok(eval(tree, &mut slots))
}

/// Result of a (possibly batched) global dot product. `fpe_overflow` is set
/// when the lightweight expansions could not capture the data and the
/// reduction was transparently recomputed on the exact path.
#[derive(Debug, Clone, PartialEq)]
pub struct DotValues {
    pub values: Vec<f64>,
    pub fpe_overflow: bool,
}

/// `dot_local` + `allreduce` for one vector pair.
pub fn dot_global(world: &RankWorld, x: &[f64], y: &[f64]) -> DotValues {
    let mut r = dot_global_multi(world, &[(x, y)]);
    debug_assert_eq!(r.values.len(), 1);
    DotValues { values: vec![r.values.pop().unwrap()], fpe_overflow: r.fpe_overflow }
}

/// Batch `k` independent dot products into one reduction round; each value
/// is rounded separately. In Fpe mode an overflow anywhere triggers the
/// warning and an automatic recomputation of the whole round in ExBlas
/// mode, keeping results trustworthy instead of erroring out.
pub fn dot_global_multi(world: &RankWorld, pairs: &[(&[f64], &[f64])]) -> DotValues {
    match try_multi(world, pairs, world.mode) {
        Ok(values) => DotValues { values, fpe_overflow: false },
        Err(AccumError::FpeOverflow) => {
            let values = try_multi(world, pairs, DotMode::ExBlas)
                .expect("exact path cannot overflow");
            DotValues { values, fpe_overflow: true }
        }
    }
}

fn try_multi(
    world: &RankWorld,
    pairs: &[(&[f64], &[f64])],
    mode: DotMode,
) -> Result<Vec<f64>, AccumError> {
    pairs
        .iter()
        .map(|&(x, y)| {
            assert_eq!(x.len(), world.partition.n());
            assert_eq!(y.len(), world.partition.n());
            let locals: Vec<DotAcc> = (0..world.ranks())
                .map(|k| {
                    dot_local(world.partition.slice(k, x), world.partition.slice(k, y), mode)
                })
                .collect();
            reduce_tree(&world.plan.build_tree(world.ranks()), locals)?.round()
        })
        .collect()
}

/// An initiated, not yet consumed, non-blocking reduction. Consuming it
/// with [`PendingReduction::wait`] yields exactly what the blocking
/// [`dot_global_multi`] would; the split exists so solver control flow can
/// interleave SpMV work between begin and wait.
#[derive(Debug)]
pub struct PendingReduction {
    result: DotValues,
}

/// Start a batched reduction. Values carry no dependence on anything
/// executed between begin and wait.
pub fn split_allreduce_begin(world: &RankWorld, pairs: &[(&[f64], &[f64])]) -> PendingReduction {
    PendingReduction { result: dot_global_multi(world, pairs) }
}

impl PendingReduction {
    /// Complete the reduction. Consumes the handle, so waiting twice (or
    /// waiting without a begin) is rejected at compile time.
    pub fn wait(self) -> DotValues {
        self.result
    }
}

/// Reproducible 2-norm: sqrt applied after the reproducible rounding of
/// the dot product.
pub fn norm2(world: &RankWorld, x: &[f64]) -> DotValues {
    let mut d = dot_global(world, x, x);
    d.values[0] = d.values[0].sqrt();
    d
}
