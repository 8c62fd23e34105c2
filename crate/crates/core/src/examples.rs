//! The three bundled example models.

use crate::matrix::NonNegMatrix;
use crate::model::ModelSpec;

pub const EX1_JSON: &str = include_str!("../examples/ex1.json");
pub const EX2_JSON: &str = include_str!("../examples/ex2.json");
pub const EX3_JSON: &str = include_str!("../examples/ex3.json");

/// `v₁uᵀ/5` with `u = v₁ = (1, 1)`.
pub fn a1() -> NonNegMatrix {
    NonNegMatrix::new(vec![vec![0.2, 0.2], vec![0.2, 0.2]]).unwrap()
}

/// `v₂uᵀ/5` with `v₂ = (1, 2)`.
pub fn a2() -> NonNegMatrix {
    NonNegMatrix::new(vec![vec![0.2, 0.2], vec![0.4, 0.4]]).unwrap()
}

/// `N = 2`, coefficients i.i.d. `½δ_{a₁} + ½δ_{a₂}`.
pub fn example1() -> ModelSpec {
    ModelSpec::from_json(EX1_JSON).expect("bundled model is valid")
}

/// `N = 3`, `(A₁, A₂, A₃) = X(a₁, a₂, a₁ + a₂)` with `X` uniform on `{¼, ¾}`.
pub fn example2() -> ModelSpec {
    ModelSpec::from_json(EX2_JSON).expect("bundled model is valid")
}

/// `P[N = 1] = P[N = 2] = ½`; a single child gets `a₁` or `a₂`, a pair gets `(a₁, a₂)`.
pub fn example3() -> ModelSpec {
    ModelSpec::from_json(EX3_JSON).expect("bundled model is valid")
}

pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "ex1" | "example-1" => Some(example1()),
        "ex2" | "example-2" => Some(example2()),
        "ex3" | "example-3" => Some(example3()),
        _ => None,
    }
}
