#![allow(dead_code)]

use mmdesign::{
    BasisVector, DesignProblem, DesignSpace, Estimator, FactorSpec, ResponseModel, SymMatrix,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn basis(text: &str) -> BasisVector {
    BasisVector::parse(text).unwrap()
}

/// `m = 1`, `f = (1, x)` on `{-1, 0, 1}`.
pub fn line(alpha: f64, est: Estimator) -> DesignProblem {
    let model = ResponseModel::new(1, vec![basis("1, x1")], SymMatrix::identity(1), alpha, est).unwrap();
    let space = DesignSpace::build(&[FactorSpec::grid(-1.0, 1.0, 3)]).unwrap();
    DesignProblem::unreduced(model, space).unwrap()
}

pub fn example2_model(alpha: f64, est: Estimator) -> ResponseModel {
    ResponseModel::new(
        2,
        vec![
            basis("1, x1, x2, x1*x2, x1^2, x2^2"),
            basis("1, x1, x1^2, x1^3, (x1-0.5)_+^3, (x1+0.5)_+^3"),
            basis("1, x2, x2^2"),
        ],
        SymMatrix::from_rows(&[
            vec![4.0, 3.0, 4.0],
            vec![3.0, 9.0, 6.0],
            vec![4.0, 6.0, 16.0],
        ]),
        alpha,
        est,
    )
    .unwrap()
}

/// Example 2 on a coarser grid, so solver tests stay fast.
pub fn example2_coarse(alpha: f64, est: Estimator, axes: &[usize]) -> DesignProblem {
    let space = DesignSpace::build(&[FactorSpec::grid(-1.0, 1.0, 9), FactorSpec::grid(-1.0, 1.0, 9)]).unwrap();
    let orbits = space.build_orbits(axes);
    DesignProblem::new(example2_model(alpha, est), space, orbits).unwrap()
}

pub fn example3_model(alpha: f64, est: Estimator) -> ResponseModel {
    ResponseModel::new(
        3,
        vec![
            basis("1, x2, x3"),
            basis("1, x1, x2, x3, x3^2"),
            basis("1, x1, x2, x3, x1*x3, x3^2"),
            basis("1, x1, x2, x3, x1*x2, x1*x3, x2*x3, x3^2"),
        ],
        SymMatrix::identity(4),
        alpha,
        est,
    )
    .unwrap()
}

pub fn example3(alpha: f64, est: Estimator) -> DesignProblem {
    let space = DesignSpace::build(&[
        FactorSpec::grid(0.0, 1.0, 9),
        FactorSpec::grid(0.0, 1.0, 9),
        FactorSpec::grid(-1.0, 1.0, 11),
    ])
    .unwrap();
    DesignProblem::unreduced(example3_model(alpha, est), space).unwrap()
}

pub fn example1_space() -> DesignSpace {
    DesignSpace::build(&[
        FactorSpec::grid(-1.0, 1.0, 10),
        FactorSpec::grid(-1.0, 1.0, 10),
        FactorSpec::grid(-2.0, 2.0, 11),
        FactorSpec::levels(vec![0.0, 1.0]),
        FactorSpec::levels(vec![0.0, 1.0]),
    ])
    .unwrap()
}

pub fn example1_model(alpha: f64, est: Estimator) -> ResponseModel {
    ResponseModel::new(
        5,
        vec![
            basis("1, x1, x2, x3, x4, x5, x1*x4, x1*x5, x2*x4, x2*x5, x3*x4, x3*x5"),
            basis("1, x1, x2, x3, x4, x5, x1*x3^2, x4*x3^2"),
            basis("1, x1, x2, x3, x4, x5, x3^2"),
        ],
        SymMatrix::from_rows(&[
            vec![3.0, -1.0, 0.0],
            vec![-1.0, 9.0, 6.0],
            vec![0.0, 6.0, 16.0],
        ]),
        alpha,
        est,
    )
    .unwrap()
}

/// Random SPD matrix `RᵀR + ½I`.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix {
    let r: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut flat = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut s = if i == j { 0.5 } else { 0.0 };
            for k in 0..m {
                s += r[k * m + i] * r[k * m + j];
            }
            flat[i * m + j] = s;
        }
    }
    SymMatrix::from_row_major(m, &flat)
}

/// A small random two-response problem on a random grid in `[-1, 1]²`.
pub fn random_problem(rng: &mut ChaCha8Rng) -> DesignProblem {
    let est = if rng.gen_bool(0.5) { Estimator::Glse } else { Estimator::Olse };
    let alpha = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..4.0) };
    let f1 = ["1, x1", "1, x1, x2", "1, x2, x1*x2"][rng.gen_range(0..3)];
    let f2 = ["1", "1, x2", "1, x1^2", "x1, (x2-0.2)_+^2"][rng.gen_range(0..4)];
    let model = ResponseModel::new(2, vec![basis(f1), basis(f2)], random_spd(rng, 2), alpha, est).unwrap();
    let n1 = rng.gen_range(3..5);
    let n2 = rng.gen_range(2..4);
    let space = DesignSpace::build(&[FactorSpec::grid(-1.0, 1.0, n1), FactorSpec::grid(-1.0, 1.0, n2)]).unwrap();
    DesignProblem::unreduced(model, space).unwrap()
}

/// Interior point of the simplex with `n` coordinates.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| 0.05 - (1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
