//! Reference designs the acceptance suite compares against: losses and
//! weights, to four decimals, for the three worked examples.

/// Two factors on 21 × 21 points of `[-1, 1]²`, three responses.
pub mod example2 {
    pub const ALPHAS: [f64; 3] = [0.0, 3.0, 5.0];
    pub const GLSE_LOSS: [f64; 3] = [55.4642, 63.7362, 67.3218];
    pub const OLSE_LOSS: [f64; 3] = [58.2630, 65.1178, 68.1711];

    /// Full OLSE support: `(x1, x2)` and the weight at each α.
    pub const OLSE_WEIGHTS: [([f64; 2], [f64; 3]); 11] = [
        ([-1.0, -1.0], [0.1145, 0.1145, 0.1078]),
        ([-1.0, 1.0], [0.0984, 0.1003, 0.1078]),
        ([-0.8, 0.0], [0.1430, 0.1430, 0.1389]),
        ([-0.3, -1.0], [0.0, 0.0, 0.0651]),
        ([-0.3, 0.0], [0.0, 0.0, 0.0157]),
        ([-0.3, 1.0], [0.1441, 0.1422, 0.0652]),
        ([0.3, -1.0], [0.1441, 0.1422, 0.0730]),
        ([0.3, 1.0], [0.0, 0.0, 0.0728]),
        ([0.8, 0.0], [0.1430, 0.1430, 0.1401]),
        ([1.0, -1.0], [0.0984, 0.1003, 0.1068]),
        ([1.0, 1.0], [0.1145, 0.1145, 0.1068]),
    ];

    /// GLSE support with `x1 < 0`; the other half mirrors it in `x1`.
    pub const GLSE_HALF_WEIGHTS: [([f64; 2], [f64; 3]); 9] = [
        ([-1.0, -1.0], [0.0938, 0.0806, 0.0808]),
        ([-1.0, 0.0], [0.0336, 0.0452, 0.0448]),
        ([-1.0, 1.0], [0.0938, 0.0806, 0.0808]),
        ([-0.8, -1.0], [0.0563, 0.0511, 0.0511]),
        ([-0.8, 0.0], [0.0291, 0.0411, 0.0411]),
        ([-0.8, 1.0], [0.0563, 0.0511, 0.0511]),
        ([-0.3, -1.0], [0.0489, 0.0459, 0.0456]),
        ([-0.3, 0.0], [0.0393, 0.0585, 0.0591]),
        ([-0.3, 1.0], [0.0489, 0.0459, 0.0456]),
    ];
}

/// Five factors (4400 points), three responses.
pub mod example1 {
    pub const ALPHAS: [f64; 4] = [0.0, 3.0, 8.0, 10.0];
    pub const GLSE_LOSS: [f64; 4] = [55.4173, 68.7782, 81.4346, 85.0921];
    pub const OLSE_LOSS: [f64; 4] = [56.3063, 69.1105, 81.4025, 84.9781];

    /// Points with `x1 = x2 = 1`, given as `(|x3|, x4)`; each row stands for
    /// `x3 = ±|x3|` and `x5 ∈ {0, 1}`. Weights are `(GLSE, OLSE)` per α.
    pub const WEIGHTS: [([f64; 2], [[f64; 2]; 4]); 4] = [
        ([2.0, 0.0], [[0.0239, 0.0252], [0.0242, 0.0248], [0.0246, 0.0246], [0.0247, 0.0246]]),
        ([2.0, 1.0], [[0.0224, 0.0221], [0.0223, 0.0222], [0.0222, 0.0222], [0.0222, 0.0222]]),
        ([0.0, 0.0], [[0.0102, 0.0054], [0.0090, 0.0067], [0.0076, 0.0075], [0.0071, 0.0076]]),
        ([0.0, 1.0], [[0.0222, 0.0250], [0.0230, 0.0243], [0.0238, 0.0239], [0.0241, 0.0238]]),
    ];
}

/// Three factors (891 points), four nested responses; the design does not
/// depend on V₀ or α.
pub mod example3 {
    /// Weight at each of the eight corners of `{0,1}² × {-1,1}`.
    pub const END_WEIGHT: f64 = 0.0962;
    /// Weight at each of the four points of `{0,1}² × {0}`.
    pub const MID_WEIGHT: f64 = 0.0576;
}
