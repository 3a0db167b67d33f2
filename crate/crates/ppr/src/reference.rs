//! Published benchmark costs, used only to report deltas next to computed values.

/// Aircraft stall recovery at 25°, horizon 12: `(controller degree, label, cost)`.
pub const AIRCRAFT_TABLE: [(usize, &str, f64); 4] = [
    (1, "LQR", 0.053166),
    (3, "Cubic PPR", 0.044503),
    (5, "Quintic PPR", 0.040593),
    (7, "Septic PPR", 0.039393),
];

/// Allen-Cahn with 129 nodes, horizon 1000: `(epsilon, [LQR, quadratic, cubic])`.
pub const ALLEN_CAHN_TABLE: [(f64, [f64; 3]); 3] = [
    (0.01, [5475.640, 4339.483, 1372.454]),
    (0.0075, [19376.855, 14042.908, 4153.668]),
    (0.005, [87268.670, 57876.913, 20711.449]),
];

pub fn aircraft_reference(controller_degree: usize) -> Option<f64> {
    AIRCRAFT_TABLE
        .iter()
        .find(|(j, _, _)| *j == controller_degree)
        .map(|&(_, _, c)| c)
}

pub fn allen_cahn_reference(n: usize, epsilon: f64, controller_degree: usize) -> Option<f64> {
    if n != 129 || !(1..=3).contains(&controller_degree) {
        return None;
    }
    ALLEN_CAHN_TABLE
        .iter()
        .find(|(e, _)| (*e - epsilon).abs() < 1e-12)
        .map(|(_, costs)| costs[controller_degree - 1])
}

pub fn controller_label(degree: usize) -> String {
    match degree {
        1 => "LQR".into(),
        2 => "Quadratic PPR".into(),
        3 => "Cubic PPR".into(),
        4 => "Quartic PPR".into(),
        5 => "Quintic PPR".into(),
        6 => "Sextic PPR".into(),
        7 => "Septic PPR".into(),
        j => format!("degree-{j} PPR"),
    }
}
