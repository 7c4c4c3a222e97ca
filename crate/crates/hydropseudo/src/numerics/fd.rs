//! Central finite-difference stencils, fourth-order accurate for derivative
//! orders one through four.
//!
//! These exist solely as an independent cross-check of the jet arithmetic:
//! every jet-computed partial can be compared against a derivative estimate
//! that never touches the jet code. Steps are chosen relative to the distance
//! from the nearest singularity of the function being probed; with the
//! fourth-order stencils the truncation error is then a scale-free multiple
//! of (step/distance)^4, and the defaults below keep both truncation and
//! rounding error comfortably under a relative 1e-6.

/// Relative step factors per derivative order (index 0 unused).
const ETA: [f64; 5] = [0.0, 1e-3, 2e-3, 6e-3, 1e-2];

/// Step to use for `central_derivative` of the given order on a function
/// whose nearest singularity is `distance` away (use 1.0 for entire
/// functions).
pub fn default_step(order: usize, distance: f64) -> f64 {
    assert!((1..=4).contains(&order), "stencils cover orders 1..=4");
    ETA[order] * distance.max(f64::MIN_POSITIVE)
}

/// Fourth-order central estimate of the `order`-th derivative of `f` at `x`.
pub fn central_derivative<F: FnMut(f64) -> f64>(
    mut f: F,
    x: f64,
    order: usize,
    h: f64,
) -> f64 {
    let fk = |k: i64, f: &mut F| f(x + k as f64 * h);
    match order {
        1 => {
            let (m2, m1, p1, p2) = (fk(-2, &mut f), fk(-1, &mut f), fk(1, &mut f), fk(2, &mut f));
            (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h)
        }
        2 => {
            let c = f(x);
            let (m2, m1, p1, p2) = (fk(-2, &mut f), fk(-1, &mut f), fk(1, &mut f), fk(2, &mut f));
            (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h)
        }
        3 => {
            let (m3, m2, m1) = (fk(-3, &mut f), fk(-2, &mut f), fk(-1, &mut f));
            let (p1, p2, p3) = (fk(1, &mut f), fk(2, &mut f), fk(3, &mut f));
            (m3 - 8.0 * m2 + 13.0 * m1 - 13.0 * p1 + 8.0 * p2 - p3) / (8.0 * h * h * h)
        }
        4 => {
            let c = f(x);
            let (m3, m2, m1) = (fk(-3, &mut f), fk(-2, &mut f), fk(-1, &mut f));
            let (p1, p2, p3) = (fk(1, &mut f), fk(2, &mut f), fk(3, &mut f));
            (-m3 + 12.0 * m2 - 39.0 * m1 + 56.0 * c - 39.0 * p1 + 12.0 * p2 - p3)
                / (6.0 * h * h * h * h)
        }
        _ => panic!("stencils cover orders 1..=4, got {order}"),
    }
}
