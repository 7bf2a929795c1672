//! Independent reference solvers used only by unit tests.

/// Runge–Kutta–Fehlberg 4(5) with step control, integrating `y' = g(t, y)`
/// from `t = 0` through each breakpoint in turn and returning `y` at the last.
pub(crate) fn adaptive_scalar_ode(g: impl Fn(f64, f64) -> f64, y0: f64, breakpoints: &[f64], tol: f64) -> f64 {
    let mut t = 0.0;
    let mut y = y0;
    let mut h: f64 = 1e-3;
    for &end in breakpoints {
        while end - t > 1e-15 {
            h = h.min(end - t);
            let k1 = g(t, y);
            let k2 = g(t + h / 4.0, y + h * k1 / 4.0);
            let k3 = g(t + 3.0 * h / 8.0, y + h * (3.0 * k1 + 9.0 * k2) / 32.0);
            let k4 = g(t + 12.0 * h / 13.0, y + h * (1932.0 * k1 - 7200.0 * k2 + 7296.0 * k3) / 2197.0);
            let k5 = g(t + h, y + h * (439.0 * k1 / 216.0 - 8.0 * k2 + 3680.0 * k3 / 513.0 - 845.0 * k4 / 4104.0));
            let k6 = g(
                t + h / 2.0,
                y + h * (-8.0 * k1 / 27.0 + 2.0 * k2 - 3544.0 * k3 / 2565.0 + 1859.0 * k4 / 4104.0 - 11.0 * k5 / 40.0),
            );
            let y4 = y + h * (25.0 * k1 / 216.0 + 1408.0 * k3 / 2565.0 + 2197.0 * k4 / 4104.0 - k5 / 5.0);
            let y5 = y + h
                * (16.0 * k1 / 135.0 + 6656.0 * k3 / 12825.0 + 28561.0 * k4 / 56430.0 - 9.0 * k5 / 50.0
                    + 2.0 * k6 / 55.0);
            let err = (y5 - y4).abs();
            if err <= tol * (1.0 + y.abs()) {
                t += h;
                y = y5;
            }
            let factor = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 4.0 };
            h *= factor.clamp(0.1, 4.0);
        }
        t = end;
    }
    y
}
