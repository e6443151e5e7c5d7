//! Step-response and effort metrics over sampled traces.

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// First time after which `y` stays within `band` of `target` for the rest of
/// the trace. Returns `None` if the last sample is still outside.
pub fn settling_time(t: &[f64], y: &[f64], target: f64, band: f64) -> Option<f64> {
    let last_outside = y.iter().rposition(|v| (v - target).abs() > band);
    match last_outside {
        None => t.first().copied(),
        Some(i) if i + 1 < t.len() => Some(t[i + 1]),
        Some(_) => None,
    }
}

/// Largest excursion past `target` in the direction of travel from `start`,
/// as a fraction of `|target - start|`.
pub fn overshoot(y: &[f64], start: f64, target: f64) -> f64 {
    let travel = target - start;
    if travel == 0.0 {
        return 0.0;
    }
    let dir = travel.signum();
    y.iter()
        .map(|v| (v - target) * dir / travel.abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_of_constant() {
        assert_eq!(rms(&[]), 0.0);
        assert!((rms(&[3.0, -3.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn first_order_settling() {
        let t: Vec<f64> = (0..5000).map(|k| k as f64 * 1e-3).collect();
        let y: Vec<f64> = t.iter().map(|t| 1.0 - (-t / 0.2).exp()).collect();
        let ts = settling_time(&t, &y, 1.0, 0.02).unwrap();
        // 0.2·ln(50)
        assert!((ts - 0.2 * 50f64.ln()).abs() < 2e-3);
        assert_eq!(overshoot(&y, 0.0, 1.0), 0.0);
        assert!(settling_time(&t, &y, 2.0, 0.02).is_none());
    }

    #[test]
    fn overshoot_direction() {
        assert!((overshoot(&[0.0, 1.2, 1.0], 0.0, 1.0) - 0.2).abs() < 1e-12);
        assert!((overshoot(&[0.0, -1.1, -1.0], 0.0, -1.0) - 0.1).abs() < 1e-12);
    }
}
