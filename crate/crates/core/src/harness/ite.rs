//! Individual-treatment-effect intervals composed from two
//! potential-outcome intervals at halved significance.

use crate::error::{Error, Result};
use crate::types::PredictionInterval;

/// Combines intervals for `Y(a)` and `Y(0)` of the same unit, each
/// computed at level `alpha / 2`, into an interval containing the
/// treatment effect `Y(a) - Y(0)` with probability `1 - alpha`:
/// `[c_a - S_a - c_0 - S_0, c_a + S_a - c_0 + S_0]`.
///
/// Both intervals must belong to the same unit and share the halved
/// significance level.
pub fn ite_interval(
    unit_treated: usize,
    treated: &PredictionInterval,
    unit_control: usize,
    control: &PredictionInterval,
) -> Result<(f64, f64)> {
    if unit_treated != unit_control {
        return Err(Error::InvalidInput(format!(
            "mismatched unit identifiers: {unit_treated} vs {unit_control}"
        )));
    }
    if treated.alpha != control.alpha {
        return Err(Error::InvalidInput(format!(
            "intervals were computed at different levels: {} vs {}",
            treated.alpha, control.alpha
        )));
    }
    let lower = treated.center - treated.s_star - control.center - control.s_star;
    let upper = treated.center + treated.s_star - control.center + control.s_star;
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::build_interval;

    #[test]
    fn composes_the_effect_interval() {
        let treated = build_interval(5.0, 1.0, 0.1).unwrap();
        let control = build_interval(1.0, 2.0, 0.1).unwrap();
        let (lo, hi) = ite_interval(3, &treated, 3, &control).unwrap();
        assert_eq!((lo, hi), (1.0, 7.0));
        // Width is the sum of the two potential-outcome widths.
        assert_eq!(hi - lo, treated.width() + control.width());
    }

    #[test]
    fn degenerate_intervals_collapse_to_the_plugin_effect() {
        let treated = build_interval(2.5, 0.0, 0.2).unwrap();
        let control = build_interval(1.0, 0.0, 0.2).unwrap();
        let (lo, hi) = ite_interval(0, &treated, 0, &control).unwrap();
        assert_eq!(lo, 1.5);
        assert_eq!(hi, 1.5);
    }

    #[test]
    fn rejects_mismatched_units_and_levels() {
        let a = build_interval(1.0, 1.0, 0.1).unwrap();
        let b = build_interval(0.0, 1.0, 0.1).unwrap();
        assert!(ite_interval(1, &a, 2, &b).is_err());
        let c = build_interval(0.0, 1.0, 0.2).unwrap();
        assert!(ite_interval(1, &a, 1, &c).is_err());
    }
}
