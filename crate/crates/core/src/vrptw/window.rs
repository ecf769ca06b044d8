use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// A closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window<S> {
    pub start: S,
    pub end: S,
}

impl<S: Scalar> Window<S> {
    pub fn new(start: S, end: S) -> Self {
        Window { start, end }
    }

    pub fn width(&self) -> S {
        self.end - self.start
    }

    pub fn contains(&self, t: S) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Allowed fraction of the soft window width by which service may start early / late.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSlack<S> {
    pub early: S,
    pub late: S,
}

impl<S: Scalar> WindowSlack<S> {
    pub fn new(early: S, late: S) -> Self {
        WindowSlack { early, late }
    }
}

impl<S: Scalar> Default for WindowSlack<S> {
    fn default() -> Self {
        WindowSlack { early: S::of(0.25), late: S::of(0.25) }
    }
}

/// Widens a soft window `(e, l)` into the hard window `(E, L)`:
/// `E = e - early * (l - e)`, `L = l + late * (l - e)`.
pub fn derive_hard_window<S: Scalar>(soft: Window<S>, slack: WindowSlack<S>) -> Result<Window<S>> {
    if !(soft.start < soft.end) {
        return Err(Error::InvalidWindow { start: soft.start.as_f64(), end: soft.end.as_f64() });
    }
    if slack.early < S::zero() || slack.late < S::zero() {
        return Err(Error::InvalidInstance("window slack must be non-negative".into()));
    }
    let width = soft.end - soft.start;
    Ok(Window { start: soft.start - slack.early * width, end: soft.end + slack.late * width })
}

/// Customer satisfaction for a vehicle arriving at `arrival`.
///
/// Zero outside the hard window, one inside the soft window, and linear in between.
pub fn satisfaction<S: Scalar>(arrival: S, hard: Window<S>, soft: Window<S>) -> S {
    if arrival < hard.start || arrival > hard.end {
        S::zero()
    } else if arrival < soft.start {
        (arrival - hard.start) / (soft.start - hard.start)
    } else if arrival <= soft.end {
        S::one()
    } else {
        (hard.end - arrival) / (hard.end - soft.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quarter() -> WindowSlack<f64> {
        WindowSlack::new(0.25, 0.25)
    }

    #[test]
    fn hard_window_examples() {
        assert_eq!(derive_hard_window(Window::new(20.0, 40.0), quarter()).unwrap(), Window::new(15.0, 45.0));
        assert_eq!(derive_hard_window(Window::new(10.0, 30.0), quarter()).unwrap(), Window::new(5.0, 35.0));
        assert_eq!(
            derive_hard_window(Window::new(10.0, 30.0), WindowSlack::new(0.0, 0.0)).unwrap(),
            Window::new(10.0, 30.0)
        );
    }

    #[test]
    fn hard_window_rejects_inverted_soft_window() {
        assert!(matches!(
            derive_hard_window(Window::new(40.0, 40.0), quarter()),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(derive_hard_window(Window::new(50.0, 40.0), quarter()).is_err());
    }

    #[test]
    fn satisfaction_examples() {
        let hard = Window::new(15.0, 45.0);
        let soft = Window::new(20.0, 40.0);
        assert_eq!(satisfaction(30.0, hard, soft), 1.0);
        assert_eq!(satisfaction(17.5, hard, soft), 0.5);
        assert_eq!(satisfaction(46.0, hard, soft), 0.0);
        assert!((satisfaction(44.0, hard, soft) - 0.2f64).abs() < 1e-12);
    }

    #[test]
    fn satisfaction_endpoints() {
        let hard = Window::new(15.0f32, 45.0);
        let soft = Window::new(20.0f32, 40.0);
        assert_eq!(satisfaction(15.0, hard, soft), 0.0);
        assert_eq!(satisfaction(45.0, hard, soft), 0.0);
        assert_eq!(satisfaction(20.0, hard, soft), 1.0);
        assert_eq!(satisfaction(40.0, hard, soft), 1.0);
        // degenerate ramps when the slack is zero
        let tight = Window::new(20.0f32, 40.0);
        assert_eq!(satisfaction(19.9, tight, tight), 0.0);
        assert_eq!(satisfaction(20.0, tight, tight), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn satisfaction_is_bounded_and_continuous(
                e in 0.0f64..200.0, width in 1.0f64..100.0,
                ze in 0.0f64..1.0, zl in 0.0f64..1.0, a in -50.0f64..400.0,
            ) {
                let soft = Window::new(e, e + width);
                let hard = derive_hard_window(soft, WindowSlack::new(ze, zl)).unwrap();
                let s = satisfaction(a, hard, soft);
                prop_assert!((0.0..=1.0).contains(&s));
                if a > hard.start && a < hard.end {
                    let eps = 1e-7;
                    let jump = (satisfaction(a + eps, hard, soft) - s).abs();
                    let max_slope = 1.0 / (ze * width).min(zl * width).max(1e-12);
                    prop_assert!(jump <= eps * max_slope + 1e-9 || ze == 0.0 || zl == 0.0);
                }
            }
        }
    }
}
