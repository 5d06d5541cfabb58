//! Electrical power drawn by the transmitter array.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::secrecy::Precoder;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConstants {
    /// LED forward voltage, V.
    pub led_forward_voltage: f64,
    /// Fixed circuitry consumption, W.
    pub dc_circuitry: f64,
    /// Equivalent AC resistance (already multiplied by the symbol variance), Ohm.
    pub xi: f64,
}

impl PowerConstants {
    pub fn validate(&self) -> Result<()> {
        if [self.led_forward_voltage, self.dc_circuitry, self.xi].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("power constants must be strictly positive".into()));
        }
        Ok(())
    }
}

/// LED bias power plus circuitry, in watts.
pub fn dc_power(i_dc: &[f64], pc: &PowerConstants) -> f64 {
    pc.led_forward_voltage * i_dc.iter().sum::<f64>() + pc.dc_circuitry
}

/// Signal power `xi * Tr(W W^T)`.
pub fn ac_power(w: &Precoder, pc: &PowerConstants) -> f64 {
    pc.xi * w.frobenius_sq()
}

pub fn total_power(w: &Precoder, i_dc: &[f64], pc: &PowerConstants) -> f64 {
    dc_power(i_dc, pc) + ac_power(w, pc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn reference() -> PowerConstants {
        PowerConstants { led_forward_voltage: 3.3, dc_circuitry: 8.0, xi: 3.0 }
    }

    #[test]
    fn reference_dc_power() {
        assert!((dc_power(&[0.5; 4], &reference()) - 14.6).abs() < 1e-12);
        let w = Precoder::zeros(4, 3);
        assert!((total_power(&w, &[0.5; 4], &reference()) - 14.6).abs() < 1e-12);
    }

    #[test]
    fn dc_power_vanishes_in_the_degenerate_limit() {
        let pc = PowerConstants { dc_circuitry: 0.0, ..reference() };
        assert!(dc_power(&[1e-300; 4], &pc) < 1e-290);
    }

    #[test]
    fn single_entry_ac_power() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 0.2;
        assert!((ac_power(&Precoder::new(m), &reference()) - 0.12).abs() < 1e-15);
        assert_eq!(ac_power(&Precoder::zeros(3, 3), &reference()), 0.0);
    }

    #[test]
    fn doubling_bias_doubles_led_term() {
        let pc = reference();
        let led = |i: &[f64]| dc_power(i, &pc) - pc.dc_circuitry;
        assert!((led(&[1.0, 0.2, 0.3]) - 2.0 * led(&[0.5, 0.1, 0.15])).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn ac_power_is_quadratic_and_rotation_invariant(
            entries in proptest::collection::vec(-1.0f64..1.0, 6),
            c in -3.0f64..3.0,
            theta in 0.0f64..6.3,
        ) {
            let pc = reference();
            let w = Precoder::new(DMatrix::from_vec(3, 2, entries));
            let base = ac_power(&w, &pc);
            let scaled = ac_power(&Precoder::new(w.matrix() * c), &pc);
            prop_assert!((scaled - c * c * base).abs() <= 1e-12 * (1.0 + base * c * c));
            let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
            let rotated = ac_power(&Precoder::new(w.matrix() * rot), &pc);
            prop_assert!((rotated - base).abs() <= 1e-12 * (1.0 + base));
            let total = total_power(&w, &[0.5; 3], &pc);
            prop_assert!(total >= dc_power(&[0.5; 3], &pc));
            prop_assert!((total - dc_power(&[0.5; 3], &pc) - base).abs() < 1e-12);
        }
    }
}
