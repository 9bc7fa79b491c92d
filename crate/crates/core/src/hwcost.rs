//! Analytic LUT, computation-to-communication and roofline model.
//!
//! LUT counts follow a linear model calibrated at 6-bit operands: a shift
//! multiplier costs 2 LUTs per result bit (result width `a + w`), an
//! exponent adder costs 4 LUTs per 2-bit chunk of `max(a, w)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fixed-point activation shifted by a power-of-two weight.
    ShiftMult,
    /// Exponent addition of two superposition codes.
    AusnAdd,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" | "shift_mult" => Ok(Scheme::ShiftMult),
            "ausn" | "ausn_add" => Ok(Scheme::AusnAdd),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutCost {
    pub luts: u32,
    pub result_bits: u32,
}

pub fn lut_cost(scheme: Scheme, a_bits: u32, w_bits: u32) -> Result<LutCost> {
    for b in [a_bits, w_bits] {
        if !(2..=16).contains(&b) {
            return Err(Error::InvalidArgument(format!("bit width {b} outside 2..=16")));
        }
    }
    Ok(match scheme {
        Scheme::ShiftMult => {
            let result_bits = a_bits + w_bits;
            LutCost { luts: 2 * result_bits, result_bits }
        }
        Scheme::AusnAdd => {
            let width = a_bits.max(w_bits);
            LutCost { luts: 4 * width.div_ceil(2), result_bits: width + 1 }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub ops: f64,
    pub weight_elems: f64,
    pub output_elems: f64,
    pub bytes_per_elem: f64,
}

impl LayerDesc {
    /// 32-bit float storage.
    pub fn f32(ops: f64, weight_elems: f64, output_elems: f64) -> Self {
        LayerDesc { ops, weight_elems, output_elems, bytes_per_elem: 4.0 }
    }
}

/// Operations per byte of external memory traffic.
pub fn ccr(layer: &LayerDesc) -> Result<f64> {
    let fields = [layer.ops, layer.weight_elems, layer.output_elems, layer.bytes_per_elem];
    if fields.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(format!("layer fields must be finite and non-negative: {layer:?}")));
    }
    let bytes = layer.bytes_per_elem * (layer.weight_elems + layer.output_elems);
    if bytes == 0.0 {
        return Err(Error::UndefinedMetric("CCR with zero memory traffic"));
    }
    if layer.ops == 0.0 {
        return Err(Error::UndefinedMetric("CCR with zero operations"));
    }
    Ok(layer.ops / bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflineConfig {
    /// Bytes per second.
    pub bandwidth: f64,
    /// Operations per second.
    pub peak: f64,
}

impl RooflineConfig {
    pub fn new(bandwidth: f64, peak: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && peak > 0.0) {
            return Err(Error::InvalidArgument("bandwidth and peak must be positive".into()));
        }
        Ok(RooflineConfig { bandwidth, peak })
    }

    /// CCR at which the bandwidth and compute roofs meet.
    pub fn ridge(&self) -> f64 {
        self.peak / self.bandwidth
    }
}

pub fn roofline_attainable(ccr: f64, cfg: &RooflineConfig) -> Result<f64> {
    if ccr.is_nan() || ccr <= 0.0 {
        return Err(Error::InvalidArgument(format!("CCR must be positive, got {ccr}")));
    }
    Ok(cfg.peak.min(ccr * cfg.bandwidth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    MultiplierAccumulator,
    ShiftAddWithDecoder,
    ShiftAddSuperposition,
}

/// One published FPGA synthesis measurement of a 64x64 MAC array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRow {
    pub design: Design,
    pub input_bits: u32,
    pub weight_bits: u32,
    pub lut: u32,
    pub ff: u32,
    pub energy_watts: f64,
    /// Value looks inconsistent with its neighbours; kept as published.
    pub suspect: bool,
}

/// Published reduction factors of the superposition design (LUT, FF, power).
pub const REFERENCE_SAVINGS: (f64, f64, f64) = (2.0, 4.4, 1.9);

/// Reference synthesis results, not computed by this crate.
pub fn reference_table() -> &'static [SynthesisRow] {
    use Design::*;
    const fn row(design: Design, w: u32, lut: u32, ff: u32, energy_watts: f64, suspect: bool) -> SynthesisRow {
        SynthesisRow { design, input_bits: 8, weight_bits: w, lut, ff, energy_watts, suspect }
    }
    const TABLE: [SynthesisRow; 9] = [
        row(MultiplierAccumulator, 8, 212388, 192293, 4.21, false),
        row(MultiplierAccumulator, 5, 187262, 143142, 3.75, false),
        row(MultiplierAccumulator, 4, 181248, 108729, 3.67, false),
        row(ShiftAddWithDecoder, 8, 225280, 86317, 4.51, false),
        // FF count an order of magnitude above its neighbours
        row(ShiftAddWithDecoder, 5, 212942, 512731, 4.26, true),
        row(ShiftAddWithDecoder, 4, 203712, 45729, 4.07, false),
        row(ShiftAddSuperposition, 8, 133120, 54313, 2.65, false),
        row(ShiftAddSuperposition, 5, 112071, 45127, 2.24, false),
        row(ShiftAddSuperposition, 4, 108544, 44032, 2.17, false),
    ];
    &TABLE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lut_calibration_points() {
        assert_eq!(lut_cost(Scheme::ShiftMult, 6, 6).unwrap(), LutCost { luts: 24, result_bits: 12 });
        assert_eq!(lut_cost(Scheme::AusnAdd, 6, 6).unwrap(), LutCost { luts: 12, result_bits: 7 });
        assert_eq!(lut_cost(Scheme::ShiftMult, 8, 8).unwrap().luts, 32);
        assert_eq!(lut_cost(Scheme::AusnAdd, 5, 3).unwrap().luts, 12);
        assert!(lut_cost(Scheme::AusnAdd, 1, 6).is_err());
        assert!(lut_cost(Scheme::ShiftMult, 6, 17).is_err());
    }

    #[test]
    fn adder_always_cheaper() {
        for b in 2..=16 {
            assert!(lut_cost(Scheme::AusnAdd, b, b).unwrap().luts < lut_cost(Scheme::ShiftMult, b, b).unwrap().luts);
        }
    }

    #[test]
    fn ccr_examples() {
        let layer = LayerDesc::f32(1000.0, 50.0, 75.0);
        assert_eq!(ccr(&layer).unwrap(), 2.0);
        let half = LayerDesc { bytes_per_elem: 2.0, ..layer };
        assert_eq!(ccr(&half).unwrap(), 4.0);
        let five_bit = LayerDesc { bytes_per_elem: 0.625, ..layer };
        assert!((ccr(&five_bit).unwrap() / ccr(&layer).unwrap() - 6.4).abs() < 1e-12);
        let scaled = LayerDesc::f32(3000.0, 150.0, 225.0);
        assert_eq!(ccr(&scaled).unwrap(), ccr(&layer).unwrap());
        assert!(ccr(&LayerDesc::f32(10.0, 0.0, 0.0)).is_err());
        assert!(ccr(&LayerDesc::f32(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn roofline_branches() {
        let cfg = RooflineConfig::new(10.0, 100.0).unwrap();
        assert_eq!(roofline_attainable(20.0, &cfg).unwrap(), 100.0);
        assert_eq!(roofline_attainable(2.0, &cfg).unwrap(), 20.0);
        let r = cfg.ridge();
        assert_eq!(roofline_attainable(r, &cfg).unwrap(), cfg.peak);
        assert_eq!(r * cfg.bandwidth, cfg.peak);
        assert!(roofline_attainable(0.0, &cfg).is_err());
        assert!(RooflineConfig::new(0.0, 1.0).is_err());
    }

    #[test]
    fn roofline_monotone() {
        let mut last = 0.0;
        for i in 1..200 {
            let x = i as f64 * 0.1;
            let v = roofline_attainable(x, &RooflineConfig::new(3.0, 25.0).unwrap()).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn reference_rows() {
        let t = reference_table();
        assert_eq!(t.len(), 9);
        let ours88 = t.iter().find(|r| r.design == Design::ShiftAddSuperposition && r.weight_bits == 8).unwrap();
        assert_eq!((ours88.lut, ours88.ff, ours88.energy_watts), (133120, 54313, 2.65));
        let mac84 = t.iter().find(|r| r.design == Design::MultiplierAccumulator && r.weight_bits == 4).unwrap();
        assert_eq!((mac84.lut, mac84.ff, mac84.energy_watts), (181248, 108729, 3.67));
        let dec85 = t.iter().find(|r| r.design == Design::ShiftAddWithDecoder && r.weight_bits == 5).unwrap();
        assert_eq!((dec85.lut, dec85.ff, dec85.energy_watts), (212942, 512731, 4.26));
        assert_eq!(t.iter().filter(|r| r.suspect).count(), 1);
    }
}
