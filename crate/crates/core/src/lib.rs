//! Post-training quantization where each weight is a nested superposition of
//! powers of two, so multiplication reduces to shifts and additions.
//!
//! A code word carries a sign, a basic exponent field that fixes the
//! magnitude range, and optional subdivision fields that refine it:
//!
//! ```
//! use ausn_core::{quantize_value, reconstruct, BitLayout, Mode};
//!
//! let layout = BitLayout::new(6, 3, &[2]).unwrap();
//! let code = quantize_value(0.75, &layout, 0, Mode::Floor).unwrap();
//! assert_eq!(reconstruct(&code, &layout, 0).unwrap(), 0.75);
//! ```

pub mod analysis;
pub mod coding;
pub mod dyadic;
pub mod error;
pub mod error_model;
pub mod hwcost;
pub mod io;
pub mod pow2;
mod quadrature;
pub mod quantizer;
pub mod rounding;
pub mod tensor;

pub use analysis::{kl_information_loss, sqnr, total_information_loss, InfoLossReport, Sqnr};
pub use coding::{pack, unpack, BitLayout, CodeWord, PowerBasis, Sign};
pub use dyadic::Dyadic;
pub use error::{Error, Result};
pub use error_model::{analytic_errors, empirical_errors, search_layout, ErrorPair, SearchResult};
pub use hwcost::{ccr, lut_cost, roofline_attainable, LayerDesc, RooflineConfig, Scheme};
pub use quantizer::{
    dequantize_tensor, quantize_tensor, quantize_value, reconstruct, representable_set, scale_exponent, Mode,
    QuantizedTensor,
};
pub use rounding::{compress, dot_product, Accumulation, DotConfig, DotOutput, PowerPoly, RoundingBudget};
pub use tensor::{OriginStats, Tensor};
