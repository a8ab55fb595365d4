//! Query-cost model for the embedding codec: hiding n bits takes n/h chunks
//! at c model queries each, and every query bills its prompt and completion
//! tokens separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Bits to hide.
    pub n_bits: u64,
    /// Bits per chunk (hash width).
    pub bits_per_chunk: u64,
    /// Expected queries per chunk; defaults to 2^bits_per_chunk, the
    /// expectation for a uniform hash.
    #[serde(default)]
    pub queries_per_chunk: Option<f64>,
    /// Prompt tokens per query.
    pub input_tokens: f64,
    /// Completion tokens per query.
    pub output_tokens: f64,
    /// Currency per prompt token.
    pub price_in: f64,
    /// Currency per completion token.
    pub price_out: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if self.bits_per_chunk == 0 {
            return Err(Error::invalid("bits_per_chunk must be at least 1"));
        }
        let fields = [
            ("queries_per_chunk", self.queries_per_chunk.unwrap_or(0.0)),
            ("input_tokens", self.input_tokens),
            ("output_tokens", self.output_tokens),
            ("price_in", self.price_in),
            ("price_out", self.price_out),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Effective queries per chunk, filling in 2^h when unset.
    pub fn effective_queries(&self) -> f64 {
        self.queries_per_chunk
            .unwrap_or_else(|| 2f64.powi(self.bits_per_chunk.min(62) as i32))
    }
}

/// Total cost: (n / h) * c * (W * p_in + T * p_out).
pub fn total_cost(model: &CostModel) -> Result<f64> {
    model.validate()?;
    let chunks = model.n_bits as f64 / model.bits_per_chunk as f64;
    let per_query = model.input_tokens * model.price_in + model.output_tokens * model.price_out;
    Ok(chunks * model.effective_queries() * per_query)
}
