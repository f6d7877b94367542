//! Multi-target prediction: the samples of one group are stacked along the
//! batch axis and predicted in a single forward pass.

use trajtensor_core::models::Model;
use trajtensor_core::Tensor;
use trajtensor_datagen::MctfSample;

use crate::error::Result;
use crate::features::{Encoder, View};
use crate::fitting::{tensor_model, Fitted};

/// One forward pass over the stacked `inputs` (each without a batch axis),
/// split back into per-target outputs.
pub fn stacked_predict(model: &Model, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let y = model.predict(&Tensor::stack(inputs)?)?;
    Ok((0..inputs.len()).map(|i| y.index_outer(i)).collect())
}

/// Predictions for every sample of a group, in group order. Tensor families
/// run one batch-stacked pass; other methods predict each target in turn.
pub fn predict_multi_target(fitted: &Fitted, enc: &Encoder, group: &[&MctfSample]) -> Result<Vec<Tensor>> {
    if group.is_empty() {
        return Ok(Vec::new());
    }
    match tensor_model(fitted) {
        Some(model) => {
            let inputs = group
                .iter()
                .map(|s| enc.tensor_input(s, View::Multi))
                .collect::<Result<Vec<_>>>()?;
            stacked_predict(model, &inputs)
        }
        None => {
            log::info!("method has no joint input; predicting {} targets sequentially", group.len());
            let mut out = Vec::with_capacity(group.len());
            for s in group {
                out.extend(fitted.predict(enc, &[*s], View::Multi)?);
            }
            Ok(out)
        }
    }
}
