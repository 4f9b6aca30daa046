//! Inference-time procedures: retargeting, interpolation, and regression
//! of unseen identities onto the training label basis. All run off-graph
//! on the posterior mean, so they are pure functions of (inputs, weights).

use crate::error::{Error, Result};
use crate::tensor::{no_grad, Element, Tensor};

use super::{IdentityClassifier, MultiViewModel};

fn check_id<E: Element>(model: &MultiViewModel<E>, what: &str, id: usize) -> Result<()> {
    if id >= model.config.num_identities {
        return Err(Error::contract(format!(
            "{what} {id} out of range for {} identities",
            model.config.num_identities
        )));
    }
    Ok(())
}

/// Re-render `x` under `target_id`, keeping its encoded semantics. Only the
/// image branch runs; retargeting with `target_id == source_id` is exactly
/// reconstruction.
pub fn retarget<E: Element>(
    model: &MultiViewModel<E>,
    x: &Tensor<E>,
    source_id: usize,
    target_id: usize,
) -> Result<Tensor<E>> {
    check_id(model, "source id", source_id)?;
    check_id(model, "target id", target_id)?;
    no_grad(|| {
        let (mu, _) = model.image.encode(x)?;
        let labels = vec![target_id; x.shape()[0]];
        model.image.decode(&mu, &labels)
    })
}

/// Reconstruction through the image branch at the posterior mean.
pub fn reconstruct<E: Element>(model: &MultiViewModel<E>, x: &Tensor<E>, id: usize) -> Result<Tensor<E>> {
    retarget(model, x, id, id)
}

/// Decode `(1-t) * z1 + t * z2` under `render_id`; the endpoints reproduce
/// the plain retargets bit for bit.
pub fn interpolate<E: Element>(
    model: &MultiViewModel<E>,
    x1: &Tensor<E>,
    x2: &Tensor<E>,
    t: f64,
    render_id: usize,
) -> Result<Tensor<E>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::contract(format!("interpolation t = {t} outside [0, 1]")));
    }
    check_id(model, "render id", render_id)?;
    no_grad(|| {
        let (z1, _) = model.image.encode(x1)?;
        let (z2, _) = model.image.encode(x2)?;
        let z = if t == 0.0 {
            z1
        } else if t == 1.0 {
            z2
        } else {
            z1.scale(E::of_f64(1.0 - t)).add(&z2.scale(E::of_f64(t)))?
        };
        let labels = vec![render_id; x1.shape()[0]];
        model.image.decode(&z, &labels)
    })
}

/// Express an unseen person as a soft combination of the known identities:
/// the mean of the classifier's probability outputs over their image set.
/// The result sums to 1 and can stand in for a 1-hot label when decoding.
pub fn regress_new_identity<E: Element>(
    classifier: &IdentityClassifier<E>,
    images: &Tensor<E>,
) -> Result<Vec<f64>> {
    let m = images.shape()[0];
    if m == 0 {
        return Err(Error::contract("regress_new_identity: empty image set"));
    }
    let probs = classifier.predict_probs(images)?;
    let n = classifier.num_classes();
    let mut soft = vec![0.0f64; n];
    for row in &probs {
        for (s, p) in soft.iter_mut().zip(row) {
            *s += p;
        }
    }
    for s in soft.iter_mut() {
        *s /= m as f64;
    }
    Ok(soft)
}

/// Retarget onto a soft identity label (the new-identity path).
pub fn retarget_soft<E: Element>(
    model: &MultiViewModel<E>,
    x: &Tensor<E>,
    soft_label: &[f64],
) -> Result<Tensor<E>> {
    if soft_label.len() != model.config.num_identities {
        return Err(Error::contract(format!(
            "soft label of {} entries for {} identities",
            soft_label.len(),
            model.config.num_identities
        )));
    }
    no_grad(|| {
        let (mu, _) = model.image.encode(x)?;
        let b = x.shape()[0];
        let mut rows = Vec::with_capacity(b * soft_label.len());
        for _ in 0..b {
            rows.extend(soft_label.iter().map(|&v| E::of_f64(v)));
        }
        let soft = Tensor::from_vec(rows, &[b, soft_label.len()])?;
        model.image.decode_soft(&mu, &soft)
    })
}
