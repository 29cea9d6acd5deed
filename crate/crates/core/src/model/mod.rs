//! Frozen feature backbone, bottleneck adapter, the classifier families, and
//! softmax cross-entropy with analytic head gradients.

mod adapter;
mod backbone;
mod head;
mod loss;

pub use adapter::Adapter;
pub use backbone::FrozenBackbone;
pub use head::{ClassifierHead, HeadFamily, DEFAULT_COSINE_SCALE};
pub use loss::{cross_entropy, softmax, LossValue};
