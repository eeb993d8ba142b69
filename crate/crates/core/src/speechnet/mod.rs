//! Speech-emotion branch: a 1D convolutional classifier over 180-dim clip
//! features, its training loop, windowed timelines over a recording, and
//! classification metrics.

mod dataset;
pub mod layers;
pub mod metrics;
mod model;
mod persist;
mod timeline;
mod train;

pub use dataset::{load_speech_dataset, read_speech_index, speech_label_index};
pub use metrics::{confusion_matrix, macro_average, prf_macro, ClassMetrics, PrfReport};
pub use model::{
    cnn_forward, cross_entropy, Adam, CnnModel, ForwardCache, Gradients, Mode, ParamCounts,
    CONV1_FILTERS, CONV1_KERNEL, CONV1_OUT_LEN, CONV2_FILTERS, CONV2_KERNEL, CONV2_OUT_LEN,
    FLAT_LEN, HIDDEN, INPUT_LEN, N_SPEECH_CLASSES,
};
pub use persist::{CnnHeader, TensorInfo, CNN_FORMAT_VERSION, CNN_MAGIC};
pub use timeline::{
    predict_emotion_timeline, window_bounds, window_features, EmotionTimeline, TimelineWindow,
    HOP_SECONDS, MIN_TRAILING_SECONDS, WINDOW_SECONDS,
};
pub use train::{
    accuracy, continue_training, train_cnn, train_step, EpochRecord, SpeechDataset, TrainConfig,
    TrainingHistory,
};

/// Initializes a fresh network; see [`CnnModel::init`].
pub fn init_cnn(seed: u64) -> CnnModel {
    CnnModel::init(seed)
}

#[cfg(test)]
mod tests;
