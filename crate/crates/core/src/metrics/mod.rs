//! Image-quality metrics, model evaluation and the data-augmentation
//! experiment.

pub mod augment;
pub mod classifier;
pub mod evaluate;
pub mod perceptual;
pub mod quality;
pub mod report;

pub use augment::{
    augmentation_experiment, conventional_augment, normal_augmented_set, synthesize_training_set,
    AccuracyRow, AccuracyTable, AugmentMode, LabeledImage,
};
pub use classifier::{ClassifierConfig, ExpressionClassifier};
pub use evaluate::{
    evaluate_checkpoint, evaluate_model, score, EvalOptions, EvalSample, Evaluation, MetricsReport,
};
pub use perceptual::{inception_score, lpips_like};
pub use quality::{psnr, psnr_images, ssim, ssim_images, Planes, PEAK_8BIT};
