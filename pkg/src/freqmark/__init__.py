"""Blind, invisible watermarking of time-series datasets in the frequency domain."""

from .codec import WatermarkBits, bits_to_text, bitwise_accuracy, random_bits, text_to_bits
from .dataio import TimeSeriesDataset, gen_synthetic_load, gen_synthetic_pv, load_csv_dataset, save_csv_dataset
from .errors import WatermarkError
from .pipeline import WatermarkBundle, embed_dataset, extract_bits, fine_tune_bundle, train_bundle, verify_dataset
from .training import TrainConfig, fine_tune_config

__version__ = "0.1.0"

__all__ = [
    "TimeSeriesDataset",
    "TrainConfig",
    "fine_tune_config",
    "WatermarkBits",
    "WatermarkBundle",
    "WatermarkError",
    "bits_to_text",
    "bitwise_accuracy",
    "embed_dataset",
    "extract_bits",
    "fine_tune_bundle",
    "gen_synthetic_load",
    "gen_synthetic_pv",
    "load_csv_dataset",
    "random_bits",
    "save_csv_dataset",
    "text_to_bits",
    "train_bundle",
    "verify_dataset",
]
