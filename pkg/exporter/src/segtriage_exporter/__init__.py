from .data import CLASS_NAMES, Sample, make_dataset, make_sample
from .export import export_bundles, mc_probability_stack
from .model import ToyDropoutUnet, enable_mc_dropout
from .train import (
    ExporterConfig,
    class_spec,
    load_checkpoint,
    save_checkpoint,
    train_toy_unet,
)

__all__ = [
    "CLASS_NAMES",
    "Sample",
    "make_dataset",
    "make_sample",
    "export_bundles",
    "mc_probability_stack",
    "ToyDropoutUnet",
    "enable_mc_dropout",
    "ExporterConfig",
    "class_spec",
    "load_checkpoint",
    "save_checkpoint",
    "train_toy_unet",
]
