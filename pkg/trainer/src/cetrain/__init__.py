"""Trainer for the residual channel denoiser.

Consumes workbench dataset files, trains with RB-aligned zero masking and a
masked loss, and exports weights in the native engine's binary format.
"""

from .data import GridInfo, MaskPolicy, Record, mask_rb_ranges, prepare_sample, read_dataset
from .export import export_weights
from .model import Denoiser, masked_loss
from .train import TrainConfig, train

__version__ = "0.1.0"
