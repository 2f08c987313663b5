"""Joint self-supervised and supervised EEG workload decoding for 4-channel Muse headbands."""

from .data_io import LabeledWindow, LosoFold, load_dataset, loso_splits, synth_generate
from .evaluation import FoldResult, LosoResult, accuracy, macro_f1, predict, report, run_loso
from .model import ModelConfig, forward, init_params
from .signal_prep import EegSegment, RawRecording
from .training import TrainConfig, grad_check, train

__version__ = "0.1.0"
