"""Synthetic-video detector: transformer over frozen frame embeddings,
trained with cross-entropy plus an attention-diversity regularizer."""

from .tensor import Tensor, grad_check
from .model import ModelConfig, UniteModel, AttentionBundle, forward, \
    positional_encoding, reduce_tokens, heatmap
from .losses import ADConfig, CenterState, pool_attention, update_centers, \
    within_loss, between_loss, ad_loss, ce_loss, unite_loss
from .data import Manifest, ManifestEntry, VideoSegment, SynthSpec, \
    load_embeddings, write_embedding_file, segment_video, make_batches, \
    synth_dataset
from .training import OptimConfig, TrainState, lr_at, optimizer_step, train
from .evaluation import EvalReport, video_score, threshold_metrics, \
    pr_curve_metrics, evaluate

__version__ = "0.1.0"
