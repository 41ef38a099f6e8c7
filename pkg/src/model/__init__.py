"""Acoustic model: text encoder, residual attention, VDVAE core, speed predictor."""
from .attention import (
    AlignmentMatrix,
    initial_alignment,
    initial_context,
    refine_prev_alignment,
    residual_attention_head,
    residual_multi_head,
)
from .checkpoint import Checkpoint, load_checkpoint, read_checkpoint, save_checkpoint
from .speed_predictor import frames_from_speed, predict_speed, speed_loss
from .text_encoder import TextEncoding, encode_text, film, positional_encoding
from .vara import InferOutput, TrainOutput, VaraModel, build_model
from .vdvae import LatentHierarchy, LatentLayer, bottom_up, decode_head, top_down_group

__all__ = [
    "AlignmentMatrix",
    "Checkpoint",
    "InferOutput",
    "LatentHierarchy",
    "LatentLayer",
    "TextEncoding",
    "TrainOutput",
    "VaraModel",
    "bottom_up",
    "build_model",
    "decode_head",
    "encode_text",
    "film",
    "frames_from_speed",
    "initial_alignment",
    "initial_context",
    "load_checkpoint",
    "positional_encoding",
    "predict_speed",
    "read_checkpoint",
    "refine_prev_alignment",
    "residual_attention_head",
    "residual_multi_head",
    "save_checkpoint",
    "speed_loss",
    "top_down_group",
]
