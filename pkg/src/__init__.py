"""vara-tts - desk-scale hierarchical VAE acoustic model with residual attention."""

__version__ = "0.1.0"
