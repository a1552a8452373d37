from .app import SidecarConfig, create_app, load_config
from .encoder import HashEncoder, TransformerEncoder, build_encoder

__all__ = [
    "HashEncoder",
    "SidecarConfig",
    "TransformerEncoder",
    "build_encoder",
    "create_app",
    "load_config",
]
