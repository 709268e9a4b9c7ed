from .builders import (DiscriminatorConfig, GeneratorConfig, UNetConfig, build_discriminator, build_eps_unet,
                       build_generator)
from .layers import LAYER_KINDS
from .network import Network
from .optim import OptimizerConfig, adamw_step, ema_update

__all__ = [
    "DiscriminatorConfig", "GeneratorConfig", "UNetConfig", "build_discriminator", "build_eps_unet",
    "build_generator", "LAYER_KINDS", "Network", "OptimizerConfig", "adamw_step", "ema_update",
]
