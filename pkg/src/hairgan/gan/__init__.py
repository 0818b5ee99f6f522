from .losses import (gram, gradient_penalty, loss_content, loss_discriminator,
                     loss_generator_star, loss_generator_wgan, loss_style)
from .networks import (ScaleConfig, discriminator_features,
                       discriminator_score, expected_shapes,
                       generator_forward, init_discriminator, init_generator,
                       init_pnet, net_input, pnet_forward)
from .train import (GanState, Hyper, adam_step, init_state, load_state,
                    save_state, train)

__all__ = [
    "GanState", "Hyper", "ScaleConfig", "adam_step",
    "discriminator_features", "discriminator_score", "expected_shapes",
    "generator_forward", "gradient_penalty", "gram", "init_discriminator",
    "init_generator", "init_pnet", "init_state", "load_state",
    "loss_content", "loss_discriminator", "loss_generator_star",
    "loss_generator_wgan", "loss_style", "net_input", "pnet_forward",
    "save_state", "train",
]
