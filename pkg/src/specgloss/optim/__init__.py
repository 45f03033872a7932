from .adam import Adam
from .losses import (
    loss_color,
    loss_color_grad,
    loss_diffuse_prior,
    loss_diffuse_prior_grad,
    loss_light_white,
    loss_light_white_grad,
    loss_normal_consistency,
    loss_normal_consistency_grad,
    loss_normal_prior,
    loss_normal_prior_grad,
)
from .train import (
    LossWeights,
    NumericalDivergence,
    TrainConfig,
    TrainState,
    ViewData,
    build_env,
    fit,
    initial_materials,
    prepare_view,
    render_view,
    save_checkpoint,
    total_loss,
    write_history,
)

__all__ = [
    "Adam",
    "LossWeights",
    "NumericalDivergence",
    "TrainConfig",
    "TrainState",
    "ViewData",
    "build_env",
    "fit",
    "initial_materials",
    "loss_color",
    "loss_color_grad",
    "loss_diffuse_prior",
    "loss_diffuse_prior_grad",
    "loss_light_white",
    "loss_light_white_grad",
    "loss_normal_consistency",
    "loss_normal_consistency_grad",
    "loss_normal_prior",
    "loss_normal_prior_grad",
    "prepare_view",
    "render_view",
    "save_checkpoint",
    "total_loss",
    "write_history",
]
