from flow.prior import TrainConfig, euler_sample, euler_step, fm_loss, interpolate, predict_clean, train_prior
from flow.velocity import VelocityMLP, VelocityModel, VelocityNetwork, load_velocity_model

__all__ = [
    "TrainConfig", "euler_sample", "euler_step", "fm_loss", "interpolate", "predict_clean", "train_prior",
    "VelocityMLP", "VelocityModel", "VelocityNetwork", "load_velocity_model",
]
