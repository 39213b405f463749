"""Python bindings for the distributed conditional GAN core."""

from ._asyndgan import (
    ConfigError,
    ContractViolation,
    DomainError,
    PrecisionError,
    RunFailure,
    aji,
    comm_cost,
    connected_components,
    decode_frame,
    dice,
    encode_fake_batch,
    gaussian_pair_loss,
    gradient_sharing_cost,
    hd95,
    jaccard,
    js_divergence,
    parse_config,
    sample_mixture,
    sensitivity,
    specificity,
    theorem_checks,
    train,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "DomainError",
    "PrecisionError",
    "RunFailure",
    "aji",
    "comm_cost",
    "connected_components",
    "decode_frame",
    "dice",
    "encode_fake_batch",
    "gaussian_pair_loss",
    "gradient_sharing_cost",
    "hd95",
    "jaccard",
    "js_divergence",
    "parse_config",
    "sample_mixture",
    "sensitivity",
    "specificity",
    "theorem_checks",
    "train",
]
