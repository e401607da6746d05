from dataclasses import dataclass, field

import numpy as np

NOISE_KINDS = ("gaussian_iid", "bounded_uniform", "bernoulli_residual")


@dataclass
class NoiseSpec:
    kind: str = field(default="gaussian_iid", metadata={
        "help": "gaussian_iid, bounded_uniform or bernoulli_residual (binary_probit only)"})
    scale: float = field(default=1.0, metadata={
        "help": "standard deviation (gaussian_iid) or half-width (bounded_uniform)"})
    moment_exponent: float = field(default=4.0, metadata={
        "help": "the moment exponent > 2 of the noise assumption; informational"})

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"Unknown noise kind {self.kind!r}, choose from {NOISE_KINDS}")
        if self.scale < 0:
            raise ValueError(f"Noise scale must be >= 0, got {self.scale}")
        if self.moment_exponent <= 2:
            raise ValueError(f"moment_exponent must be > 2, got {self.moment_exponent}")

    @property
    def bounded(self) -> bool:
        return self.kind != "gaussian_iid"

    def sample(self, rng, n: int) -> np.ndarray:
        """Additive process noise w_{t+1}; bernoulli_residual noise is produced by the dynamics."""
        if self.kind == "gaussian_iid":
            return self.scale * rng.standard_normal(n)
        if self.kind == "bounded_uniform":
            return rng.uniform(-self.scale, self.scale, n)
        raise ValueError("bernoulli_residual noise has no additive sample; it comes from the latent draw")
