from __future__ import annotations

from dataclasses import dataclass, fields

from ..models import TaskMode


@dataclass(frozen=True)
class RoundConfig:
    """Optimisation knobs shared by every protocol.

    Step counts (server, generator, client distillation) may be zero, which
    switches that phase off; everything else must be positive.
    """

    local_epochs: int = 1
    local_batch_size: int = 32
    local_lr: float = 0.05
    server_steps: int = 50
    server_batch_size: int = 64
    server_lr: float = 0.05
    generator_steps: int = 50
    generator_lr: float = 0.02
    client_distill_steps: int = 10
    total_rounds: int = 10
    uniform_predictor_weights: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "uniform_predictor_weights":
                continue
            if f.name in ("server_steps", "generator_steps", "client_distill_steps"):
                if v < 0:
                    raise ValueError(f"{f.name} must be non-negative, got {v}")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v}")


@dataclass(frozen=True)
class ArchConfig:
    latent_dim: int = 16
    hidden: tuple[int, ...] = (64, 64)
    predictor_hidden: tuple[int, ...] = ()
    generator_hidden: tuple[int, ...] = (64,)
    noise_dim: int = 8

    def __post_init__(self):
        widths = (self.latent_dim, self.noise_dim, *self.hidden, *self.predictor_hidden, *self.generator_hidden)
        if any(w <= 0 for w in widths):
            raise ValueError("all layer widths must be positive")


@dataclass(frozen=True)
class RunSettings:
    rounds: RoundConfig = RoundConfig()
    arch: ArchConfig = ArchConfig()
    mode: TaskMode = TaskMode.MULTICLASS
    wire_bytes: int = 4
    ci_resamples: int = 1000
    ci_level: float = 0.95
    ci_every_round: bool = False
    convergence_tolerance: float = 0.005  # 0.5 mAUC points

    def __post_init__(self):
        if self.wire_bytes <= 0:
            raise ValueError("wire_bytes must be positive")
        if self.ci_resamples < 0:
            raise ValueError("ci_resamples must be non-negative")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")
