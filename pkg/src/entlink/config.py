"""Pipeline configuration shared by training, decoding and the CLI."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning knobs for the whole pipeline, with their established defaults."""

    max_candidates: int = 40     # per-mention candidate cap at retrieval
    sigma: float = 0.5           # L2 regularization strength
    gap: int = 4                 # max tokens between mentions in one component
    context_window: int = 100    # total tokens around a mention, half per side
    top_n: int = 200             # size of the top-terms page vector
    tuple_budget: int = 100_000  # max joint assignments enumerated per component

    def validate(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        if self.context_window < 2 or self.context_window % 2 != 0:
            raise ValueError("context_window must be a positive even number")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.tuple_budget < 1:
            raise ValueError("tuple_budget must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "PipelineConfig":
        config = PipelineConfig(**data)
        config.validate()
        return config
