"""Published full-scale training configurations, shipped as reference data only.

Nothing in this package trains at these scales; the tables exist so configs
can be echoed or exported next to desk-scale results.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class BenchmarkPreset:
    dataset: str
    layers: int
    hidden: int
    heads: int
    dropout: float
    attn_dropout: float
    pooling: str | None      # None for node-level tasks
    rw_steps: int
    pe_encoder: str
    batch_size: int | str
    lr: float
    epochs: int
    warmup_epochs: int
    weight_decay: float
    num_params: str

    def as_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, BenchmarkPreset] = {p.dataset: p for p in (
    BenchmarkPreset("ZINC", 10, 64, 8, 0.0, 0.2, "sum", 21, "linear", "32/256", 1e-3, 2000, 50, 1e-5, "473,473"),
    BenchmarkPreset("MNIST", 3, 52, 4, 0.0, 0.5, "mean", 18, "linear", 16, 1e-3, 200, 5, 1e-5, "102,138"),
    BenchmarkPreset("CIFAR10", 3, 52, 4, 0.0, 0.5, "mean", 18, "linear", 16, 1e-3, 200, 5, 1e-5, "99,486"),
    BenchmarkPreset("PATTERN", 10, 64, 8, 0.0, 0.2, None, 21, "linear", 32, 5e-4, 100, 5, 1e-5, "477,953"),
    BenchmarkPreset("CLUSTER", 16, 48, 8, 0.01, 0.5, None, 32, "linear", 16, 5e-4, 100, 5, 1e-5, "432,206"),
    BenchmarkPreset("Peptides-func", 4, 96, 4, 0.0, 0.5, "mean", 17, "linear", 32, 3e-4, 200, 5, 0.0, "443,338"),
    BenchmarkPreset("Peptides-struct", 4, 96, 8, 0.0, 0.5, "mean", 24, "linear", 32, 3e-4, 200, 5, 0.0, "438,827"),
    BenchmarkPreset("PCQM4Mv2", 16, 256, 8, 0.1, 0.1, "mean", 16, "linear", 256, 2e-4, 150, 10, 0.0, "15.3M"),
)}
PRESETS["ZINC-full"] = PRESETS["ZINC"]


def get_preset(name: str) -> BenchmarkPreset:
    for key, p in PRESETS.items():
        if key.lower() == name.lower():
            return p
    raise KeyError(f"no preset named {name!r}; known: {', '.join(sorted(PRESETS))}")
