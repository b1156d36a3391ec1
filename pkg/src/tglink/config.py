"""Run configuration: flat key=value files, flag overrides, content hashing.

Every tunable lives in one flat RunConfig so a single diff-able text file
describes an experiment. The content hash covers the experiment-defining
fields (not I/O paths), is stamped into every output artifact, and two runs
with equal hash and seed produce identical metric files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ValidationError
from .events import GeneratorSpec
from .model import ModelConfig
from .transfer import ExperimentConfig, TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # architecture
    d_m: int = 32
    d_t: int = 8
    d_att: int = 32
    d_n: int = 32
    message_hidden: tuple[int, ...] = (64,)
    decoder_hidden: tuple[int, ...] = (64,)
    num_neighbors: int = 10
    # structural map
    use_structmap: bool = True
    structmap_hidden: int = 64
    d_p: int = 4
    alpha: float = 1.0
    window_fraction: float = 0.01
    coupled_structmap: bool = False
    # training
    batch_size: int = 100
    lr: float = 1e-3
    epochs: int = 10
    patience: int = 5
    train_negatives: int = 1
    # transfer
    finetune_fraction: float = 0.20
    finetune_lr: float = 3e-4
    eval_negatives: int = 20
    hits_ks: tuple[int, ...] = (1, 5, 10)
    # generator
    num_communities: int = 2
    nodes_per_community: int = 50
    num_events: int = 6000
    p_in: float = 0.9
    p_out: float = 0.1
    pref_attach: float = 1.0
    time_span: float = 1000.0
    # splitting
    balance_tolerance: float = 0.25
    allow_two_way: bool = True
    # csv ingestion
    csv_has_header: str = "auto"
    csv_delimiter: str = ","
    # reproducibility
    seed: int = 0

    def to_flat_dict(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                out[f.name] = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                out[f.name] = "true" if val else "false"
            elif isinstance(val, float):
                out[f.name] = repr(val)
            else:
                out[f.name] = str(val)
        return out

    def content_hash(self) -> str:
        lines = [f"{k}={v}" for k, v in sorted(self.to_flat_dict().items())]
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]

    def model_config(self, d_e: int = 0) -> ModelConfig:
        return ModelConfig(
            d_m=self.d_m,
            d_t=self.d_t,
            d_att=self.d_att,
            d_n=self.d_n,
            d_e=d_e,
            message_hidden=self.message_hidden,
            decoder_hidden=self.decoder_hidden,
            num_neighbors=self.num_neighbors,
            d_p=self.d_p,
            use_structmap=self.use_structmap,
            structmap_hidden=self.structmap_hidden,
            alpha=self.alpha,
            window_fraction=self.window_fraction,
            coupled_structmap=self.coupled_structmap,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            patience=self.patience,
            train_negatives=self.train_negatives,
        )

    def ingestion_config(self):
        from .events import IngestionConfig

        return IngestionConfig(has_header=self.csv_has_header, delimiter=self.csv_delimiter)

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(
            num_communities=self.num_communities,
            nodes_per_community=self.nodes_per_community,
            num_events=self.num_events,
            p_in=self.p_in,
            p_out=self.p_out,
            pref_attach=self.pref_attach,
            time_span=self.time_span,
        )

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            generator=self.generator_spec(),
            model=self.model_config(),
            train=self.train_config(),
            balance_tolerance=self.balance_tolerance,
            allow_two_way=self.allow_two_way,
            eval_negatives=self.eval_negatives,
            hits_ks=self.hits_ks,
            finetune_fraction=self.finetune_fraction,
            finetune_lr=self.finetune_lr,
            config_hash=self.content_hash(),
        )


_INT_TUPLE_FIELDS = {"message_hidden", "decoder_hidden", "hits_ks"}


def _parse_value(name: str, raw: str, target_type: type):
    raw = raw.strip()
    if name in _INT_TUPLE_FIELDS:
        if not raw:
            return ()
        return tuple(int(x) for x in raw.split(","))
    if target_type is bool:
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ValidationError(f"bad boolean for {name}: {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key = value` lines; '#' comments and blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def build_run_config(
    file_values: dict[str, str] | None = None, overrides: dict[str, object] | None = None
) -> RunConfig:
    """Defaults -> config file -> explicit overrides (flags win)."""
    kwargs: dict[str, object] = {}
    known = {f.name: f.type for f in fields(RunConfig)}
    defaults = RunConfig()
    for name, raw in (file_values or {}).items():
        if name not in known:
            raise ValidationError(f"unknown config key {name!r}")
        kwargs[name] = _parse_value(name, raw, type(getattr(defaults, name)))
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in known:
            raise ValidationError(f"unknown config key {name!r}")
        kwargs[name] = value
    return RunConfig(**kwargs)
