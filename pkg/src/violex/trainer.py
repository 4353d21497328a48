"""Two-phase fine-tuning loop with grouped learning rates and schedules.

Phase 1 runs a fixed number of epochs under the configured schedule
(warmup + linear decay, or cosine) and keeps the best dev checkpoint.
Phase 2 restarts from that checkpoint at a reduced constant rate and trains
until the dev metric stops improving (early stopping with patience), again
returning the best checkpoint seen in either phase.

NER models use two learning-rate groups (backbone vs. freshly initialized
heads); NLI models use a single group. The optimizer is AdamW with weight
decay excluded from biases and normalization parameters, plus gradient
clipping at global norm 1.0 to keep the toy encoder from diverging.
"""
from __future__ import annotations

import configparser
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import torch

from .corpus import ENTITY_TYPES, NLI_LABELS, NliRecord
from .errors import (
    EmptyDataset,
    LeakageError,
    MalformedRecord,
    NonFiniteLoss,
    UnclassifiedParameter,
)
from .metrics import entity_prf, nli_domain_f1
from .nli import NliConfig, NliModel, classify, loo_splits, nli_logits
from .span_ner import (
    DecodeConfig,
    FocalConfig,
    SpanScorer,
    SpanScorerConfig,
    enumerate_spans,
    focal_loss,
    score_spans,
    span_targets,
)

SCHEDULERS = ("warmup_linear", "cosine")
TASKS = ("ner", "nli")

#: Per-task defaults for the fields whose default depends on the task.
_TASK_DEFAULTS = {
    "ner": {"phase2_lr": 5e-6, "max_epochs_phase1": 10, "scheduler": "warmup_linear"},
    "nli": {"phase2_lr": 2e-6, "max_epochs_phase1": 7, "scheduler": "cosine"},
}


@dataclass(frozen=True)
class TrainConfig:
    task: str
    seed: int
    batch_size: int = 8
    backbone_lr: float = 1e-5
    head_lr: float = 5e-5
    nli_lr: float = 2e-5
    phase2_lr: float | None = None
    max_epochs_phase1: int | None = None
    warmup_fraction: float = 0.10
    scheduler: str | None = None
    patience: int = 3
    focal: FocalConfig = field(default_factory=FocalConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    #: Safety cap so "until convergence" cannot loop forever.
    max_epochs_phase2: int = 100
    weight_decay: float = 0.01
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        for name in ("phase2_lr", "max_epochs_phase1", "scheduler"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, _TASK_DEFAULTS[self.task][name])
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1]")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        phase1_floor = min(self.backbone_lr, self.head_lr) if self.task == "ner" else self.nli_lr
        if not 0.0 < self.phase2_lr < phase1_floor:
            raise ValueError("phase2_lr must be positive and below the phase-1 rates")


@dataclass
class Checkpoint:
    """A parameter snapshot plus the dev metric that selected it."""

    state: dict[str, torch.Tensor]
    dev_metric: float
    epoch: int
    phase: int
    task: str = ""
    held_out_domain: str | None = None
    train_domains: tuple[str, ...] = ()

    @classmethod
    def snapshot(cls, model: torch.nn.Module, dev_metric: float, epoch: int,
                 phase: int, task: str = "") -> "Checkpoint":
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        return cls(state=state, dev_metric=dev_metric, epoch=epoch, phase=phase, task=task)


# --- parameter groups ---------------------------------------------------------

_BACKBONE_PREFIXES = ("token_encoder.", "label_encoder.", "encoder.")
_HEAD_PREFIXES = ("span_head.", "label_proj.", "fusion.", "head.")


@dataclass(frozen=True)
class ParamGroup:
    names: tuple[str, ...]
    params: tuple[torch.nn.Parameter, ...]
    lr: float


def make_param_groups(model: torch.nn.Module, cfg: TrainConfig) -> list[ParamGroup]:
    """Partition parameters into learning-rate groups by name prefix.

    NER: backbone (the encoders) at ``backbone_lr``, heads (span head, label
    projection, fusion) at ``head_lr``. NLI: one group at ``nli_lr``.
    """
    named = list(model.named_parameters())
    if cfg.task == "nli":
        return [ParamGroup(
            names=tuple(n for n, _ in named),
            params=tuple(p for _, p in named),
            lr=cfg.nli_lr,
        )]
    backbone, heads = [], []
    for name, param in named:
        if name.startswith(_BACKBONE_PREFIXES):
            backbone.append((name, param))
        elif name.startswith(_HEAD_PREFIXES):
            heads.append((name, param))
        else:
            raise UnclassifiedParameter(
                f"parameter {name!r} matches neither backbone nor head prefixes"
            )
    return [
        ParamGroup(tuple(n for n, _ in backbone), tuple(p for _, p in backbone),
                   cfg.backbone_lr),
        ParamGroup(tuple(n for n, _ in heads), tuple(p for _, p in heads), cfg.head_lr),
    ]


def build_optimizer(model: torch.nn.Module, cfg: TrainConfig,
                    lr_override: float | None = None) -> torch.optim.AdamW:
    """AdamW over the configured groups; decay skips 1-d (bias/norm) params."""
    torch_groups = []
    for group in make_param_groups(model, cfg):
        lr = lr_override if lr_override is not None else group.lr
        decay = [p for p in group.params if p.dim() > 1]
        no_decay = [p for p in group.params if p.dim() <= 1]
        if decay:
            torch_groups.append(
                {"params": decay, "lr": lr, "base_lr": lr,
                 "weight_decay": cfg.weight_decay}
            )
        if no_decay:
            torch_groups.append(
                {"params": no_decay, "lr": lr, "base_lr": lr, "weight_decay": 0.0}
            )
    return torch.optim.AdamW(torch_groups, betas=(0.9, 0.999))


# --- schedules ------------------------------------------------------------------

def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Schedule factor in [0, 1] multiplying each group's base rate.

    warmup_linear: 0 -> 1 over the first ceil(warmup_fraction * total) steps,
    then 1 -> 0 linearly. cosine: (1 + cos(pi * step / total)) / 2.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be at least 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if cfg.scheduler == "cosine":
        return 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    warmup = math.ceil(cfg.warmup_fraction * total_steps)
    if step < warmup:
        return step / warmup
    if total_steps == warmup:
        return 1.0
    return (total_steps - step) / (total_steps - warmup)


# --- task plumbing ----------------------------------------------------------------

def ner_batch_loss(model: SpanScorer, batch, cfg: TrainConfig) -> torch.Tensor:
    """Mean focal loss over a batch of NER examples (scored one by one)."""
    losses = []
    for ex in batch:
        scores = score_spans(model, ex.tokens, list(ENTITY_TYPES))
        spans = enumerate_spans(len(ex.tokens), model.config.max_span_width)
        targets = span_targets(spans, list(ENTITY_TYPES), ex.entities)
        losses.append(focal_loss(scores, targets, cfg.focal))
    return torch.stack(losses).mean()


def nli_batch_loss(model: NliModel, batch, cfg: TrainConfig) -> torch.Tensor:
    """Mean cross-entropy over a batch of NLI records."""
    logits = torch.stack([nli_logits(model, rec) for rec in batch])
    targets = torch.tensor([NLI_LABELS.index(rec.label) for rec in batch])
    return torch.nn.functional.cross_entropy(logits, targets)


def ner_dev_metric(model: SpanScorer, dev, cfg: TrainConfig) -> float:
    """Micro F1 of thresholded + rule-filtered predictions on a dev set."""
    gold = [(ex.id, ex.entities) for ex in dev]
    pred = [(ex.id, model.predict(ex.tokens, list(ENTITY_TYPES), cfg.decode))
            for ex in dev]
    return entity_prf(gold, pred).micro.f1


def nli_dev_metric(model: NliModel, dev, cfg: TrainConfig) -> float:
    """Class-macro F1 of the model's predictions on a dev set."""
    gold = [rec.label for rec in dev]
    pred = [classify(model, rec).label for rec in dev]
    return nli_domain_f1(gold, pred)


def _default_hooks(cfg: TrainConfig):
    if cfg.task == "ner":
        return ner_batch_loss, ner_dev_metric
    return nli_batch_loss, nli_dev_metric


# --- the training loop --------------------------------------------------------------

def train_phase(
    model: torch.nn.Module,
    train_data: Sequence,
    dev_data: Sequence,
    cfg: TrainConfig,
    phase: int,
    *,
    start: Checkpoint | None = None,
    loss_fn: Callable | None = None,
    eval_fn: Callable | None = None,
    on_eval: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Run one training phase and return the best dev checkpoint.

    Phase 1 runs exactly ``max_epochs_phase1`` epochs under the schedule.
    Phase 2 requires the phase-1 checkpoint via ``start``: it loads it, trains
    at the constant reduced rate, and stops once the dev metric has failed to
    improve for ``patience`` consecutive evaluations. The returned checkpoint
    is the best seen in either phase. ``loss_fn``/``eval_fn`` default to the
    task's loss and selection metric and exist as override points for tests
    and custom tasks.
    """
    if phase not in (1, 2):
        raise ValueError("phase must be 1 or 2")
    if not train_data:
        raise EmptyDataset("training data is empty")
    if not dev_data:
        raise EmptyDataset("dev data is empty")
    if phase == 2 and start is None:
        raise ValueError("phase 2 requires the phase-1 checkpoint as its start")

    default_loss, default_eval = _default_hooks(cfg)
    loss_fn = loss_fn or default_loss
    eval_fn = eval_fn or default_eval

    best = None
    if phase == 2:
        model.load_state_dict(start.state)
        best = start

    rng = random.Random(cfg.seed * 2 + phase)
    steps_per_epoch = math.ceil(len(train_data) / cfg.batch_size)
    max_epochs = cfg.max_epochs_phase1 if phase == 1 else cfg.max_epochs_phase2
    total_steps = max(1, steps_per_epoch * max_epochs)
    optimizer = build_optimizer(
        model, cfg, lr_override=cfg.phase2_lr if phase == 2 else None
    )

    model.train()
    step = 0
    stale_evals = 0
    for epoch in range(1, max_epochs + 1):
        order = list(range(len(train_data)))
        rng.shuffle(order)
        epoch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_data[i] for i in order[lo:lo + cfg.batch_size]]
            factor = lr_at(step, total_steps, cfg) if phase == 1 else 1.0
            for group in optimizer.param_groups:
                group["lr"] = group["base_lr"] * factor
            optimizer.zero_grad()
            loss = loss_fn(model, batch, cfg)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(
                    f"phase {phase} epoch {epoch} step {step}: loss={loss.item()}"
                )
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            optimizer.step()
            epoch_losses.append(float(loss))
            step += 1

        dev_metric = eval_fn(model, dev_data, cfg)
        model.train()
        if on_eval is not None:
            on_eval({
                "phase": phase, "epoch": epoch, "step": step,
                "lr": optimizer.param_groups[0]["lr"],
                "train_loss": sum(epoch_losses) / len(epoch_losses),
                "dev_metric": dev_metric,
            })
        if best is None or dev_metric > best.dev_metric:
            best = Checkpoint.snapshot(model, dev_metric, epoch, phase, cfg.task)
            stale_evals = 0
        else:
            stale_evals += 1
        if phase == 2 and stale_evals >= cfg.patience:
            break
    return best


def train_two_phase(
    model: torch.nn.Module,
    train_data: Sequence,
    dev_data: Sequence,
    cfg: TrainConfig,
    *,
    loss_fn: Callable | None = None,
    eval_fn: Callable | None = None,
    on_eval: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Full recipe: phase-1 schedule, then reduced-rate phase 2 to convergence.

    Leaves ``model`` loaded with the winning parameters and returns its
    checkpoint.
    """
    torch.manual_seed(cfg.seed)
    first = train_phase(model, train_data, dev_data, cfg, 1,
                        loss_fn=loss_fn, eval_fn=eval_fn, on_eval=on_eval)
    second = train_phase(model, train_data, dev_data, cfg, 2, start=first,
                         loss_fn=loss_fn, eval_fn=eval_fn, on_eval=on_eval)
    model.load_state_dict(second.state)
    return second


# --- leave-one-domain-out training ---------------------------------------------------

def run_loo_training(
    records: Sequence[NliRecord],
    cfg: TrainConfig,
    splits=None,
    *,
    model_cfg: NliConfig = NliConfig(),
    on_eval: Callable[[dict], None] | None = None,
) -> dict[str, Checkpoint]:
    """Train one NLI model per leave-one-domain-out split.

    Each run is independently seeded (seed + domain index) and its checkpoint
    is tagged with the held-out domain it may be evaluated on.
    """
    if cfg.task != "nli":
        raise ValueError("run_loo_training expects an NLI train config")
    splits = splits if splits is not None else loo_splits(records)
    checkpoints: dict[str, Checkpoint] = {}
    for index, split in enumerate(splits):
        run_cfg = replace(cfg, seed=cfg.seed + index)
        torch.manual_seed(run_cfg.seed)
        model = NliModel(model_cfg)
        tagged_on_eval = None
        if on_eval is not None:
            tagged_on_eval = lambda entry, d=split.held_out_domain: on_eval(
                {"held_out_domain": d, **entry}
            )
        ckpt = train_two_phase(model, split.train, split.test, run_cfg,
                               on_eval=tagged_on_eval)
        ckpt.held_out_domain = split.held_out_domain
        ckpt.train_domains = tuple(sorted({r.domain for r in split.train}))
        checkpoints[split.held_out_domain] = ckpt
    return checkpoints


def evaluate_nli_checkpoint(ckpt: Checkpoint, records: Sequence[NliRecord],
                            domain: str, model_cfg: NliConfig = NliConfig()) -> float:
    """Class-macro F1 of a LOO checkpoint on one domain's records.

    Refuses to evaluate on any domain the checkpoint was trained on: that
    would leak training data into the score.
    """
    if domain in ckpt.train_domains:
        raise LeakageError(
            f"checkpoint held out {ckpt.held_out_domain!r}; evaluating on its "
            f"training domain {domain!r} would leak"
        )
    subset = [r for r in records if r.domain == domain]
    if not subset:
        raise EmptyDataset(f"no records for domain {domain!r}")
    model = NliModel(model_cfg)
    model.load_state_dict(ckpt.state)
    gold = [r.label for r in subset]
    pred = [classify(model, r).label for r in subset]
    return nli_domain_f1(gold, pred)


# --- config files ----------------------------------------------------------------------

CONFIG_VERSION = 1


def load_train_config(path: str | Path, overrides: dict | None = None):
    """Read a versioned key/value config file.

    Sections: [meta] (version), [trainer] (TrainConfig fields), [focal],
    [decode], and [model] (SpanScorerConfig fields for NER, NliConfig fields
    for NLI). Returns (TrainConfig, model config). ``overrides`` replaces
    individual [trainer] keys, which is how CLI flags win over file values.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise MalformedRecord(f"config file not found: {path}")
    version = _coerce(parser.get("meta", "version", fallback="missing"), int, "version")
    if version != CONFIG_VERSION:
        raise MalformedRecord(
            f"{path}: unsupported config version {version!r} (expected {CONFIG_VERSION})"
        )
    if not parser.has_section("trainer"):
        raise MalformedRecord(f"{path}: missing [trainer] section")

    trainer_kwargs = _section_kwargs(parser, "trainer", TrainConfig, path)
    if overrides:
        trainer_kwargs.update(overrides)
    if parser.has_section("focal"):
        trainer_kwargs["focal"] = FocalConfig(
            **_section_kwargs(parser, "focal", FocalConfig, path)
        )
    if parser.has_section("decode"):
        trainer_kwargs["decode"] = DecodeConfig(
            **_section_kwargs(parser, "decode", DecodeConfig, path)
        )
    try:
        cfg = TrainConfig(**trainer_kwargs)
    except TypeError as exc:
        raise MalformedRecord(f"{path}: {exc}") from None

    model_type = SpanScorerConfig if cfg.task == "ner" else NliConfig
    model_kwargs = (_section_kwargs(parser, "model", model_type, path)
                    if parser.has_section("model") else {})
    return cfg, model_type(**model_kwargs)


_FIELD_TYPES_CACHE: dict[type, dict[str, type]] = {}


def _field_types(cls: type) -> dict[str, type]:
    if cls not in _FIELD_TYPES_CACHE:
        types = {}
        for f in cls.__dataclass_fields__.values():
            raw = str(f.type)
            if "int" in raw:
                types[f.name] = int
            elif "float" in raw:
                types[f.name] = float
            elif "bool" in raw:
                types[f.name] = bool
            else:
                types[f.name] = str
        _FIELD_TYPES_CACHE[cls] = types
    return _FIELD_TYPES_CACHE[cls]


def _coerce(raw: str, target: type, key: str):
    value = raw.strip().strip('"').strip("'")
    try:
        if target is bool:
            if value.lower() in ("true", "yes", "1", "on"):
                return True
            if value.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        return target(value)
    except ValueError:
        raise MalformedRecord(f"config key {key!r}: cannot parse {raw!r} as {target.__name__}")


def _section_kwargs(parser: configparser.ConfigParser, section: str, cls: type,
                    path) -> dict:
    types = _field_types(cls)
    kwargs = {}
    for key, raw in parser.items(section):
        if key not in types or key in ("focal", "decode"):
            raise MalformedRecord(f"{path}: unknown key {key!r} in [{section}]")
        kwargs[key] = _coerce(raw, types[key], key)
    return kwargs
