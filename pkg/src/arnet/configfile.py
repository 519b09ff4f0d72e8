"""Line-based `key = value` run configuration files.

Every key has a documented default; unknown keys are rejected with their line
number. `write_config` echoes the fully resolved configuration, and parsing
that echo reproduces the run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .datagen import (
    NoisyDataset,
    NoiseSpec,
    gen_blobs,
    gen_rings,
    inject_agent,
    inject_symmetric,
    load_csv,
    split_dataset,
)
from .errors import ConfigError
from .numkernel import seeded_rng
from .trainer import TrainConfig


@dataclass
class RunConfig:
    """Flat bag of every experiment knob, dataset and training alike."""

    # dataset generation
    dataset: str = "blobs"  # blobs | rings | csv
    n_samples: int = 4000
    n_classes: int = 2
    n_features: int = 2
    separation: float = 4.0
    ring_noise_sd: float = 0.15
    noise: str = "none"  # none | symmetric | agent
    epsilon: float = 0.0
    exact_count_noise: bool = False
    agent_clean_fraction: float = 0.1
    agent_budget: int = 1
    train_fraction: float = 0.8
    val_fraction: float = 0.0
    test_fraction: float = 0.2
    dataset_path: str = ""
    out_dir: str = "runs/out"
    seed: int = 0
    # training
    method: str = "arnet"
    lam: float = 0.8
    beta: float = 0.8
    alpha: float = 3.0
    xi: float = 0.05
    tau: float = 1.0
    slots: int = 64
    sinkhorn_iters: int = 3
    cache_capacity: int = 1024
    lr: float = 1e-4
    epochs: int = 50
    batch_size: int = 128
    hidden_dim: int = 32
    latent_dim: int = 16
    cluster_enabled: bool = True
    cluster_to_encoder: bool = True
    bootstrap_mix: float = 0.2
    elr_momentum: float = 0.7
    write_post_update: bool = False
    # bench
    methods: list[str] = field(default_factory=lambda: ["ce", "arnet"])
    epsilons: list[float] = field(default_factory=lambda: [0.2, 0.4])
    n_seeds: int = 3
    slot_list: list[int] = field(default_factory=list)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _parse_float_list(text: str) -> list[float]:
    return [float(part) for part in _parse_str_list(text)]


def _parse_int_list(text: str) -> list[int]:
    return [int(part) for part in _parse_str_list(text)]


# config key -> (RunConfig attribute, parser)
KEY_SPECS: dict[str, tuple[str, object]] = {
    "dataset": ("dataset", str),
    "n_samples": ("n_samples", int),
    "n_classes": ("n_classes", int),
    "n_features": ("n_features", int),
    "separation": ("separation", float),
    "ring_noise_sd": ("ring_noise_sd", float),
    "noise": ("noise", str),
    "epsilon": ("epsilon", float),
    "exact_count_noise": ("exact_count_noise", _parse_bool),
    "agent_clean_fraction": ("agent_clean_fraction", float),
    "agent_budget": ("agent_budget", int),
    "train_fraction": ("train_fraction", float),
    "val_fraction": ("val_fraction", float),
    "test_fraction": ("test_fraction", float),
    "dataset_path": ("dataset_path", str),
    "out_dir": ("out_dir", str),
    "seed": ("seed", int),
    "method": ("method", str),
    "lambda": ("lam", float),
    "beta": ("beta", float),
    "alpha": ("alpha", float),
    "xi": ("xi", float),
    "tau": ("tau", float),
    "slots": ("slots", int),
    "sinkhorn_iters": ("sinkhorn_iters", int),
    "cache_capacity": ("cache_capacity", int),
    "lr": ("lr", float),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "hidden_dim": ("hidden_dim", int),
    "latent_dim": ("latent_dim", int),
    "cluster_enabled": ("cluster_enabled", _parse_bool),
    "cluster_to_encoder": ("cluster_to_encoder", _parse_bool),
    "bootstrap_mix": ("bootstrap_mix", float),
    "elr_momentum": ("elr_momentum", float),
    "write_post_update": ("write_post_update", _parse_bool),
    "methods": ("methods", _parse_str_list),
    "epsilons": ("epsilons", _parse_float_list),
    "n_seeds": ("n_seeds", int),
    "slot_list": ("slot_list", _parse_int_list),
}


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.dataset not in ("blobs", "rings", "csv"):
        raise ConfigError(f"dataset must be blobs, rings, or csv, got {cfg.dataset!r}")
    if cfg.noise not in ("none", "symmetric", "agent"):
        raise ConfigError(f"noise must be none, symmetric, or agent, got {cfg.noise!r}")
    if not (0.0 <= cfg.epsilon <= 1.0):
        raise ConfigError(f"epsilon must lie in [0, 1], got {cfg.epsilon}")
    for eps in cfg.epsilons:
        if not (0.0 <= eps <= 1.0):
            raise ConfigError(f"epsilons entries must lie in [0, 1], got {eps}")
    for m in cfg.methods:
        if m not in ("ce", "bootstrap", "elr", "arnet"):
            raise ConfigError(f"methods entries must be ce/bootstrap/elr/arnet, got {m!r}")
    if cfg.n_seeds < 1:
        raise ConfigError(f"n_seeds must be >= 1, got {cfg.n_seeds}")
    if cfg.dataset == "csv" and not cfg.dataset_path:
        raise ConfigError("dataset = csv requires dataset_path")
    to_train_config(cfg).validate()
    return cfg


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KEY_SPECS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        attr, parser = KEY_SPECS[key]
        try:
            setattr(cfg, attr, parser(value))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for key {key!r}: {exc}") from None
    return _validate(cfg)


def parse_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def write_config(cfg: RunConfig, path) -> None:
    """Echo the fully resolved config; parsing it back reproduces the run."""
    attr_to_key = {attr: key for key, (attr, _) in KEY_SPECS.items()}
    lines = []
    for f in fields(cfg):
        lines.append(f"{attr_to_key[f.name]} = {_format_value(getattr(cfg, f.name))}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def to_train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        method=cfg.method,
        lam=cfg.lam,
        beta=cfg.beta,
        alpha=cfg.alpha,
        xi=cfg.xi,
        tau=cfg.tau,
        n_slots=cfg.slots,
        sinkhorn_iters=cfg.sinkhorn_iters,
        cache_capacity=cfg.cache_capacity,
        lr=cfg.lr,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        hidden_dim=cfg.hidden_dim,
        latent_dim=cfg.latent_dim,
        cluster_enabled=cfg.cluster_enabled,
        cluster_to_encoder=cfg.cluster_to_encoder,
        bootstrap_mix=cfg.bootstrap_mix,
        elr_momentum=cfg.elr_momentum,
        write_post_update=cfg.write_post_update,
    )


def _fractions(cfg: RunConfig):
    if cfg.val_fraction > 0:
        return (cfg.train_fraction, cfg.val_fraction, cfg.test_fraction)
    return (cfg.train_fraction, cfg.test_fraction)


def build_dataset(cfg: RunConfig, *, epsilon: float | None = None, seed: int | None = None) -> NoisyDataset:
    """Generate (or load) a dataset, split it, and inject the configured noise.

    `epsilon` and `seed` overrides let the bench harness reuse one config
    across noise levels and runs.
    """
    seed = cfg.seed if seed is None else seed
    eps = cfg.epsilon if epsilon is None else epsilon
    if cfg.dataset == "blobs":
        ds = gen_blobs(seeded_rng(seed, "data"), cfg.n_samples, cfg.n_classes, cfg.n_features, cfg.separation)
    elif cfg.dataset == "rings":
        ds = gen_rings(seeded_rng(seed, "data"), cfg.n_samples, cfg.n_classes, cfg.ring_noise_sd)
    else:
        ds = load_csv(cfg.dataset_path)
    ds.noise = NoiseSpec(kind="none", exact_count=cfg.exact_count_noise, seed=seed)
    ds = split_dataset(ds, _fractions(cfg), seeded_rng(seed, "split"))
    if cfg.noise == "symmetric":
        ds = inject_symmetric(ds, eps, seeded_rng(seed, "noise"))
    elif cfg.noise == "agent":
        ds = inject_agent(ds, cfg.agent_clean_fraction, cfg.agent_budget, seeded_rng(seed, "noise"))
    ds.noise.seed = seed
    return ds
