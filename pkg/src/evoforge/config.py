"""Pipeline configuration: defaults, validation and the flat TOML loader."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


@dataclass(frozen=True)
class PipelineConfig:
    # self-play sizes
    group_size: int = 8
    solver_samples: int = 10
    window_length: int = 8
    iterations: int = 3
    steps_per_phase: int = 20
    videos_per_step: int = 16
    examples_per_step: int = 16
    curation_passes: int = 1
    max_videos: int | None = None

    # reward weights
    lambda_q: float = 0.1
    lambda_s: float = 0.3
    lambda_d: float = 1.0
    format_weight: float = 0.1
    tau_bleu: float = 0.5
    score_band: tuple[float, float] = (0.3, 0.8)

    # perturbation / rng
    shuffle_strategy: str = "random"
    rng_seed: int = 0

    # GRPO emission
    advantage_epsilon: float = 1e-8
    kl_coeff: float = 1e-2

    # endpoints
    questioner_base_url: str = "http://127.0.0.1:8000/v1"
    questioner_model: str = "questioner"
    solver_base_url: str = "http://127.0.0.1:8000/v1"
    solver_model: str = "solver"
    timeout_s: float = 120.0
    max_in_flight: int = 32
    max_retries: int = 2
    temperature: float = 1.0
    top_p: float = 1.0
    max_workers: int = 16

    # data and run directory
    videos: str = ""
    run_root: str = "run"
    run_id: str = "default"

    # offline mode: serve rollouts from an in-process mock instead of HTTP
    mock_script: str = ""
    mock_seed: int = 0

    # optional external trainer acknowledgement
    trainer_hook: str = "none"
    trainer_hook_target: str = ""
    trainer_timeout_s: float = 3600.0

    def __post_init__(self):
        object.__setattr__(self, "score_band", tuple(self.score_band))

    @property
    def s_min(self) -> float:
        return self.score_band[0]

    @property
    def s_max(self) -> float:
        return self.score_band[1]

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["score_band"] = list(self.score_band)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def validate_config(cfg: PipelineConfig) -> list[str]:
    """Every broken invariant as a ``"<field>: <reason>"`` string; empty means valid."""
    from .perturb import parse_strategy

    problems: list[str] = []

    def bad(name, why):
        problems.append(f"{name}: {why}")

    for name, lo in [
        ("group_size", 2),
        ("solver_samples", 2),
        ("window_length", 1),
        ("iterations", 1),
        ("steps_per_phase", 1),
        ("videos_per_step", 1),
        ("examples_per_step", 1),
        ("curation_passes", 1),
        ("max_in_flight", 1),
        ("max_workers", 1),
    ]:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            bad(name, f"must be an integer >= {lo}, got {v!r}")
    if cfg.max_videos is not None and (not isinstance(cfg.max_videos, int) or cfg.max_videos < 1):
        bad("max_videos", f"must be a positive integer or unset, got {cfg.max_videos!r}")
    if not isinstance(cfg.max_retries, int) or cfg.max_retries < 0:
        bad("max_retries", f"must be an integer >= 0, got {cfg.max_retries!r}")

    for name in ("lambda_q", "lambda_s", "lambda_d"):
        v = getattr(cfg, name)
        if not _finite(v) or v < 0:
            bad(name, f"must be a finite number >= 0, got {v!r}")
    if not _finite(cfg.format_weight) or not 0 <= cfg.format_weight <= 1:
        bad("format_weight", f"must lie in [0, 1], got {cfg.format_weight!r}")
    if not _finite(cfg.tau_bleu) or cfg.tau_bleu < 0:
        bad("tau_bleu", f"must be a finite number >= 0, got {cfg.tau_bleu!r}")

    band = cfg.score_band
    if len(band) != 2 or not all(_finite(x) for x in band):
        bad("score_band", f"must be two finite numbers, got {band!r}")
    elif not 0 <= band[0] <= band[1] <= 1:
        bad("score_band", f"needs 0 <= s_min <= s_max <= 1, got {list(band)}")

    try:
        parse_strategy(cfg.shuffle_strategy)
    except ValueError as exc:
        bad("shuffle_strategy", str(exc))

    if not _finite(cfg.advantage_epsilon) or cfg.advantage_epsilon < 0:
        bad("advantage_epsilon", f"must be >= 0, got {cfg.advantage_epsilon!r}")
    if not _finite(cfg.kl_coeff) or cfg.kl_coeff < 0:
        bad("kl_coeff", f"must be >= 0, got {cfg.kl_coeff!r}")
    for name in ("timeout_s", "trainer_timeout_s"):
        v = getattr(cfg, name)
        if not _finite(v) or v <= 0:
            bad(name, f"must be > 0, got {v!r}")
    if not _finite(cfg.temperature) or cfg.temperature < 0:
        bad("temperature", f"must be >= 0, got {cfg.temperature!r}")
    if not _finite(cfg.top_p) or not 0 < cfg.top_p <= 1:
        bad("top_p", f"must lie in (0, 1], got {cfg.top_p!r}")
    if cfg.trainer_hook not in ("none", "file", "http"):
        bad("trainer_hook", f"must be none, file or http, got {cfg.trainer_hook!r}")
    elif cfg.trainer_hook != "none" and not cfg.trainer_hook_target:
        bad("trainer_hook_target", "required when trainer_hook is set")
    if not cfg.run_id or "/" in cfg.run_id:
        bad("run_id", f"must be a non-empty name without '/', got {cfg.run_id!r}")
    return problems


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


class ConfigError(ValueError):
    pass


def load_config(path: str | Path, **overrides) -> PipelineConfig:
    """Read a flat TOML file. Unknown keys and nested tables are errors.

    Relative ``videos`` and ``mock_script`` paths resolve against the config
    file's directory.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    for k, v in raw.items():
        if isinstance(v, dict):
            raise ConfigError(f"{path}: key {k!r} is a table; the config file must be flat")
    for k in ("videos", "mock_script"):
        if raw.get(k) and not Path(raw[k]).is_absolute():
            raw[k] = str(path.parent / raw[k])
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "score_band" in raw:
        raw["score_band"] = tuple(raw["score_band"])
    cfg = PipelineConfig(**raw)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(f"{path}: invalid config:\n  " + "\n  ".join(problems))
    return cfg
