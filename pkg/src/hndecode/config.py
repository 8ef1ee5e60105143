"""Engine configuration: INI file loading, validation, backend construction.

The config file is section/key INI text, diff-friendly for ablation grids.
Relative paths inside it (toy spec, template file) resolve against the config
file's own directory. Every branching default equals the reference values
baked into BranchConfig.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .backends.api import ApiBackend
from .backends.base import Backend, DecodeParams
from .backends.toy import ToyBackend, load_toy_spec
from .bench import GpuPriceSheet, PriceSheet, validate_template
from .entropy import BranchConfig
from .errors import ConfigError, ParseError

_SECTIONS = {"branch", "decode", "backend", "prices", "run"}

_BRANCH_KEYS = {
    "max_degree": int,
    "min_degree": int,
    "degree_depth_decay": float,
    "max_mcts_depth": int,
    "max_num_create_jobs": int,
    "tau1": float,
    "tau2": float,
    "entropy_floor": float,
    "region": str,
    "pool_policy": str,
    "seed": int,
    "tail_mode": str,
}

_DECODE_KEYS = {
    "temperature": float,
    "top_k": int,
    "top_p": float,
    "max_tokens": int,
    "stop_sequences": str,
}

_BACKEND_KEYS = {
    "type": str,
    "spec": str,
    "latency_per_token": float,
    "base_url": str,
    "model": str,
    "logprobs_top_n": int,
    "supports_echo": bool,
    "max_inflight": int,
}

_PRICES_KEYS = {"input_price": float, "output_price": float, "gpu_rate": float}

_RUN_KEYS = {"workers": int, "out_dir": str, "template_file": str}


@dataclass
class EngineConfig:
    """Everything a run needs, resolved and validated."""

    branch: BranchConfig
    params: DecodeParams
    backend_type: str
    toy_spec_path: Path | None = None
    latency_per_token: float = 0.0
    api_base_url: str | None = None
    api_model: str | None = None
    api_logprobs_top_n: int = 20
    api_supports_echo: bool = False
    api_max_inflight: int = 8
    prices: PriceSheet | GpuPriceSheet | None = None
    template: str | None = None
    workers: int = 1
    out_dir: Path = field(default_factory=lambda: Path("out"))


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in {"1", "true", "yes", "on"}:
                return True
            if low in {"0", "false", "no", "off"}:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: cannot parse {raw!r} as {kind.__name__}"
        ) from None


def _section_values(parser: configparser.ConfigParser, name: str, schema: dict) -> dict:
    if name not in parser:
        return {}
    out = {}
    for key, raw in parser[name].items():
        if key not in schema:
            raise ConfigError(f"unknown key {name}.{key}")
        if raw.strip() == "":
            continue
        out[key] = _convert(name, key, raw, schema[key])
    return out


def load_config(path: str | Path) -> EngineConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(p, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (configparser.Error, OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    unknown = set(parser.sections()) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    base = p.parent

    branch_vals = _section_values(parser, "branch", _BRANCH_KEYS)
    branch = BranchConfig(**branch_vals)
    branch.validate()

    decode_vals = _section_values(parser, "decode", _DECODE_KEYS)
    stop_raw = decode_vals.pop("stop_sequences", "")
    stops = tuple(s for s in stop_raw.split(",") if s) if stop_raw else ()
    params = DecodeParams(stop_sequences=stops, **decode_vals)
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(f"decode: {exc}") from exc

    backend_vals = _section_values(parser, "backend", _BACKEND_KEYS)
    backend_type = backend_vals.get("type")
    if backend_type not in {"toy", "api"}:
        raise ConfigError("backend.type must be 'toy' or 'api'")
    cfg = EngineConfig(branch=branch, params=params, backend_type=backend_type)
    if backend_type == "toy":
        if "spec" not in backend_vals:
            raise ConfigError("backend.spec (toy model file) is required for type=toy")
        for key in ("base_url", "model"):
            if key in backend_vals:
                raise ConfigError(f"backend.{key} is only valid for type=api")
        cfg.toy_spec_path = (base / backend_vals["spec"]).resolve()
        cfg.latency_per_token = backend_vals.get("latency_per_token", 0.0)
        if cfg.latency_per_token < 0:
            raise ConfigError("backend.latency_per_token must be >= 0")
    else:
        for key in ("base_url", "model"):
            if key not in backend_vals:
                raise ConfigError(f"backend.{key} is required for type=api")
        if "spec" in backend_vals:
            raise ConfigError("backend.spec is only valid for type=toy")
        cfg.api_base_url = backend_vals["base_url"]
        cfg.api_model = backend_vals["model"]
        cfg.api_logprobs_top_n = backend_vals.get("logprobs_top_n", 20)
        cfg.api_supports_echo = backend_vals.get("supports_echo", False)
        cfg.api_max_inflight = backend_vals.get("max_inflight", 8)
        if cfg.api_logprobs_top_n < 1:
            raise ConfigError("backend.logprobs_top_n must be >= 1")

    price_vals = _section_values(parser, "prices", _PRICES_KEYS)
    if "gpu_rate" in price_vals:
        if "input_price" in price_vals or "output_price" in price_vals:
            raise ConfigError("prices: gpu_rate excludes input_price/output_price")
        cfg.prices = GpuPriceSheet(hourly_rate=price_vals["gpu_rate"])
        cfg.prices.validate()
    elif price_vals:
        if not {"input_price", "output_price"} <= set(price_vals):
            raise ConfigError("prices: need both input_price and output_price")
        cfg.prices = PriceSheet(
            input_price=price_vals["input_price"],
            output_price=price_vals["output_price"],
        )
        cfg.prices.validate()

    run_vals = _section_values(parser, "run", _RUN_KEYS)
    cfg.workers = run_vals.get("workers", 1)
    if cfg.workers < 1:
        raise ConfigError("run.workers must be >= 1")
    cfg.out_dir = base / run_vals.get("out_dir", "out")
    if "template_file" in run_vals:
        tpl_path = base / run_vals["template_file"]
        try:
            cfg.template = tpl_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read template {tpl_path}: {exc}") from exc
        validate_template(cfg.template)
    return cfg


def make_backend(cfg: EngineConfig) -> Backend:
    if cfg.backend_type == "toy":
        try:
            spec = load_toy_spec(cfg.toy_spec_path)
        except ParseError as exc:
            raise ConfigError(f"toy spec: {exc}") from exc
        return ToyBackend(spec, latency_per_token=cfg.latency_per_token)
    return ApiBackend(
        base_url=cfg.api_base_url,
        model=cfg.api_model,
        logprobs_top_n=cfg.api_logprobs_top_n,
        tail_mode=cfg.branch.tail_mode,
        supports_echo=cfg.api_supports_echo,
        max_inflight=cfg.api_max_inflight,
    )
