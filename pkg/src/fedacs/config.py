"""Experiment configuration: a strict TOML schema with documented defaults.

Unknown keys are rejected by name, and every cross-field constraint is
checked before any work starts. Example::

    seeds = [0, 1, 2, 3, 4]
    output_dir = "results/scarcity"
    diagnostics = false

    [dataset]
    kind = "synthetic"          # synthetic | idx | csv | quadratic
    n_clusters = 10
    input_dim = 20
    samples_per_cluster = 600
    separation = 4.0
    noise_sigma = 1.0
    client_groups = 2

    [partition]
    scheme = "dirichlet"        # dirichlet | pathological
    n_clients = 20
    dirichlet_alpha = 0.5
    samples_per_client = 50

    [model]
    kind = "linear"             # linear | mlp

    [algorithm]
    name = ["fedacs", "fedavg", "local"]
    lambda = 1.0
    p = 0.5
    rounds = 50
    beta = { kind = "fixed", value = 0.1 }
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .algorithms import ALGORITHMS, AlgoConfig
from .data import PartitionConfig
from .errors import ConfigError, ContractViolation
from .models import ACTIVATIONS
from .schedules import SCHEDULE_KINDS, Schedule

DATASET_KEYS = {
    "synthetic": {
        "n_clusters": 10, "input_dim": 20, "samples_per_cluster": 500,
        "separation": 4.0, "noise_sigma": 1.0, "client_groups": 1, "swapped_pairs": 2,
    },
    "idx": {"images": None, "labels": None, "num_classes": None, "client_groups": 1,
            "swapped_pairs": 2},
    "csv": {"path": None, "num_classes": None, "header": False, "client_groups": 1,
            "swapped_pairs": 2},
    "quadratic": {
        "n_clients": 10, "dim": 20, "n_clusters": 2, "separation": 10.0,
        "spread": 1.0, "init_scale": 1.0,
    },
}
PARTITION_DEFAULTS = {
    "scheme": "dirichlet", "n_clients": 10, "dirichlet_alpha": 0.5,
    "classes_per_client": 2, "samples_per_client": None, "test_fraction": 0.2,
    "seed": None,
}
MODEL_DEFAULTS = {"kind": "linear", "hidden_dim": 32, "activation": "relu", "init_scale": 0.01}
ALGO_DEFAULTS = {
    "name": "fedacs", "lambda": 1.0, "p": 0.5, "rounds": 50, "local_steps": 1,
    "batch_size": 32, "participation": 1.0,
    "alpha": {"kind": "fixed", "value": 1.0},
    "beta": {"kind": "fixed", "value": 0.1},
}
DIAGNOSE_DEFAULTS = {
    "schedule": "constant_theorem", "checkpoints": [100, 400, 1600],
    "rounds": None, "a": 1.0, "b": 0.0, "alpha": None, "beta": None,
}
TOP_DEFAULTS = {"seeds": [0], "output_dir": "results", "diagnostics": False, "log_attention": False}
SECTIONS = ("dataset", "partition", "model", "algorithm", "diagnose")


@dataclass(frozen=True)
class DiagnoseSettings:
    schedule: str = "constant_theorem"
    checkpoints: Tuple[int, ...] = (100, 400, 1600)
    rounds: Optional[int] = None
    a: float = 1.0
    b: float = 0.0
    alpha: Optional[float] = None
    beta: Optional[float] = None

    @property
    def run_length(self) -> int:
        return self.rounds if self.rounds is not None else max(self.checkpoints)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    partition: dict
    model: dict
    algorithms: Tuple[str, ...]
    algo: AlgoConfig
    diagnose: DiagnoseSettings = field(default_factory=DiagnoseSettings)
    seeds: Tuple[int, ...] = (0,)
    output_dir: str = "results"
    diagnostics: bool = False
    log_attention: bool = False

    def partition_config(self, seed: int) -> PartitionConfig:
        p = dict(self.partition)
        pseed = p.pop("seed")
        return PartitionConfig(seed=seed if pseed is None else pseed, **p)

    def algo_config(self, algorithm: str, seed: int) -> AlgoConfig:
        return replace(self.algo, algorithm=algorithm, seed=seed)

    def with_overrides(self, seeds=None, output_dir=None) -> "ExperimentConfig":
        cfg = self
        if seeds is not None:
            if not seeds:
                raise ConfigError("seeds: override list is empty")
            cfg = replace(cfg, seeds=tuple(_check_seed(s, "seeds") for s in seeds))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg

    def to_dict(self) -> dict:
        """Fully resolved configuration in the on-disk schema."""
        algo = self.algo
        return {
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "diagnostics": self.diagnostics,
            "log_attention": self.log_attention,
            "dataset": dict(self.dataset),
            "partition": dict(self.partition),
            "model": dict(self.model),
            "algorithm": {
                "name": list(self.algorithms),
                "lambda": algo.lam,
                "p": algo.p,
                "rounds": algo.rounds,
                "local_steps": algo.local_steps,
                "batch_size": algo.batch_size,
                "participation": algo.participation,
                "alpha": _schedule_dict(algo.alpha),
                "beta": _schedule_dict(algo.beta),
            },
            "diagnose": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in asdict(self.diagnose).items()},
        }


def _schedule_dict(s: Schedule) -> dict:
    if s.kind == "fixed":
        return {"kind": "fixed", "value": s.value}
    if s.kind == "diminishing":
        return {"kind": "diminishing", "a": s.a, "b": s.b}
    return {"kind": s.kind}


def _check_seed(s, where):
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
        raise ConfigError(f"{where}: seed {s!r} must be an integer in [0, 2^64)")
    return s


def _merge(section: str, given, defaults: dict) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected a table")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key {section + '.' + unknown[0]!r}")
    out = dict(defaults)
    out.update(given)
    return out


def _typed(section, key, value, kind, positive=False, allow_none=False):
    where = f"{section}.{key}"
    if value is None:
        if allow_none:
            return None
        raise ConfigError(f"{where}: value is required")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    return value


def _schedule(section, key, raw) -> Schedule:
    where = f"{section}.{key}"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a table like {{ kind = \"fixed\", value = 0.1 }}")
    unknown = sorted(set(raw) - {"kind", "value", "a", "b"})
    if unknown:
        raise ConfigError(f"unknown key {where + '.' + unknown[0]!r}")
    kind = raw.get("kind", "fixed")
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"{where}.kind: must be one of {SCHEDULE_KINDS}, got {kind!r}")
    try:
        return Schedule(
            kind,
            value=None if raw.get("value") is None else _typed(where, "value", raw["value"], float),
            a=_typed(where, "a", raw.get("a", 1.0), float),
            b=_typed(where, "b", raw.get("b", 0.0), float),
        )
    except ContractViolation as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _dataset(raw) -> dict:
    if raw is None or "kind" not in raw:
        raise ConfigError("dataset.kind: value is required")
    kind = raw["kind"]
    if kind not in DATASET_KEYS:
        raise ConfigError(f"dataset.kind: must be one of {tuple(DATASET_KEYS)}, got {kind!r}")
    body = {k: v for k, v in raw.items() if k != "kind"}
    d = _merge("dataset", body, DATASET_KEYS[kind])
    s = "dataset"
    if kind == "synthetic":
        for key in ("n_clusters", "input_dim", "samples_per_cluster"):
            _typed(s, key, d[key], int, positive=True)
        _typed(s, "separation", d["separation"], float, positive=True)
        d["separation"] = float(d["separation"])
        d["noise_sigma"] = _typed(s, "noise_sigma", d["noise_sigma"], float)
        if d["noise_sigma"] < 0:
            raise ConfigError("dataset.noise_sigma: must be non-negative")
        if d["n_clusters"] < 2 or d["input_dim"] < 2:
            raise ConfigError("dataset.n_clusters and dataset.input_dim must be at least 2")
    elif kind == "idx":
        for key in ("images", "labels"):
            _typed(s, key, d[key], str)
            if not Path(d[key]).is_file():
                raise ConfigError(f"dataset.{key}: file not found: {d[key]}")
        _typed(s, "num_classes", d["num_classes"], int, positive=True, allow_none=True)
    elif kind == "csv":
        _typed(s, "path", d["path"], str)
        if not Path(d["path"]).is_file():
            raise ConfigError(f"dataset.path: file not found: {d['path']}")
        _typed(s, "num_classes", d["num_classes"], int, positive=True)
        _typed(s, "header", d["header"], bool)
    else:
        for key in ("n_clients", "dim", "n_clusters"):
            _typed(s, key, d[key], int, positive=True)
        for key in ("separation", "spread", "init_scale"):
            d[key] = _typed(s, key, d[key], float)
    if "client_groups" in d:
        _typed(s, "client_groups", d["client_groups"], int, positive=True)
        _typed(s, "swapped_pairs", d["swapped_pairs"], int, positive=True)
    return {"kind": kind, **d}


def _partition(raw) -> dict:
    p = _merge("partition", raw, PARTITION_DEFAULTS)
    s = "partition"
    if p["scheme"] not in ("dirichlet", "pathological"):
        raise ConfigError(f"partition.scheme: must be 'dirichlet' or 'pathological', got {p['scheme']!r}")
    _typed(s, "n_clients", p["n_clients"], int, positive=True)
    p["dirichlet_alpha"] = _typed(s, "dirichlet_alpha", p["dirichlet_alpha"], float, positive=True)
    _typed(s, "classes_per_client", p["classes_per_client"], int, positive=True)
    _typed(s, "samples_per_client", p["samples_per_client"], int, allow_none=True)
    if p["samples_per_client"] is not None and p["samples_per_client"] < 2:
        raise ConfigError("partition.samples_per_client: must be at least 2")
    p["test_fraction"] = _typed(s, "test_fraction", p["test_fraction"], float)
    if not 0.0 < p["test_fraction"] < 1.0:
        raise ConfigError("partition.test_fraction: must lie in (0, 1)")
    if p["seed"] is not None:
        _check_seed(p["seed"], "partition.seed")
    return p


def _model(raw) -> dict:
    m = _merge("model", raw, MODEL_DEFAULTS)
    if m["kind"] not in ("linear", "mlp", "quadratic"):
        raise ConfigError(f"model.kind: must be 'linear', 'mlp' or 'quadratic', got {m['kind']!r}")
    _typed("model", "hidden_dim", m["hidden_dim"], int, positive=True)
    if m["activation"] not in ACTIVATIONS:
        raise ConfigError(f"model.activation: must be one of {tuple(ACTIVATIONS)}")
    m["init_scale"] = _typed("model", "init_scale", m["init_scale"], float, positive=True)
    return m


def _algorithm(raw) -> Tuple[Tuple[str, ...], AlgoConfig]:
    a = _merge("algorithm", raw, ALGO_DEFAULTS)
    s = "algorithm"
    names = a["name"] if isinstance(a["name"], list) else [a["name"]]
    if not names:
        raise ConfigError("algorithm.name: empty list")
    for n in names:
        if n not in ALGORITHMS:
            raise ConfigError(f"algorithm.name: unknown algorithm {n!r} (choose from {ALGORITHMS})")
    if len(set(names)) != len(names):
        raise ConfigError("algorithm.name: duplicate entries")
    lam = _typed(s, "lambda", a["lambda"], float, positive=True)
    p = _typed(s, "p", a["p"], float)
    if not 0.0 <= p <= 1.0:
        raise ConfigError("algorithm.p: must lie in [0, 1]")
    rounds = _typed(s, "rounds", a["rounds"], int)
    local_steps = _typed(s, "local_steps", a["local_steps"], int)
    if rounds < 0 or local_steps < 0:
        raise ConfigError("algorithm.rounds and algorithm.local_steps must be non-negative")
    batch = _typed(s, "batch_size", a["batch_size"], int, positive=True)
    part = _typed(s, "participation", a["participation"], float)
    if not 0.0 < part <= 1.0:
        raise ConfigError("algorithm.participation: must lie in (0, 1]")
    algo = AlgoConfig(
        algorithm=names[0], lam=lam, p=p, rounds=rounds, local_steps=local_steps,
        batch_size=batch, participation=part,
        alpha=_schedule(s, "alpha", a["alpha"]), beta=_schedule(s, "beta", a["beta"]),
    )
    return tuple(names), algo


def _diagnose(raw) -> DiagnoseSettings:
    d = _merge("diagnose", raw, DIAGNOSE_DEFAULTS)
    if d["schedule"] not in SCHEDULE_KINDS:
        raise ConfigError(f"diagnose.schedule: must be one of {SCHEDULE_KINDS}")
    cps = d["checkpoints"]
    if not isinstance(cps, list) or len(cps) < 2:
        raise ConfigError("diagnose.checkpoints: need a list of at least 2 round counts")
    for c in cps:
        _typed("diagnose", "checkpoints", c, int, positive=True)
    _typed("diagnose", "rounds", d["rounds"], int, positive=True, allow_none=True)
    a = _typed("diagnose", "a", d["a"], float, positive=True)
    b = _typed("diagnose", "b", d["b"], float)
    if b < 0:
        raise ConfigError("diagnose.b: must be non-negative")
    alpha = _typed("diagnose", "alpha", d["alpha"], float, allow_none=True)
    beta = _typed("diagnose", "beta", d["beta"], float, allow_none=True)
    if d["schedule"] == "fixed" and (alpha is None or beta is None):
        raise ConfigError("diagnose: fixed schedule needs diagnose.alpha and diagnose.beta")
    settings = DiagnoseSettings(d["schedule"], tuple(sorted(cps)), d["rounds"], a, b, alpha, beta)
    if settings.schedule != "constant_theorem" and settings.run_length < max(cps):
        raise ConfigError("diagnose.rounds: shorter than the largest checkpoint")
    return settings


def _cross_checks(dataset, partition, model):
    kind = dataset["kind"]
    if (kind == "quadratic") != (model["kind"] == "quadratic"):
        raise ConfigError("model.kind: 'quadratic' goes with dataset.kind = 'quadratic' and only with it")
    if kind == "synthetic":
        C = dataset["n_clusters"]
        if partition["scheme"] == "pathological" and partition["classes_per_client"] > C:
            raise ConfigError(
                f"partition.classes_per_client: {partition['classes_per_client']} exceeds "
                f"dataset.n_clusters = {C}"
            )
        if dataset["client_groups"] > 1 and 2 * dataset["swapped_pairs"] > C:
            raise ConfigError(f"dataset.swapped_pairs: {2 * dataset['swapped_pairs']} classes exceed {C}")
        total = C * dataset["samples_per_cluster"]
        if total < 2 * partition["n_clients"]:
            raise ConfigError("partition.n_clients: dataset too small for that many clients")
    if kind == "csv" and partition["scheme"] == "pathological":
        if partition["classes_per_client"] > dataset["num_classes"]:
            raise ConfigError("partition.classes_per_client: exceeds dataset.num_classes")


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed TOML document into an :class:`ExperimentConfig`."""
    unknown = sorted(set(raw) - set(TOP_DEFAULTS) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    top = dict(TOP_DEFAULTS)
    top.update({k: v for k, v in raw.items() if k in TOP_DEFAULTS})
    if not isinstance(top["seeds"], list) or not top["seeds"]:
        raise ConfigError("seeds: need a non-empty list of integers")
    seeds = tuple(_check_seed(s, "seeds") for s in top["seeds"])
    _typed("", "output_dir", top["output_dir"], str)
    _typed("", "diagnostics", top["diagnostics"], bool)
    _typed("", "log_attention", top["log_attention"], bool)

    dataset = _dataset(raw.get("dataset"))
    partition = _partition(raw.get("partition"))
    model = _model(raw.get("model"))
    algorithms, algo = _algorithm(raw.get("algorithm"))
    diagnose = _diagnose(raw.get("diagnose"))
    _cross_checks(dataset, partition, model)
    return ExperimentConfig(
        dataset=dataset, partition=partition, model=model, algorithms=algorithms,
        algo=algo, diagnose=diagnose, seeds=seeds, output_dir=top["output_dir"],
        diagnostics=top["diagnostics"], log_attention=top["log_attention"],
    )


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return build_config(raw)


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from None
    return build_config(raw)


__all__ = ["ExperimentConfig", "DiagnoseSettings", "parse_config", "parse_config_text", "build_config"]
