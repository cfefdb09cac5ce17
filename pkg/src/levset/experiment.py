"""Config-driven experiment runs: dataset generation, transform training,
sensitivity tables, and surrogate-fit comparisons, with reproducibility
manifests.

A run is described by one JSON config (see DEFAULT_CONFIG for the schema and
build_preset for the built-in setups).  Every command writes its artifacts
into out_dir together with manifest.json, which echoes the fully resolved
config and the SHA-256 of each artifact; re-running a manifest reproduces the
CSVs byte for byte.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compare_methods, sensitivity, write_sensitivity_csv
from .baselines import LinearMap, active_subspace, sliced_inverse_regression
from .datasets import GradientSample, stack_samples
from .functions import DomainBox, get_function, load_tabulated_dataset, sample_dataset, sample_points
from .losses import as_weights
from .regression import MLPConfig, fit, reduce_inputs
from .revnet import RevNetConfig, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainReport, train

THREADS_ENV_VAR = "LEVSET_THREADS"

# Seed roles derived from the global seed when a stage seed is left null.
_SEED_OFFSETS = {"data": 11, "valid": 12, "init": 13, "shuffle": 14, "regressor": 20}


class ConfigError(ValueError):
    """An experiment config is malformed or inconsistent."""


DEFAULT_CONFIG: dict = {
    "function": None,          # one of f1..f5, or null when 'dataset' is set
    "dataset": None,           # path to a tabulated x/y/gradient text file
    "domain": None,            # optional {lower: [...], upper: [...]} override
    "seed": 0,
    "out_dir": "run",
    "n_train": 500,
    "n_valid": 2000,
    "train_layout": "uniform_random",
    "active_dims": [0],
    "revnet": {
        "n_blocks": 10,
        "step_size": 0.25,
        "hidden_width": None,  # null -> input dimension
        "init_scale": 0.1,
        "seed": None,          # null -> derived from the global seed
    },
    "train": {
        "learning_rate": 0.01,
        "n_epochs": 3000,
        "batch_size": "full",
        "lambda": 1.0,
        "omega": None,         # required
        "seed": None,
    },
    "baselines": {"active_subspace": True, "sir": True, "sir_slices": 10},
    "regressors": [
        {"hidden_widths": [10], "learning_rate": 0.05, "n_epochs": 4000, "momentum": 0.9, "seed": None}
    ],
    "train_sizes": [100, 500],
}


def thread_count() -> int:
    """Worker count requested via the environment; 1 (the default) runs fully
    sequential deterministic execution.  Values above 1 are accepted and
    recorded but execution currently stays sequential."""
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR}={raw!r} is not an integer") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
    return value


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def build_preset(name: str, seed: int = 0, out_dir: str | None = None) -> dict:
    """Built-in experiment setups for the five benchmark functions."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    cfg = _merge(DEFAULT_CONFIG, PRESETS[name])
    cfg["seed"] = seed
    cfg["out_dir"] = out_dir if out_dir is not None else f"runs/{name}"
    return resolve_config(cfg)


PRESETS: dict[str, dict] = {
    # 2D setups: 10 blocks, step 0.25, learning rate 0.01, an 11x11 training
    # lattice, one active coordinate.
    "f1": {
        "function": "f1",
        "n_train": 121,
        "n_valid": 2000,
        "train_layout": "grid",
        "active_dims": [0],
        "revnet": {"n_blocks": 10, "step_size": 0.25},
        "train": {"learning_rate": 0.01, "n_epochs": 3000, "batch_size": "full", "lambda": 1.0, "omega": [0, 1]},
        "train_sizes": [100, 500],
    },
    "f2": {
        "function": "f2",
        "n_train": 121,
        "n_valid": 2000,
        "train_layout": "grid",
        "active_dims": [0],
        "revnet": {"n_blocks": 10, "step_size": 0.25},
        "train": {"learning_rate": 0.01, "n_epochs": 3000, "batch_size": "full", "lambda": 1.0, "omega": [0, 1]},
        "train_sizes": [100, 500],
    },
    "f3": {
        "function": "f3",
        "n_train": 121,
        "n_valid": 2000,
        "train_layout": "grid",
        "active_dims": [0],
        "revnet": {"n_blocks": 10, "step_size": 0.25},
        "train": {"learning_rate": 0.01, "n_epochs": 3000, "batch_size": "full", "lambda": 1.0, "omega": [0, 1]},
        "train_sizes": [100, 500],
    },
    # 20D setups: 30 blocks, learning rate 0.05, 500 training samples.  The
    # batch size and epoch budget are not part of the published setup; these
    # values keep the summed-gradient steps stable at that learning rate.
    "f4": {
        "function": "f4",
        "n_train": 500,
        "n_valid": 10000,
        "train_layout": "uniform_random",
        "active_dims": [0],
        "revnet": {"n_blocks": 30, "step_size": 0.25},
        "train": {"learning_rate": 0.05, "n_epochs": 600, "batch_size": 2, "lambda": 1.0,
                  "omega": [0] + [1] * 19},
        "regressors": [
            {"hidden_widths": [10], "learning_rate": 0.05, "n_epochs": 4000, "momentum": 0.9, "seed": None},
            {"hidden_widths": [20, 20], "learning_rate": 0.05, "n_epochs": 4000, "momentum": 0.9, "seed": None},
        ],
        "train_sizes": [100, 500, 10000],
    },
    "f5": {
        "function": "f5",
        "n_train": 500,
        "n_valid": 10000,
        "train_layout": "uniform_random",
        "active_dims": [0, 1],
        "revnet": {"n_blocks": 30, "step_size": 0.25},
        "train": {"learning_rate": 0.05, "n_epochs": 600, "batch_size": 2, "lambda": 1.0,
                  "omega": [0, 0] + [1] * 18},
        "regressors": [
            {"hidden_widths": [10], "learning_rate": 0.05, "n_epochs": 4000, "momentum": 0.9, "seed": None},
            {"hidden_widths": [20, 20], "learning_rate": 0.05, "n_epochs": 4000, "momentum": 0.9, "seed": None},
        ],
        "train_sizes": [100, 500, 10000],
    },
}


def load_config(path: str | Path) -> dict:
    """Read a config file; a manifest.json (with its config echo) also works."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]  # manifest re-run
    return doc


def resolve_config(raw: dict) -> dict:
    """Overlay onto defaults, fill derived seeds, and validate."""
    unknown = set(raw) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = _merge(DEFAULT_CONFIG, raw)

    if (cfg["function"] is None) == (cfg["dataset"] is None):
        raise ConfigError("exactly one of 'function' or 'dataset' must be set")
    if cfg["function"] is not None and cfg["function"] not in ("f1", "f2", "f3", "f4", "f5"):
        raise ConfigError(f"unknown function {cfg['function']!r}")
    if cfg["dataset"] is not None and not Path(cfg["dataset"]).is_file():
        raise ConfigError(f"dataset file does not exist: {cfg['dataset']}")

    seed = int(cfg["seed"])
    if cfg["revnet"]["seed"] is None:
        cfg["revnet"]["seed"] = seed + _SEED_OFFSETS["init"]
    if cfg["train"]["seed"] is None:
        cfg["train"]["seed"] = seed + _SEED_OFFSETS["shuffle"]
    for i, reg in enumerate(cfg["regressors"]):
        if reg.get("seed") is None:
            reg["seed"] = seed + _SEED_OFFSETS["regressor"] + i

    omega = cfg["train"]["omega"]
    if omega is None:
        raise ConfigError("train.omega is required")
    omega = np.asarray(omega, dtype=float)
    active = sorted(int(i) for i in cfg["active_dims"])
    if not active:
        raise ConfigError("active_dims must be nonempty")
    declared_active = sorted(int(i) for i in np.flatnonzero(omega == 0.0))
    if active != declared_active:
        raise ConfigError(
            f"active_dims {active} must be exactly the zero entries of omega {declared_active}"
        )
    for key in ("n_train", "n_valid"):
        if int(cfg[key]) < 1:
            raise ConfigError(f"{key} must be positive")
    if any(int(n) < 1 for n in cfg["train_sizes"]):
        raise ConfigError("train_sizes entries must be positive")
    if cfg["train_layout"] not in ("uniform_random", "grid"):
        raise ConfigError(f"unknown train_layout {cfg['train_layout']!r}")
    return cfg


# --- data plumbing ------------------------------------------------------------


def _domain_from_config(cfg: dict, dim: int) -> DomainBox | None:
    if cfg["domain"] is None:
        return None
    box = cfg["domain"]
    try:
        domain = DomainBox(np.asarray(box["lower"], float), np.asarray(box["upper"], float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid domain override: {exc}") from exc
    if domain.dim != dim:
        raise ConfigError(f"domain override has dimension {domain.dim}, expected {dim}")
    return domain


def _load_source(cfg: dict):
    """Returns (fn_or_None, training samples, dim)."""
    if cfg["dataset"] is not None:
        records = load_tabulated_dataset(cfg["dataset"])
        return None, records, records[0].dim
    fn = get_function(cfg["function"])
    override = _domain_from_config(cfg, fn.dim)
    if override is not None:
        fn = type(fn)(fn.id, fn.dim, override, fn.eval, fn.grad)
    records = sample_dataset(fn, int(cfg["n_train"]), int(cfg["seed"]) + _SEED_OFFSETS["data"], cfg["train_layout"])
    return fn, records, fn.dim


def _revnet_config(cfg: dict, dim: int) -> RevNetConfig:
    rv = cfg["revnet"]
    try:
        return RevNetConfig(
            dim=dim,
            n_blocks=int(rv["n_blocks"]),
            step_size=float(rv["step_size"]),
            hidden_width=None if rv["hidden_width"] is None else int(rv["hidden_width"]),
            seed=int(rv["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid revnet settings: {exc}") from exc


def _train_config(cfg: dict) -> TrainConfig:
    tr = cfg["train"]
    batch = tr["batch_size"]
    if isinstance(batch, str) and batch != "full":
        raise ConfigError(f"batch_size must be an integer or 'full', got {batch!r}")
    try:
        return TrainConfig(
            learning_rate=float(tr["learning_rate"]),
            n_epochs=int(tr["n_epochs"]),
            omega=as_weights(np.asarray(tr["omega"], dtype=float)),
            lam=float(tr["lambda"]),
            batch_size=batch if batch == "full" else int(batch),
            seed=int(tr["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid train settings: {exc}") from exc


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg: dict, artifacts: list[Path]) -> Path:
    manifest = {
        "tool": "levset",
        "version": __version__,
        "command": command,
        "thread_count": thread_count(),
        "config": cfg,
        "artifacts": {p.name: _sha256(p) for p in artifacts},
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return path


def _write_loss_csv(report: TrainReport, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,l1,l2,total\n")
        for epoch, loss in report.loss_history:
            fh.write(f"{epoch},{loss.l1!r},{loss.l2!r},{loss.total!r}\n")


# --- commands -------------------------------------------------------------------


def run_train(cfg: dict, resume_from: str | Path | None = None, start_epoch: int = 0) -> TrainReport:
    """Train the transform; writes checkpoint.json, loss_history.csv, manifest.json."""
    cfg = resolve_config(cfg)
    fn, records, dim = _load_source(cfg)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    train_cfg = _train_config(cfg)
    if train_cfg.omega.dim != dim:
        raise ConfigError(f"omega has length {train_cfg.omega.dim}, data dimension is {dim}")
    if resume_from is None:
        params0 = init_params(_revnet_config(cfg, dim), float(cfg["revnet"]["init_scale"]))
    else:
        params0 = load_checkpoint(resume_from)
        if params0.dim != dim:
            raise ConfigError(f"checkpoint dimension {params0.dim} != data dimension {dim}")

    report = train(params0, records, train_cfg, start_epoch=start_epoch, checkpoint_dir=out_dir)

    checkpoint = out_dir / "checkpoint.json"
    save_checkpoint(report.final_params, checkpoint)
    loss_csv = out_dir / "loss_history.csv"
    _write_loss_csv(report, loss_csv)
    _write_manifest(out_dir, "train", cfg, [checkpoint, loss_csv])
    return report


def _baseline_maps(cfg: dict, records) -> dict[str, LinearMap]:
    maps: dict[str, LinearMap] = {}
    if cfg["baselines"]["active_subspace"]:
        maps["active_subspace"] = active_subspace(records)
    if cfg["baselines"]["sir"]:
        xs, ys, _ = stack_samples(records)
        maps["sir"] = sliced_inverse_regression(xs, ys, int(cfg["baselines"]["sir_slices"]))
    return maps


def run_sensitivity(cfg: dict, checkpoint_path: str | Path) -> list:
    """Sensitivity rows for identity / revnet / enabled baselines; writes sensitivity.csv."""
    cfg = resolve_config(cfg)
    fn, records, dim = _load_source(cfg)
    params = load_checkpoint(checkpoint_path)
    if params.dim != dim:
        raise ConfigError(f"checkpoint dimension {params.dim} != data dimension {dim}")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    transforms: dict = {"revnet": params}
    transforms.update(_baseline_maps(cfg, records))
    # Function sources are scored on fresh held-out points; tabulated datasets
    # are scored on their stored records.
    source = records if fn is None else fn
    reports = compare_methods(
        source,
        transforms,
        n_samples=None if fn is None else int(cfg["n_valid"]),
        seed=int(cfg["seed"]) + _SEED_OFFSETS["valid"],
    )
    csv_path = out_dir / "sensitivity.csv"
    write_sensitivity_csv(reports, csv_path)
    _write_manifest(out_dir, "sensitivity", cfg, [csv_path])
    return reports


def run_rmse(cfg: dict, checkpoint_path: str | Path) -> list[dict]:
    """Surrogate-fit comparison: (method x architecture x n_train) relative RMSE rows."""
    cfg = resolve_config(cfg)
    fn, records, dim = _load_source(cfg)
    params = load_checkpoint(checkpoint_path)
    if params.dim != dim:
        raise ConfigError(f"checkpoint dimension {params.dim} != data dimension {dim}")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = int(cfg["seed"])
    active = [int(i) for i in cfg["active_dims"]]

    if fn is None:
        raise ConfigError("the rmse command needs a generative function source; tabulated datasets are fixed-size")
    valid_points = sample_points(fn.domain, int(cfg["n_valid"]), seed + _SEED_OFFSETS["valid"])
    valid_targets = np.array([fn.eval(x) for x in valid_points])

    rows: list[dict] = []
    for size_index, n_train in enumerate(int(n) for n in cfg["train_sizes"]):
        train_points = sample_points(fn.domain, n_train, seed + _SEED_OFFSETS["data"] + 100 * (size_index + 1))
        train_targets = np.array([fn.eval(x) for x in train_points])
        train_records = [
            GradientSample(x=x, y=y, grad=fn.grad(x)) for x, y in zip(train_points, train_targets)
        ]
        methods: dict[str, tuple] = {"nn": (None, list(range(dim)))}
        methods["revnet"] = (params, active)
        for name, linear_map in _baseline_maps(cfg, train_records).items():
            methods[name] = (linear_map, list(range(len(active))))
        for method, (transform, dims) in methods.items():
            train_inputs = reduce_inputs(transform, train_points, dims)
            valid_inputs = reduce_inputs(transform, valid_points, dims)
            for reg_index, reg in enumerate(cfg["regressors"]):
                arch = "+".join(str(w) for w in reg["hidden_widths"])
                mlp_cfg = MLPConfig(
                    layer_widths=(len(dims), *[int(w) for w in reg["hidden_widths"]], 1),
                    learning_rate=float(reg["learning_rate"]),
                    n_epochs=int(reg["n_epochs"]),
                    momentum=float(reg["momentum"]),
                    seed=int(reg["seed"]) + 1000 * size_index,
                )
                result = fit(mlp_cfg, train_inputs, train_targets, validation=(valid_inputs, valid_targets))
                rows.append(
                    {
                        "method": method,
                        "architecture": arch,
                        "n_train": n_train,
                        "train_rrmse": result.train_rrmse,
                        "valid_rrmse": result.valid_rrmse,
                    }
                )

    csv_path = out_dir / "rmse.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("method,architecture,n_train,train_rrmse,valid_rrmse\n")
        for row in rows:
            fh.write(
                f"{row['method']},{row['architecture']},{row['n_train']},"
                f"{row['train_rrmse']!r},{row['valid_rrmse']!r}\n"
            )
    _write_manifest(out_dir, "rmse", cfg, [csv_path])
    return rows


def format_presets() -> str:
    lines = []
    for name in sorted(PRESETS):
        cfg = build_preset(name)
        fn = cfg["function"]
        tr = cfg["train"]
        rv = cfg["revnet"]
        omega = tr["omega"]
        active = ",".join(str(i + 1) for i in cfg["active_dims"])
        lines.append(
            f"{name}: function={fn} dim={get_function(fn).dim} n_train={cfg['n_train']} "
            f"layout={cfg['train_layout']} n_valid={cfg['n_valid']} blocks={rv['n_blocks']} "
            f"step_size={rv['step_size']} lr={tr['learning_rate']} epochs={tr['n_epochs']} "
            f"batch={tr['batch_size']} lambda={tr['lambda']} omega={omega} active_dims={active}"
        )
    return "\n".join(lines)
