"""Command-line driver: design, simulate, estimate, cb and run.

Exit codes: 0 success, 2 invalid configuration, 3 heralding impossible,
4 rank-deficient design, 5 a cycle-benchmarking fit failed (the partial
report is still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import plotting
from .design import build_design, design_from_json, proposition_design
from .estimator import GAUGE_CONVENTIONS, SpamEstimate, estimate, qubit_subspace_summary
from .exceptions import (
    DivisionUnstable,
    HeraldImpossible,
    NonPositiveData,
    RankDeficientDesign,
    SpamError,
)
from .model import (
    SpamModel,
    SystemShape,
    herald_acceptance,
    load_model,
    qubit_restriction,
    random_model,
    to_epsilon,
)
from .pauli import (
    CBTruth,
    PauliChannel,
    all_labels,
    average_fidelity,
    cer_combination,
    corrected_eigenvalue,
    cz_action,
    random_pauli_channel,
    simulate_cb,
)
from .simulator import CountsRecord, run_design

log = logging.getLogger("quditspam")

OUT_ENV = "QUDITSPAM_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_HERALD, EXIT_RANK, EXIT_FIT = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n: int = 1
    d: int = 3
    eps_scale: float = 0.01
    model: str | None = None
    shots: int = 100_000
    seed: int = 0
    heralded: bool = False
    gauge: str = "min_sp_error"
    bootstrap: int = 0
    pipeline: str = "spam"
    out: str | None = None
    # cycle benchmarking
    depths: tuple = tuple(range(9))
    cb_shots: int = 100_000
    infidelity: float = 0.01
    channel: str | None = None
    plots: bool = True

    def validate(self) -> None:
        try:
            SystemShape(int(self.n), int(self.d))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.shots < 1 or self.cb_shots < 1:
            raise ConfigError("shots must be >= 1")
        if self.bootstrap and self.bootstrap < 50:
            raise ConfigError("bootstrap needs at least 50 replicas")
        if self.gauge not in GAUGE_CONVENTIONS:
            raise ConfigError(f"gauge must be one of {GAUGE_CONVENTIONS}")
        if self.pipeline not in ("spam", "cb", "both"):
            raise ConfigError("pipeline must be spam, cb or both")
        for f in (self.model, self.channel):
            if f is not None and not Path(f).is_file():
                raise ConfigError(f"file not found: {f}")
        if len(self.depths) < 3:
            raise ConfigError("need at least 3 depths")

    @property
    def shape(self) -> SystemShape:
        return SystemShape(int(self.n), int(self.d))

    @property
    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or "quditspam_out")


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "depths" in data:
        data["depths"] = tuple(int(t) for t in data["depths"])
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


# --- output helpers -------------------------------------------------------------

def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _svg(path: Path, func, first, **kwargs) -> None:
    """Render ``func(first, tmp_path, **kwargs)`` and move it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    os.close(fd)
    try:
        func(first, tmp, **kwargs)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _truth_model(cfg: RunConfig) -> SpamModel:
    if cfg.model:
        model = load_model(cfg.model)
        if model.shape != cfg.shape:
            raise ConfigError(f"model file has shape {model.shape}, config asks for {cfg.shape}")
        return model
    try:
        return random_model(cfg.shape, cfg.eps_scale, cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# --- commands -----------------------------------------------------------------------

def cmd_design(cfg: RunConfig) -> dict:
    circuits = proposition_design(cfg.shape)
    dm = build_design(circuits)
    doc = {
        "n": cfg.n,
        "d": cfg.d,
        "circuits": [{"name": c.name, "perms": c.to_list()} for c in circuits],
        "count": len(circuits),
        "rank": dm.rank,
        "expected_rank": dm.expected_rank,
        "num_params": cfg.shape.num_params,
    }
    write_json(cfg.out_dir / "design.json", doc)
    log.info("design: %d circuits, rank %d of %d", len(circuits), dm.rank, dm.expected_rank)
    return doc


def _load_design_file(path: Path, shape: SystemShape):
    with open(path) as fh:
        doc = json.load(fh)
    return design_from_json([c["perms"] for c in doc["circuits"]], shape)


def cmd_simulate(cfg: RunConfig) -> dict:
    out = cfg.out_dir
    design_path = out / "design.json"
    circuits = (_load_design_file(design_path, cfg.shape) if design_path.exists()
                else proposition_design(cfg.shape))
    model = _truth_model(cfg)
    accept = herald_acceptance(model) if cfg.heralded else 1.0
    records = run_design(model, circuits, cfg.shots, cfg.seed, heralded=cfg.heralded)
    files = []
    for i, rec in enumerate(records):
        name = f"circuit_{i:03d}_{rec.circuit.name}.json"
        write_json(out / "counts" / name, rec.to_json())
        files.append(name)
    write_json(out / "truth_model.json", model.to_dict())
    manifest = {
        "n": cfg.n,
        "d": cfg.d,
        "shots": cfg.shots,
        "heralded": cfg.heralded,
        "herald_discard_fraction": 1.0 - accept,
        "model_source": Path(cfg.model).name if cfg.model else f"random(eps_scale={cfg.eps_scale})",
        "seeds": {
            "master": cfg.seed,
            "circuits": [{"file": f, "entropy": cfg.seed, "spawn_key": [i]}
                         for i, f in enumerate(files)],
        },
    }
    write_json(out / "manifest.json", manifest)
    log.info("simulate: %d counts files, %d shots each", len(files), cfg.shots)
    return manifest


def load_counts(directory: Path, shape: SystemShape | None = None) -> list[CountsRecord]:
    paths = sorted(directory.glob("*.json"))
    out = []
    for p in paths:
        with open(p) as fh:
            out.append(CountsRecord.from_json(json.load(fh), shape))
    return out


def _truth_eps(out: Path, shape: SystemShape):
    p = out / "truth_model.json"
    if not p.exists():
        return None
    model = load_model(p)
    return to_epsilon(model).values if model.shape == shape else None


def cmd_estimate(cfg: RunConfig) -> dict:
    out = cfg.out_dir
    counts_dir = out / "counts"
    if not counts_dir.is_dir():
        raise ConfigError(f"no counts directory at {counts_dir}")
    records = load_counts(counts_dir, cfg.shape)
    if not records:
        raise ConfigError(f"no counts files in {counts_dir}")
    if records[0].circuit.shape != cfg.shape:
        raise ConfigError("counts do not match the configured shape")
    design = build_design([r.circuit for r in records])
    est = estimate(records, design, cfg.gauge, bootstrap=cfg.bootstrap, seed=cfg.seed)
    report = {"estimate": est.to_dict()}
    truth = _truth_eps(out, cfg.shape)
    atomic_write(out / "spam_report.csv", plotting.spam_csv(est, truth))
    if cfg.plots:
        _svg(out / "spam_intervals.svg", plotting.plot_spam_intervals, est, truth=truth)
    if cfg.d >= 3:
        q = qubit_subspace_summary(est)
        report["qubit_subspace"] = q.to_dict()
        qtruth = None
        if (out / "truth_model.json").exists():
            qtruth = to_epsilon(qubit_restriction(load_model(out / "truth_model.json"))).values
        atomic_write(out / "qubit_subspace.csv", plotting.spam_csv(q, qtruth))
        if cfg.plots:
            _svg(out / "qubit_intervals.svg", plotting.plot_spam_intervals, q, truth=qtruth)
    write_json(out / "spam_report.json", report)
    log.info("estimate: max interval width %.3g", float(np.max(est.widths)))
    return report


def _qubit_spam(report: dict) -> SpamEstimate:
    if "qubit_subspace" in report:
        return SpamEstimate.from_dict(report["qubit_subspace"])
    est = SpamEstimate.from_dict(report["estimate"])
    if est.shape.d != 2:
        raise ConfigError("spam report lacks a qubit-subspace summary")
    return est


def cmd_cb(cfg: RunConfig) -> tuple[dict, int]:
    out = cfg.out_dir
    if cfg.n != 2:
        raise ConfigError("the cycle-benchmarking pipeline needs n = 2")
    spam_path = out / "spam_report.json"
    if not spam_path.exists():
        raise ConfigError(f"no spam report at {spam_path}")
    with open(spam_path) as fh:
        spam = _qubit_spam(json.load(fh))

    if cfg.channel:
        with open(cfg.channel) as fh:
            channel = PauliChannel(2, json.load(fh)["eigenvalues"])
    else:
        channel = random_pauli_channel(2, cfg.infidelity,
                                       np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    truth_path = out / "truth_model.json"
    spam_truth = load_model(truth_path) if truth_path.exists() else SpamModel.ideal(SystemShape(2, 2))
    cb_truth = CBTruth.from_spam(channel, spam_truth)

    records, bounds, failures = {}, [], {}
    for i, a in enumerate(all_labels(2, include_identity=False)):
        seed = np.random.SeedSequence(cfg.seed, spawn_key=(2, i))
        rec = simulate_cb(cb_truth, a, cfg.depths, cfg.cb_shots, seed)
        records[str(a)] = rec
        write_json(out / "decays" / f"{a}.json", rec.to_json())
        try:
            bounds.append(corrected_eigenvalue(rec, spam, a))
        except (NonPositiveData, DivisionUnstable) as exc:
            failures[str(a)] = f"{type(exc).__name__}: {exc}"

    cer = []
    done = set()
    for a in all_labels(2, include_identity=False):
        ga = str(cz_action(a)[0])
        key = tuple(sorted((str(a), ga)))
        if key in done or any(k in failures for k in key):
            continue
        done.add(key)
        by = {b.label: b for b in bounds}
        cer.append(cer_combination(records[key[0]], records[key[1]], by[key[0]], by[key[1]]))

    report = {
        "bounds": [b.to_json() for b in bounds],
        "failures": failures,
        "cer": [c.to_json() for c in cer],
        "truth": dict(channel.eigenvalues),
        "spam_source": "qubit_subspace" if spam.metadata.get("source_shape") else "qubit_only",
        "depths": list(cfg.depths),
        "shots": cfg.cb_shots,
    }
    if not failures:
        f = average_fidelity(bounds)
        truth_f = (1 + sum(v for k, v in channel.eigenvalues.items() if k != "II")) / 16
        report["average_fidelity"] = {"estimate": f.value, "lower": f.lower,
                                      "upper": f.upper, "truth": truth_f}
    truth = dict(channel.eigenvalues)
    atomic_write(out / "bounds.csv", plotting.bounds_csv(bounds, truth))
    atomic_write(out / "cer.csv", plotting.cer_csv(cer))
    if cfg.plots and bounds:
        _svg(out / "bounds.svg", plotting.plot_eigenvalue_bounds, bounds, truth=truth)
    if cfg.plots and cer:
        _svg(out / "cer.svg", plotting.plot_cer_comparison, cer)
    write_json(out / "cb_report.json", report)
    log.info("cb: %d bounds, %d failures", len(bounds), len(failures))
    return report, (EXIT_FIT if failures else EXIT_OK)


def cmd_run(cfg: RunConfig) -> int:
    if cfg.pipeline in ("spam", "both"):
        cmd_design(cfg)
        cmd_simulate(cfg)
        cmd_estimate(cfg)
    if cfg.pipeline in ("cb", "both"):
        if not (cfg.out_dir / "spam_report.json").exists():
            raise ConfigError("the cb pipeline needs an existing spam report; use --pipeline both")
        return cmd_cb(cfg)[1]
    return EXIT_OK


# --- argument parsing ------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--n", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--eps-scale", dest="eps_scale", type=float)
    common.add_argument("--model", help="SPAM model JSON to simulate instead of a random one")
    common.add_argument("--shots", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--heralded", type=_bool, nargs="?", const=True)
    common.add_argument("--gauge", choices=GAUGE_CONVENTIONS)
    common.add_argument("--bootstrap", type=int)
    common.add_argument("--pipeline", choices=("spam", "cb", "both"))
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./quditspam_out)")
    common.add_argument("--depths", type=lambda s: [int(x) for x in s.split(",")])
    common.add_argument("--cb-shots", dest="cb_shots", type=int)
    common.add_argument("--infidelity", type=float)
    common.add_argument("--channel", help="Pauli channel JSON with an 'eigenvalues' map")
    common.add_argument("--no-plots", dest="plots", action="store_const", const=False)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="quditspam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("design", "write the circuit design and its rank certificate"),
        ("simulate", "sample counts for every design circuit"),
        ("estimate", "estimate SPAM parameters with ambiguity intervals"),
        ("cb", "bound two-qubit Pauli fidelities from simulated cycle benchmarking"),
        ("run", "run the selected pipeline end to end"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("config", "command", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "design":
            cmd_design(cfg)
            return EXIT_OK
        if args.command == "simulate":
            cmd_simulate(cfg)
            return EXIT_OK
        if args.command == "estimate":
            cmd_estimate(cfg)
            return EXIT_OK
        if args.command == "cb":
            return cmd_cb(cfg)[1]
        return cmd_run(cfg)
    except HeraldImpossible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HERALD
    except RankDeficientDesign as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (ConfigError, SpamError, ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
