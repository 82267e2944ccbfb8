"""Experiment orchestration: config, staged runs, metrics files, charts.

A run is described by one JSON-round-trippable ExperimentConfig. Stages
(train-ff, train-fb, train-hp, eval, attack, ablate, report) execute in
order, each persisting its artifacts under out_dir and each resumable from
the previous stage's files; a missing dependency is reported by file name.
Weight snapshots use the PCW1 container, metrics go to CSV, summaries to
JSON, and charts to self-contained SVG. Every text artifact embeds the
config hash, writes are atomic (temp file then rename), and a fixed
(config, input data) pair reproduces every artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .attacks import DEFAULT_EPSILONS, AttackConfig, median_min_perturbation
from .corruption import KINDS, LEVEL_PARAMS, NoiseSpec, corrupt
from .data import load_dataset
from .hyperparams import HPMask, HyperParams
from .network import (
    BASELINE_VARIANTS,
    build_baseline,
    build_shallow,
    load_weights_into,
    save_weights,
)
from . import tensor as tt
from .training import (
    TrainConfig,
    ablation_suite,
    evaluate_unrolled,
    freeze,
    train_feedback_supervised,
    train_feedback_unsupervised,
    train_feedforward,
    train_hyperparams,
)

__all__ = [
    "ExperimentConfig",
    "MetricsRecord",
    "STAGES",
    "config_hash",
    "noise_conditions",
    "condition_key",
    "run_experiment",
    "emit_relative_hp_table",
    "write_metrics_csv",
    "read_metrics_csv",
    "artifact_paths",
]

STAGES = ("train-ff", "train-fb", "train-hp", "eval", "attack", "report")
HP_NAMES = ("mu", "gamma", "beta", "alpha")

# ------------------------------------------------------------------ config


def _strict_fields(cls, data: dict, where: str):
    """Build a section dataclass from a dict, rejecting unknown keys."""
    known = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ValueError(f"unknown field {extra[0]!r} in {where}")
    return cls(**data)


@dataclass(frozen=True)
class DataSection:
    train_images: int = 10000
    val_images: int = 2000
    dir: str | None = None

    def __post_init__(self):
        if self.train_images < 1 or self.val_images < 1:
            raise ValueError("train_images and val_images must be >= 1")


@dataclass(frozen=True)
class ModelSection:
    arch: str = "shallow"
    mode: str = "shared"
    baselines: tuple = ()

    def __post_init__(self):
        if self.arch != "shallow":
            raise ValueError(f"unknown arch {self.arch!r}; only 'shallow' is built in")
        if self.mode not in ("shared", "separate"):
            raise ValueError(f"unknown hyper-parameter mode {self.mode!r}")
        object.__setattr__(self, "baselines", tuple(self.baselines))
        for v in self.baselines:
            if v not in BASELINE_VARIANTS:
                raise ValueError(f"unknown baseline {v!r}; expected one of {BASELINE_VARIANTS}")


@dataclass(frozen=True)
class FfSection:
    epochs: int = 30
    batch_size: int = 32
    lr: float | None = None


@dataclass(frozen=True)
class FbSection:
    epochs: int = 20
    batch_size: int = 32
    lr: float | None = None
    regime: str = "unsupervised"

    def __post_init__(self):
        if self.regime not in ("unsupervised", "supervised"):
            raise ValueError(f"unknown feedback regime {self.regime!r}")


@dataclass(frozen=True)
class HpSection:
    epochs: int = 5
    batch_size: int = 128
    timesteps: int = 10
    restarts: int = 10
    lr: float | None = None
    alpha_lr: float | None = None


@dataclass(frozen=True)
class NoiseSection:
    kinds: tuple = ("gaussian", "salt_pepper")
    seed: int = 123

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        for kind in self.kinds:
            if kind == "clean" or kind not in KINDS:
                raise ValueError(f"noise kinds must be corrupting kinds, got {kind!r}")


@dataclass(frozen=True)
class EvalSection:
    timesteps: int = 10
    batch_size: int = 128


# named hyper-parameter points the attack stage compares (mu, gamma, beta, alpha)
_DEFAULT_ATTACK_POINTS = (
    ("pc", (0.2, 0.3, 0.5, 0.0)),
    ("ff", (0.0, 1.0, 0.0, 0.0)),
    ("ff_alpha", (0.0, 1.0, 0.0, 0.1)),
)


@dataclass(frozen=True)
class AttackSection:
    method: str = "bim"
    epsilons: tuple = DEFAULT_EPSILONS
    steps: int = 40
    timesteps: int = 10
    seed: int = 7
    min_images: int = 50
    max_images: int | None = 100
    batch_size: int = 64
    configurations: tuple = _DEFAULT_ATTACK_POINTS

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        # canonical name order so JSON round-trips compare equal
        pts = tuple(sorted((str(n), tuple(float(v) for v in q))
                           for n, q in self.configurations))
        for name, quad in pts:
            if len(quad) != 4:
                raise ValueError(f"attack configuration {name!r} needs 4 values, got {len(quad)}")
        object.__setattr__(self, "configurations", pts)

    def to_attack_config(self) -> AttackConfig:
        return AttackConfig(
            method=self.method, epsilons=self.epsilons, steps=self.steps,
            timesteps=self.timesteps, seed=self.seed, min_images=self.min_images,
            max_images=self.max_images, batch_size=self.batch_size,
        )


_SECTION_TYPES = {
    "data": DataSection,
    "model": ModelSection,
    "train_ff": FfSection,
    "train_fb": FbSection,
    "train_hp": HpSection,
    "noise": NoiseSection,
    "eval": EvalSection,
    "attack": AttackSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "exp"
    seed: int = 0
    out_dir: str = "out"
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train_ff: FfSection = field(default_factory=FfSection)
    train_fb: FbSection = field(default_factory=FbSection)
    train_hp: HpSection = field(default_factory=HpSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    eval: EvalSection = field(default_factory=EvalSection)
    attack: AttackSection = field(default_factory=AttackSection)

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        doc = {"experiment": self.experiment, "seed": self.seed, "out_dir": self.out_dir}
        for name, section in (("data", self.data), ("model", self.model),
                              ("train_ff", self.train_ff), ("train_fb", self.train_fb),
                              ("train_hp", self.train_hp), ("noise", self.noise),
                              ("eval", self.eval), ("attack", self.attack)):
            sec = dataclasses.asdict(section)
            for k, v in sec.items():
                if isinstance(v, tuple):
                    sec[k] = [list(e) if isinstance(e, tuple) else e for e in v]
            doc[name] = sec
        doc["attack"]["configurations"] = {
            name: list(quad) for name, quad in self.attack.configurations
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        top = dict(doc)
        kwargs = {}
        for name, sec_cls in _SECTION_TYPES.items():
            if name in top:
                sec = dict(top.pop(name))
                if name == "attack" and "configurations" in sec:
                    sec["configurations"] = tuple(
                        (n, tuple(q)) for n, q in dict(sec["configurations"]).items()
                    )
                kwargs[name] = _strict_fields(sec_cls, sec, f"config.{name}")
        known = {"experiment", "seed", "out_dir"}
        extra = sorted(set(top) - known)
        if extra:
            raise ValueError(f"unknown field {extra[0]!r} in config")
        kwargs.update({k: top[k] for k in known if k in top})
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def config_hash(config: ExperimentConfig) -> str:
    """Short digest of the run description, excluding filesystem locations
    (out_dir, data.dir): where artifacts live does not change what they hold."""
    doc = config.to_dict()
    doc.pop("out_dir")
    doc["data"].pop("dir")
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


# ------------------------------------------------------------------ metrics


@dataclass(frozen=True)
class MetricsRecord:
    """One accuracy measurement for a (condition, restart, time-step) cell."""

    experiment: str
    regime: str  # "pc" or "baseline_<variant>"
    mask: str  # "none", "zero_beta", "zero_alpha"
    noise_kind: str
    noise_level: int
    restart: int
    timestep: int
    accuracy: float
    epsilons: tuple = ()  # per-PCoder prediction error at this step
    hyperparams: tuple = ()  # ((mu, gamma, beta, alpha), ...) per PCoder

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {self.accuracy}")
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(
            self, "hyperparams", tuple(tuple(float(v) for v in q) for q in self.hyperparams))

    def key(self) -> tuple:
        return (self.regime, self.mask, self.noise_kind, self.noise_level,
                self.restart, self.timestep)


def _fmt(v: float) -> str:
    return repr(float(v))


_METRICS_COLUMNS = ("experiment", "regime", "mask", "noise_kind", "noise_level",
                    "restart", "timestep", "accuracy", "epsilons",
                    "mu", "gamma", "beta", "alpha")


def write_metrics_csv(path: str, records: list, cfg_hash: str) -> None:
    seen = set()
    lines = [f"# config={cfg_hash}", ",".join(_METRICS_COLUMNS)]
    for rec in records:
        if rec.key() in seen:
            raise ValueError(f"duplicate metrics row for {rec.key()}")
        seen.add(rec.key())
        hp_cols = [";".join(_fmt(q[i]) for q in rec.hyperparams) for i in range(4)] \
            if rec.hyperparams else ["", "", "", ""]
        lines.append(",".join([
            rec.experiment, rec.regime, rec.mask, rec.noise_kind,
            str(rec.noise_level), str(rec.restart), str(rec.timestep),
            _fmt(rec.accuracy), ";".join(_fmt(e) for e in rec.epsilons), *hp_cols,
        ]))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_metrics_csv(path: str) -> tuple:
    """Returns (records, config_hash) from a metrics CSV."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("# config="):
        raise ValueError(f"{path}: missing config hash header")
    cfg_hash = lines[0].split("=", 1)[1]
    if lines[1] != ",".join(_METRICS_COLUMNS):
        raise ValueError(f"{path}: unexpected column header")
    records = []
    for line in lines[2:]:
        if not line:
            continue
        cells = line.split(",")
        eps = tuple(float(v) for v in cells[8].split(";")) if cells[8] else ()
        if cells[9]:
            per_hp = [cells[9 + i].split(";") for i in range(4)]
            hps = tuple(
                tuple(float(per_hp[i][j]) for i in range(4))
                for j in range(len(per_hp[0]))
            )
        else:
            hps = ()
        records.append(MetricsRecord(
            experiment=cells[0], regime=cells[1], mask=cells[2], noise_kind=cells[3],
            noise_level=int(cells[4]), restart=int(cells[5]), timestep=int(cells[6]),
            accuracy=float(cells[7]), epsilons=eps, hyperparams=hps,
        ))
    return records, cfg_hash


# ------------------------------------------------------------------ files


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def _atomic_save_weights(path: str, net) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    save_weights(tmp, net)
    os.replace(tmp, path)


def _atomic_write_json(path: str, doc: dict) -> None:
    _atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_curves_csv(path: str, curves: list, cfg_hash: str) -> None:
    lines = [f"# config={cfg_hash}", "epoch,split,metric,value"]
    lines += [f"{e},{s},{m},{_fmt(v)}" for e, s, m, v in curves]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def artifact_paths(out_dir: str) -> dict:
    p = lambda name: os.path.join(out_dir, name)
    return {
        "config": p("config.json"),
        "ff": p("ff.pcw"),
        "fb_unsupervised": p("fb_unsup.pcw"),
        "fb_supervised": p("fb_sup.pcw"),
        "curves_ff": p("curves_ff.csv"),
        "curves_fb": p("curves_fb.csv"),
        "hp": p("hp_results.json"),
        "metrics": p("metrics.csv"),
        "attack_json": p("attack.json"),
        "attack_csv": p("attack.csv"),
        "ablation_json": p("ablation.json"),
        "ablation_csv": p("ablation.csv"),
        "chart_accuracy": p("accuracy_vs_t.svg"),
        "chart_hp": p("relative_hp.svg"),
        "relative_hp": p("relative_hp.csv"),
    }


def _baseline_path(out_dir: str, variant: str) -> str:
    return os.path.join(out_dir, f"baseline_{variant}.pcw")


def _require(path: str, stage: str, producer: str) -> None:
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"{stage} requires {os.path.basename(path)}; run {producer} first")


# ------------------------------------------------------------------ conditions


def noise_conditions(noise: NoiseSection) -> list:
    """Clean first, then every configured kind at levels 1..3."""
    specs = [NoiseSpec("clean", 0, noise.seed)]
    for kind in noise.kinds:
        specs += [NoiseSpec(kind, level, noise.seed)
                  for level in range(1, len(LEVEL_PARAMS[kind]))]
    return specs


def condition_key(spec: NoiseSpec) -> str:
    return "clean" if spec.is_clean else f"{spec.kind}_{spec.level}"


def _quads(hyperparams: list) -> list:
    return [[hp.mu, hp.gamma, hp.beta, hp.alpha] for hp in hyperparams]


# ------------------------------------------------------------------ charts

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def write_line_chart(path: str, title: str, xlabel: str, ylabel: str,
                     series: list, cfg_hash: str) -> None:
    """Self-contained SVG line chart; series is [(label, xs, ys), ...].

    Non-finite y values break the polyline (the segment is simply dropped).
    """
    width, height = 640, 400
    left, right, top, bottom = 60.0, width - 170.0, 36.0, height - 48.0
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if np.isfinite(y)]
    if pts:
        xlo, xhi = min(p[0] for p in pts), max(p[0] for p in pts)
        ylo, yhi = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    sx = lambda x: left + (x - xlo) / (xhi - xlo) * (right - left)
    sy = lambda y: bottom - (y - ylo) / (yhi - ylo) * (bottom - top)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<!-- config={cfg_hash} -->",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left:.1f}" y="18" font-size="14">{title}</text>',
        f'<line x1="{left:.1f}" y1="{bottom:.1f}" x2="{right:.1f}" y2="{bottom:.1f}" stroke="black"/>',
        f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" y2="{bottom:.1f}" stroke="black"/>',
        f'<text x="{(left + right) / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(top + bottom) / 2:.1f})">{ylabel}</text>',
    ]
    for tx in _ticks(xlo, xhi):
        out.append(f'<line x1="{sx(tx):.2f}" y1="{bottom:.1f}" x2="{sx(tx):.2f}" '
                   f'y2="{bottom + 4:.1f}" stroke="black"/>')
        out.append(f'<text x="{sx(tx):.2f}" y="{bottom + 16:.1f}" '
                   f'text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(ylo, yhi):
        out.append(f'<line x1="{left - 4:.1f}" y1="{sy(ty):.2f}" x2="{left:.1f}" '
                   f'y2="{sy(ty):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 7:.1f}" y="{sy(ty) + 4:.2f}" '
                   f'text-anchor="end">{ty:.3g}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        run = []
        chunks = []
        for x, y in zip(xs, ys):
            if np.isfinite(y):
                run.append(f"{sx(x):.2f},{sy(y):.2f}")
            elif run:
                chunks.append(run)
                run = []
        if run:
            chunks.append(run)
        for chunk in chunks:
            if len(chunk) == 1:
                cx, cy = chunk[0].split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
            else:
                out.append(f'<polyline points="{" ".join(chunk)}" fill="none" '
                           f'stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 * i
        out.append(f'<line x1="{right + 8:.1f}" y1="{ly + 5:.1f}" x2="{right + 28:.1f}" '
                   f'y2="{ly + 5:.1f}" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{right + 32:.1f}" y="{ly + 9:.1f}">{label}</text>')
    if not series:
        out.append(f'<text x="{(left + right) / 2:.1f}" y="{(top + bottom) / 2:.1f}" '
                   f'text-anchor="middle">no data</text>')
    out.append("</svg>")
    _atomic_write_text(path, "\n".join(out) + "\n")


# ------------------------------------------------------------- relative HPs


def emit_relative_hp_table(conditions: dict, csv_path: str | None = None,
                           svg_path: str | None = None, cfg_hash: str = "") -> list:
    """Each learned HP divided by its clean-condition value (best restart).

    conditions maps a condition key ("clean", "gaussian_2", ...) to either a
    per-PCoder quadruple list or a dict holding one under "hyperparams".
    Per-PCoder values are averaged before the ratio. Returns rows of
    (kind, level, hp_name, relative_value); level 0 repeats the clean
    baseline per kind and equals 1.0 by construction.
    """
    def mean_quad(entry):
        quads = entry["hyperparams"] if isinstance(entry, dict) else entry
        return np.asarray(quads, dtype=np.float64).mean(axis=0)

    if "clean" not in conditions:
        raise ValueError("missing clean baseline condition in hyper-parameter results")
    clean = mean_quad(conditions["clean"])

    kinds = sorted({key.rsplit("_", 1)[0] for key in conditions if key != "clean"})
    rows = []
    for kind in kinds:
        n_levels = len(LEVEL_PARAMS.get(kind, (0, 0, 0, 0)))
        for level in range(n_levels):
            key = "clean" if level == 0 else f"{kind}_{level}"
            if key not in conditions:
                raise ValueError(f"missing condition {key!r} in hyper-parameter results")
            quad = mean_quad(conditions[key])
            for i, name in enumerate(HP_NAMES):
                if clean[i] == 0.0:
                    rel = 1.0 if quad[i] == 0.0 else float("inf")
                else:
                    rel = float(quad[i] / clean[i])
                rows.append((kind, level, name, rel))

    if csv_path is not None:
        lines = [f"# config={cfg_hash}", "noise_kind,noise_level,hp,relative_value"]
        lines += [f"{k},{lv},{n},{_fmt(v)}" for k, lv, n, v in rows]
        _atomic_write_text(csv_path, "\n".join(lines) + "\n")
    if svg_path is not None:
        series = []
        for kind in kinds:
            for i, name in enumerate(HP_NAMES):
                ys = [v for k, lv, n, v in rows if k == kind and n == name]
                xs = list(range(len(ys)))
                series.append((f"{kind} {name}", xs, ys))
        write_line_chart(svg_path, "Learned HPs relative to clean", "noise level",
                         "relative value", series, cfg_hash)
    return rows


# ------------------------------------------------------------------ stages


def _forward_accuracy(net, images: np.ndarray, labels: np.ndarray,
                      batch_size: int = 256) -> float:
    hits = 0
    for s in range(0, images.shape[0], batch_size):
        logits = net.forward_logits(tt.tensor(images[s:s + batch_size]))
        hits += (logits.data.argmax(axis=1) == labels[s:s + batch_size]).sum()
    return float(hits / images.shape[0])


def _build_net(config: ExperimentConfig):
    return build_shallow(np.random.default_rng(config.seed), config.model.mode)


def _fb_path(paths: dict, config: ExperimentConfig) -> str:
    return paths["fb_unsupervised"] if config.train_fb.regime == "unsupervised" \
        else paths["fb_supervised"]


def _stage_train_ff(config, paths, train, val, written):
    net = _build_net(config)
    cfg = TrainConfig(regime="ff_supervised", epochs=config.train_ff.epochs,
                      batch_size=config.train_ff.batch_size, lr=config.train_ff.lr,
                      seed=config.seed)
    report = train_feedforward(net, train, val, cfg)
    _atomic_save_weights(paths["ff"], net)
    _write_curves_csv(paths["curves_ff"], report.curves, config_hash(config))
    written += [paths["ff"], paths["curves_ff"]]
    for variant in config.model.baselines:
        bnet = build_baseline(variant, np.random.default_rng(config.seed))
        train_feedforward(bnet, train, val, cfg)
        bpath = _baseline_path(config.out_dir, variant)
        _atomic_save_weights(bpath, bnet)
        written.append(bpath)
    return report


def _stage_train_fb(config, paths, train, val, written):
    _require(paths["ff"], "train-fb", "train-ff")
    net = _build_net(config)
    load_weights_into(net, paths["ff"])
    cfg = TrainConfig(regime="fb_unsupervised" if config.train_fb.regime == "unsupervised"
                      else "fb_supervised",
                      epochs=config.train_fb.epochs, batch_size=config.train_fb.batch_size,
                      lr=config.train_fb.lr, seed=config.seed)
    if cfg.regime == "fb_unsupervised":
        freeze(net.ff_parameters())
        report = train_feedback_unsupervised(net, train, val, cfg)
    else:
        report = train_feedback_supervised(net, train, val, cfg)
    fb_path = _fb_path(paths, config)
    _atomic_save_weights(fb_path, net)
    _write_curves_csv(paths["curves_fb"], report.curves, config_hash(config))
    written += [fb_path, paths["curves_fb"]]
    return report


def _stage_train_hp(config, paths, train, val, written):
    fb_path = _fb_path(paths, config)
    _require(fb_path, "train-hp", "train-fb")
    net = _build_net(config)
    load_weights_into(net, fb_path)
    freeze(net.parameters())
    conditions = {}
    for spec in noise_conditions(config.noise):
        cfg = TrainConfig(
            regime="hp_only", epochs=config.train_hp.epochs,
            batch_size=config.train_hp.batch_size, timesteps=config.train_hp.timesteps,
            lr=config.train_hp.lr, alpha_lr=config.train_hp.alpha_lr,
            restarts=config.train_hp.restarts, noise=spec, seed=config.seed,
        )
        report = train_hyperparams(net, train, val, cfg)
        conditions[condition_key(spec)] = {
            "noise": {"kind": spec.kind, "level": spec.level, "seed": spec.seed},
            "best_restart": report.best_restart,
            "hyperparams": _quads(report.hyperparams),
            "restarts": [
                {"restart": r.restart, "val_accuracy": r.val_accuracy,
                 "hyperparams": _quads(r.hyperparams)}
                for r in report.restarts
            ],
        }
    _atomic_write_json(paths["hp"], {
        "config_hash": config_hash(config), "mode": config.model.mode,
        "timesteps": config.train_hp.timesteps, "conditions": conditions,
    })
    written.append(paths["hp"])
    return conditions


def _stage_eval(config, paths, train, val, written):
    fb_path = _fb_path(paths, config)
    _require(fb_path, "eval", "train-fb")
    _require(paths["hp"], "eval", "train-hp")
    net = _build_net(config)
    load_weights_into(net, fb_path)
    with open(paths["hp"], "r", encoding="utf-8") as f:
        hp_doc = json.load(f)

    records = []
    for spec in noise_conditions(config.noise):
        key = condition_key(spec)
        if key not in hp_doc["conditions"]:
            raise ValueError(f"hp_results.json is missing condition {key!r}; re-run train-hp")
        cond = hp_doc["conditions"][key]
        hps = [HyperParams(*q) for q in cond["hyperparams"]]
        noisy = corrupt(val.images, spec)
        stats = evaluate_unrolled(net, noisy, val.labels, hps,
                                  config.eval.timesteps, config.eval.batch_size)
        for t in range(config.eval.timesteps + 1):
            records.append(MetricsRecord(
                experiment=config.experiment, regime="pc", mask="none",
                noise_kind=spec.kind, noise_level=spec.level,
                restart=cond["best_restart"], timestep=t,
                accuracy=stats["accuracy"][t], epsilons=tuple(stats["epsilons"][t]),
                hyperparams=tuple(tuple(q) for q in cond["hyperparams"]),
            ))

    for variant in config.model.baselines:
        bpath = _baseline_path(config.out_dir, variant)
        _require(bpath, "eval", "train-ff")
        bnet = build_baseline(variant, np.random.default_rng(config.seed))
        load_weights_into(bnet, bpath)
        for spec in noise_conditions(config.noise):
            noisy = corrupt(val.images, spec)
            records.append(MetricsRecord(
                experiment=config.experiment, regime=f"baseline_{variant}", mask="none",
                noise_kind=spec.kind, noise_level=spec.level, restart=0, timestep=0,
                accuracy=_forward_accuracy(bnet, noisy, val.labels),
            ))

    write_metrics_csv(paths["metrics"], records, config_hash(config))
    written.append(paths["metrics"])
    return records


def _stage_attack(config, paths, train, val, written):
    fb_path = _fb_path(paths, config)
    _require(fb_path, "attack", "train-fb")
    net = _build_net(config)
    load_weights_into(net, fb_path)
    acfg = config.attack.to_attack_config()
    summary = {}
    table = [f"# config={config_hash(config)}", "configuration,image_index,min_epsilon"]
    for name, quad in config.attack.configurations:
        result = median_min_perturbation(net, HyperParams(*quad), val, acfg)
        summary[name] = {
            "hyperparams": list(quad),
            "median": result.median if np.isfinite(result.median) else "inf",
            "success_rate": result.success_rate,
            "epsilons": result.epsilons,
            "n_eligible": result.n_eligible,
            "n_skipped": result.n_skipped,
        }
        table += [f"{name},{idx},{_fmt(eps)}" for idx, eps in result.per_image]
    _atomic_write_json(paths["attack_json"], {
        "config_hash": config_hash(config), "method": config.attack.method,
        "results": summary,
    })
    _atomic_write_text(paths["attack_csv"], "\n".join(table) + "\n")
    written += [paths["attack_json"], paths["attack_csv"]]
    return summary


def _stage_ablate(config, paths, train, val, written):
    fb_path = _fb_path(paths, config)
    _require(fb_path, "ablate", "train-fb")
    net = _build_net(config)
    load_weights_into(net, fb_path)
    freeze(net.parameters())
    base = TrainConfig(
        regime="hp_only", epochs=config.train_hp.epochs,
        batch_size=config.train_hp.batch_size, timesteps=config.train_hp.timesteps,
        lr=config.train_hp.lr, alpha_lr=config.train_hp.alpha_lr,
        restarts=config.train_hp.restarts, noise=NoiseSpec("clean", 0, config.noise.seed),
        seed=config.seed,
    )
    reports = ablation_suite(net, train, val, noise_conditions(config.noise), base)
    doc = {}
    lines = [f"# config={config_hash(config)}",
             "mask,noise_kind,noise_level,mu,gamma,beta,alpha,val_accuracy"]
    for (mask_name, kind, level), report in sorted(reports.items()):
        key = f"{mask_name}|{'clean' if kind == 'clean' else f'{kind}_{level}'}"
        doc[key] = {
            "best_restart": report.best_restart,
            "hyperparams": _quads(report.hyperparams),
            "val_accuracy": report.final_val_accuracy,
        }
        quads = np.asarray(_quads(report.hyperparams)).mean(axis=0)
        lines.append(",".join([mask_name, kind, str(level),
                               *(_fmt(v) for v in quads),
                               _fmt(report.final_val_accuracy)]))
    _atomic_write_json(paths["ablation_json"],
                       {"config_hash": config_hash(config), "conditions": doc})
    _atomic_write_text(paths["ablation_csv"], "\n".join(lines) + "\n")
    written += [paths["ablation_json"], paths["ablation_csv"]]
    return doc


def _stage_report(config, paths, train, val, written):
    _require(paths["metrics"], "report", "eval")
    _require(paths["hp"], "report", "train-hp")
    records, cfg_hash = read_metrics_csv(paths["metrics"])
    series = []
    seen = []
    for rec in records:
        key = "clean" if rec.noise_kind == "clean" else f"{rec.noise_kind}_{rec.noise_level}"
        label = key if rec.regime == "pc" else f"{rec.regime} {key}"
        if label not in seen:
            seen.append(label)
            pts = sorted((r.timestep, r.accuracy) for r in records
                         if r.regime == rec.regime and r.mask == rec.mask
                         and r.noise_kind == rec.noise_kind
                         and r.noise_level == rec.noise_level)
            series.append((label, [p[0] for p in pts], [p[1] for p in pts]))
    write_line_chart(paths["chart_accuracy"], "Accuracy over time-steps", "time-step",
                     "accuracy", series, cfg_hash)
    with open(paths["hp"], "r", encoding="utf-8") as f:
        hp_doc = json.load(f)
    emit_relative_hp_table(hp_doc["conditions"], csv_path=paths["relative_hp"],
                           svg_path=paths["chart_hp"], cfg_hash=cfg_hash)
    written += [paths["chart_accuracy"], paths["relative_hp"], paths["chart_hp"]]
    return series


_STAGE_FNS = {
    "train-ff": _stage_train_ff,
    "train-fb": _stage_train_fb,
    "train-hp": _stage_train_hp,
    "eval": _stage_eval,
    "attack": _stage_attack,
    "ablate": _stage_ablate,
    "report": _stage_report,
}


def run_experiment(config: ExperimentConfig, stages=None) -> dict:
    """Execute the requested stages in pipeline order; returns stage outputs.

    stages defaults to the full pipeline (ablate runs only when asked).
    Skipped stages are resumed from their persisted artifacts; a missing
    dependency raises FileNotFoundError naming the artifact.
    """
    wanted = list(STAGES) if stages is None else list(stages)
    for stage in wanted:
        if stage not in _STAGE_FNS:
            raise ValueError(f"unknown stage {stage!r}; expected one of "
                             f"{tuple(_STAGE_FNS)}")
    order = [s for s in ("train-ff", "train-fb", "train-hp", "eval", "attack",
                         "ablate", "report") if s in wanted]

    os.makedirs(config.out_dir, exist_ok=True)
    paths = artifact_paths(config.out_dir)
    _atomic_write_text(paths["config"], config.to_json())
    train = val = None
    if any(s != "report" for s in order):  # report works from artifacts alone
        train, val = load_dataset(config.data.train_images, config.data.val_images,
                                  seed=config.seed, data_dir=config.data.dir)

    written = [paths["config"]]
    outputs = {"paths": paths, "written": written}
    for stage in order:
        outputs[stage] = _STAGE_FNS[stage](config, paths, train, val, written)
    return outputs
