"""Experiment engine: SNR sweeps over scenario factors and method comparison.

One model is trained per (factor value, SNR) cell by default; a pooled mode
trains one model per factor value on all SNRs together. Results land in a
ResultTable and are emitted as a CSV of accuracy curves plus per-point
confusion matrices. Completed cells are flushed to ``results.jsonl`` as the
sweep runs, so an interrupted sweep resumes from where it stopped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline import projection_classify
from .datapipe import (derive_seed, generate_sample, scenario_to_dict,
                       split_dataset, CLASS_ORDER)
from .density import density_diagram
from .errors import NomadetError
from .neuralnet import ArchConfig, ModulationNet, TrainConfig, train
from .sigsim import ModScheme, NomaScenario, generate_noma_frame, resolve_allocation
from .wavelet import WaveletSpec, denoise_frame

__all__ = [
    "METHODS", "pipeline_stages", "ExperimentConfig", "ResultRow", "ResultTable",
    "run_sweep", "evaluate", "emit_report", "diagram_matrix", "desk_preset",
    "full_preset",
]

METHOD_RESNET = "resnet_denoised"
METHOD_RAW = "resnet_raw"
METHOD_PROJECTION = "projection_clustering"
METHODS = (METHOD_RESNET, METHOD_RAW, METHOD_PROJECTION)

_PIPELINES = {
    METHOD_RESNET: ("simulate", "denoise", "densify", "classify"),
    METHOD_RAW: ("simulate", "densify", "classify"),
    METHOD_PROJECTION: ("simulate", "denoise", "project", "classify"),
}

FACTOR_NONE = "none"
FACTORS = (FACTOR_NONE, "near_scheme", "user_count", "delta_db", "alpha_fpc")


def pipeline_stages(method: str) -> tuple:
    """Processing stages a method applies to each raw sample."""
    try:
        return _PIPELINES[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; available: {METHODS}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: NomaScenario = field(default_factory=NomaScenario)
    snr_start: float = -10.0
    snr_stop: float = 20.0
    snr_step: float = 2.0
    factor_name: str = FACTOR_NONE
    factor_values: tuple = ()
    methods: tuple = (METHOD_RESNET,)
    pooled_training: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.snr_step <= 0:
            raise ValueError("snr_step must be > 0")
        if self.snr_start > self.snr_stop:
            raise ValueError("snr_start must not exceed snr_stop")
        if self.factor_name not in FACTORS:
            raise ValueError(f"factor must be one of {FACTORS}")
        if self.factor_name != FACTOR_NONE and not self.factor_values:
            raise ValueError("factor_values required when a factor axis is set")
        for m in self.methods:
            pipeline_stages(m)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "factor_values", tuple(self.factor_values))

    @property
    def snr_points(self) -> tuple:
        count = int(np.floor((self.snr_stop - self.snr_start) / self.snr_step + 1e-9)) + 1
        return tuple(round(self.snr_start + k * self.snr_step, 9) for k in range(count))

    def factor_cells(self) -> tuple:
        if self.factor_name == FACTOR_NONE:
            return (("default", self.scenario),)
        cells = []
        for value in self.factor_values:
            cells.append((str(value), _apply_factor(self.scenario, self.factor_name, value)))
        return tuple(cells)

    def digest_source(self) -> dict:
        return {
            "scenario": scenario_to_dict(self.scenario),
            "snr_start": self.snr_start, "snr_stop": self.snr_stop,
            "snr_step": self.snr_step, "factor_name": self.factor_name,
            "factor_values": [str(v) for v in self.factor_values],
            "methods": list(self.methods),
            "pooled_training": self.pooled_training,
            "train": self.train.__dict__ | {},
            "seed": self.seed,
        }


def _apply_factor(scenario: NomaScenario, name: str, value) -> NomaScenario:
    if name == "near_scheme":
        scheme = ModScheme.from_name(value) if isinstance(value, str) else value
        return replace(scenario, near_schemes=(scheme,))
    if name == "user_count":
        near = int(value) - 1
        if not 1 <= near <= 3:
            raise ValueError("user_count factor expects 2 to 4 total users")
        return replace(scenario, near_schemes=(ModScheme.QPSK,) * near)
    if name == "delta_db":
        return replace(scenario, delta_db=float(value))
    if name == "alpha_fpc":
        return replace(scenario, alpha_fpc=float(value))
    raise ValueError(f"unknown factor {name!r}")


@dataclass(frozen=True)
class ResultRow:
    snr_db: float
    factor: str
    method: str
    accuracy: float
    confusion: tuple           # 4x4 counts, true class by row
    n_test: int

    def to_json(self) -> dict:
        return {"snr_db": self.snr_db, "factor": self.factor, "method": self.method,
                "accuracy": self.accuracy,
                "confusion": [list(r) for r in self.confusion],
                "n_test": self.n_test}

    @classmethod
    def from_json(cls, d: dict) -> "ResultRow":
        return cls(snr_db=float(d["snr_db"]), factor=str(d["factor"]),
                   method=str(d["method"]), accuracy=float(d["accuracy"]),
                   confusion=tuple(tuple(int(c) for c in row) for row in d["confusion"]),
                   n_test=int(d["n_test"]))


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def find(self, factor: str, method: str, snr_db: float) -> ResultRow | None:
        for row in self.rows:
            if (row.factor == factor and row.method == method
                    and abs(row.snr_db - snr_db) < 1e-9):
                return row
        return None

    def accuracies(self, method: str, factor: str | None = None) -> dict:
        out = {}
        for row in self.rows:
            if row.method != method:
                continue
            if factor is not None and row.factor != factor:
                continue
            out[row.snr_db] = row.accuracy
        return out


def diagram_matrix(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack sample diagrams into (N, 1, H, W) float32 plus the label vector."""
    if not samples:
        raise ValueError("no samples")
    grids = np.stack([s.diagram.grid for s in samples]).astype(np.float32)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return grids[:, None, :, :], labels


def evaluate(predictor, samples) -> tuple[float, np.ndarray]:
    """Accuracy and 4x4 confusion matrix of a predictor on labelled samples.

    ``predictor`` maps a list of samples to an integer label array.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot evaluate on an empty sample set")
    pred = np.asarray(predictor(samples), dtype=np.int64)
    truth = np.array([s.label for s in samples], dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"predictor returned {pred.shape}, expected {truth.shape}")
    k = len(CLASS_ORDER)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    accuracy = float(np.trace(confusion) / truth.size)
    return accuracy, confusion


def model_predictor(model: ModulationNet):
    def predict(samples):
        x, _ = diagram_matrix(samples)
        return model.classify(x)
    return predict


class _CellData:
    """Everything one (factor, SNR) cell can need, built in a single pass."""

    def __init__(self, scenario: NomaScenario, wavelet_spec: WaveletSpec,
                 need_denoised: bool, need_raw: bool, need_frames: bool):
        from .datapipe import LabeledSample  # local to avoid cycle at import time

        resolve_allocation(scenario)  # fail fast on invalid power setups
        self.scenario = scenario
        self.denoised: list = []
        self.raw: list = []
        self.frames: list = []
        for label in range(len(CLASS_ORDER)):
            for index in range(scenario.samples_per_class):
                seed = derive_seed(scenario.seed, label, index)
                scen = replace(scenario, far_scheme=CLASS_ORDER[label])
                frame = generate_noma_frame(scen, rng=np.random.default_rng(seed))
                if need_raw:
                    diagram = density_diagram(frame, scenario.grid_size,
                                              snr_db=scenario.snr_db_near, seed=seed)
                    self.raw.append(LabeledSample(diagram, label, seed,
                                                  scenario.snr_db_near))
                if need_denoised or need_frames:
                    den = denoise_frame(frame, wavelet_spec)
                    if need_frames:
                        self.frames.append(den)
                    if need_denoised:
                        diagram = density_diagram(den, scenario.grid_size,
                                                  snr_db=scenario.snr_db_near, seed=seed)
                        self.denoised.append(LabeledSample(diagram, label, seed,
                                                           scenario.snr_db_near))


def _train_and_score(samples, split, arch, train_cfg, model_seed):
    x, y = diagram_matrix(samples)
    model = ModulationNet(arch, seed=model_seed)
    idx_tr = np.array(split.train, dtype=np.int64)
    idx_va = np.array(split.validation, dtype=np.int64)
    history = train(model, (x[idx_tr], y[idx_tr]), (x[idx_va], y[idx_va]), train_cfg)
    return model, history


def _projection_predictor(cell: _CellData):
    scenario = cell.scenario
    alloc = resolve_allocation(scenario)

    def predict(samples):
        seed_to_frame = {s.seed: f for s, f in zip(cell.denoised, cell.frames)}
        labels = []
        for s in samples:
            frame = seed_to_frame[s.seed]
            scheme = projection_classify(frame, alloc, scenario.near_schemes)
            labels.append(CLASS_ORDER.index(scheme))
        return np.array(labels, dtype=np.int64)
    return predict


def run_sweep(cfg: ExperimentConfig, out_dir=None,
              wavelet_spec: WaveletSpec | None = None,
              progress=None) -> ResultTable:
    """Full factor x SNR x method sweep.

    With ``out_dir`` each finished cell is appended to results.jsonl; a rerun
    with the same config digest skips cells already on disk.
    """
    wavelet_spec = wavelet_spec or WaveletSpec()
    digest = json.dumps(cfg.digest_source(), sort_keys=True)
    table = ResultTable()
    done = set()
    journal = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        journal_path = out_dir / "results.jsonl"
        if journal_path.exists():
            rows, matched = _read_journal(journal_path, digest)
            if matched:
                for row in rows:
                    table.rows.append(row)
                    done.add((row.factor, row.method, row.snr_db))
        journal = open(journal_path, "w" if not done else "a", encoding="utf-8")
        if not done:
            journal.write(json.dumps({"config_digest": digest}) + "\n")
            journal.flush()

    need_denoised = any(m in (METHOD_RESNET, METHOD_PROJECTION) for m in cfg.methods)
    need_raw = METHOD_RAW in cfg.methods
    need_frames = METHOD_PROJECTION in cfg.methods

    try:
        for fi, (factor_label, scen_factor) in enumerate(cfg.factor_cells()):
            pooled_models: dict[str, ModulationNet] = {}
            cells: list[tuple[float, _CellData, object]] = []
            for si, snr in enumerate(cfg.snr_points):
                cell_done = all((factor_label, m, snr) in done for m in cfg.methods)
                if cell_done and not cfg.pooled_training:
                    continue
                cell_seed = derive_seed(cfg.seed, fi, si)
                scen_cell = replace(scen_factor, snr_db_near=snr, seed=cell_seed)
                cell = _CellData(scen_cell, wavelet_spec,
                                 need_denoised, need_raw, need_frames)
                ref_samples = cell.denoised if need_denoised else cell.raw
                split = split_dataset(ref_samples, seed=derive_seed(cell_seed, 1))
                cells.append((snr, cell, split))

            if cfg.pooled_training:
                pooled_models = _train_pooled(cfg, fi, cells)

            for snr, cell, split in cells:
                for mi, method in enumerate(cfg.methods):
                    if (factor_label, method, snr) in done:
                        continue
                    row = _score_cell(cfg, factor_label, snr, cell, split,
                                      method, mi, pooled_models)
                    table.rows.append(row)
                    done.add((factor_label, method, snr))
                    if journal is not None:
                        journal.write(json.dumps(row.to_json(), sort_keys=True) + "\n")
                        journal.flush()
                    if progress is not None:
                        progress(row)
    finally:
        if journal is not None:
            journal.close()
    return table


def _score_cell(cfg, factor_label, snr, cell, split, method, method_index,
                pooled_models) -> ResultRow:
    cell_samples = cell.raw if method == METHOD_RAW else cell.denoised
    test_samples = [cell_samples[i] for i in split.test]
    if method == METHOD_PROJECTION:
        predictor = _projection_predictor(cell)
    elif cfg.pooled_training and method in pooled_models:
        predictor = model_predictor(pooled_models[method])
    else:
        model_seed = derive_seed(cell.scenario.seed, 1000 + method_index)
        train_cfg = replace(cfg.train,
                            seed=derive_seed(cell.scenario.seed, 2000 + method_index))
        model, _ = _train_and_score(cell_samples, split, _arch_for(cfg),
                                    train_cfg, model_seed)
        predictor = model_predictor(model)
    accuracy, confusion = evaluate(predictor, test_samples)
    return ResultRow(snr_db=snr, factor=factor_label, method=method,
                     accuracy=accuracy,
                     confusion=tuple(tuple(int(c) for c in r) for r in confusion),
                     n_test=len(test_samples))


def _train_pooled(cfg, factor_index: int, cells) -> dict:
    models = {}
    for mi, method in enumerate(cfg.methods):
        if method == METHOD_PROJECTION:
            continue
        xs, ys, xv, yv = [], [], [], []
        for _, cell, split in cells:
            samples = cell.raw if method == METHOD_RAW else cell.denoised
            x, y = diagram_matrix(samples)
            tr = np.array(split.train, dtype=np.int64)
            va = np.array(split.validation, dtype=np.int64)
            xs.append(x[tr]); ys.append(y[tr])
            xv.append(x[va]); yv.append(y[va])
        if not xs:
            continue
        seed = derive_seed(cfg.seed, factor_index, 3000 + mi)
        model = ModulationNet(_arch_for(cfg), seed=seed)
        train_cfg = replace(cfg.train, seed=derive_seed(seed, 1))
        train(model, (np.concatenate(xs), np.concatenate(ys)),
              (np.concatenate(xv), np.concatenate(yv)), train_cfg)
        models[method] = model
    return models


def _arch_for(cfg: ExperimentConfig) -> ArchConfig:
    return ArchConfig(input_size=cfg.scenario.grid_size)


def _read_journal(path: Path, digest: str):
    rows = []
    matched = False
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            if header:
                head = json.loads(header)
                matched = head.get("config_digest") == digest
            if matched:
                for line in fh:
                    line = line.strip()
                    if line:
                        rows.append(ResultRow.from_json(json.loads(line)))
    except (json.JSONDecodeError, KeyError, ValueError):
        return [], False
    return rows, matched


def emit_report(table: ResultTable, out_dir) -> list:
    """Write accuracy CSV + confusion matrices; stable order, byte-stable."""
    if not table.rows:
        raise ValueError("cannot emit a report for an empty result table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sorted(table.rows, key=lambda r: (r.factor, r.method, r.snr_db))

    csv_path = out_dir / "accuracy_vs_snr.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("snr_db,factor,method,accuracy\n")
        for row in rows:
            fh.write(f"{row.snr_db:g},{row.factor},{row.method},{row.accuracy:.6f}\n")

    conf_path = out_dir / "confusion_matrices.txt"
    class_names = ",".join(s.value for s in CLASS_ORDER)
    with open(conf_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# rows: true class, columns: predicted ({class_names})\n")
        for row in rows:
            fh.write(f"factor={row.factor} method={row.method} "
                     f"snr_db={row.snr_db:g} accuracy={row.accuracy:.6f} "
                     f"n_test={row.n_test}\n")
            for line in row.confusion:
                fh.write(" ".join(f"{c:4d}" for c in line) + "\n")
            fh.write("\n")
    return [csv_path, conf_path]


def desk_preset(scenario: NomaScenario | None = None, seed: int = 0,
                methods: tuple = (METHOD_RESNET,)) -> ExperimentConfig:
    """Small sweep for desk runs: 50 samples/class, 6 SNR points."""
    scenario = scenario or NomaScenario(near_schemes=(ModScheme.QPSK,),
                                        delta_db=6.0, samples_per_class=50)
    scenario = replace(scenario, samples_per_class=min(scenario.samples_per_class, 50))
    return ExperimentConfig(scenario=scenario, snr_start=-10.0, snr_stop=20.0,
                            snr_step=6.0, methods=methods, seed=seed)


def full_preset(scenario: NomaScenario | None = None, seed: int = 0,
                methods: tuple = METHODS) -> ExperimentConfig:
    """The full evaluation grid: 250 samples/class, -10..20 dB step 2."""
    scenario = scenario or NomaScenario(near_schemes=(ModScheme.QPSK,),
                                        delta_db=6.0, samples_per_class=250)
    return ExperimentConfig(scenario=scenario, snr_start=-10.0, snr_stop=20.0,
                            snr_step=2.0, methods=methods, seed=seed)
