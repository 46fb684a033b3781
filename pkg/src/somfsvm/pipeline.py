"""Two-stage forecaster: SOM partition, then one f-SVM rule base per cluster.

Training flow::

    prices -> features -> chronological split -> z-score (train only)
           -> SOM on train inputs -> partition
           -> per cluster: two-phase SVR -> rule extraction [-> refinement]
           -> fallback routing for clusters without a rule base

Prediction scales the raw input, finds its BMU, follows the fallback link if
that node has no rule base, and runs normalized fuzzy inference.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Optional

import numpy as np

from . import fuzzy, som as som_mod
from .data import (
    FeatureDataset,
    PriceSeries,
    Scaling,
    apply_scaling,
    build_features,
    fit_scaling,
    split_train_test,
)
from .errors import (
    ModelCorruptError,
    ModelVersionError,
    ParameterError,
    SomFsvmError,
    TrainingError,
)
from .evaluation import CSV_HEADER, MetricReport, report
from .fuzzy import RefineConfig, RuleSet
from .som import SomConfig, SomMap
from .svr import SvrConfig, SvrModel, predict_svr_many, train_svr

log = logging.getLogger(__name__)

FORMAT_NAME = "somfsvm-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    som: SomConfig = field(default_factory=SomConfig)
    svr: SvrConfig = field(default_factory=SvrConfig)
    refine: Optional[RefineConfig] = None
    n_test: int = 200
    min_cluster_size: int = 10
    # master seed; SOM and per-cluster solver seeds derive from it
    seed: int = 0

    def __post_init__(self):
        if self.n_test < 1:
            raise ParameterError("n_test must be > 0")
        if self.min_cluster_size < 2:
            raise ParameterError("min_cluster_size must be >= 2")


_SECTIONS = {"som": SomConfig, "svr": SvrConfig, "refine": RefineConfig}


def config_from_dict(doc: dict) -> PipelineConfig:
    """Build a config from nested dicts; every key is optional, unknown keys
    raise :class:`ParameterError`."""
    if not isinstance(doc, dict):
        raise ParameterError("config must be a mapping")
    top = {f.name for f in fields(PipelineConfig)}
    unknown = set(doc) - top
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if key in _SECTIONS:
            if value is None:
                kwargs[key] = None
                continue
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ParameterError(f"config section {key!r} must be a mapping")
            bad = set(value) - {f.name for f in fields(cls)}
            if bad:
                raise ParameterError(f"unknown keys in {key!r}: {sorted(bad)}")
            try:
                kwargs[key] = cls(**value)
            except TypeError as exc:
                raise ParameterError(str(exc)) from None
        else:
            kwargs[key] = value
    return PipelineConfig(**kwargs)


def config_to_dict(config: PipelineConfig) -> dict:
    return asdict(config)


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(doc)


@dataclass(frozen=True)
class TwoStageModel:
    config: PipelineConfig
    scaling: Scaling
    map: SomMap
    rulesets: Dict[int, RuleSet]
    fallback: Dict[int, int]
    svr_models: Dict[int, SvrModel]
    cluster_sizes: Dict[int, int]
    provenance: dict

    def route(self, node: int) -> int:
        return self.fallback.get(node, node)

    def fingerprint(self) -> str:
        doc = _model_document(self)
        doc["provenance"] = {k: v for k, v in doc["provenance"].items() if k != "created"}
        return _digest(doc)


# --- training -----------------------------------------------------------------


def _fallback_routes(weights, has_rules):
    """Map every node without rules to the nearest node (by reference vector)
    that has them; ties go to the lower index."""
    donors = sorted(has_rules)
    routes = {}
    for k in range(weights.shape[0]):
        if k in has_rules:
            continue
        d2 = ((weights[donors] - weights[k]) ** 2).sum(axis=1)
        routes[k] = donors[int(np.argmin(d2))]
    return routes


def _train_cluster(X, y, config: PipelineConfig, node: int):
    svr_cfg = replace(config.svr, seed=config.seed + node)
    model = train_svr(X, y, svr_cfg)
    rules = fuzzy.extract_rules(model)
    if config.refine is not None and not rules.trivial:
        rules = fuzzy.refine_rules(rules, X, y, config.refine)
    return model, rules


def fit_two_stage(train: FeatureDataset, config: PipelineConfig, workers: int = 1) -> TwoStageModel:
    """Train on an already-split, unscaled training set."""
    scaling = fit_scaling(train, unit_if_constant=True)
    scaled = apply_scaling(train, scaling)
    som_cfg = replace(config.som, seed=config.seed)
    smap = som_mod.init_map(som_cfg, scaled.dim, scaled)
    smap = som_mod.train_som(smap, scaled)
    part = som_mod.partition_data(smap, scaled)

    eligible = [k for k, idx in part.clusters.items() if len(idx) >= config.min_cluster_size]
    if not eligible:
        raise TrainingError(
            f"no cluster reached min_cluster_size={config.min_cluster_size} "
            f"(sizes {part.sizes()})"
        )

    def job(k):
        idx = part.clusters[k]
        return k, _train_cluster(scaled.X[idx], scaled.y[idx], config, k)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, eligible))
    else:
        results = [job(k) for k in eligible]

    svr_models = {k: m for k, (m, _) in results}
    rulesets = {k: r for k, (_, r) in results}
    fallback = _fallback_routes(smap.weights, set(rulesets))
    log.info("trained %d rule sets, %d fallback routes", len(rulesets), len(fallback))
    provenance = {
        "dataset_fingerprint": train.fingerprint(),
        "n_train": len(train),
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return TwoStageModel(
        config=config,
        scaling=scaling,
        map=smap,
        rulesets=rulesets,
        fallback=fallback,
        svr_models=svr_models,
        cluster_sizes=part.sizes(),
        provenance=provenance,
    )


def prepare(series: PriceSeries, config: PipelineConfig):
    """Features and chronological (train, test) split for ``series``."""
    return split_train_test(build_features(series), config.n_test)


def train_two_stage(series: PriceSeries, config: Optional[PipelineConfig] = None, workers: int = 1):
    """Build features, hold out the last ``n_test`` records and train on the rest."""
    config = config or PipelineConfig()
    train, _ = prepare(series, config)
    return fit_two_stage(train, config, workers)


# --- inference ----------------------------------------------------------------


def _check_raw(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.scaling.dim:
        raise ParameterError(f"expected {model.scaling.dim} inputs, got {X.shape[1]}")
    return X


def route_many(model: TwoStageModel, X_raw) -> np.ndarray:
    """Node whose rule base answers each raw input."""
    Z = model.scaling.transform(_check_raw(model, X_raw))
    nodes = som_mod.bmu_many(model.map, Z)
    return np.array([model.route(int(k)) for k in nodes], dtype=int)


def predict_many(model: TwoStageModel, X_raw) -> np.ndarray:
    X_raw = _check_raw(model, X_raw)
    Z = model.scaling.transform(X_raw)
    nodes = route_many(model, X_raw)
    out = np.empty(Z.shape[0])
    for k in np.unique(nodes):
        sel = nodes == k
        out[sel] = fuzzy.infer_many(model.rulesets[int(k)], Z[sel])
    return out


def predict(model: TwoStageModel, x_raw) -> float:
    x = np.asarray(x_raw, dtype=float)
    if x.shape != (model.scaling.dim,):
        raise ParameterError(f"expected a {model.scaling.dim}-vector, got shape {x.shape}")
    return float(predict_many(model, x[None, :])[0])


def predict_svr_routed(model: TwoStageModel, X_raw) -> np.ndarray:
    """Same routing as :func:`predict` but answered by each cluster's SVR."""
    X_raw = _check_raw(model, X_raw)
    Z = model.scaling.transform(X_raw)
    nodes = route_many(model, X_raw)
    out = np.empty(Z.shape[0])
    for k in np.unique(nodes):
        sel = nodes == k
        out[sel] = predict_svr_many(model.svr_models[int(k)], Z[sel])
    return out


def evaluate(model: TwoStageModel, test: FeatureDataset) -> MetricReport:
    if len(test) == 0:
        raise ParameterError("empty test set")
    return report(test.y, predict_many(model, test.X))


# --- persistence --------------------------------------------------------------


def _digest(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _ruleset_doc(rs: RuleSet):
    return {
        "centers": _floats(rs.centers),
        "widths": _floats(rs.widths),
        "consequents": _floats(rs.consequents),
        "offset": float(rs.offset),
        "inference_mode": rs.inference_mode,
        "diverged": bool(rs.diverged),
        "dim": int(rs.centers.shape[1]),
    }


def _svr_doc(m: SvrModel):
    return {
        "support_vectors": _floats(m.support_vectors),
        "beta": _floats(m.beta),
        "sigmas": _floats(m.sigmas),
        "kernel_kind": m.kernel_kind,
        "offset": float(m.offset),
        "bias": float(m.bias),
        "solver_violation": float(m.solver_violation),
        "dim": int(m.support_vectors.shape[1]),
    }


def _model_document(model: TwoStageModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": config_to_dict(model.config),
        "scaling": {"mean": _floats(model.scaling.mean), "std": _floats(model.scaling.std)},
        "som": {
            "rows": model.map.config.rows,
            "cols": model.map.config.cols,
            "topology": model.map.config.topology,
            "weights": _floats(model.map.weights),
        },
        "clusters": [
            {
                "node": k,
                "size": model.cluster_sizes.get(k, 0),
                "ruleset": _ruleset_doc(model.rulesets[k]),
                "svr": _svr_doc(model.svr_models[k]),
            }
            for k in sorted(model.rulesets)
        ],
        "cluster_sizes": {str(k): int(v) for k, v in sorted(model.cluster_sizes.items())},
        "fallback": {str(k): int(v) for k, v in sorted(model.fallback.items())},
        "provenance": dict(model.provenance),
    }


def dumps_model(model: TwoStageModel) -> str:
    doc = _model_document(model)
    doc["checksum"] = _digest(doc)
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def save_model(model: TwoStageModel, sink) -> None:
    """Write to a path or a text file object."""
    text = dumps_model(model)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _shaped(rows, dim):
    a = np.asarray(rows, dtype=float)
    return a.reshape(-1, dim) if a.size == 0 else a


def loads_model(text: str) -> TwoStageModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelCorruptError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelCorruptError("not a somfsvm model document")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"model file version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )
    stored = doc.pop("checksum", None)
    if stored != _digest(doc):
        raise ModelCorruptError("model checksum mismatch")
    try:
        config = config_from_dict(doc["config"])
        scaling = Scaling(doc["scaling"]["mean"], doc["scaling"]["std"])
        smap = SomMap(config=replace(config.som, seed=config.seed), weights=doc["som"]["weights"], trained=True)
        rulesets, svrs = {}, {}
        for c in doc["clusters"]:
            k = int(c["node"])
            r, s = c["ruleset"], c["svr"]
            rulesets[k] = RuleSet(
                _shaped(r["centers"], r["dim"]),
                _shaped(r["widths"], r["dim"]),
                r["consequents"],
                r["offset"],
                r["inference_mode"],
                r["diverged"],
            )
            svrs[k] = SvrModel(
                _shaped(s["support_vectors"], s["dim"]),
                s["beta"],
                s["sigmas"],
                s["kernel_kind"],
                s["offset"],
                s["bias"],
                s["solver_violation"],
            )
        fallback = {int(k): int(v) for k, v in doc["fallback"].items()}
        sizes = {int(k): int(v) for k, v in doc["cluster_sizes"].items()}
        provenance = doc["provenance"]
    except (KeyError, TypeError, ValueError, SomFsvmError) as exc:
        raise ModelCorruptError(f"malformed model document: {exc}") from None
    return TwoStageModel(config, scaling, smap, rulesets, fallback, svrs, sizes, provenance)


def load_model(source) -> TwoStageModel:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return loads_model(text)


def export_model_rules(model: TwoStageModel) -> str:
    """Rule bases of every cluster in the Gaussmf listing format, with cluster headers."""
    parts = []
    for k in sorted(model.rulesets):
        rs = model.rulesets[k]
        parts.append(f"# cluster {k}: {model.cluster_sizes.get(k, 0)} records, {rs.n_rules} rules\n")
        parts.append(fuzzy.export_rules(rs))
    for k, v in sorted(model.fallback.items()):
        parts.append(f"# cluster {k}: routed to cluster {v}\n")
    return "".join(parts)


# --- experiments --------------------------------------------------------------


@dataclass
class ExperimentRow:
    stock: str
    metrics: Optional[MetricReport] = None
    error: Optional[str] = None
    rule_counts: Dict[int, int] = field(default_factory=dict)
    rules_text: str = ""
    model: Optional[TwoStageModel] = None


@dataclass
class ExperimentReport:
    rows: list
    config: PipelineConfig
    model_name: str = "SOM+f-SVM"

    def to_csv(self) -> str:
        lines = [CSV_HEADER + ",error"]
        for r in self.rows:
            if r.metrics is not None:
                lines.append(r.metrics.csv_row(r.stock, self.model_name) + ",")
            else:
                msg = (r.error or "").replace(",", ";").replace("\n", " ")
                lines.append(f"{r.stock},{self.model_name},,,,,{msg}")
        return "\n".join(lines) + "\n"

    def clusters_csv(self) -> str:
        lines = ["stock,cluster,rules"]
        for r in self.rows:
            lines += [f"{r.stock},{k},{n}" for k, n in sorted(r.rule_counts.items())]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        (out / "rules").mkdir(parents=True, exist_ok=True)
        (out / "models").mkdir(exist_ok=True)
        (out / "report.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / "clusters.csv").write_text(self.clusters_csv(), encoding="utf-8")
        (out / "config.json").write_text(
            json.dumps(config_to_dict(self.config), indent=2) + "\n", encoding="utf-8"
        )
        for r in self.rows:
            if r.model is not None:
                (out / "rules" / f"{r.stock}.txt").write_text(r.rules_text, encoding="utf-8")
                save_model(r.model, out / "models" / f"{r.stock}.json")


def _run_one(name, series, config):
    try:
        train, test = prepare(series, config)
        model = fit_two_stage(train, config)
        metrics = evaluate(model, test)
    except SomFsvmError as exc:
        log.warning("dataset %s failed: %s", name, exc)
        return ExperimentRow(name, error=f"{type(exc).__name__}: {exc}")
    counts = {k: rs.n_rules for k, rs in model.rulesets.items()}
    return ExperimentRow(name, metrics, None, counts, export_model_rules(model), model)


def run_experiment(datasets, config: Optional[PipelineConfig] = None, workers: int = 1) -> ExperimentReport:
    """Train and evaluate every ``(name, PriceSeries)`` pair; failures become
    error rows instead of aborting the batch."""
    config = config or PipelineConfig()
    datasets = list(datasets)
    if workers > 1 and len(datasets) > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda d: _run_one(d[0], d[1], config), datasets))
    else:
        rows = [_run_one(name, s, config) for name, s in datasets]
    return ExperimentReport(rows, config)
