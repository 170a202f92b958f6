"""End-to-end orchestration: configs, checkpoints, stage runners, reports.

One run directory holds a whole pipeline: teacher.ckpt, distill.ckpt,
finetune.ckpt, code files, and one report JSON per stage. Every artifact
records the hash of the config that produced it; resuming a stage refuses
a mismatched hash, and downstream stages check lineage fields (variant,
input size, dataset) instead.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .counting import count_flops, count_parameters
from .errors import ConfigError, MissingArtifactError
from .finetune import FinetuneConfig, finetune_retrieval
from .kd import DistillConfig, train_kd
from .model_spec import TensorShape
from .preprocess import preprocess
from .retrieval import CodeMatrix, codes_from_features, hamming_rank, map_at_n
from .code_file import write_code_file
from .splits import DatasetSplit, make_cifar10_split, make_nuswide_split
from .students import attach_hash_head, build_student, student_spec
from .synthetic import SyntheticSpec, make_synthetic
from .teachers import TinyTeacher, load_torchvision_teacher, parameter_checksum

STAGES = ("distill", "finetune", "encode", "evaluate")
CHECKPOINT_VERSION = 1
REPORT_VERSION = 1

# Distillation epoch defaults per dataset (the two benchmark schedules).
DATASET_KD_EPOCHS = {"cifar10": 160, "nuswide": 120, "synthetic": 30}
# Distillation learning-rate defaults per teacher pairing.
TEACHER_KD_LR = {"resnet50": 1e-4, "alexnet": 3e-6, "tiny": 1e-4}

_HASH_EXCLUDED = ("output_dir", "data_root", "checkpoint_in", "resume")


@dataclass(frozen=True)
class ExperimentConfig:
    stage: str
    output_dir: str
    dataset: str = "synthetic"
    data_root: str | None = None
    seed: int = 0
    student_variant: str = "V1"
    input_size: int = 224
    teacher: str = "tiny"
    teacher_weights: str | None = None
    synthetic_classes: int = 10
    synthetic_per_class: int = 60
    synthetic_size: int = 32
    optimizer: str | None = None
    learning_rate: float | None = None
    epochs: int | None = None
    batch_size: int = 64
    framework: str = "CSQ"
    n_bits: int = 16
    gamma: float = 20.0
    lambda_q: float | None = None
    augment: bool = False
    top_n: int | None = None
    top_k_listing: int = 0
    from_scratch: bool = False
    resume: bool = False
    checkpoint_in: str | None = None

    def validate(self) -> None:
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.dataset not in ("synthetic", "cifar10", "nuswide"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.dataset != "synthetic" and not self.data_root:
            raise ConfigError(f"dataset {self.dataset!r} needs data_root")
        if self.student_variant not in ("V1", "V2"):
            raise ConfigError(f"unknown student variant {self.student_variant!r}")
        if self.teacher not in ("tiny", "resnet50", "alexnet"):
            raise ConfigError(f"unknown teacher {self.teacher!r}")
        if self.stage == "finetune" and self.framework not in ("CSQ", "DCH"):
            raise ConfigError(f"framework must be CSQ or DCH, got {self.framework!r}")
        if self.n_bits <= 0:
            raise ConfigError("n_bits must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        if self.stage == "distill":
            return DATASET_KD_EPOCHS[self.dataset]
        return 30

    def resolved_optimizer(self) -> str:
        if self.optimizer:
            return self.optimizer
        return "adam" if self.stage == "distill" else "rmsprop"

    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        if self.stage == "distill":
            return TEACHER_KD_LR[self.teacher]
        return 1e-5

    def config_hash(self) -> str:
        doc = asdict(self)
        for key in _HASH_EXCLUDED:
            doc.pop(key, None)
        canonical = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        return ExperimentConfig(**json.loads(text))


def environment_fingerprint() -> dict:
    return {
        "python": sys.version.split()[0],
        "torch": torch.__version__,
        "numpy": np.__version__,
        "platform": platform.platform(),
        "threads": torch.get_num_threads(),
    }


@dataclass
class MetricsReport:
    stage: str
    config_hash: str
    version: int = REPORT_VERSION
    dataset: str = ""
    model: str = ""
    framework: str = ""
    n_bits: int = 0
    losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    map_at_n: float | None = None
    top_n: int | None = None
    counts: dict = field(default_factory=dict)
    models_loaded: list = field(default_factory=list)
    environment: dict = field(default_factory=environment_fingerprint)
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "MetricsReport":
        return MetricsReport(**json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @staticmethod
    def load(path) -> "MetricsReport":
        return MetricsReport.from_json(Path(path).read_text())


def save_checkpoint(path, stage: str, config: ExperimentConfig, model_state: dict,
                    history: list[float], extra: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "stage": stage,
        "config_hash": config.config_hash(),
        "lineage": {
            "student_variant": config.student_variant,
            "input_size": config.input_size,
            "dataset": config.dataset,
            "n_bits": config.n_bits if stage in ("finetune",) else None,
        },
        "model_state": model_state,
        "history": history,
    }
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def load_checkpoint(path, expect_stage: str | None = None,
                    expect_hash: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version")
    if expect_stage and payload["stage"] != expect_stage:
        raise ConfigError(f"{path}: expected a {expect_stage} checkpoint, found {payload['stage']}")
    if expect_hash and payload["config_hash"] != expect_hash:
        raise ConfigError(
            f"{path}: config hash mismatch ({payload['config_hash']} != {expect_hash}); "
            "refusing to resume")
    return payload


def _check_lineage(payload: dict, config: ExperimentConfig) -> None:
    lineage = payload.get("lineage", {})
    for key, want in (("student_variant", config.student_variant),
                      ("input_size", config.input_size),
                      ("dataset", config.dataset)):
        if lineage.get(key) != want:
            raise ConfigError(
                f"checkpoint {key}={lineage.get(key)!r} does not match config {want!r}")


def build_dataset(config: ExperimentConfig) -> tuple[DatasetSplit, torch.Tensor]:
    """Split plus raw image tensor (float NCHW in [0,1]) for the dataset."""
    if config.dataset == "synthetic":
        spec = SyntheticSpec(config.synthetic_classes, config.synthetic_per_class,
                             config.synthetic_size, seed=config.seed)
        return make_synthetic(spec)
    if config.dataset == "cifar10":
        split = make_cifar10_split(config.data_root, seed=config.seed)
        from .splits import load_cifar10
        images, _ = load_cifar10(config.data_root)
        return split, torch.from_numpy(images.astype(np.float32) / 255.0).permute(0, 3, 1, 2)
    raise ConfigError(
        "nuswide images are path-backed; drive this dataset through the CLI "
        "with a prepared manifest and image root")


def _pretrain_tiny_teacher(images: torch.Tensor, labels: torch.Tensor,
                           feature_dim: int, num_classes: int, seed: int,
                           epochs: int = 30, lr: float = 2e-3) -> TinyTeacher:
    torch.manual_seed(seed)
    teacher = TinyTeacher(feature_dim=feature_dim, num_classes=num_classes, seed=seed)
    opt = torch.optim.Adam(teacher.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    from .training import epoch_batches
    for _ in range(epochs):
        for idx in epoch_batches(len(labels), 64, rng):
            loss = torch.nn.functional.cross_entropy(teacher.logits(images[idx]), labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    teacher.eval()
    return teacher


def _load_teacher(config: ExperimentConfig, out_dir: Path, feature_dim: int,
                  split: DatasetSplit, images: torch.Tensor, loaded: list[str]):
    if config.teacher == "tiny":
        ckpt_path = Path(config.teacher_weights) if config.teacher_weights else out_dir / "teacher.ckpt"
        num_classes = split.num_classes
        teacher = TinyTeacher(feature_dim=feature_dim, num_classes=num_classes, seed=config.seed)
        if ckpt_path.exists():
            payload = torch.load(ckpt_path, map_location="cpu", weights_only=True)
            teacher.load_state_dict(payload)
            loaded.append("teacher:tiny")
            teacher.eval()
            return teacher
        train_idx = torch.from_numpy(split.train_ids)
        train_labels = torch.tensor([next(iter(split.labels[int(i)])) for i in split.train_ids])
        teacher = _pretrain_tiny_teacher(images[train_idx], train_labels,
                                         feature_dim, num_classes, config.seed)
        torch.save(teacher.state_dict(), ckpt_path)
        loaded.append("teacher:tiny(pretrained-here)")
        return teacher
    if not config.teacher_weights:
        raise MissingArtifactError(
            f"teacher {config.teacher!r} needs teacher_weights (a local state-dict "
            "file); downloading pretrained weights is out of scope")
    teacher = load_torchvision_teacher(config.teacher, config.teacher_weights)
    loaded.append(f"teacher:{config.teacher}")
    teacher.eval()
    return teacher


def _preprocessed(config: ExperimentConfig, images: torch.Tensor, augment: bool = False) -> torch.Tensor:
    return preprocess(images, size=config.input_size, augment=augment, seed=config.seed)


def _student_counts(config: ExperimentConfig) -> dict:
    spec = student_spec(config.student_variant)
    params = count_parameters(spec).trainable_parameters
    flops = count_flops(spec, TensorShape(3, 224, 224)).flops
    return {"trainable_parameters": params, "flops_at_224": flops}


def run_distill(config: ExperimentConfig) -> MetricsReport:
    """Stage one: regression of frozen-teacher features over the full
    dataset (labels unused). Persists student checkpoint and report."""
    config.validate()
    if config.stage != "distill":
        raise ConfigError(f"run_distill got a {config.stage!r} config")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded: list[str] = []

    split, raw_images = build_dataset(config)
    images = _preprocessed(config, raw_images, augment=config.augment)

    student = build_student(config.student_variant,
                            input_hw=(config.input_size, config.input_size),
                            seed=config.seed)
    loaded.append(f"student:{config.student_variant}")
    teacher = _load_teacher(config, out_dir, student.out_features, split, images, loaded)

    ckpt_path = out_dir / "distill.ckpt"
    history: list[float] = []
    if config.resume and ckpt_path.exists():
        payload = load_checkpoint(ckpt_path, expect_stage="distill",
                                  expect_hash=config.config_hash())
        student.load_state_dict(payload["model_state"])
        history = list(payload["history"])

    checksum_before = parameter_checksum(teacher)
    epochs_left = config.resolved_epochs() - len(history)
    seconds: list[float] = []
    if epochs_left > 0:
        dcfg = DistillConfig(optimizer=config.resolved_optimizer(),
                             learning_rate=config.resolved_learning_rate(),
                             epochs=epochs_left, batch_size=config.batch_size,
                             seed=config.seed + len(history))
        new_history = train_kd(teacher, student, images, dcfg,
                               epoch_hook=lambda e, l, s: seconds.append(s))
        history.extend(new_history)
    checksum_after = parameter_checksum(teacher)
    if checksum_before != checksum_after:
        raise ConfigError("teacher weights changed during distillation")

    save_checkpoint(ckpt_path, "distill", config, student.state_dict(), history,
                    extra={"teacher_checksum": checksum_after})
    report = MetricsReport(
        stage="distill", config_hash=config.config_hash(), dataset=config.dataset,
        model=f"Student{config.student_variant}", losses=history,
        epoch_seconds=seconds, counts=_student_counts(config),
        models_loaded=loaded,
        extras={"teacher": config.teacher, "teacher_checksum": checksum_after,
                "epochs": config.resolved_epochs()})
    report.save(out_dir / "report_distill.json")
    (out_dir / "config_distill.json").write_text(config.to_json() + "\n")
    return report


def run_finetune(config: ExperimentConfig) -> MetricsReport:
    """Stage two: attach an n_bits head and fine-tune the whole student
    under the chosen retrieval framework on the train split."""
    config.validate()
    if config.stage != "finetune":
        raise ConfigError(f"run_finetune got a {config.stage!r} config")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded: list[str] = []

    split, raw_images = build_dataset(config)
    student = build_student(config.student_variant,
                            input_hw=(config.input_size, config.input_size),
                            seed=config.seed)
    if config.from_scratch:
        loaded.append(f"student:{config.student_variant}(scratch)")
    else:
        ckpt_path = Path(config.checkpoint_in) if config.checkpoint_in else out_dir / "distill.ckpt"
        payload = load_checkpoint(ckpt_path, expect_stage="distill")
        _check_lineage(payload, config)
        student.load_state_dict(payload["model_state"])
        loaded.append(f"student:{config.student_variant}(distilled)")

    model = attach_hash_head(student, config.n_bits, seed=config.seed)
    train_ids = split.train_ids
    images = _preprocessed(config, raw_images[torch.from_numpy(train_ids)],
                           augment=config.augment)
    labels = split.labels_for(train_ids)

    seconds: list[float] = []
    fcfg = FinetuneConfig(framework=config.framework, n_bits=config.n_bits,
                          epochs=config.resolved_epochs(),
                          optimizer=config.resolved_optimizer(),
                          learning_rate=config.resolved_learning_rate(),
                          batch_size=config.batch_size, seed=config.seed,
                          gamma=config.gamma, lambda_q=config.lambda_q,
                          num_classes=split.num_classes)
    history = finetune_retrieval(model, images, labels, fcfg,
                                 epoch_hook=lambda e, l, s: seconds.append(s))

    save_checkpoint(out_dir / "finetune.ckpt", "finetune", config,
                    model.state_dict(), history,
                    extra={"framework": config.framework})
    report = MetricsReport(
        stage="finetune", config_hash=config.config_hash(), dataset=config.dataset,
        model=f"Student{config.student_variant}", framework=config.framework,
        n_bits=config.n_bits, losses=history, epoch_seconds=seconds,
        models_loaded=loaded,
        extras={"epochs": config.resolved_epochs(), "from_scratch": config.from_scratch})
    report.save(out_dir / "report_finetune.json")
    (out_dir / "config_finetune.json").write_text(config.to_json() + "\n")
    return report


def encode_splits(config: ExperimentConfig) -> tuple[CodeMatrix, CodeMatrix]:
    """Encode the database and query splits with the fine-tuned model and
    write both code files."""
    out_dir = Path(config.output_dir)
    ckpt_path = Path(config.checkpoint_in) if config.checkpoint_in else out_dir / "finetune.ckpt"
    payload = load_checkpoint(ckpt_path, expect_stage="finetune")
    _check_lineage(payload, config)
    if payload["lineage"].get("n_bits") != config.n_bits:
        raise ConfigError(
            f"checkpoint has {payload['lineage'].get('n_bits')}-bit head, "
            f"config requests {config.n_bits}")
    student = build_student(config.student_variant,
                            input_hw=(config.input_size, config.input_size),
                            seed=config.seed)
    model = attach_hash_head(student, config.n_bits, seed=config.seed)
    model.load_state_dict(payload["model_state"])
    model.eval()

    split, raw_images = build_dataset(config)
    from .kd import extract_features
    matrices = {}
    for name, ids in (("database", split.database_ids), ("query", split.query_ids)):
        images = _preprocessed(config, raw_images[torch.from_numpy(ids)])
        feats = extract_features(model, images, batch_size=config.batch_size)
        matrices[name] = codes_from_features(feats.values, split.labels_for(ids), ids=ids)
        write_code_file(out_dir / f"codes_{name}.cukd", matrices[name])
    return matrices["database"], matrices["query"]


def topk_listing(queries: CodeMatrix, database: CodeMatrix, k: int) -> str:
    """Per-query nearest neighbors: 'query_id<TAB>id:dist id:dist ...'."""
    lines = []
    for qi in range(queries.count):
        ranked = hamming_rank(queries.codes[qi], database, k)
        pairs = " ".join(f"{int(i)}:{int(d)}" for i, d in zip(ranked.ids, ranked.distances))
        lines.append(f"{int(queries.ids[qi])}\t{pairs}")
    return "\n".join(lines) + "\n"


def evaluate_codes(database: CodeMatrix, queries: CodeMatrix,
                   config: ExperimentConfig) -> MetricsReport:
    top_n = config.top_n if config.top_n is not None else min(5000, database.count)
    if top_n > database.count:
        raise ConfigError(f"top_n={top_n} exceeds database size {database.count}")
    m, aps = map_at_n(queries, database, top_n)
    out_dir = Path(config.output_dir)
    ap_lines = ["query_id,ap"] + [f"{int(q)},{a:.17g}" for q, a in zip(queries.ids, aps)]
    (out_dir / "per_query_ap.csv").write_text("\n".join(ap_lines) + "\n")
    extras = {}
    if config.top_k_listing > 0:
        listing = topk_listing(queries, database, min(config.top_k_listing, database.count))
        (out_dir / "topk_listing.txt").write_text(listing)
        extras["top_k_listing"] = config.top_k_listing
    report = MetricsReport(
        stage="evaluate", config_hash=config.config_hash(), dataset=config.dataset,
        model=f"Student{config.student_variant}", framework=config.framework,
        n_bits=config.n_bits, map_at_n=m, top_n=top_n,
        models_loaded=[], extras=extras)
    report.save(out_dir / "report_evaluate.json")
    return report


def run_encode_and_evaluate(config: ExperimentConfig) -> MetricsReport:
    """Encode both splits, persist code files, compute mAP@N, and (when
    asked) emit the per-query top-k neighbor listing."""
    config.validate()
    if config.stage not in ("encode", "evaluate"):
        raise ConfigError(f"run_encode_and_evaluate got a {config.stage!r} config")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    database, queries = encode_splits(config)
    return evaluate_codes(database, queries, config)


def report_tables(reports: list[MetricsReport]) -> dict[str, dict[str, str]]:
    """Per-framework result tables: rows are models, columns are
    dataset/bit pairs; CSV plus aligned-text renderings."""
    by_framework: dict[str, dict[str, dict[str, float]]] = {}
    for rep in reports:
        if rep.map_at_n is None:
            continue
        col = f"{rep.dataset}@{rep.n_bits}bit"
        by_framework.setdefault(rep.framework or "?", {}).setdefault(rep.model, {})[col] = rep.map_at_n
    out = {}
    for framework, rows in sorted(by_framework.items()):
        columns = sorted({c for cells in rows.values() for c in cells})
        csv_lines = ["Model," + ",".join(columns)]
        for model in sorted(rows):
            cells = [f"{rows[model][c]:.4f}" if c in rows[model] else "" for c in columns]
            csv_lines.append(model + "," + ",".join(cells))
        widths = [max(len("Model"), *(len(m) for m in rows))]
        widths += [max(len(c), 6) for c in columns]
        def fmt_row(items):
            return "  ".join(str(x).ljust(w) for x, w in zip(items, widths))
        text_lines = [fmt_row(["Model"] + columns)]
        for model in sorted(rows):
            cells = [f"{rows[model][c]:.4f}" if c in rows[model] else "-" for c in columns]
            text_lines.append(fmt_row([model] + cells))
        out[framework] = {"csv": "\n".join(csv_lines) + "\n",
                          "text": "\n".join(text_lines) + "\n"}
    return out
