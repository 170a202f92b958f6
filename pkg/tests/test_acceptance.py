"""Acceptance suite: one test per exit criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s` to see
the lines as they complete (the end-to-end criterion takes a few minutes
of CPU training; everything else is seconds)."""

import copy
import math
import time

import numpy as np
import pytest
import torch

from hashdistill.counting import (
    compression_ratio, count_flops, count_parameters, enumerate_parameters,
)
from hashdistill.blocks import instantiate
from hashdistill.experiment import (
    ExperimentConfig, run_distill, run_encode_and_evaluate, run_finetune,
)
from hashdistill.hash_centers import generate_hash_centers, pairwise_hamming
from hashdistill.hash_losses import csq_loss, dch_loss
from hashdistill.kd import DistillConfig, kd_loss, train_kd
from hashdistill.model_spec import TensorShape, shape_trace
from hashdistill.retrieval import CodeMatrix, map_at_n, pack_bits
from hashdistill.students import build_student, student_spec
from hashdistill.synthetic import SyntheticSpec, make_synthetic
from hashdistill.teachers import (
    TinyTeacher, alexnet_count_report, parameter_checksum, resnet50_count_report,
)

from conftest import finite_diff_grad, random_model_spec, relative_error
from test_hash_losses import dch_oracle
from test_model_spec import STUDENT_V1_TRACE, STUDENT_V2_TRACE

torch.set_num_threads(1)


def _check(name: str, ok: bool, detail: str = ""):
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}"
          + (f"  ({detail})" if detail else ""))
    assert ok, f"{name} failed: {detail}"


def test_c01_architecture_fidelity():
    """shape_trace at 3x224x224 reproduces every output-shape table row."""
    ok = True
    for variant, expected in (("V1", STUDENT_V1_TRACE), ("V2", STUDENT_V2_TRACE)):
        trace = shape_trace(student_spec(variant), TensorShape(3, 224, 224))
        got = [(name, (s.channels, s.height, s.width)) for name, s in trace]
        ok = ok and (got == expected)
    _check("architecture-fidelity", ok)


def test_c02_counting():
    """Analytic counts equal enumeration exactly (students + 50 random
    specs); parameters within 10% and FLOPs within 15% of the published
    totals."""
    rng = np.random.default_rng(20)
    exact = True
    for variant in ("V1", "V2"):
        spec = student_spec(variant)
        exact = exact and (count_parameters(spec).trainable_parameters
                           == enumerate_parameters(build_student(variant, input_hw=(32, 32))))
    for _ in range(50):
        spec = random_model_spec(rng)
        exact = exact and (count_parameters(spec).trainable_parameters
                           == enumerate_parameters(instantiate(spec)))
    v1_params = count_parameters(student_spec("V1")).trainable_parameters
    v2_params = count_parameters(student_spec("V2")).trainable_parameters
    v1_flops = count_flops(student_spec("V1"), TensorShape(3, 224, 224)).flops
    v2_flops = count_flops(student_spec("V2"), TensorShape(3, 224, 224)).flops
    p1 = abs(v1_params - 3_437_568) / 3_437_568
    p2 = abs(v2_params - 5_060_352) / 5_060_352
    f1 = abs(v1_flops - 1.10e9) / 1.10e9
    f2 = abs(v2_flops - 1.119e9) / 1.119e9
    ok = exact and p1 <= 0.10 and p2 <= 0.10 and f1 <= 0.15 and f2 <= 0.15
    _check("counting", ok,
           f"V1 {v1_params} ({p1:+.1%}), V2 {v2_params} ({p2:+.1%}), "
           f"FLOPs {v1_flops / 1e9:.3f}G ({f1:+.1%}) / {v2_flops / 1e9:.3f}G ({f2:+.1%})")


def test_c03_compression_ratio():
    """Parameter reduction: >= 80% for the V1 pair, >= 88% for the V2 pair."""
    r1 = compression_ratio(count_parameters(student_spec("V1")), resnet50_count_report())
    r2 = compression_ratio(count_parameters(student_spec("V2")), alexnet_count_report())
    _check("compression-ratio", r1 >= 0.80 and r2 >= 0.88,
           f"V1 pair {r1:.2%}, V2 pair {r2:.2%}")


def kd_oracle(teacher, student):
    n, k = len(teacher), len(teacher[0])
    total = 0.0
    for i in range(n):
        for j in range(k):
            diff = float(student[i][j]) - float(teacher[i][j])
            total += diff * diff
    return total / n


def test_c04_regression_loss_correctness():
    """kd_loss matches the scalar double-loop oracle to 1e-6 relative on
    100 random instances; its gradient matches central finite differences
    to 1e-4 relative."""
    rng = np.random.default_rng(40)
    value_ok = True
    for _ in range(100):
        n = int(rng.integers(1, 8))
        k = int(rng.integers(1, 24))
        t = rng.normal(size=(n, k))
        s = rng.normal(size=(n, k))
        got = float(kd_loss(torch.from_numpy(t), torch.from_numpy(s)))
        want = kd_oracle(t.tolist(), s.tolist())
        value_ok = value_ok and abs(got - want) <= 1e-6 * max(abs(want), 1e-12)
    t = torch.from_numpy(rng.normal(size=(4, 7)))
    s = torch.from_numpy(rng.normal(size=(4, 7))).requires_grad_(True)
    kd_loss(t, s).backward()
    fd = finite_diff_grad(lambda x: kd_loss(t, x), s.detach().clone())
    grad_err = relative_error(s.grad, fd)
    _check("eq1-correctness", value_ok and grad_err < 1e-4,
           f"gradient rel err {grad_err:.2e}")


def test_c05_frozen_teacher_contract():
    """Teacher checksum is bit-identical across a 5-epoch run on the
    synthetic dataset."""
    split, images = make_synthetic(SyntheticSpec(num_classes=10, images_per_class=60,
                                                 image_size=32, seed=1))
    student = build_student("V1", input_hw=(32, 32), seed=2)
    teacher = TinyTeacher(feature_dim=student.out_features, seed=3)
    before = parameter_checksum(teacher)
    train_kd(teacher, student, images, DistillConfig(epochs=5, batch_size=64, seed=0))
    after = parameter_checksum(teacher)
    _check("frozen-teacher", before == after, f"checksum {before[:12]}...")


def test_c06_hash_centers():
    """Distinctness and average distance >= K/2 by exhaustive enumeration;
    power-of-two constructions reach minimum distance exactly K/2."""
    ok = True
    details = []
    for classes, bits in ((10, 16), (10, 32), (10, 64), (21, 64)):
        cs = generate_hash_centers(classes, bits)
        d = pairwise_hamming(cs.centers)
        distinct = (d > 0).all()
        avg_ok = d.mean() >= bits / 2
        min_ok = int(d.min()) == bits // 2
        ok = ok and distinct and avg_ok and min_ok
        details.append(f"({classes},{bits}): min {int(d.min())}, avg {d.mean():.1f}")
    _check("hash-centers", ok, "; ".join(details))


def test_c07_hash_loss_gradients_and_oracle():
    """Finite-difference checks for both objectives (rel < 1e-4) and the
    all-pairs oracle agreement for the Cauchy loss (rel < 1e-6)."""
    rng = np.random.default_rng(70)
    worst_grad = 0.0
    for _ in range(5):
        out = torch.from_numpy(rng.normal(size=(4, 8))).requires_grad_(True)
        targets = torch.from_numpy(rng.integers(0, 2, size=(4, 8)).astype(float))
        csq_loss(out, targets, lambda_q=0.1).backward()
        fd = finite_diff_grad(lambda x: csq_loss(x, targets, lambda_q=0.1),
                              out.detach().clone())
        worst_grad = max(worst_grad, relative_error(out.grad, fd))

        h = torch.from_numpy(rng.normal(size=(5, 8))).requires_grad_(True)
        labels = rng.integers(0, 3, size=5)
        sim = torch.from_numpy((labels[:, None] == labels[None, :]).astype(float))
        dch_loss(h, sim, gamma=20.0, lambda_q=0.1).backward()
        fd = finite_diff_grad(lambda x: dch_loss(x, sim, gamma=20.0, lambda_q=0.1),
                              h.detach().clone())
        worst_grad = max(worst_grad, relative_error(h.grad, fd))

    oracle_ok = True
    for _ in range(20):
        n = int(rng.integers(2, 8))
        h = rng.normal(size=(n, 12))
        labels = rng.integers(0, 3, size=n)
        sim = (labels[:, None] == labels[None, :]).astype(float)
        got = float(dch_loss(torch.from_numpy(h), torch.from_numpy(sim),
                             gamma=20.0, lambda_q=0.1))
        want = dch_oracle(h.tolist(), sim.tolist(), 20.0, 0.1)
        oracle_ok = oracle_ok and abs(got - want) <= 1e-6 * max(abs(want), 1e-12)
    _check("hash-loss-gradients", worst_grad < 1e-4 and oracle_ok,
           f"worst gradient rel err {worst_grad:.2e}")


def map_oracle(q_codes, q_labels, db_codes, db_labels, db_ids, n):
    """Independent straight-line mAP@N: python ints, explicit sort, running
    precision."""
    aps = []
    for qi in range(len(q_codes)):
        scored = sorted((bin(q_codes[qi] ^ db_codes[di]).count("1"), db_ids[di], di)
                        for di in range(len(db_codes)))
        hits = 0
        ap_sum = 0.0
        for rank, (_, _, di) in enumerate(scored[:n], start=1):
            if q_labels[qi] & db_labels[di]:
                hits += 1
                ap_sum += hits / rank
        aps.append(ap_sum / hits if hits else 0.0)
    return sum(aps) / len(aps)


def test_c08_map_oracle_equivalence():
    """map_at_n equals the brute-force oracle to 1e-12 absolute on 200
    randomized instances across the four bit widths."""
    rng = np.random.default_rng(80)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        k = int(rng.choice([16, 32, 48, 64]))
        n_q = int(rng.integers(1, 51))
        n_db = int(rng.integers(20, 501))
        n = int(rng.integers(1, n_db + 1))
        multilabel = bool(rng.random() < 0.4)
        n_classes = int(rng.integers(2, 9))

        def labels_for(count):
            if multilabel:
                return [frozenset(int(x) for x in rng.choice(
                    n_classes, size=int(rng.integers(1, 3)), replace=False))
                    for _ in range(count)]
            return [frozenset([int(c)]) for c in rng.integers(0, n_classes, size=count)]

        db_bits = rng.integers(0, 2, size=(n_db, k), dtype=np.uint64)
        q_bits = rng.integers(0, 2, size=(n_q, k), dtype=np.uint64)
        db_labels = labels_for(n_db)
        q_labels = labels_for(n_q)
        db_ids = rng.permutation(n_db * 3)[:n_db].astype(np.uint64)

        database = CodeMatrix(pack_bits(db_bits), k, tuple(db_labels), db_ids)
        queries = CodeMatrix(pack_bits(q_bits), k, tuple(q_labels),
                             np.arange(10_000, 10_000 + n_q, dtype=np.uint64))
        got, _ = map_at_n(queries, database, n)

        db_ints = [int("".join(str(int(b)) for b in row[::-1]), 2) for row in db_bits]
        q_ints = [int("".join(str(int(b)) for b in row[::-1]), 2) for row in q_bits]
        want = map_oracle(q_ints, q_labels, db_ints, db_labels,
                          [int(x) for x in db_ids], n)
        worst = max(worst, abs(got - want))
    elapsed = time.perf_counter() - started
    _check("map-oracle-equivalence", worst < 1e-12 and elapsed < 60.0,
           f"max |delta| {worst:.2e}, {elapsed:.1f}s")


def test_c09_end_to_end_desk_scale(tmp_path):
    """Full pipeline on the 600-image synthetic set: classification-trained
    tiny teacher, 30 distillation epochs, 30 CSQ 16-bit epochs; the final
    distillation epoch must halve the first, and mAP@100 must reach twice
    the analytic random-ranking baseline."""
    base = dict(dataset="synthetic", synthetic_classes=10, synthetic_per_class=60,
                synthetic_size=32, input_size=32, student_variant="V1",
                teacher="tiny", seed=0, batch_size=64,
                output_dir=str(tmp_path / "desk"))
    kd_report = run_distill(ExperimentConfig(stage="distill", epochs=30, **base))
    ft_report = run_finetune(ExperimentConfig(stage="finetune", epochs=30,
                                              framework="CSQ", n_bits=16, **base))
    eval_report = run_encode_and_evaluate(ExperimentConfig(
        stage="evaluate", framework="CSQ", n_bits=16, top_n=100, **base))

    kd_ok = kd_report.losses[-1] < 0.5 * kd_report.losses[0]

    # Analytic baseline: expected AP when ranking is label-frequency random,
    # i.e. precision at every rank equals the relevant fraction of the
    # database, averaged over the query classes.
    split, _ = make_synthetic(SyntheticSpec(10, 60, 32, seed=0))
    db_labels = split.labels_for(split.database_ids)
    q_labels = split.labels_for(split.query_ids)
    db_total = len(db_labels)
    baseline = 0.0
    for ql in q_labels:
        relevant = sum(1 for dl in db_labels if ql & dl)
        baseline += relevant / db_total
    baseline /= len(q_labels)

    map_ok = eval_report.map_at_n >= 2 * baseline
    _check("end-to-end-desk-scale", kd_ok and map_ok,
           f"KD {kd_report.losses[0]:.1f}->{kd_report.losses[-1]:.1f}, "
           f"mAP@100 {eval_report.map_at_n:.3f} vs baseline {baseline:.3f}")


def test_c10_determinism(tmp_path):
    """Reruns with identical config + seed reproduce loss histories
    exactly, for both training stages."""
    base = dict(dataset="synthetic", synthetic_classes=4, synthetic_per_class=12,
                synthetic_size=16, input_size=16, student_variant="V1",
                teacher="tiny", seed=11, batch_size=16)
    histories = {"distill": [], "finetune": []}
    for d in ("a", "b"):
        out = str(tmp_path / d)
        r1 = run_distill(ExperimentConfig(stage="distill", epochs=3, output_dir=out, **base))
        r2 = run_finetune(ExperimentConfig(stage="finetune", epochs=3, n_bits=16,
                                           framework="CSQ", output_dir=out, **base))
        histories["distill"].append(r1.losses)
        histories["finetune"].append(r2.losses)
    ok = (histories["distill"][0] == histories["distill"][1]
          and histories["finetune"][0] == histories["finetune"][1])
    _check("determinism", ok)
