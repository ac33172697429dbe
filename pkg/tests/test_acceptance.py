"""Acceptance criteria, one test per criterion.

Every test records a ``PASS``/``FAIL`` line in ``RESULTS``; the conftest
terminal-summary hook prints them after the run. Tolerances and runtime
limits are pinned to the contract values.
"""

import csv
import json
import statistics
import time
from fractions import Fraction

import numpy as np

from imbalbench import kernels, losses as L
from imbalbench.cli import main
from imbalbench.dataset import LabeledDataset, SplitRatios, one_hot, split_sizes, stratified_split
from imbalbench.losses import LossSpec, inverse_proportion_weights
from imbalbench.metrics import confusion_matrix, micro_f1, micro_f1_counts
from imbalbench.model import Model, ModelArch, backward, forward, init_model
from imbalbench.similarity import SimilarityConfig, similarity_matrix
from imbalbench.synth import IMBALANCED_COUNTS, make_blobs
from imbalbench.trainer import TrainConfig, lr_at, run_benchmark, train

from .oracles import fd_logit_grad, param_fd, random_spec, rel_error

RESULTS = {}

PUBLISHED_COUNTS = [1115, 763, 689, 451, 450, 273, 254, 234, 240, 216, 129, 129, 111, 72, 61]
PUBLISHED_WEIGHTS = [1.0, 1.463, 1.62, 2.47, 2.48, 4.09, 4.39, 4.77, 4.65, 5.16, 8.64, 8.64,
                  10.05, 15.49, 18.28]


def record(n, title, ok, detail, elapsed, limit):
    within = elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    RESULTS[n] = (f"[{status}] criterion {n}: {title} | {detail} | "
                  f"{elapsed:.2f}s (limit {limit:g}s)")
    print(RESULTS[n])
    assert ok, RESULTS[n]
    assert within, RESULTS[n]


def test_1_published_weights(tmp_path, capsys):
    t0 = time.perf_counter()
    src = tmp_path / "counts.csv"
    src.write_text("class_name,count\n" + "".join(
        f"class_{i:02d},{n}\n" for i, n in enumerate(PUBLISHED_COUNTS)))
    code = main(["weights", "--counts-csv", str(src), "--out-dir", str(tmp_path)])
    with open(tmp_path / "weights.csv", newline="") as fh:
        got = [float(r["weight"]) for r in csv.DictReader(fh)]
    elapsed = time.perf_counter() - t0
    worst = max(abs(g - e) for g, e in zip(got, PUBLISHED_WEIGHTS))
    ok = code == 0 and len(got) == 15 and worst <= 0.02
    record(1, "published weight column", ok, f"max |diff| = {worst:.4f} (tol 0.02)", elapsed, 1)


def test_2_loss_reductions():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        c = int(rng.integers(2, 16))
        p = rng.dirichlet(np.full(c, 0.5))
        t = one_hot(int(rng.integers(c)), c)
        ce = L.ce_loss(p, t)
        reduced = (L.focal_loss(p, t, L.FocalParams(0.0)),
                   L.cb_loss(p, t, L.CBParams(0.0, tuple(rng.integers(1, 2000, c)))),
                   L.wce_loss(p, t, L.uniform_weights(c)))
        mismatches += sum(v != ce for v in reduced)
    # the same identities on the batched logit path of every backend
    for name in kernels.available_backends():
        impl = kernels.get_backend(name)
        z = rng.normal(scale=3.0, size=(1000, 6))
        y = rng.integers(0, 6, 1000)
        ref_l, ref_g = impl.loss_grad(z, y, np.ones(6), 0.0)
        for spec in (LossSpec("FL", focal=L.FocalParams(0.0)),
                     LossSpec("CB", cb=L.CBParams(0.0, tuple(rng.integers(1, 2000, 6)))),
                     LossSpec("WCE", weights=L.uniform_weights(6))):
            lv, gv = impl.loss_grad(z, y, spec.class_coefficients(6), spec.gamma)
            mismatches += int(np.count_nonzero(lv != ref_l)) + int(np.count_nonzero(gv != ref_g))
    elapsed = time.perf_counter() - t0
    record(2, "loss reductions bit-for-bit", mismatches == 0,
           f"{mismatches} mismatches over 1000 cases x 3 reductions + batched kernels",
           elapsed, 1)


def test_3_gradient_oracle():
    t0 = time.perf_counter()
    worst = {}
    for i, kind in enumerate(L.LOSS_KINDS):
        rng = np.random.default_rng(300 + i)
        w = 0.0
        for _ in range(100):
            c = int(rng.integers(2, 8))
            spec = random_spec(kind, rng, c)
            z = rng.normal(scale=2.0, size=c)
            t = one_hot(int(rng.integers(c)), c)
            w = max(w, rel_error(L.loss_grad_logits(spec, z, t), fd_logit_grad(spec, z, t)))
        worst[kind] = w
    rng = np.random.default_rng(399)
    w_model = 0.0
    for i in range(40):
        kind = L.LOSS_KINDS[i % len(L.LOSS_KINDS)]
        d, c, h = int(rng.integers(2, 6)), int(rng.integers(2, 5)), int(rng.integers(0, 6))
        m = init_model(ModelArch(d, c, hidden_dim=h), i)
        m = Model(m.arch, {k: v + rng.normal(scale=0.5, size=v.shape) for k, v in m.params.items()})
        x, y = rng.normal(size=(3, d)), rng.integers(0, c, 3)
        spec = random_spec(kind, rng, c)
        _, g = L.batch_loss_grad(spec, forward(m, x)[0], y)
        analytic = backward(m, x, g)
        numeric = param_fd(spec, m, x, y)
        w_model = max(w_model, max(rel_error(analytic[k], numeric[k]) for k in analytic))
    elapsed = time.perf_counter() - t0
    top = max(max(worst.values()), w_model)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", model {w_model:.1e}"
    record(3, "gradients vs central differences", top <= 1e-5,
           f"max rel err {detail} (tol 1e-5, 100 cases/kind)", elapsed, 10)


def test_4_micro_f1_identity():
    t0 = time.perf_counter()
    bad = checked = 0
    for c in (2, 3):
        stack = np.indices((5,) * (c * c)).reshape(c * c, -1).T.reshape(-1, c, c)
        total = stack.sum(axis=(1, 2))
        stack, total = stack[total > 0], total[total > 0]
        # exact oracle: trace/total as the correctly rounded quotient of two integers
        acc = np.trace(stack, axis1=1, axis2=2) / total
        bad += int(np.count_nonzero(micro_f1_counts(stack) != acc))
        checked += len(stack)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        c, n = int(rng.integers(2, 10)), int(rng.integers(1, 200))
        preds, labels = rng.integers(0, c, n), rng.integers(0, c, n)
        exact = Fraction(int(np.sum(preds == labels)), n)
        bad += micro_f1(confusion_matrix(preds, labels, c)) != float(exact)
        checked += 1
    elapsed = time.perf_counter() - t0
    record(4, "micro-F1 = trace/total", bad == 0,
           f"{bad} mismatches over {checked} matrices (exact)", elapsed, 5)


def _median_minority(rep, k):
    return statistics.median(r[k] for r in rep.per_class_recall)


def test_5_wce_minority_recall():
    t0 = time.perf_counter()
    ds = make_blobs(IMBALANCED_COUNTS, seed=0)
    arch = ModelArch(ds.input_dim, ds.n_classes)
    weights = inverse_proportion_weights(ds.class_counts())
    ce = run_benchmark(ds, arch, TrainConfig(loss=LossSpec("CE")))
    wce = run_benchmark(ds, arch, TrainConfig(loss=LossSpec("WCE", weights=weights)))
    k = int(np.argmin(ds.counts))
    gain = _median_minority(wce, k) - _median_minority(ce, k)
    # the F1 aggregate is unstated; both the median and the mean must stay in bounds
    drop = max(statistics.median(ce.test_f1) - statistics.median(wce.test_f1),
               ce.test_f1_mean - wce.test_f1_mean)
    elapsed = time.perf_counter() - t0
    record(5, "WCE vs CE on synthetic imbalance", gain >= 0.10 and drop <= 0.05,
           f"minority recall gain {gain:+.3f} (need >= 0.10), micro-F1 drop {drop:+.3f} "
           f"(need <= 0.05), test F1 CE {ce.test_f1_mean:.3f} WCE {wce.test_f1_mean:.3f}",
           elapsed, 60)


def test_6_training_protocol():
    t0 = time.perf_counter()
    cfg = TrainConfig()
    ds = make_blobs((30, 20, 10), dim=4, seed=6)
    _, hist = train(ds, ds, ModelArch(4, 3), cfg)
    expected = [1e-3] * 7 + [1e-4] * 7 + [1e-5] * 7 + [1e-6] * 7 + [1e-7] * 7 + [1e-8] * 7 \
        + [1e-9] * 7 + [1e-10]
    trace_ok = hist.lr == expected and hist.lr == [lr_at(e, cfg) for e in range(50)]
    rep = run_benchmark(ds, ModelArch(4, 3), TrainConfig(epochs=5))
    d = rep.to_dict()["test_f1"]
    stats_ok = (len(d["values"]) == 5 and d["mean"] == statistics.fmean(d["values"])
                and d["std"] == statistics.stdev(d["values"]) and " ± " in rep.table_row()["testing_f1"])
    elapsed = time.perf_counter() - t0
    record(6, "training protocol", trace_ok and stats_ok,
           f"lr trace exact={trace_ok}, 5 F1 values mean/sample-std={stats_ok} "
           f"({rep.table_row()['testing_f1']})", elapsed, 60)


def test_7_similarity_properties():
    t0 = time.perf_counter()
    c = 6
    arch = ModelArch(c, c, hidden_dim=c)
    ident = Model(arch, {"body.weight": np.eye(c), "body.bias": np.zeros(c),
                         "head.weight": np.zeros((c, c)), "head.bias": np.zeros(c)})
    rng = np.random.default_rng(7)
    x = np.zeros((c * 10, c))
    y = np.repeat(np.arange(c), 10)
    x[np.arange(c * 10), y] = rng.uniform(0.5, 5.0, c * 10)
    rays = LabeledDataset(x, y, tuple(f"r{k}" for k in range(c)))
    eye_err = float(np.abs(similarity_matrix(ident, rays).values - np.eye(c)).max())

    m = init_model(ModelArch(5, 4, hidden_dim=12), 3)
    feats = LabeledDataset(rng.normal(size=(80, 5)), np.repeat(np.arange(4), 20),
                           ("a", "b", "c", "d"))
    cfg = SimilarityConfig(seed=11)
    v = similarity_matrix(m, feats, cfg).values
    in_range = bool(np.all((v >= -1) & (v <= 1)))
    symmetric = bool(np.array_equal(v, v.T))
    deterministic = bool(np.array_equal(v, similarity_matrix(m, feats, cfg).values))
    # positive scaling of every input scales ReLU features by the same factor
    scales = rng.uniform(0.1, 10.0, (80, 1))
    scaled = LabeledDataset(feats.inputs * scales, feats.labels, feats.class_names)
    scale_err = float(np.abs(similarity_matrix(m, scaled, cfg).values - v).max())
    elapsed = time.perf_counter() - t0
    ok = eye_err <= 1e-9 and in_range and symmetric and deterministic and scale_err <= 1e-9
    record(7, "similarity properties", ok,
           f"identity err {eye_err:.1e} (tol 1e-9), range={in_range}, symmetric={symmetric}, "
           f"scale err {scale_err:.1e}, deterministic={deterministic}", elapsed, 5)


def _cli_round(root):
    def go(*argv):
        code = main([str(a) for a in argv])
        assert code == 0, argv
    go("synth", "--counts", "40,25,12", "--dim", "5", "--seed", "3", "--out-dir", root)
    go("synth", "--raster", "--counts", "4,4", "--size", "5", "--out-dir", root)
    data = root / "synth.csv"
    go("split", "--data", data, "--seed", "5", "--out-dir", root / "split")
    go("weights", "--data", data, "--out-dir", root / "weights")
    go("train", "--data", data, "--epochs", "4", "--hidden-dim", "6", "--loss", "WCE",
       "--seed", "2", "--out-dir", root / "train")
    go("eval", "--data", data, "--model", root / "train" / "model.json",
       "--split-manifest", root / "train" / "split.csv", "--out-dir", root / "eval")
    go("benchmark", "--data", data, "--epochs", "3", "--loss", "FL", "--seed", "1",
       "--out-dir", root / "bench")
    go("similarity", "--data", data, "--model", root / "train" / "model.json", "--pairs", "5",
       "--seed", "8", "--out-dir", root / "sim")


# manifests carry timestamps; these two reports carry wall-clock timings
NON_DETERMINISTIC = {"benchmark_report.json", "benchmark_report.csv"}


def test_8_cli_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    _cli_round(a)
    _cli_round(b)
    capsys.readouterr()
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()
                   and not p.name.endswith("_manifest.json") and p.name not in NON_DETERMINISTIC)
    differing = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    # manifests must agree on everything except the timestamps
    for man in sorted(a.rglob("*_manifest.json")):
        da = json.loads(man.read_text())
        db = json.loads((b / man.relative_to(a)).read_text())
        for doc in (da, db):
            doc.pop("started_at"), doc.pop("finished_at")
            doc["artifacts"] = [x["sha256"] for x in doc["artifacts"]
                                if x["path"].rsplit("/", 1)[-1] not in NON_DETERMINISTIC]
            doc["config"].pop("data", None), doc["config"].pop("model", None)
        if da != db:
            differing.append(str(man.relative_to(a)))
    elapsed = time.perf_counter() - t0
    record(8, "CLI determinism", not differing and len(files) > 10,
           f"{len(files)} artifacts byte-compared, differing: {differing or 'none'}",
           elapsed, 60)


def _floor_rule_holds(n, ratios):
    tr, va, te = split_sizes(n, ratios)
    exp_tr = int(Fraction(n) * Fraction(ratios.train).limit_denominator(10**6))
    exp_va = int(Fraction(n) * Fraction(ratios.val).limit_denominator(10**6))
    return (tr, va, te) == (exp_tr, exp_va, n - exp_tr - exp_va)


def test_9_split_conformance():
    t0 = time.perf_counter()
    ds = make_blobs((100,) * 5, dim=3, seed=9)
    parts = stratified_split(ds, SplitRatios(), seed=0)
    per_class = {tuple(int(p.counts[k]) for p in parts) for k in range(5)}
    exact = per_class == {(65, 20, 15)}
    ratios = SplitRatios()
    floor_ok = all(_floor_rule_holds(n, ratios) for n in range(3, 201))
    sizes_ok = True
    for n in (3, 7, 50, 151, 200):
        small = make_blobs((n, n), dim=2, seed=n)
        tr, va, te = stratified_split(small, ratios, seed=1)
        sizes_ok &= tuple(int(p.counts[0]) for p in (tr, va, te)) == split_sizes(n, ratios)
    elapsed = time.perf_counter() - t0
    record(9, "split conformance", exact and floor_ok and sizes_ok,
           f"100/class -> {sorted(per_class)}, floor rule n=3..200 {floor_ok}", elapsed, 5)

