"""End-to-end acceptance checks, one test per criterion.

Each test tags itself with ``criterion(number, name)``; the conftest hook prints
one PASS/FAIL line per criterion after the run.
"""
import csv
import time
from collections import Counter

import numpy as np
import pytest
import yaml

from prognoses.ablation import FUSION_ROWS
from prognoses.cli import main
from prognoses.cohort import Cohort, ViewId
from prognoses.evaluation import ExperimentConfig, bootstrap_ci, nested_cv, weighted_f1
from prognoses.fusion import DecisionFusion, FeatureFusion, cross_lung_expand, fuse_decisions, fuse_features
from prognoses.importance import BiomarkerGrouping, export_radar, fold_blocks, profile, read_radar, split_counts
from prognoses.learners import ClassifierSpec, Kind, Standardizer, TrainedModel, fit, mlp
from prognoses.learners.tree import Tree
from prognoses.synth import bayes_f1, easy_preset, generate, trajectory_preset
from prognoses.temporal import TemporalMode, represent

ONE_MLP = {"lr": [1e-2], "l2": [1e-4]}


@pytest.fixture(scope="module")
def easy_cohort():
    return generate(easy_preset(0))[0]


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1, "leakage audit, runtime < 30 s per single-view config")
def test_leakage_audit(easy_cohort, record_property):
    timings, problems = {}, []
    for kind in Kind:
        r = nested_cv(ExperimentConfig(view=ViewId.L3, classifier=kind), easy_cohort)
        timings[kind.value] = round(r.runtime_seconds, 1)
        problems += r.audit.violations(r.plan)
        for fold in range(r.plan.k):
            test, train = set(r.plan.test_patients(fold)), set(r.plan.train_patients(fold))
            if test & train:
                problems.append(f"{kind.value} fold {fold} overlap")
            touched = {e[4][0] for e in r.audit.entries if e[1] == fold and e[2] != "test"}
            if touched & test:
                problems.append(f"{kind.value} fold {fold} touched test patients before predicting")
        if r.runtime_seconds >= 30:
            problems.append(f"{kind.value} took {r.runtime_seconds:.1f} s")
    record_property("detail", f"seconds {timings}; problems {len(problems)}")
    assert problems == []


# ---------------------------------------------------------------- 2


def _brute_f1(t, p):
    total = 0.0
    for cls in (True, False):
        tp = sum(a == cls and b == cls for a, b in zip(t, p))
        fp = sum(a != cls and b == cls for a, b in zip(t, p))
        fn = sum(a == cls and b != cls for a, b in zip(t, p))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        total += (tp + fn) * (2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return total / len(t)


@pytest.mark.criterion(2, "weighted F1 vs brute force on 1000 pairs, 1e-12")
def test_metric_oracle(record_property):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        t = rng.random(n) < rng.random()
        p = rng.random(n) < rng.random()
        worst = max(worst, abs(weighted_f1(t, p) - _brute_f1(t.tolist(), p.tolist())))
    record_property("detail", f"max abs diff {worst:.1e}")
    assert worst <= 1e-12


# ---------------------------------------------------------------- 3


def _population_f1(prev, flip):
    """Weighted F1 of predictions that flip the true label with probability ``flip``."""
    f = lambda tp, fp, fn: 2 * tp / (2 * tp + fp + fn)
    tp, fn, fp, tn = prev * (1 - flip), prev * flip, (1 - prev) * flip, (1 - prev) * (1 - flip)
    return prev * f(tp, fp, fn) + (1 - prev) * f(tn, fn, fp)


@pytest.mark.criterion(3, "bootstrap CI determinism, all-correct (1,1), coverage 95% +- 3%")
def test_bootstrap_contract(record_property):
    rng = np.random.default_rng(5)
    y = rng.random(80) < 0.4
    p = y ^ (rng.random(80) < 0.2)
    same = bootstrap_ci(y, p, seed=9) == bootstrap_ci(y, p, seed=9)
    perfect = bootstrap_ci(y, y, seed=1)

    truth = _population_f1(0.3, 0.15)
    rng = np.random.default_rng(2024)
    hits = 0
    for trial in range(500):
        t = rng.random(200) < 0.3
        pred = t ^ (rng.random(200) < 0.15)
        lo, hi = bootstrap_ci(t, pred, n_iter=2000, seed=trial)
        hits += lo <= truth <= hi
    coverage = hits / 500
    record_property("detail", f"deterministic {same}, all-correct {perfect}, coverage {coverage:.3f}")
    assert same and perfect == (1.0, 1.0)
    assert abs(coverage - 0.95) <= 0.03


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4, "temporal identities")
def test_temporal_identities(record_property):
    rng = np.random.default_rng(3)
    ok = True
    for d in (1, 38, 512):
        for _ in range(50):
            a, b = rng.normal(scale=10 ** rng.uniform(-3, 3), size=(2, d))
            ok &= not np.any(represent(a, a.copy(), TemporalMode.DIFFERENCE))
            ab, ba = represent(a, b, TemporalMode.DIFFERENCE), represent(b, a, TemporalMode.DIFFERENCE)
            ok &= np.array_equal(ab, -ba)
            cat = represent(a, b, TemporalMode.CONCATENATE)
            ok &= np.array_equal(cat[:d], a) and np.array_equal(cat[d:], b)
    record_property("detail", "zero difference, anti-symmetry, concat round-trip")
    assert ok


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5, "fusion oracles and max-votes tie rule")
def test_fusion_oracles(record_property):
    rng = np.random.default_rng(8)
    views = list(ViewId)
    bad = 0
    for _ in range(100):
        d = int(rng.integers(1, 40))
        vecs = {v: rng.normal(size=d) for v in views}
        for k in range(d):
            col = [vecs[v][k] for v in views]
            bad += fuse_features(vecs, FeatureFusion.AVERAGE)[k] != pytest.approx(sum(col) / 6, abs=1e-12)
            bad += fuse_features(vecs, FeatureFusion.MAX)[k] != max(col)
        cat = fuse_features(vecs, FeatureFusion.CONCATENATE)
        bad += not all(cat[i * d + k] == vecs[v][k] for i, v in enumerate(views) for k in range(d))
    tie = dict(zip(views, [0.75] * 3 + [0.25] * 3))
    label, _ = fuse_decisions(tie, DecisionFusion.MAX_VOTES)
    record_property("detail", f"mismatches {bad}, tie label {label}")
    assert bad == 0 and label == 0


# ---------------------------------------------------------------- 6


def _pairs(cohort, view, patients):
    return sum(1 for pid in patients if {1, 2} <= set(cohort.days(pid, view)))


@pytest.mark.criterion(6, "cross-lung training sizes and unchanged evaluation set")
def test_cross_lung_contract(easy_cohort, record_property):
    # drop some mirror clips so |view| and |mirror| differ
    gone = set(easy_cohort.patients[::4])
    recs = [r for r in easy_cohort.records if not (r.view is ViewId.R3 and r.day == 2 and r.patient_id in gone)]
    cohort = Cohort(recs, easy_cohort.outcomes, easy_cohort.source)
    base = ExperimentConfig(view=ViewId.L3, classifier=Kind.DECISION_TREE, grid={"max_depth": [3], "min_samples_leaf": [1]})
    off, on = nested_cv(base, cohort), nested_cv(base.with_(cross_lung=True), cohort)
    sizes_ok = True
    for f_off, f_on in zip(off.folds, on.folds):
        train = off.plan.train_patients(f_off.fold)
        expected = _pairs(cohort, ViewId.L3, train) + _pairs(cohort, ViewId.R3, train)
        sizes_ok &= f_on.n_train_samples == expected and f_off.n_train_samples == _pairs(cohort, ViewId.L3, train)
    key = lambda r: Counter((p.patient_id, p.view, p.day_a, p.day_b) for p in r.predictions)
    same_eval = key(off) == key(on)
    record_property("detail", f"sizes {[f.n_train_samples for f in on.folds]}, same eval multiset {same_eval}")
    assert sizes_ok and same_eval and not on.audit.violations(on.plan)


# ---------------------------------------------------------------- 7


def _accuracy(model, X, y):
    return float(np.mean((model.predict_proba(X) >= 0.5) == y))


def _blobs(n, seed, sep):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2 == 0
    X = rng.normal(size=(n, 2))
    X[:, 0] += np.where(y, sep / 2, -sep / 2)
    return X, y


def _xor(n, seed):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    which = np.arange(n) % 4
    return centers[which] + rng.normal(scale=0.15, size=(n, 2)), which >= 2


def _grad_rel_error(hidden):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(6, 4))
    y = np.array([1, 0, 1, 1, 0, 0], dtype=float)
    params = [p + rng.normal(scale=0.3, size=p.shape) for p in mlp.init_params([4, *hidden, 1], rng)]
    analytic = mlp.mlp_gradient(params, X, y, 1e-2)
    worst, h = 0.0, 1e-5
    for p, a in zip(params, analytic):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp = mlp.loss_and_gradient(params, X, y, 1e-2)[0]
            p[idx] = old - h
            lm = mlp.loss_and_gradient(params, X, y, 1e-2)[0]
            p[idx] = old
            num = (lp - lm) / (2 * h)
            worst = max(worst, abs(a[idx] - num) / max(abs(a[idx]), abs(num), 1e-8))
    return worst


@pytest.mark.criterion(7, "learner sanity")
def test_learner_sanity(record_property):
    X, y = _blobs(100, 0, 6.0)
    tree = _accuracy(fit(ClassifierSpec(Kind.DECISION_TREE, {"max_depth": 8}), X, y), X, y)
    Xx, yx = _xor(200, 0)
    Xt, yt = _xor(200, 1)
    mlp_xor = _accuracy(fit(ClassifierSpec(Kind.MLP, {"lr": 0.1}), Xx, yx), Xt, yt)
    svm_xor = _accuracy(fit(ClassifierSpec(Kind.LINEAR_SVM, {"lam": 1e-2}), Xx, yx), Xt, yt)
    Xb, yb = _blobs(100, 1, 6.0)
    Xbt, ybt = _blobs(100, 2, 6.0)
    svm_lin = _accuracy(fit(ClassifierSpec(Kind.LINEAR_SVM, {"lam": 1e-2}), Xb, yb), Xbt, ybt)
    grad = max(_grad_rel_error((64,)), _grad_rel_error((16, 8)))
    record_property(
        "detail", f"tree train acc {tree}, MLP XOR {mlp_xor:.3f}, SVM XOR {svm_xor:.3f}, SVM linear {svm_lin:.3f}, grad rel err {grad:.1e}"
    )
    assert tree == 1.0 and mlp_xor >= 0.95 and abs(svm_xor - 0.5) <= 0.1 and svm_lin >= 0.95 and grad < 1e-4


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8, "planted-effect recovery over 20 seeds, < 5 min")
def test_planted_effect_recovery(record_property):
    t0 = time.perf_counter()
    seeds = range(20)
    run = lambda cohort, seed, **kw: nested_cv(ExperimentConfig(grid=ONE_MLP, seed=seed, **kw), cohort).f1

    l3_wins, diff_wins = 0, 0
    heat = np.zeros((len(FUSION_ROWS), 2))
    modes = (TemporalMode.CONCATENATE, TemporalMode.DIFFERENCE)
    for s in seeds:
        easy = generate(easy_preset(s))[0]
        l3_wins += run(easy, s, view=ViewId.L3) > run(easy, s, view=ViewId.L1)
        traj = generate(trajectory_preset(s))[0]
        fused = dict(feature_fusion=FeatureFusion.CONCATENATE)
        diff_wins += run(traj, s, **fused) > run(traj, s, temporal=TemporalMode.CONCATENATE, **fused)
        for i, (_, ff, df) in enumerate(FUSION_ROWS):
            for j, mode in enumerate(modes):
                heat[i, j] += run(easy, s, feature_fusion=ff, decision_fusion=df, temporal=mode) / len(seeds)
    elapsed = time.perf_counter() - t0

    target = ([name for name, *_ in FUSION_ROWS].index("Concatenate"), 1)
    best = np.unravel_index(np.argmax(heat), heat.shape)
    bayes = bayes_f1(easy_preset(0))
    parts = {
        "a L3>L1": l3_wins / 20 >= 0.9,
        "b Diff>Concat": diff_wins / 20 >= 0.9,
        "c concat-fusion is max": tuple(best) == target,
        "c F1>=0.85": heat[target] >= 0.85,
        "c Bayes>=0.95": bayes >= 0.95,
        "time<300s": elapsed < 300,
    }
    record_property(
        "detail",
        f"a {l3_wins}/20, b {diff_wins}/20, concat/diff {heat[target]:.3f}, "
        f"max {FUSION_ROWS[best[0]][0]}/{modes[best[1]].value} {heat[best]:.3f}, "
        f"Bayes {bayes:.3f}, {elapsed:.0f} s; failing: {[k for k, v in parts.items() if not v]}",
    )
    assert all(parts.values()), parts


# ---------------------------------------------------------------- 9


@pytest.mark.criterion(9, "importance oracle and radar conservation")
def test_importance_oracle(easy_cohort, tmp_path, record_property):
    # hand-built forest: A = f0 -> (f5, leaf), B = f5 -> (f5, f7), C = leaf
    a = Tree([0, 5, -1, -1, -1], [0.1, 0.2, 0, 0, 0], [1, 2, -1, -1, -1], [4, 3, -1, -1, -1],
             [0.5, 0.4, 0, 1, 1], [10, 6, 3, 3, 4], [0.1, 0.2, 0, 0, 0])
    b = Tree([5, 5, -1, -1, 7, -1, -1], [0] * 7, [1, 2, -1, -1, 5, -1, -1], [4, 3, -1, -1, 6, -1, -1],
             [0.5] * 7, [8, 4, 2, 2, 4, 2, 2], [0.3, 0.1, 0, 0, 0.05, 0, 0])
    c = Tree([-1], [0.0], [-1], [-1], [0.5], [10], [0.0])
    forest = TrainedModel(ClassifierSpec(Kind.RANDOM_FOREST, {"n_trees": 3}), Standardizer(np.zeros(38), np.ones(38)), 38, trees=[a, b, c])
    expected = np.zeros(38, dtype=int)
    expected[[0, 5, 7]] = [1, 3, 1]
    hand_ok = np.array_equal(split_counts(forest), expected)

    r = nested_cv(
        ExperimentConfig(view=ViewId.L3, classifier=Kind.RANDOM_FOREST, grid={"n_trees": [20], "min_samples_leaf": [1]}),
        easy_cohort,
        keep_models=True,
    )
    internal = sum(int(t.internal.sum()) for models in r.models for m in models.values() for t in m.trees)
    prof = profile([fold_blocks(c) for c in r.importance_counts], BiomarkerGrouping.placeholder())
    export_radar(prof, tmp_path / "radar.csv")
    back = read_radar(tmp_path / "radar.csv")
    conserved = abs(sum(back.frequencies.values()) * len(r.importance_counts) - internal) <= 1e-6 * internal
    top = max(back.normalized.values())
    record_property("detail", f"hand forest {hand_ok}, internal nodes {internal}, conserved {conserved}, max {top}")
    assert hand_ok and conserved and top == 1.0


# ---------------------------------------------------------------- 10, 11


@pytest.fixture(scope="module")
def ablation_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("ablate")
    cfg = root / "ablate.yaml"
    cfg.write_text(yaml.safe_dump({
        "seed": 0,
        "data": {"synth": {"preset": "easy"}},
        "classifiers": [k.value for k in Kind],
        "grids": {
            "decision_tree": {"max_depth": [4], "min_samples_leaf": [1]},
            "random_forest": {"n_trees": [20], "min_samples_leaf": [1]},
            "linear_svm": {"lam": [1e-2]},
            "mlp": ONE_MLP,
            "mlp_large": ONE_MLP,
        },
        "exhibits": ["table1", "fig3", "fig5"],
    }))
    codes = [main(["ablate", "--config", str(cfg), "--out", str(root / f"j{j}"), "--jobs", str(j)]) for j in (1, 2)]
    return root, codes


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.criterion(10, "ablate outputs byte-identical across --jobs")
def test_ablate_determinism(ablation_runs, record_property):
    root, codes = ablation_runs
    names = sorted(p.name for p in (root / "j1").glob("*.csv"))
    differing = [n for n in names if (root / "j1" / n).read_bytes() != (root / "j2" / n).read_bytes()]
    record_property("detail", f"exit codes {codes}, {len(names)} CSVs, differing {differing}")
    assert codes == [0, 0] and names and differing == []


@pytest.mark.criterion(11, "exhibit shapes: 7x5 table, 5x2 heatmap, 7-row cross-lung")
def test_exhibit_shapes(ablation_runs, record_property):
    root, codes = ablation_runs
    t1 = _rows(root / "j1" / "table1_view_classifier.csv")
    heat = _rows(root / "j1" / "fig3_fusion_heatmap.csv")
    bars = _rows(root / "j1" / "fig5_crosslung_bars.csv")
    shape = lambda rows: (len(rows) - 1, len(rows[0]) - 1)
    record_property("detail", f"table1 {shape(t1)}, heatmap {shape(heat)}, cross-lung rows {len(bars) - 1}")
    assert codes[0] == 0
    assert shape(t1) == (7, 5) and t1[0][1:] == [k.title for k in Kind]
    assert shape(heat) == (5, 2) and heat[0] == ["fusion", "concatenate", "difference"]
    assert len(bars) - 1 == 7 and bars[-1][0] == "All Views"
