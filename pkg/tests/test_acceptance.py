"""Exit criteria for the package.

Each test carries an ``acceptance`` marker; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the run.
"""

import json
import math
import time
from decimal import Decimal
from pathlib import Path

import numpy as np
import pytest

from centraprune.centrality import eigenvector_centrality
from centraprune.cli import dispatch
from centraprune.graph import build_graph, normalize_columns, similarity_matrix
from centraprune.net import hidden_states, init_model, loss_and_grads, rebuild_with_plan
from centraprune.prune import apply_plan, dense_preactivation, make_plan

FIXTURES = Path(__file__).parent / "fixtures"
SWEEP_SPEC = FIXTURES / "stability_sweep.json"

# Reference run of SWEEP_SPEC (mean top-1 over seeds 0 and 1, centrality arm):
#   p=0.3: 0.8267  p=0.5: 0.8333  p=0.8: 0.8489  p=0.9: 0.8378
# The stability band below is asserted against whatever the current run gives.
STABILITY_BAND = 0.10


def _detail(request, text):
    request.node.acceptance_detail = text


# -- centrality oracle ---------------------------------------------------------


def _random_gapped_graphs(count, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(3, 51))
        density = rng.uniform(0.1, 0.9)
        mask = np.triu(rng.random((n, n)) < density, 1)
        weights = np.triu(1.0 - rng.random((n, n)), 1)  # (0, 1]
        a = weights * mask
        a = a + a.T
        vals, vecs = np.linalg.eigh(a)
        if vals[-1] <= 0 or vals[-1] - vals[-2] < 1e-3 * vals[-1]:
            continue
        v = vecs[:, -1]
        out.append((a, v * np.sign(v.sum()), vals[-1]))
    return out


@pytest.mark.acceptance("centrality matches dense eigensolver on 200 random graphs (1e-6, <10 s)")
def test_centrality_oracle(request):
    graphs = _random_gapped_graphs(200)
    worst = 0.0
    start = time.perf_counter()
    for a, oracle, _ in graphs:
        # gaps down to 1e-3 * lambda need more than the default 1000 steps
        c = eigenvector_centrality(a, tol=1e-10, max_iter=100_000)
        assert c.converged
        worst = max(worst, float(np.max(np.abs(c.scores - oracle))))
    elapsed = time.perf_counter() - start
    _detail(request, f"max deviation {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 10.0


@pytest.mark.acceptance("hand fixture [[0,1,0],[1,0,0],[0,0,0]] -> (1/sqrt2, 1/sqrt2, 0), lambda = 1")
def test_hand_fixture(request):
    a = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    vals, vecs = np.linalg.eigh(a)
    oracle = vecs[:, -1] * np.sign(vecs[:, -1].sum())
    np.testing.assert_allclose(oracle, [1 / math.sqrt(2), 1 / math.sqrt(2), 0.0], atol=1e-12)
    c = eigenvector_centrality(a)
    err = float(np.max(np.abs(c.scores - oracle)))
    _detail(request, f"score error {err:.1e}, lambda error {abs(c.eigenvalue - vals[-1]):.1e}")
    assert err <= 1e-10
    assert abs(c.eigenvalue - 1.0) <= 1e-10


# -- slicing -------------------------------------------------------------------


@pytest.mark.acceptance("slicing exactness on 100 random layers (bitwise pre-activations, logits 1e-12)")
def test_slicing_exactness(request):
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(100):
        d, n = (int(v) for v in rng.integers(1, 65, size=2))
        n = max(n, 2)
        m = int(rng.integers(2, 9))
        activation = "relu" if trial % 2 else "linear"
        model = init_model(d, [n], m, seed=trial, activation=activation)
        model.layers[0].bias[:] = rng.standard_normal(n)
        model.head.bias[:] = rng.standard_normal(m)
        plan = make_plan(rng.random(n), float(rng.uniform(0.05, 0.95)))
        x = rng.standard_normal((int(rng.integers(1, 16)), d))

        layer = model.layers[0]
        pruned = apply_plan(layer, plan)
        full = dense_preactivation(x, layer.weights, layer.bias)
        sliced = dense_preactivation(x, pruned.weights, pruned.bias)
        assert sliced.tobytes() == np.ascontiguousarray(full[:, plan.kept]).tobytes()

        rebuilt = rebuild_with_plan(model, "dense_0", plan)
        _, post, _ = hidden_states(model, x)
        _, _, logits = hidden_states(rebuilt, x)
        kept = plan.kept
        restricted = post[0][:, kept] @ model.head.weights[kept] + model.head.bias
        worst = max(worst, float(np.max(np.abs(logits - restricted))))
    _detail(request, f"max logit deviation {worst:.1e}")
    assert worst <= 1e-12


# -- floor rule ----------------------------------------------------------------


@pytest.mark.acceptance("floor rule k == floor(p*n) for n in 1..200, p in 0.05..0.95, nested sets")
def test_floor_rule(request):
    ratios = [round(0.05 * i, 2) for i in range(1, 20)]
    rng = np.random.default_rng(11)
    checked = 0
    for n in range(1, 201):
        scores = rng.choice([0.0, 0.1, 0.3, 0.3, 0.7, 1.0], size=n)
        prev: set[int] = set()
        for p in ratios:
            plan = make_plan(scores, p)
            assert plan.k == int((Decimal(repr(p)) * n) // 1), (n, p)
            cur = set(plan.pruned)
            assert prev <= cur, (n, p)
            prev = cur
            checked += 1
    _detail(request, f"{checked} (n, p) pairs")


# -- graph laws ----------------------------------------------------------------


def _pairwise_cosine(w, eps=1e-8):
    n = w.shape[1]
    cols = [w[:, j].tolist() for j in range(n)]
    norms = [math.sqrt(math.fsum(v * v for v in c)) for c in cols]
    return np.array(
        [[math.fsum(a * b for a, b in zip(cols[i], cols[j])) / ((norms[i] + eps) * (norms[j] + eps)) for j in range(n)] for i in range(n)]
    )


@pytest.mark.acceptance("graph laws: threshold nesting, permutation equivariance, cosine oracle 1e-12")
def test_graph_laws(request):
    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 21))
        w = rng.standard_normal((int(rng.integers(1, 16)), n))
        s = similarity_matrix(normalize_columns(w, 1e-8))

        edge_sets = [{(i, j) for i, j, _ in build_graph(s, t).edges()} for t in (0.0, 0.2, 0.5, 0.8)]
        for looser, tighter in zip(edge_sets, edge_sets[1:]):
            assert tighter <= looser

        perm = rng.permutation(n)
        a = build_graph(s, 0.2).adjacency.toarray()
        ap = build_graph(similarity_matrix(normalize_columns(w[:, perm], 1e-8)), 0.2).adjacency.toarray()
        assert np.array_equal(ap, a[np.ix_(perm, perm)])

        off = ~np.eye(n, dtype=bool)
        worst = max(worst, float(np.max(np.abs(s.s - _pairwise_cosine(w))[off])))
    _detail(request, f"max cosine deviation {worst:.1e}")
    assert worst <= 1e-12


# -- gradients -----------------------------------------------------------------


@pytest.mark.acceptance("gradient check on 20 random small models (relative error <= 1e-4)")
def test_gradient_check(request):
    rng = np.random.default_rng(3)
    worst = 0.0
    step = 1e-5
    for trial in range(20):
        d, n, m = (int(v) for v in rng.integers(2, 9, size=3))
        model = init_model(d, [n], m, seed=trial)
        for layer in model.all_layers:
            layer.bias[:] = rng.normal(0.0, 0.1, size=layer.bias.shape)
        x = rng.standard_normal((5, d))
        y = rng.integers(0, m, size=5)
        _, grads = loss_and_grads(model, x, y)
        for layer, pair in zip(model.all_layers, grads):
            for arr, analytic in zip((layer.weights, layer.bias), pair):
                numeric = np.zeros_like(arr)
                for idx in np.ndindex(arr.shape):
                    orig = arr[idx]
                    arr[idx] = orig + step
                    up = loss_and_grads(model, x, y)[0]
                    arr[idx] = orig - step
                    down = loss_and_grads(model, x, y)[0]
                    arr[idx] = orig
                    numeric[idx] = (up - down) / (2 * step)
                denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
                if denom > 0:
                    worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    _detail(request, f"max relative error {worst:.1e}")
    assert worst <= 1e-4


# -- sweeps --------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    runs = []
    for i in range(2):
        start = time.perf_counter()
        code = dispatch(["sweep", "--spec", str(SWEEP_SPEC), "--out", str(out / f"report{i}.json")])
        runs.append((code, out / f"report{i}.json", time.perf_counter() - start))
    return runs


def _summary(report_path):
    doc = json.loads(report_path.read_text())
    return doc, {(r["method"], r["p"]): r for r in doc["summary"]}


@pytest.mark.acceptance("stability: centrality accuracy at p in {0.3,0.5,0.8,0.9} within 10 points of p=0.3 (<2 min)")
def test_ratio_stability(request, sweep_runs):
    code, path, elapsed = sweep_runs[0]
    assert code == 0
    _, rows = _summary(path)
    base = rows[("centrality", 0.3)]["mean"]
    accs = {p: rows[("centrality", p)]["mean"] for p in (0.3, 0.5, 0.8, 0.9)}
    spread = max(abs(a - base) for a in accs.values())
    _detail(request, ", ".join(f"p={p}: {100 * a:.2f}%" for p, a in accs.items()) + f"; {elapsed:.1f} s")
    assert spread <= STABILITY_BAND
    assert elapsed < 120.0


@pytest.mark.acceptance("baseline comparison sweep: centrality/magnitude/none x 2 seeds, comparison-table markdown, params shrink")
def test_baseline_comparison(request, sweep_runs, capsys):
    code, path, _ = sweep_runs[0]
    assert code == 0
    doc, rows = _summary(path)
    assert {c["seed"] for c in doc["cells"]} == {0, 1}
    assert {c["method"] for c in doc["cells"]} == {"centrality", "magnitude", "none"}
    assert all(c["status"] == "ok" for c in doc["cells"])
    for cell in doc["cells"]:
        if cell["method"] != "none":
            assert cell["params_after"] < cell["params_before"]
        else:
            assert cell["params_after"] == cell["params_before"]

    capsys.readouterr()
    assert dispatch(["report", "--in", str(path), "--fmt", "md"]) == 0
    md = capsys.readouterr().out
    table = md.split("\n\n")[0].splitlines()
    assert table[0] == "| Dataset | Ratio | Threshold | centrality | magnitude | none |"
    assert len(table) == 2 + 4

    # reported, not asserted: which pruning criterion did better on this toy task
    verdict = ", ".join(
        f"p={p}: {100 * rows[('centrality', p)]['mean']:.2f} vs {100 * rows[('magnitude', p)]['mean']:.2f}"
        for p in (0.3, 0.5, 0.8, 0.9)
    )
    _detail(request, f"centrality vs magnitude {verdict}")


@pytest.mark.acceptance("determinism: two runs of the same sweep spec give byte-identical report JSON")
def test_determinism(request, sweep_runs):
    (c0, p0, _), (c1, p1, _) = sweep_runs
    assert c0 == c1 == 0
    same = p0.read_bytes() == p1.read_bytes()
    _detail(request, f"{len(p0.read_bytes())} bytes, identical={same}")
    assert same
