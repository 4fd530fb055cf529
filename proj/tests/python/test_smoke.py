"""End-to-end smoke tests for the _cfa extension module and the CLI."""

import os
import subprocess

import numpy as np
import pytest

import _cfa


def test_gen_pixel_toy_shapes():
    ds = _cfa.gen_pixel_toy(num_classes=4, num_domains=3, img_side=8, n_per_cell=5)
    assert len(ds) == 4 * 3 * 5
    assert ds.inputs.shape == (60, 3 * 8 * 8)
    assert ds.num_classes == 4
    assert ds.num_domains == 3
    assert sorted(set(ds.class_labels)) == [0, 1, 2, 3]
    assert sorted(set(ds.domain_labels)) == [0, 1, 2]


def test_curate_and_split_invariants():
    ds = _cfa.gen_pixel_toy(num_classes=4, num_domains=3, img_side=4, n_per_cell=20)
    mask = _cfa.curate_mask(ds, 0.2)
    cells = np.asarray(mask.id_cells, dtype=int).reshape(3, 4)
    assert cells.sum() == 12 - 2  # floor(0.2 * 12) held-out cells
    assert cells.max(axis=0).min() == 1  # every class keeps an ID cell
    assert cells.max(axis=1).min() == 1  # every domain keeps an ID cell

    man = _cfa.split_dataset(ds, mask, 0.1, 0)
    parts = [man.train_indices, man.id_val_indices, man.ood_val_indices, man.ood_test_indices]
    flat = [i for part in parts for i in part]
    assert len(flat) == len(set(flat)) == len(ds)
    for i in man.train_indices:
        assert cells[ds.domain_labels[i], ds.class_labels[i]] == 1
    for i in list(man.ood_val_indices) + list(man.ood_test_indices):
        assert cells[ds.domain_labels[i], ds.class_labels[i]] == 0


def test_ufm_solver_and_decomposition():
    heads = _cfa.make_feasible_heads(num_classes=3, num_domains=2, dim=8, beta=20.0, seed=1)
    w1, w2 = heads.w1, heads.w2
    assert np.allclose(w1 @ w2.T, 0.0, atol=1e-10)
    y = [k for k in range(3) for _ in range(10)]
    e = [i % 2 for i in range(30)]
    z, final_obj = _cfa.solve_ufm(w1, w2, 20.0, y, e, lam=1.0, steps=200000, seed=2)
    assert z.shape == (8, 30)
    assert np.isfinite(final_obj)
    rep = _cfa.verify_theorem1(z, w1, w2, y, e)
    assert rep["residual_fraction"] < 1e-2
    assert rep["within_class_spread"] < 1e-2
    assert rep["within_domain_spread"] < 1e-2
    assert rep["a_coeffs"].shape == (3, 3)


def test_stage1_probe_orthogonality():
    rng = np.random.default_rng(0)
    centers = np.eye(6)
    y, e, rows = [], [], []
    for k in range(3):
        for dom in range(2):
            for _ in range(20):
                v = centers[k] + centers[3 + dom] + 0.05 * rng.standard_normal(6)
                rows.append(v / np.linalg.norm(v))
                y.append(k)
                e.append(dom)
    w1, w2, trace = _cfa.stage1_linear_probe(np.asarray(rows), y, e, 3, 2, 100.0, 2000, 0)
    assert np.allclose(np.linalg.norm(w1, axis=1), 1.0, atol=1e-9)
    assert np.allclose(w1 @ w2.T, 0.0, atol=1e-8)
    assert len(trace) == 2000


def test_metrics():
    assert _cfa.top1_accuracy([1, 0, 2, 2], [1, 1, 2, 2]) == pytest.approx(0.75)
    assert _cfa.macro_f1([0, 1], [0, 1], 2) == pytest.approx(1.0)


def test_run_single_seed_tiny_config():
    config = "\n".join(
        [
            "method = cfa",
            "dataset_kind = structured",
            "num_classes = 3",
            "num_domains = 2",
            "n_per_cell = 20",
            "class_dim = 3",
            "domain_dim = 2",
            "total_dim = 8",
            "hidden_dims = 8",
            "feature_dim = 8",
            "epochs = 2",
            "stage1_iters = 2000",
            "batch_size = 16",
            "out_dir = /tmp/cfa_py_smoke",
        ]
    )
    out = _cfa.run_single_seed(config, 1)
    assert out["seed"] == 1
    assert 0.0 <= out["id_acc"] <= 1.0
    assert 0.0 <= out["ood_acc"] <= 1.0


def test_cli_roundtrip(tmp_path):
    cli = os.environ.get("CFA_CLI")
    if not cli:
        pytest.skip("CFA_CLI not set")
    cfg = tmp_path / "gen.cfg"
    cfg.write_text(
        "dataset_kind = pixel_toy\nnum_classes = 4\nnum_domains = 3\nn_per_cell = 3\n"
    )
    data = tmp_path / "toy.cfd"
    subprocess.run([cli, "gen", "--config", str(cfg), "--out", str(data)], check=True)
    ds = _cfa.load_dataset(str(data))
    assert len(ds) == 4 * 3 * 3

    bad = subprocess.run([cli, "ft", "--config", str(tmp_path / "missing.cfg")])
    assert bad.returncode != 0
