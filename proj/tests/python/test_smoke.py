import math

import numpy as np
import pytest

import asyndgan


def test_comm_cost():
    assert asyndgan.comm_cost(128, 128, 1, 128, 4) == 8388608
    assert asyndgan.gradient_sharing_cost(40_000_000, 4) == 160_000_000
    with pytest.raises(ValueError):
        asyndgan.comm_cost(0, 1, 1, 1, 4)


def test_frame_round_trip():
    values = np.arange(6, dtype=np.float32).reshape(2, 3)
    frame = asyndgan.encode_fake_batch(4, 9, values)
    assert frame[:4] == b"ADGN"
    msg = asyndgan.decode_frame(frame)
    assert msg["type"] == "FAKE_BATCH"
    assert (msg["node"], msg["round"]) == (4, 9)
    np.testing.assert_array_equal(msg["tensor"], values)
    with pytest.raises(ValueError):
        asyndgan.decode_frame(b"XXXX" + frame[4:])


def test_theorem_checks():
    checks = asyndgan.theorem_checks()
    assert checks and all(c["pass"] for c in checks)
    assert asyndgan.gaussian_pair_loss(1.0, 1.0, 1.0, 1.0) == pytest.approx(-2 * math.log(2), abs=1e-5)


def test_mixture_and_js():
    x, y = asyndgan.sample_mixture(20000, 3)
    assert set(np.unique(x)) == {0, 1, 2}
    assert y[x == 0].mean() == pytest.approx(-3.0, abs=0.1)
    _, y2 = asyndgan.sample_mixture(20000, 4)
    assert asyndgan.js_divergence(y, y2) < 0.01
    assert asyndgan.js_divergence(y, y + 5.0) > 0.2


def test_metrics():
    g = np.zeros((5, 5), dtype=np.uint8)
    g[1:3, 1:3] = 1
    s = np.zeros((5, 5), dtype=np.uint8)
    s[1, 1:4] = 1
    s[2, 1] = 1
    s[3, 1:3] = 1
    assert asyndgan.dice(g, s) == pytest.approx(0.6)
    assert asyndgan.sensitivity(g, s) == pytest.approx(0.75)
    assert asyndgan.specificity(g, s) == pytest.approx(18 / 21)
    assert asyndgan.hd95(g, g) == 0.0
    with pytest.raises(ValueError):
        asyndgan.hd95(g, np.zeros_like(g))
    labels = asyndgan.connected_components(np.eye(3, dtype=np.uint8))
    assert labels.max() == 3
    assert asyndgan.aji(labels, labels) == 1.0


def test_config_and_short_run(tmp_path):
    text = (
        "seed_init = 0\nseed_data = 0\nseed_dropout = 0\n"
        "iterations = 10\ndataset_size = 300\nbatch = 8\nhidden = 8\neval_samples = 1000\n"
    )
    full = asyndgan.parse_config(text)
    assert "k_d = 1" in full
    with pytest.raises(ValueError):
        asyndgan.parse_config("seed_init = 0\n")
    out = tmp_path / "run"
    summary = asyndgan.train(text, str(out))
    assert summary["rounds"] == 10
    assert summary["privacy_violations"] == 0
    assert len(summary["js_component"]) == 3
    assert (out / "config.txt").read_text() == text
    assert (out / "loss.csv").exists()
