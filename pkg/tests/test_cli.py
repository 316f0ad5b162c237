"""The command-line surface as a user sees it: subprocesses and exit codes."""

import json
import sys

import numpy as np
import pytest

from limescope import SegmentMap, image_from_array, save_image, segment_grid

from conftest import run_cli

FIXED_STUB = """\
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    json.dump({"id": req["id"], "probs": [0.3, 0.7]}, sys.stdout)
    sys.stdout.write("\\n")
    sys.stdout.flush()
"""

BRIGHTNESS_STUB = """\
import base64, io, json, sys
from PIL import Image
for line in sys.stdin:
    req = json.loads(line)
    img = Image.open(io.BytesIO(base64.b64decode(req["image"]))).convert("RGB")
    raw = img.tobytes()
    b = sum(raw) / (len(raw) * 255.0)
    json.dump({"id": req["id"], "probs": [1.0 - b, b]}, sys.stdout)
    sys.stdout.write("\\n")
    sys.stdout.flush()
"""


@pytest.fixture
def eye_image(tmp_path, rng):
    path = tmp_path / "eye.png"
    save_image(image_from_array(rng.random((16, 16, 3))), path)
    return path


@pytest.fixture
def grid_map_file(tmp_path, eye_image):
    from limescope import load_image

    smap = segment_grid(load_image(eye_image), 2, 4)
    path = tmp_path / "map.json"
    smap.save(path)
    return path


# -- segment -----------------------------------------------------------------------


def test_segment_happy_path(tmp_path, eye_image):
    out = tmp_path / "map.json"
    result = run_cli(["segment", "--image", str(eye_image), "--segments", "8", "--out", str(out)])
    assert result.returncode == 0, result.stderr
    assert out.exists()
    assert (tmp_path / "map.png").exists()
    loaded = SegmentMap.load(out)
    assert loaded.width == 16 and loaded.height == 16


def test_segment_missing_file_exit_2(tmp_path):
    result = run_cli(["segment", "--image", str(tmp_path / "absent.png"), "--out", str(tmp_path / "m.json")])
    assert result.returncode == 2
    assert result.stderr.strip()


def test_segment_zero_segments_exit_2(tmp_path, eye_image):
    result = run_cli(["segment", "--image", str(eye_image), "--segments", "0", "--out", str(tmp_path / "m.json")])
    assert result.returncode == 2
    assert "target_segments" in result.stderr


def test_segment_grid_method(tmp_path, eye_image):
    out = tmp_path / "grid.json"
    result = run_cli(
        ["segment", "--image", str(eye_image), "--method", "grid", "--rows", "2", "--cols", "2", "--out", str(out)]
    )
    assert result.returncode == 0
    assert SegmentMap.load(out).n_segments == 4


def test_segment_json_mode(tmp_path, eye_image):
    out = tmp_path / "map.json"
    result = run_cli(["segment", "--image", str(eye_image), "--segments", "4", "--out", str(out), "--json"])
    assert result.returncode == 0
    payload = json.loads(result.stdout)
    assert payload["n_segments"] >= 1


# -- explain -----------------------------------------------------------------------


def test_explain_oracle_recovers_segment(tmp_path, eye_image, grid_map_file):
    out = tmp_path / "explanation.json"
    overlay = tmp_path / "overlay.png"
    result = run_cli(
        [
            "explain",
            "--image", str(eye_image),
            "--model", f"oracle:{grid_map_file}:4",
            "--method", "grid", "--rows", "2", "--cols", "4",
            "--samples", "500",
            "--seed", "7",
            "--out", str(out),
            "--overlay", str(overlay),
        ]
    )
    assert result.returncode == 0, result.stderr
    payload = json.loads(out.read_text())
    assert payload["selected"][0] == 4
    assert payload["degenerate"] is False
    assert overlay.exists()
    assert "segment" in result.stdout


def test_segment_then_explain_same_defaults_recovers_key(tmp_path, eye_image):
    # deterministic segmentation means the map written by `segment` equals the
    # map `explain` rebuilds, so the oracle's key id carries over
    map_file = tmp_path / "map.json"
    seg = run_cli(["segment", "--image", str(eye_image), "--segments", "10", "--out", str(map_file)])
    assert seg.returncode == 0, seg.stderr
    out = tmp_path / "explanation.json"
    result = run_cli(
        [
            "explain",
            "--image", str(eye_image),
            "--model", f"oracle:{map_file}:4",
            "--segments", "10",
            "--samples", "400",
            "--seed", "7",
            "--out", str(out),
        ]
    )
    assert result.returncode == 0, result.stderr
    payload = json.loads(out.read_text())
    assert payload["selected"][0] == 4


def test_explain_byte_identical_across_runs_and_threads(tmp_path, eye_image, grid_map_file):
    outputs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / f"{name}.json"
        result = run_cli(
            [
                "explain",
                "--image", str(eye_image),
                "--model", f"oracle:{grid_map_file}:2",
                "--method", "grid", "--rows", "2", "--cols", "4",
                "--samples", "300",
                "--seed", "11",
                "--workers", workers,
                "--out", str(out),
            ]
        )
        assert result.returncode == 0, result.stderr
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_explain_through_process_stub(tmp_path, eye_image):
    stub = tmp_path / "stub.py"
    stub.write_text(BRIGHTNESS_STUB)
    out = tmp_path / "explanation.json"
    result = run_cli(
        [
            "explain",
            "--image", str(eye_image),
            "--model", f"proc:{sys.executable} {stub}",
            "--samples", "64",
            "--segments", "6",
            "--out", str(out),
        ]
    )
    assert result.returncode == 0, result.stderr
    payload = json.loads(out.read_text())
    assert payload["degenerate"] is False
    assert payload["provenance"]["model_id"].startswith("proc:")


def test_explain_constant_model_degenerate_exit_zero(tmp_path, eye_image):
    from limescope.adapters import DenseLayer, FlattenLayer, SoftmaxLayer, save_tinycnn

    spec = tmp_path / "zero.json"
    save_tinycnn(
        spec,
        (16, 16, 3),
        [FlattenLayer(), DenseLayer(weights=np.zeros((16 * 16 * 3, 2)), bias=np.zeros(2)), SoftmaxLayer()],
    )
    out = tmp_path / "explanation.json"
    result = run_cli(
        ["explain", "--image", str(eye_image), "--model", f"tinycnn:{spec}", "--samples", "32",
         "--segments", "4", "--out", str(out)]
    )
    assert result.returncode == 0, result.stderr
    payload = json.loads(out.read_text())
    assert payload["degenerate"] is True
    assert payload["r2"] is None


def test_explain_unreachable_model_exit_3(tmp_path, eye_image):
    out = tmp_path / "explanation.json"
    result = run_cli(
        ["explain", "--image", str(eye_image), "--model", "proc:/no/such/model-server", "--out", str(out)]
    )
    assert result.returncode == 3
    assert not out.exists()


def test_explain_dead_server_exit_3(tmp_path, eye_image):
    result = run_cli(
        [
            "explain",
            "--image", str(eye_image),
            "--model", f"proc:{sys.executable} -c \"import sys; sys.exit(0)\"",
            "--samples", "16",
            "--segments", "4",
            "--out", str(tmp_path / "e.json"),
        ],
        env_extra={"LIMESCOPE_MODEL_TIMEOUT": "3"},
    )
    assert result.returncode == 3


def test_explain_json_mode(tmp_path, eye_image, grid_map_file):
    out = tmp_path / "explanation.json"
    result = run_cli(
        [
            "explain",
            "--image", str(eye_image),
            "--model", f"oracle:{grid_map_file}:0",
            "--method", "grid", "--rows", "2", "--cols", "4",
            "--samples", "200",
            "--out", str(out),
            "--json",
        ]
    )
    assert result.returncode == 0, result.stderr
    payload = json.loads(result.stdout)
    assert payload["selected"][0] == 0
    assert payload["out"] == str(out)


def test_explain_config_file_precedence(tmp_path, eye_image, grid_map_file):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"samples": 200, "seed": 3, "method": "grid", "rows": 2, "cols": 4}))
    out = tmp_path / "explanation.json"
    result = run_cli(
        [
            "explain",
            "--image", str(eye_image),
            "--model", f"oracle:{grid_map_file}:1",
            "--config", str(config),
            "--seed", "9",  # flag beats config
            "--out", str(out),
        ]
    )
    assert result.returncode == 0, result.stderr
    payload = json.loads(out.read_text())
    assert payload["provenance"]["n_samples"] == 200  # from config
    assert payload["provenance"]["seed"] == 9  # from flag


# -- evaluate -----------------------------------------------------------------------


def _write_manifest_and_log(tmp_path, total=302, wrong=0):
    entries = []
    lines = []
    half = total // 2
    for i in range(total):
        label = 1 if i < half else 0
        name = "glaucoma" if label == 1 else "non-glaucoma"
        sample = f"{name}/img_{i:05d}.png"
        entries.append([sample, label])
        correct = i >= wrong
        p1 = (0.9 if correct else 0.1) if label == 1 else (0.1 if correct else 0.9)
        lines.append({"sample_id": sample, "true_label": label, "probs": [1 - p1, p1]})
    manifest = {
        "root": "dataset",
        "classes": [["non-glaucoma", 0], ["glaucoma", 1]],
        "entries": sorted(entries),
    }
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))
    log_path = tmp_path / "preds.jsonl"
    log_path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    return manifest_path, log_path


def test_evaluate_all_correct_reports_100(tmp_path):
    manifest, log = _write_manifest_and_log(tmp_path, total=302, wrong=0)
    out = tmp_path / "report.json"
    result = run_cli(["evaluate", "--log", str(log), "--manifest", str(manifest), "--out", str(out)])
    assert result.returncode == 0, result.stderr
    assert "100.00%" in result.stdout
    payload = json.loads(out.read_text())
    assert payload["accuracy_percent"] == "100.00%"
    assert payload["total_misclassified"]["count"] == 0


def test_evaluate_empty_log_exit_2(tmp_path):
    manifest, log = _write_manifest_and_log(tmp_path, total=4)
    log.write_text("")
    result = run_cli(["evaluate", "--log", str(log), "--manifest", str(manifest)])
    assert result.returncode == 2


def test_evaluate_bad_line_reports_number_exit_2(tmp_path):
    manifest, log = _write_manifest_and_log(tmp_path, total=4)
    log.write_text(log.read_text() + "{broken json\n")
    result = run_cli(["evaluate", "--log", str(log), "--manifest", str(manifest)])
    assert result.returncode == 2
    assert "line 5" in result.stderr


def test_evaluate_json_mode_round_trips(tmp_path):
    manifest, log = _write_manifest_and_log(tmp_path, total=20, wrong=3)
    result = run_cli(["evaluate", "--log", str(log), "--manifest", str(manifest), "--json"])
    assert result.returncode == 0
    payload = json.loads(result.stdout)
    assert payload["total_misclassified"]["count"] == 3


def test_unknown_model_spec_exit_2(tmp_path, eye_image):
    result = run_cli(
        ["explain", "--image", str(eye_image), "--model", "magic:wand", "--out", str(tmp_path / "o.json")]
    )
    assert result.returncode == 2
