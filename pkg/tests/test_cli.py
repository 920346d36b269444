"""End-to-end command line tests, run in-process through ``main``."""

import filecmp
import json
import struct

import numpy as np
import pytest
import yaml

from camoflow.cli import main
from camoflow.evaluation import min_enclosing_box
from camoflow.imgio import read_image, read_mask

CONFIG_YAML = """\
seed: 9
registration:
  grid_m: 20
  grid_n: 20
synth:
  frame_size: [128, 128]
  length: 4
  grid_m: 20
  grid_n: 20
  seed: 9
  sprite:
    size: 20.0
    velocity: [3.0, 2.0]
    start: [60.0, 64.0]
"""


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "pipeline.yaml"
    path.write_text(CONFIG_YAML)
    return path


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory, config_path):
    """A small CLI-generated sequence shared by the downstream commands."""
    out = tmp_path_factory.mktemp("seq") / "demo"
    code = main(["synth", "--config", str(config_path), "--output", str(out)])
    assert code == 0
    return out


class TestTopLevel:
    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert "camoflow" in capsys.readouterr().out

    def test_print_config_is_valid_yaml(self, capsys):
        assert main(["--print-config"]) == 0
        payload = yaml.safe_load(capsys.readouterr().out)
        assert set(payload) == {"registration", "segmentation", "synth", "eval", "io", "seed"}
        assert payload["registration"]["gamma"] == 0.05

    def test_print_config_reflects_file(self, capsys, config_path):
        assert main(["--print-config", "--config", str(config_path)]) == 0
        payload = yaml.safe_load(capsys.readouterr().out)
        assert payload["seed"] == 9
        assert payload["synth"]["sprite"]["size"] == 20.0

    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("registraton: {gamma: 0.1}\n")
        assert main(["--print-config", "--config", str(bad)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"
        assert "registraton" in err["message"]

    def test_invalid_yaml_rejected(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("synth: [unclosed\n")
        assert main(["--print-config", "--config", str(bad)]) == 2


class TestSynth:
    def test_writes_complete_sequence(self, synth_dir, capsys):
        for t in range(4):
            assert (synth_dir / f"frame_{t:04d}.png").exists()
            assert (synth_dir / f"mask_{t:04d}.png").exists()
        for t in range(3):
            assert (synth_dir / f"flow_{t:04d}.flo").exists()
        for name in ("homographies.json", "inliers.json", "meta.json"):
            assert (synth_dir / name).exists()

    def test_stdout_is_json_summary(self, tmp_path, config_path, capsys):
        out = tmp_path / "s"
        assert main(["synth", "--config", str(config_path), "--output", str(out)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["frames"] == 4
        assert payload["output"] == str(out)

    def test_same_seed_is_byte_identical(self, tmp_path, config_path, synth_dir):
        twin = tmp_path / "twin"
        assert main(["synth", "--config", str(config_path), "--output", str(twin)]) == 0
        for path in sorted(synth_dir.iterdir()):
            assert filecmp.cmp(path, twin / path.name, shallow=False), path.name

    def test_seed_flag_changes_frames(self, tmp_path, config_path, synth_dir):
        other = tmp_path / "other"
        code = main([
            "synth", "--config", str(config_path), "--seed", "77", "--output", str(other)
        ])
        assert code == 0
        assert not filecmp.cmp(
            synth_dir / "frame_0000.png", other / "frame_0000.png", shallow=False
        )

    def test_flag_overrides(self, tmp_path, capsys):
        out = tmp_path / "tiny"
        code = main([
            "synth", "--length", "2", "--sprite", "none", "--jitter", "0.02",
            "--mode", "random", "--output", str(out),
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload == {
            "output": str(out), "frames": 2, "mode": "random", "seed": 0, "sprite": "none",
        }
        assert not read_mask(out / "mask_0000.png").any()

    def test_static_interval_flag(self, tmp_path):
        out = tmp_path / "frozen"
        code = main([
            "synth", "--length", "5", "--static", "2:3", "--jitter", "0.0",
            "--output", str(out),
        ])
        assert code == 0
        meta = json.loads((out / "meta.json").read_text())
        assert meta["config"]["static_interval"] == [2, 3]
        assert filecmp.cmp(out / "mask_0002.png", out / "mask_0003.png", shallow=False)

    def test_malformed_static_flag(self, tmp_path, capsys):
        assert main(["synth", "--static", "5", "--output", str(tmp_path / "x")]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"

    def test_env_var_output_root(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("CAMOFLOW_OUTPUT", str(tmp_path))
        assert main(["synth", "--length", "2", "--seed", "3"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["output"] == str(tmp_path / "synth-seed3")
        assert (tmp_path / "synth-seed3" / "frame_0000.png").exists()


class TestRegister:
    def test_outputs_and_accuracy(self, synth_dir, tmp_path, config_path, capsys):
        out = tmp_path / "reg"
        code = main([
            "register", str(synth_dir), "--config", str(config_path), "--output", str(out)
        ])
        assert code == 0
        for i in range(3):
            assert (out / f"registration_{i:04d}.json").exists()
            assert (out / f"inliers_{i:04d}.png").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["pairs"] == 3
        assert summary["corner_error_px"]["mean"] < 0.5
        stdout = json.loads(capsys.readouterr().out)
        assert stdout["corner_error_px_mean"] < 0.5

    def test_result_files_round_trip(self, synth_dir, tmp_path, config_path):
        out = tmp_path / "reg"
        main(["register", str(synth_dir), "--config", str(config_path), "--output", str(out)])
        payload = json.loads((out / "registration_0000.json").read_text())
        assert payload["pair"] == 0
        assert payload["estimator"] == "irls"
        assert len(payload["homography"]) == 9
        assert len(payload["weights"]) == 400
        assert payload["converged"] in (True, False)

    def test_jobs_do_not_change_results(self, synth_dir, tmp_path, config_path):
        serial, threaded = tmp_path / "s", tmp_path / "t"
        for out, jobs in ((serial, "1"), (threaded, "3")):
            main([
                "register", str(synth_dir), "--config", str(config_path),
                "--jobs", jobs, "--output", str(out),
            ])
        for i in range(3):
            name = f"registration_{i:04d}.json"
            a = json.loads((serial / name).read_text())
            b = json.loads((threaded / name).read_text())
            assert a["homography"] == b["homography"]

    def test_ransac_estimator(self, synth_dir, tmp_path, config_path):
        out = tmp_path / "reg"
        code = main([
            "register", str(synth_dir), "--config", str(config_path),
            "--estimator", "ransac", "--output", str(out),
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["estimator"] == "ransac"
        assert summary["corner_error_px"]["mean"] < 0.5

    def test_missing_directory(self, tmp_path, capsys):
        assert main(["register", str(tmp_path / "nope")]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"

    def test_too_few_frames(self, tmp_path, synth_dir, capsys):
        lonely = tmp_path / "one"
        lonely.mkdir()
        (lonely / "frame_0000.png").write_bytes((synth_dir / "frame_0000.png").read_bytes())
        assert main(["register", str(lonely)]) == 2
        assert "at least 2" in json.loads(capsys.readouterr().err)["message"]

    def test_missing_flow_listed(self, tmp_path, synth_dir, capsys):
        gappy = tmp_path / "gappy"
        gappy.mkdir()
        for t in range(3):
            src = synth_dir / f"frame_{t:04d}.png"
            (gappy / src.name).write_bytes(src.read_bytes())
        (gappy / "flow_0000.flo").write_bytes((synth_dir / "flow_0000.flo").read_bytes())
        assert main(["register", str(gappy)]) == 2
        message = json.loads(capsys.readouterr().err)["message"]
        assert "[1]" in message


class TestSegment:
    def test_masks_and_report(self, synth_dir, tmp_path, config_path, capsys):
        out = tmp_path / "seg"
        code = main([
            "segment", str(synth_dir), "--config", str(config_path), "--output", str(out)
        ])
        assert code == 0
        for i in range(3):
            assert (out / f"mask_{i:04d}.png").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["region"]["mean"] > 0.6
        summary = json.loads(capsys.readouterr().out)
        assert summary["region_mean"] == report["region"]["mean"]

    def test_panels_flag(self, synth_dir, tmp_path, config_path):
        out = tmp_path / "seg"
        code = main([
            "segment", str(synth_dir), "--config", str(config_path),
            "--panels", "--output", str(out),
        ])
        assert code == 0
        assert (out / "panel_0000.png").exists()


class TestEval:
    @pytest.fixture()
    def annotations(self, synth_dir, tmp_path):
        """Keyframe boxes taken from the first and last ground-truth masks."""
        lines = []
        for t in (0, 3):
            box = min_enclosing_box(read_mask(synth_dir / f"mask_{t:04d}.png"))
            x0, y0, x1, y1 = box.as_tuple()
            lines.append(f"{t},{x0},{y0},{x1},{y1},locomotion")
        path = tmp_path / "boxes.csv"
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_box_scores_on_ground_truth(self, synth_dir, annotations, capsys):
        code = main(["eval", str(synth_dir), "--annotations", str(annotations)])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["box"]["mean"] > 0.8
        assert payload["region"] is None

    def test_gt_masks_give_perfect_region(self, synth_dir, annotations, tmp_path, capsys):
        out = tmp_path / "report"
        code = main([
            "eval", str(synth_dir), "--annotations", str(annotations),
            "--gt-masks", str(synth_dir), "--output", str(out),
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["region"]["mean"] == 1.0
        assert payload["contour"]["mean"] == 1.0
        assert json.loads((out / "report.json").read_text()) == payload

    def test_annotation_frame_out_of_range(self, synth_dir, tmp_path, capsys):
        path = tmp_path / "boxes.csv"
        path.write_text("10,0,0,5,5,locomotion\n")
        assert main(["eval", str(synth_dir), "--annotations", str(path)]) == 2
        assert "10" in json.loads(capsys.readouterr().err)["message"]

    def test_missing_predictions_dir(self, tmp_path):
        csv = tmp_path / "boxes.csv"
        csv.write_text("0,0,0,5,5,locomotion\n")
        assert main(["eval", str(tmp_path / "nope"), "--annotations", str(csv)]) == 2


class TestFlowVis:
    def test_renders_png(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "vis.png"
        code = main(["flow-vis", str(synth_dir / "flow_0000.flo"), "--output", str(out)])
        assert code == 0
        assert out.exists()
        assert json.loads(capsys.readouterr().out)["output"] == str(out)

    def test_default_output_next_to_input(self, tmp_path, synth_dir):
        src = tmp_path / "field.flo"
        src.write_bytes((synth_dir / "flow_0000.flo").read_bytes())
        assert main(["flow-vis", str(src)]) == 0
        assert (tmp_path / "field.png").exists()

    def test_corrupt_magic_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.flo"
        bad.write_bytes(struct.pack("<fii", 1.0, 2, 2) + b"\0" * 32)
        assert main(["flow-vis", str(bad)]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "FlowFormatError"

    def test_max_magnitude_changes_saturation(self, tmp_path, synth_dir):
        src = synth_dir / "flow_0000.flo"
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        main(["flow-vis", str(src), "--output", str(a)])
        main(["flow-vis", str(src), "--max-magnitude", "50.0", "--output", str(b)])
        assert not np.array_equal(read_image(a), read_image(b))
