import json
import os

import numpy as np
import pytest

from charanim import pngio
from charanim.cli import (load_config, main, run_pipeline, sha256_file,
                          validate_config)
from charanim.errors import StageError
from charanim.fixtures import write_biped_fixture
from charanim.mesh import load_mesh
from charanim.volume import SdfGrid


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """Desk-scale fixture: 192^2 drawing, chunky limbs, 4 frames."""
    root = tmp_path_factory.mktemp("fixture")
    paths = write_biped_fixture(root, resolution=192, frames=4,
                                limb_radius=12.0)
    paths["overrides"] = {"volume.dims": [64, 64, 64],
                          "render.resolution": 192}
    return paths


@pytest.fixture(scope="session")
def pipeline_run(small_fixture, tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("run"))
    config = load_config(small_fixture["config"],
                         dict(small_fixture["overrides"], **{"out_dir": out_dir}))
    manifest = run_pipeline(config, echo=lambda *a: None)
    return out_dir, manifest, config


class TestValidate:
    def test_fixture_config_is_clean(self, small_fixture):
        config = load_config(small_fixture["config"])
        assert validate_config(config) == []

    def test_threshold_order_reported(self, small_fixture):
        config = load_config(small_fixture["config"])
        config["thin"]["theta1"] = 6
        config["thin"]["theta2"] = 11
        problems = validate_config(config)
        assert any("theta1" in p for p in problems)

    def test_dimension_mismatch_reported(self, small_fixture, tmp_path):
        from charanim.raster import BinaryMask
        bad_mask = tmp_path / "small_mask.png"
        pngio.write_mask(bad_mask, BinaryMask(np.ones((64, 64), dtype=bool)))
        config = load_config(small_fixture["config"])
        config["fg_mask"] = str(bad_mask)
        problems = validate_config(config)
        assert any("dimensions disagree" in p for p in problems)

    def test_missing_input_reported(self, small_fixture):
        config = load_config(small_fixture["config"])
        del config["fg_mask"]
        problems = validate_config(config)
        assert any("fg_mask" in p for p in problems)

    def test_cli_exit_codes(self, small_fixture, capsys):
        assert main(["validate", "--config", small_fixture["config"]]) == 0

    def test_pipeline_rejects_invalid_config(self, small_fixture, tmp_path):
        config = load_config(small_fixture["config"])
        del config["motion"]
        config["out_dir"] = str(tmp_path / "never")
        from charanim.errors import ParameterError
        with pytest.raises(ParameterError):
            run_pipeline(config, echo=lambda *a: None)


class TestPipeline:
    def test_all_stages_present(self, pipeline_run):
        _, manifest, _ = pipeline_run
        names = [s["name"] for s in manifest["stages"]]
        assert names == ["inpaint-contour", "mesh2sdf", "cut", "extract",
                         "thin", "smooth", "bake-color", "rig", "retarget",
                         "guidance"]

    def test_guidance_frames_written(self, pipeline_run):
        out_dir, _, _ = pipeline_run
        for f in range(4):
            for layer in ("F", "G_mask", "G_pos", "G_edge", "depth"):
                assert os.path.exists(
                    os.path.join(out_dir, "guidance", f"{layer}_{f:04d}.png"))

    def test_manifest_lists_every_output_with_hash(self, pipeline_run):
        out_dir, manifest, _ = pipeline_run
        listed = {}
        for stage in manifest["stages"]:
            listed.update(stage["outputs"])
        on_disk = []
        for base, _, files in os.walk(out_dir):
            for name in files:
                if name not in ("manifest.json", "timings.json"):
                    on_disk.append(os.path.join(base, name))
        assert set(on_disk) == set(listed)
        for path, digest in listed.items():
            assert sha256_file(path) == digest

    def test_outputs_loadable(self, pipeline_run):
        out_dir, _, _ = pipeline_run
        colored = load_mesh(os.path.join(out_dir, "colored.ply"))
        assert colored.colors is not None
        grid = SdfGrid.load(os.path.join(out_dir, "cut.sdf"))
        assert (grid.values < 0).any()

    def test_rerun_byte_identical_manifest(self, small_fixture, pipeline_run,
                                           tmp_path):
        out_dir, _, config = pipeline_run
        first = open(os.path.join(out_dir, "manifest.json"), "rb").read()
        run_pipeline(config, echo=lambda *a: None)
        second = open(os.path.join(out_dir, "manifest.json"), "rb").read()
        assert first == second

    def test_failing_stage_leaves_partial_marker(self, small_fixture,
                                                 tmp_path):
        out_dir = str(tmp_path / "broken")
        config = load_config(small_fixture["config"],
                             dict(small_fixture["overrides"],
                                  **{"out_dir": out_dir}))
        # no pixel reaches D >= 10000 and no skeleton pixel has D <= 0.5,
        # so the handle set comes out empty and the solve cannot run
        config["thin"]["theta1"] = 10000.0
        config["thin"]["theta2"] = 0.5
        with pytest.raises(StageError) as err:
            run_pipeline(config, echo=lambda *a: None)
        marker = json.load(open(os.path.join(out_dir, "pipeline.partial")))
        assert marker["failed_stage"] == err.value.stage
        # partial outputs retained
        assert os.path.exists(os.path.join(out_dir, "inpainted.png"))


class TestStageIsolation:
    def test_chain_of_subcommands(self, small_fixture, tmp_path):
        """Each subcommand runs standalone on the previous stage's files."""
        d = str(tmp_path)
        fx = small_fixture

        assert main(["inpaint-contour", "--image", fx["drawing"],
                     "--fg-mask", fx["fg_mask"], "-o", f"{d}/inp.png"]) == 0
        assert main(["mesh2sdf", "--mesh", fx["mesh"], "--dims", "64",
                     "-o", f"{d}/raw.sdf"]) == 0
        assert main(["cut", "--sdf", f"{d}/raw.sdf", "--fg-mask",
                     fx["fg_mask"], "-o", f"{d}/cut.sdf"]) == 0
        assert main(["extract", "--sdf", f"{d}/cut.sdf",
                     "-o", f"{d}/mesh.ply"]) == 0
        assert main(["thin", "--mesh", f"{d}/mesh.ply", "--fg-mask",
                     fx["fg_mask"], "--theta1", "11", "--theta2", "6",
                     "--guard", "5", "-o", f"{d}/thin.ply"]) == 0
        assert main(["smooth", "--mesh", f"{d}/thin.ply", "--iters", "10",
                     "-o", f"{d}/smooth.ply"]) == 0
        assert main(["bake-color", "--mesh", f"{d}/smooth.ply", "--front",
                     f"{d}/inp.png", "--fg-mask", fx["fg_mask"],
                     "-o", f"{d}/colored.ply"]) == 0
        assert main(["rig", "--mesh", f"{d}/colored.ply", "--keypoints",
                     fx["keypoints"], "--fg-mask", fx["fg_mask"],
                     "-o", f"{d}/skel.json",
                     "--weights-out", f"{d}/weights.skw"]) == 0
        assert main(["retarget", "--motion", fx["motion"], "--skeleton",
                     f"{d}/skel.json", "--name-map", fx["name_map"],
                     "-o", f"{d}/clip.bvh"]) == 0
        assert main(["render", "--mesh", f"{d}/colored.ply", "--view",
                     "front", "--res", "128", "-o", f"{d}/frame.png"]) == 0
        assert main(["guidance", "--mesh", f"{d}/colored.ply", "--motion",
                     f"{d}/clip.bvh", "--skeleton", f"{d}/skel.json",
                     "--weights", f"{d}/weights.skw", "--fg-mask",
                     fx["fg_mask"], "--frames", "0..1", "--res", "128",
                     "--out-dir", f"{d}/g"]) == 0

        assert pngio.read_image(f"{d}/frame.png").width == 128
        assert os.path.exists(f"{d}/g/G_pos_0001.png")
        colored = load_mesh(f"{d}/colored.ply")
        assert colored.colors is not None
        assert np.abs(colored.colors.sum(0)).max() > 0

    def test_missing_required_flag_fails_fast(self, capsys):
        with pytest.raises(SystemExit):
            main(["pipeline"])  # --config required

    def test_unreadable_input_clean_error(self, tmp_path):
        code = main(["extract", "--sdf", str(tmp_path / "nope.sdf"),
                     "-o", str(tmp_path / "out.ply")])
        assert code == 2 or code != 0


class TestFixtureWriter:
    def test_make_fixture_cli(self, tmp_path):
        assert main(["make-fixture", "--out-dir", str(tmp_path / "fx"),
                     "--resolution", "96", "--frames", "2"]) == 0
        for name in ("drawing.png", "fg_mask.png", "input_mesh.ply",
                     "keypoints.json", "motion.bvh", "name_map.json",
                     "config.json"):
            assert (tmp_path / "fx" / name).exists()
