import json
import re
from pathlib import Path

import numpy as np
import pytest

from stenvan.cli import main
from stenvan.evaluation import EmbeddingSet
from stenvan.tensor import save_nvt1

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(path, **kw):
    base = dict(variant="ste_nvan", frames=4, input_hw=[64, 32], width_multiplier=0.125, stripes=4, seed=0, num_tracks=2)
    base.update(kw)
    path.write_text(json.dumps(base))
    return str(path)


class TestFlops:
    def test_baseline_table(self, capsys):
        assert main(["flops", str(CONFIGS / "baseline.json")]) == 0
        out = capsys.readouterr().out
        total = float(re.search(r"total\s+([\d,]+)", out).group(1).replace(",", ""))
        assert abs(total / 30.4e9 - 1) < 0.10

    def test_json_total(self, capsys):
        assert main(["flops", str(CONFIGS / "ste_nvan.json"), "--format", "json"]) == 0
        d = json.loads(capsys.readouterr().out)
        assert d["total"] == sum(e["flops"] for e in d["per_layer"])

    def test_missing_config(self, tmp_path, capsys):
        assert main(["flops", str(tmp_path / "nope.json")]) == 2
        assert "nope.json" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", learning_rate=0.1)
        assert main(["flops", cfg]) == 2
        assert "learning_rate" in capsys.readouterr().err

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{variant: nvan")
        assert main(["flops", str(tmp_path / "c.json")]) == 2


class TestForward:
    def test_deterministic_bytes(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        for name in ("a", "b"):
            assert main(["forward", cfg, "--synthetic", "1", "--out", str(tmp_path / name)]) == 0
        for f in ("header.json", "vectors.nvt1", "labels.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_embedding_dim(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        assert main(["forward", cfg, "--synthetic", "0", "--out", str(tmp_path / "e")]) == 0
        e = EmbeddingSet.load(tmp_path / "e")
        assert e.vectors.shape == (2, 256)
        assert e.ids.tolist() == [0, 1] and e.cameras.tolist() == [0, 0]

    def test_nvt1_input_and_labels(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", variant="baseline")
        clip = np.random.default_rng(0).normal(size=(4, 3, 64, 32))
        save_nvt1(tmp_path / "clip.nvt1", clip)
        (tmp_path / "l.csv").write_text("id,camera\n17,3\n")
        assert main(["forward", cfg, "--input", str(tmp_path / "clip.nvt1"), "--labels", str(tmp_path / "l.csv"), "--out", str(tmp_path / "e")]) == 0
        e = EmbeddingSet.load(tmp_path / "e")
        assert e.ids.tolist() == [17] and e.cameras.tolist() == [3]

    def test_bad_magic(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json")
        (tmp_path / "x.nvt1").write_bytes(b"NVT2" + bytes(16))
        assert main(["forward", cfg, "--input", str(tmp_path / "x.nvt1"), "--out", str(tmp_path / "e")]) == 2
        assert "magic" in capsys.readouterr().err

    def test_wrong_shape_input(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        save_nvt1(tmp_path / "x.nvt1", np.zeros((4, 3, 60, 32)))
        assert main(["forward", cfg, "--input", str(tmp_path / "x.nvt1"), "--out", str(tmp_path / "e")]) == 2

    def test_no_source(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        assert main(["forward", cfg, "--out", str(tmp_path / "e")]) == 2


class TestEval:
    def test_self_retrieval(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", num_tracks=3)
        main(["forward", cfg, "--synthetic", "5", "--out", str(tmp_path / "e")])
        assert main(["eval", "--query", str(tmp_path / "e"), "--gallery", str(tmp_path / "e"), "--no-cam-filter"]) == 0
        assert capsys.readouterr().out.strip() == "R1=1.0000, mAP=1.0000"

    def test_constructed_case(self, tmp_path, capsys):
        EmbeddingSet(np.array([[0.0], [10.0]]), [1, 2], [0, 0]).save(tmp_path / "q")
        # query 0 ranks ids [1, 2, 1, 2]: AP (1 + 2/3) / 2
        # query 1 ranks ids [1, 2, 2, 1]: AP (1/2 + 2/3) / 2, rank-1 miss
        EmbeddingSet(np.array([[0.1], [9.9], [9.5], [11.0]]), [1, 1, 2, 2], [1, 1, 1, 1]).save(tmp_path / "g")
        assert main(["eval", "--query", str(tmp_path / "q"), "--gallery", str(tmp_path / "g")]) == 0
        assert capsys.readouterr().out.strip() == f"R1=0.5000, mAP={17 / 24:.4f}"

    def test_dim_mismatch(self, tmp_path):
        EmbeddingSet(np.zeros((1, 2)), [1], [0]).save(tmp_path / "q")
        EmbeddingSet(np.zeros((1, 3)), [1], [1]).save(tmp_path / "g")
        assert main(["eval", "--query", str(tmp_path / "q"), "--gallery", str(tmp_path / "g")]) == 2

    def test_missing_set(self, tmp_path):
        assert main(["eval", "--query", str(tmp_path / "q"), "--gallery", str(tmp_path / "g")]) == 2


class TestBench:
    def test_one_run_each_and_ordering(self, capsys):
        assert main(["bench", str(CONFIGS / "ste_nvan.json"), "--repeat", "1", "--variants", "nvan", "ste_nvan"]) == 0
        out = capsys.readouterr().out
        rows = {ln.split()[0]: ln.split() for ln in out.splitlines()[1:3]}
        assert rows["nvan"][1] == rows["ste_nvan"][1] == "1"
        assert float(rows["ste_nvan"][2]) < float(rows["nvan"][2])
        assert "ordering (fastest first): ste_nvan < nvan" in out

    def test_zero_repeat(self):
        assert main(["bench", str(CONFIGS / "ste_nvan.json"), "--repeat", "0"]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["flops"])
        assert exc.value.code == 2
