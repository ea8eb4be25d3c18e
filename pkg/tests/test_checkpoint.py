import numpy as np
import pytest
import torch

from paradock.checkpoint import MAGIC, load_arrays, load_model, manifest, save_arrays, save_model
from paradock.errors import ConfigError
from paradock.graphs import GraphConfig, build_graph
from paradock.model import ModelConfig, PairEncoder
from paradock.pdbio import ProteinStructure

from conftest import random_points


class TestArrayStore:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        arrays = {
            "alpha": rng.normal(size=(3, 4)),
            "beta": rng.normal(size=(7,)),
            "gamma.scalar": np.float64(rng.normal()),
        }
        path = tmp_path / "x.ckpt"
        save_arrays(path, arrays, {"kind": "test", "note": 1})
        back, meta = load_arrays(path)
        assert meta == {"kind": "test", "note": 1}
        assert set(back) == set(arrays)
        assert np.array_equal(back["alpha"], arrays["alpha"])
        assert np.array_equal(back["beta"], arrays["beta"])
        assert back["gamma.scalar"].shape == (1,)
        assert back["gamma.scalar"][0] == float(arrays["gamma.scalar"])

    def test_magic_line_first(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_arrays(path, {"a": np.zeros(2)})
        assert path.read_bytes().startswith(MAGIC.encode())

    def test_whitespace_name_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            save_arrays(tmp_path / "x.ckpt", {"bad name": np.zeros(2)})

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"something-else\nmeta {}\nblob 0\n\n")
        with pytest.raises(ConfigError):
            load_arrays(path)

    def test_missing_terminator_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(MAGIC.encode() + b"\nmeta {}\nblob 0\n")
        with pytest.raises(ConfigError):
            load_arrays(path)

    def test_truncated_blob_rejected(self, tmp_path, rng):
        path = tmp_path / "x.ckpt"
        save_arrays(path, {"a": rng.normal(size=8)})
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ConfigError):
            load_arrays(path)

    def test_malformed_manifest_line_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(MAGIC.encode() + b"\narray broken\nblob 0\n\n")
        with pytest.raises(ConfigError):
            load_arrays(path)

    def test_manifest_listing(self, tmp_path, rng):
        path = tmp_path / "x.ckpt"
        save_arrays(path, {"w": rng.normal(size=(2, 5)), "b": rng.normal(size=5)})
        entries = manifest(path)
        assert entries == [("w", (2, 5), 10), ("b", (5,), 5)]


class TestModelCheckpoint:
    def test_model_round_trip_preserves_forward(self, tmp_path, rng):
        cfg = ModelConfig(hidden=16, embed=8, layers=1, heads=2, dropout=0.0)
        gcfg = GraphConfig(k=4, pos_dim=8)
        g1 = build_graph(ProteinStructure.from_arrays(random_points(rng, 6)), gcfg)
        g2 = build_graph(ProteinStructure.from_arrays(random_points(rng, 5)), gcfg)
        model = PairEncoder(cfg, seed=17)
        path = tmp_path / "model.ckpt"
        save_model(path, model, extra_meta={"epoch": 3})
        loaded, meta = load_model(path)
        assert meta["kind"] == "model"
        assert meta["epoch"] == 3
        assert meta["model_config"]["hidden"] == 16
        for (na, pa), (_, pb) in zip(model.named_parameters(), loaded.named_parameters()):
            assert torch.equal(pa, pb), na
        out_a = model.run_heads(g1, g2)
        out_b = loaded.run_heads(g1, g2)
        for a, b in zip(out_a, out_b):
            assert torch.equal(a, b)

    def test_missing_config_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_arrays(path, {"a": np.zeros(2)}, {"kind": "model"})
        with pytest.raises(ConfigError):
            load_model(path)

    def test_optimizer_arrays_ignored_on_load(self, tmp_path):
        cfg = ModelConfig(hidden=8, embed=4, layers=0, heads=1, dropout=0.0)
        model = PairEncoder(cfg, seed=5)
        arrays = model.state_arrays()
        arrays["opt.m.residue_embed.weight"] = np.zeros_like(arrays["residue_embed.weight"])
        path = tmp_path / "x.ckpt"
        save_arrays(path, arrays, {"kind": "model", "model_config": model.config_dict()})
        loaded, _ = load_model(path)
        assert torch.equal(loaded.residue_embed.weight, model.residue_embed.weight)
