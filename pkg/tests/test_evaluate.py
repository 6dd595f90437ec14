import json

import numpy as np
import pytest

from ost.core import (
    ClassEntry,
    DescriptorBank,
    EmbedMatrix,
    SolverConfig,
    save_descriptor_bank,
    write_embed_matrix,
)
from ost.errors import ValidationError
from ost.evaluate import (
    load_manifest,
    synth_benchmark,
    zero_shot_eval,
    zero_shot_eval_all_modes,
)

CFG = SolverConfig(lam=0.1, max_iter=1000, thresh=1e-9)


def write_tiny_benchmark(out, seed=0, orthogonal=True):
    """Three well-separated classes, one item each, frames equal to the
    class's own descriptors."""
    rng = np.random.default_rng(seed)
    dim = 8
    protos = np.eye(dim)[:3] if orthogonal else rng.standard_normal((3, dim))
    entries = []
    items = []
    for k in range(3):
        name = f"c{k}"
        rows = np.tile(protos[k][None, :], (2, 1))
        for tag in ("spatio", "temporal"):
            write_embed_matrix(EmbedMatrix(rows), out / f"{name}_{tag}.oste")
        write_embed_matrix(EmbedMatrix(protos[k][None, :]), out / f"{name}_cat.oste")
        entries.append(
            ClassEntry(
                name=name,
                spatio_texts=("a", "b"),
                temporal_texts_raw=("c", "d"),
                temporal_texts_conditioned=(),
                spatio_emb_ref=f"{name}_spatio.oste",
                temporal_emb_ref=f"{name}_temporal.oste",
                category_emb_ref=f"{name}_cat.oste",
            )
        )
        write_embed_matrix(EmbedMatrix(np.tile(protos[k][None, :], (4, 1))), out / f"item{k}.oste")
        items.append({"emb": f"item{k}.oste", "label": name})
    bank = DescriptorBank(classes=tuple(entries), n_spatio=2, n_temporal=2)
    save_descriptor_bank(bank, out / "bank.json")
    (out / "manifest.json").write_text(json.dumps({"bank": "bank.json", "items": items}))
    return out / "manifest.json"


class TestZeroShotEval:
    def test_perfect_separation_gives_perfect_accuracy(self, tmp_path):
        manifest = load_manifest(write_tiny_benchmark(tmp_path))
        result = zero_shot_eval(manifest, CFG)
        assert result.top1 == 1.0
        assert result.top5 == 1.0
        assert result.n_items == 3
        assert set(result.per_class_top1.values()) == {1.0}

    def test_all_modes_perfect_on_clean_fixture(self, tmp_path):
        manifest = load_manifest(write_tiny_benchmark(tmp_path))
        results = zero_shot_eval_all_modes(manifest, CFG)
        assert set(results) == {"category", "pooled", "od"}
        for result in results.values():
            assert result.top1 == 1.0

    def test_tie_resolved_to_lowest_index_deterministically(self, tmp_path):
        manifest_path = write_tiny_benchmark(tmp_path)
        doc = json.loads((tmp_path / "bank.json").read_text())
        doc["classes"][1] = dict(doc["classes"][0], name="c1")  # duplicate embeddings
        doc["classes"][2] = dict(doc["classes"][0], name="c2")
        (tmp_path / "bank.json").write_text(json.dumps(doc))
        manifest = load_manifest(manifest_path)
        first = zero_shot_eval(manifest, CFG)
        second = zero_shot_eval(manifest, CFG)
        assert first == second
        # every item ties across all classes; argmax lands on class index 0
        assert first.per_class_top1["c0"] == 1.0
        assert first.per_class_top1["c1"] == 0.0

    def test_unknown_label_rejected(self, tmp_path):
        manifest_path = write_tiny_benchmark(tmp_path)
        doc = json.loads(manifest_path.read_text())
        doc["items"][0]["label"] = "mystery"
        manifest_path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="mystery"):
            zero_shot_eval(load_manifest(manifest_path), CFG)

    def test_missing_item_file_names_index(self, tmp_path):
        manifest_path = write_tiny_benchmark(tmp_path)
        (tmp_path / "item1.oste").unlink()
        with pytest.raises(OSError, match="item 1"):
            zero_shot_eval(load_manifest(manifest_path), CFG)

    def test_top1_le_top5(self, tmp_path):
        mp = synth_benchmark(
            seed=3, n_classes=6, items_per_class=4, dim=16,
            noise_frames=0.4, noise_desc=0.2, out_dir=tmp_path,
        )
        result = zero_shot_eval(load_manifest(mp), CFG)
        assert result.top1 <= result.top5


class TestSynthBenchmark:
    def test_same_seed_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synth_benchmark(7, 3, 2, 8, 0.3, 0.2, a)
        synth_benchmark(7, 3, 2, 8, 0.3, 0.2, b)
        for path in sorted(a.iterdir()):
            assert path.read_bytes() == (b / path.name).read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synth_benchmark(7, 3, 2, 8, 0.3, 0.2, a)
        synth_benchmark(8, 3, 2, 8, 0.3, 0.2, b)
        assert (a / "item_00_000.oste").read_bytes() != (b / "item_00_000.oste").read_bytes()

    def test_zero_frame_noise_classifies_perfectly(self, tmp_path):
        mp = synth_benchmark(
            seed=5, n_classes=5, items_per_class=3, dim=16,
            noise_frames=0.0, noise_desc=0.01, out_dir=tmp_path,
        )
        results = zero_shot_eval_all_modes(load_manifest(mp), CFG)
        for mode, result in results.items():
            assert result.top1 == 1.0, mode

    def test_noise_monotonically_degrades_top1(self, tmp_path):
        levels = (0.05, 0.3, 0.9)
        means = []
        for level in levels:
            accs = []
            for seed in range(5):
                out = tmp_path / f"n{level}_{seed}"
                mp = synth_benchmark(
                    seed=seed, n_classes=4, items_per_class=3, dim=16,
                    noise_frames=level, noise_desc=0.1, out_dir=out,
                )
                accs.append(zero_shot_eval(load_manifest(mp), CFG).top1)
            means.append(float(np.mean(accs)))
        assert means[0] >= means[1] >= means[2]

    def test_rejects_bad_sizes(self, tmp_path):
        with pytest.raises(ValidationError):
            synth_benchmark(0, 0, 2, 8, 0.1, 0.1, tmp_path)
