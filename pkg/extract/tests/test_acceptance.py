"""Interop acceptance: everything written here must load through the primary
package's readers, and matched image/caption pairs must align."""

import sys

import numpy as np

from ost.core import load_descriptor_bank, read_embed_matrix
from ost.matcher import load_class_embeddings

from ost_extract.encoders import TinyJointEncoder
from ost_extract.extract import extract_frames, extract_text


def report(name: str, passed: bool, detail: str = ""):
    marker = "PASS" if passed else "FAIL"
    print(f"[{marker}] {name}" + (f" ({detail})" if detail else ""), file=sys.stderr, flush=True)
    assert passed, f"{name}: {detail}"


def test_extractor_interop(two_class_fixture, tmp_path):
    bank_path, frames_root = two_class_fixture
    out = tmp_path / "out"
    encoder = TinyJointEncoder()

    bank_out = extract_text(bank_path, out, encoder)
    fragments = extract_frames(frames_root, out, encoder)

    bank = load_descriptor_bank(bank_out)  # primary-side validation
    class_embs = load_class_embeddings(bank, bank_out)
    loads_ok = len(class_embs) == 2 and all(c.category is not None for c in class_embs)

    unit_ok = True
    for entry in class_embs:
        for matrix in (entry.spatio, entry.temporal, entry.category):
            unit_ok &= bool(np.abs(np.linalg.norm(matrix.data, axis=1) - 1.0).max() <= 1e-3)
    videos = {f["video"]: read_embed_matrix(out / f["emb"]) for f in fragments}
    for matrix in videos.values():
        unit_ok &= bool(np.abs(np.linalg.norm(matrix.data, axis=1) - 1.0).max() <= 1e-3)

    def mean_cos(frames, texts):
        return float(np.mean(frames.data @ texts.data.T))

    red_class = next(c for c in class_embs if "red" in c.name)
    blue_class = next(c for c in class_embs if "blue" in c.name)
    matched = mean_cos(videos["vid_red"], red_class.spatio) + mean_cos(
        videos["vid_blue"], blue_class.spatio
    )
    mismatched = mean_cos(videos["vid_red"], blue_class.spatio) + mean_cos(
        videos["vid_blue"], red_class.spatio
    )
    alignment_ok = matched > mismatched

    report(
        "extractor interop (primary loads output, unit rows, matched > mismatched)",
        loads_ok and unit_ok and alignment_ok,
        f"loads {loads_ok}, unit {unit_ok}, matched {matched:.3f} > mismatched {mismatched:.3f}",
    )
